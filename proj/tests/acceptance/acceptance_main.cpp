// Acceptance suite: runs each numbered criterion at its stated tolerance and
// prints one PASS/FAIL line with the measured values. Exits with the number
// of failed criteria.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "ivtrans/ivtrans.hpp"
#include "oracles.hpp"

using namespace ivtrans;

namespace {

int failures = 0;

void report_line(int id, const std::string& name, bool pass, const std::string& detail) {
  std::printf("[%s] %2d. %-28s %s\n", pass ? "PASS" : "FAIL", id, name.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

Eigen::VectorXd beta1(double v) {
  Eigen::VectorXd b(1);
  b << v;
  return b;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

// ---------------------------------------------------------------------------

void criterion_1_bias_mse_ph() {
  try {
    CaseSpec spec = CaseSpec::make(SimCase::case_i, 50, beta1(1.0), 0.0, 10000, 20250811);
    const MetricsReport rep = run_study(spec);
    const bool pass = std::abs(rep.bias(0)) <= 0.005 && rep.mse(0) >= 0.0001 && rep.mse(0) <= 0.0012;
    report_line(1, "bias/MSE target, PH case", pass,
                "bias=" + fmt(rep.bias(0)) + " (|.|<=0.005), mse=" + fmt(rep.mse(0)) +
                    " (in [1e-4,1.2e-3]), conv=" + fmt(rep.convergence_rate));
  } catch (const error& e) {
    report_line(1, "bias/MSE target, PH case", false, std::string("error: ") + e.what());
  }
}

void criterion_2_bias_mse_po() {
  try {
    CaseSpec spec = CaseSpec::make(SimCase::case_i, 50, beta1(1.0), 1.0, 10000, 20250812);
    const MetricsReport rep = run_study(spec);
    const bool pass = std::abs(rep.bias(0)) <= 0.01 && rep.mse(0) >= 0.0005 && rep.mse(0) <= 0.006;
    report_line(2, "bias/MSE target, PO case", pass,
                "bias=" + fmt(rep.bias(0)) + " (|.|<=0.01), mse=" + fmt(rep.mse(0)) +
                    " (in [5e-4,6e-3]), conv=" + fmt(rep.convergence_rate));
  } catch (const error& e) {
    report_line(2, "bias/MSE target, PO case", false, std::string("error: ") + e.what());
  }
}

void criterion_3_two_covariate_bias() {
  try {
    Eigen::VectorXd beta(2);
    beta << 2.0, 4.0;
    CaseSpec spec = CaseSpec::make(SimCase::case_iii, 50, beta, 0.0, 2000, 20250813);
    const MetricsReport rep = run_study(spec);
    const bool pass = rep.bias(0) >= 0.03 && rep.bias(0) <= 0.11 && rep.bias(1) >= 0.01 &&
                      rep.bias(1) <= 0.05;
    report_line(3, "two-covariate bias target", pass,
                "bias1=" + fmt(rep.bias(0)) + " (in [0.03,0.11]), bias2=" + fmt(rep.bias(1)) +
                    " (in [0.01,0.05]), conv=" + fmt(rep.convergence_rate));
  } catch (const error& e) {
    report_line(3, "two-covariate bias target", false, std::string("error: ") + e.what());
  }
}

void criterion_4_coverage_width() {
  try {
    CaseSpec spec = CaseSpec::make(SimCase::case_i, 50, beta1(1.0), 0.0, 5000, 20250814);
    const MetricsReport rep = coverage_study(spec);
    const bool cp_ok = rep.coverage_probability(0) >= 0.93 && rep.coverage_probability(0) <= 0.965;
    const bool aw_ok =
        rep.average_width(0) >= 0.7 * 0.0669 && rep.average_width(0) <= 1.3 * 0.0669;
    report_line(4, "coverage/width target, PH", cp_ok && aw_ok,
                "cp=" + fmt(rep.coverage_probability(0)) + " (in [0.93,0.965]), aw=" +
                    fmt(rep.average_width(0)) + " (in [0.0468,0.0870])");
  } catch (const error& e) {
    report_line(4, "coverage/width target, PH", false, std::string("error: ") + e.what());
  }
}

void criterion_5_breslow() {
  int checked = 0;
  double worst = 0.0;
  for (std::uint64_t seed = 1000; seed < 1200; ++seed) {
    const auto inst = oracles::random_instance(seed, 50, 1, 0.0);
    const EventGrid grid = EventGrid::build(inst.times, inst.status);
    const Eigen::VectorXd eta = inst.design.col(0);
    const StepTransform tr = solve_transform_eta(eta, grid, HazardFamily(0.0));
    const Eigen::VectorXd log_oracle = oracles::breslow_log_cumulative(eta, grid);
    for (Eigen::Index k = 0; k < grid.steps(); ++k) {
      const double lhs = std::exp(tr.values(k));
      const double rhs = std::exp(log_oracle(k));
      worst = std::max(worst, std::abs(lhs - rhs) / std::max(1e-300, std::abs(rhs)));
    }
    ++checked;
  }
  report_line(5, "Breslow equivalence (r=0)", checked == 200 && worst < 1e-8,
              "instances=" + std::to_string(checked) + ", worst rel dev=" + fmt(worst) +
                  " (<1e-8)");
}

void criterion_6_oracle_equivalence() {
  int checked = 0;
  double worst = 0.0;
  for (int k = 0; k < 50; ++k) {
    const double r = k % 2 == 0 ? 0.0 : 1.0;
    CaseSpec spec = CaseSpec::make(SimCase::case_i, 100, beta1(1.0), r, 1,
                                   4000 + static_cast<std::uint64_t>(k));
    spec.error_sd_v = 0.0;
    spec.error_sd_eps = 0.0;
    spec.censoring_c = calibrate_censoring(spec);
    const GeneratedCase g = generate_case(spec, k);
    const HazardFamily family(r);
    const FitResult corrected = fit(g.data, family);
    const ProfileFit direct = fit_design(g.X_true, g.data.times, g.data.status, family);
    worst = std::max(worst, std::abs(corrected.beta_hat(0) - direct.beta(0)));
    ++checked;
  }
  report_line(6, "noiseless oracle equivalence", checked == 50 && worst < 1e-6,
              "instances=" + std::to_string(checked) + ", worst |diff|=" + fmt(worst) +
                  " (<1e-6)");
}

void criterion_7_cox_crosscheck() {
  int checked = 0;
  double worst = 0.0;
  CaseSpec spec = CaseSpec::make(SimCase::case_i, 80, beta1(1.0), 0.0, 1, 5001);
  spec.censoring_c = calibrate_censoring(spec);
  for (int rep = 0; rep < 50; ++rep) {
    const GeneratedCase g = generate_case(spec, rep);
    const IVRegressionFit iv = estimate_Q(g.data);
    const ProfileFit pf =
        fit_design(iv.imputed_design, g.data.times, g.data.status, HazardFamily(0.0));
    const Eigen::VectorXd cox = oracles::cox_newton(iv.imputed_design, g.data.times, g.data.status);
    worst = std::max(worst, std::abs(pf.beta(0) - cox(0)));
    ++checked;
  }
  report_line(7, "Cox partial-likelihood match", checked == 50 && worst < 1e-4,
              "instances=" + std::to_string(checked) + ", worst |diff|=" + fmt(worst) +
                  " (<1e-4)");
}

void criterion_8_score_at_solution() {
  double worst_score = 0.0;
  double worst_colsum = 0.0;
  int checked = 0;
  for (std::uint64_t seed = 2000; seed < 2060; ++seed) {
    const double r = seed % 2 == 0 ? 0.0 : 1.0;
    const auto inst = oracles::random_instance(seed, 60, 1, r);
    const HazardFamily family(r);
    const ProfileFit pf = fit_design(inst.design, inst.times, inst.status, family);
    worst_score = std::max(worst_score, pf.final_score_norm);
    const MartingaleResiduals res =
        martingale_residuals(pf, inst.design, inst.times, inst.status, family);
    for (Eigen::Index k = 0; k < res.increments.cols(); ++k)
      worst_colsum = std::max(worst_colsum, std::abs(res.increments.col(k).sum()));
    ++checked;
  }
  report_line(8, "score at solution", worst_score <= 1e-8 && worst_colsum <= 1e-8,
              "fits=" + std::to_string(checked) + ", worst ||U1||/n=" + fmt(worst_score) +
                  " (<=1e-8), worst residual col sum=" + fmt(worst_colsum) + " (<=1e-8)");
}

void criterion_9_variance_sanity() {
  try {
    CaseSpec spec = CaseSpec::make(SimCase::case_i, 50, beta1(1.0), 0.0, 2000, 20250815);
    spec.censoring_c = calibrate_censoring(spec);
    const HazardFamily family(0.0);
    double sum = 0.0, sumsq = 0.0, se_sum = 0.0;
    int ok = 0;
    for (int rep = 0; rep < spec.reps; ++rep) {
      try {
        const GeneratedCase g = generate_case(spec, rep);
        const FitResult f = fit(g.data, family);
        sum += f.beta_hat(0);
        sumsq += f.beta_hat(0) * f.beta_hat(0);
        se_sum += f.std_errors(0);
        ++ok;
      } catch (const error&) {
      }
    }
    const double mean = sum / ok;
    const double mc_sd = std::sqrt((sumsq - ok * mean * mean) / (ok - 1));
    const double ratio = (se_sum / ok) / mc_sd;
    const bool ratio_ok = ratio >= 0.8 && ratio <= 1.25;

    // bootstrap vs plug-in on one n = 100 dataset
    CaseSpec bspec = CaseSpec::make(SimCase::case_i, 100, beta1(1.0), 0.0, 1, 20250816);
    bspec.censoring_c = calibrate_censoring(bspec);
    const GeneratedCase g = generate_case(bspec, 0);
    const FitResult plugin_fit = fit(g.data, family);
    const Eigen::MatrixXd boot = bootstrap_covariance(g.data, family, FitOptions{}, 200, 20250817);
    const double boot_se = std::sqrt(boot(0, 0));
    const double plug_se = plugin_fit.std_errors(0);
    const bool boot_ok = std::abs(boot_se - plug_se) <= 0.3 * plug_se;

    report_line(9, "variance sanity", ratio_ok && boot_ok,
                "SE/MCsd=" + fmt(ratio) + " (in [0.8,1.25]), boot SE=" + fmt(boot_se) +
                    " vs plug-in " + fmt(plug_se) + " (within 30%)");
  } catch (const error& e) {
    report_line(9, "variance sanity", false, std::string("error: ") + e.what());
  }
}

void criterion_10_determinism() {
  try {
    CaseSpec spec = CaseSpec::make(SimCase::case_i, 40, beta1(1.0), 0.0, 64, 20250818);
    const std::string a = metrics_to_json(run_study(spec, 1)).dump();
    const std::string b = metrics_to_json(run_study(spec, 4)).dump();
    const std::string c = metrics_to_json(run_study(spec, 16)).dump();
    report_line(10, "worker-count determinism", a == b && b == c,
                a == b && b == c ? "reports bit-identical across 1/4/16 workers"
                                 : "reports differ across worker counts");
  } catch (const error& e) {
    report_line(10, "worker-count determinism", false, std::string("error: ") + e.what());
  }
}

void criterion_11_cli_smoke() {
#ifndef IVTRANS_CLI_PATH
  report_line(11, "CLI end-to-end smoke", false, "CLI path not configured");
#else
  const std::filesystem::path dir = std::filesystem::temp_directory_path();
  const std::filesystem::path csv = dir / "ivtrans_trial_shaped.csv";
  const std::filesystem::path out = dir / "ivtrans_trial_report.json";

  // Clinical-trial-shaped synthetic data: follow-up days, a binary treatment (its own
  // instrument, duplicated under a second header), a noisy baseline log count
  // and an earlier noisy measurement of the same latent value as instrument.
  {
    Rng rng = Rng::keyed(20250819, 0, rng_stream::generic);
    std::ofstream f(csv);
    f << "days,status,treatment,treatment_iv,logcd4_base,logcd4_prior\n";
    const HazardFamily family(0.0);
    for (int i = 0; i < 400; ++i) {
      const double treatment = rng.uniform() < 0.5 ? 1.0 : 0.0;
      const double latent = 5.9 + 0.7 * rng.normal();
      const double base = latent + 0.3 * rng.normal();
      const double prior = latent + 0.3 * rng.normal();
      const double e = sample_error(family, rng.uniform_open());
      const double t = 900.0 * std::exp(-(-0.7 * treatment - 1.5 * (latent - 5.9)) + e);
      const double c = 1200.0 * rng.uniform();
      const double days = std::max(1.0, std::floor(std::min(t, c)));
      f << days << ',' << (t <= c ? 1 : 0) << ',' << treatment << ',' << treatment << ','
        << base << ',' << prior << '\n';
    }
  }

  std::ostringstream cmd;
  cmd << IVTRANS_CLI_PATH << " fit --input " << csv.string()
      << " --time-col days --status-col status --z-cols treatment,logcd4_base"
      << " --w-cols treatment_iv,logcd4_prior --family ph --variance plugin --out "
      << out.string();
  const int rc = std::system(cmd.str().c_str());
  bool pass = rc == 0;
  std::string detail = "exit=" + std::to_string(rc);
  if (pass) {
    try {
      const nlohmann::json body = read_json_report(out.string());
      pass = body.contains("naive") && body.contains("proposed") &&
             body.at("proposed").at("converged").get<bool>() &&
             body.at("naive").at("beta_hat").size() == 2;
      detail += pass ? ", report holds naive+proposed estimates" : ", report incomplete";
    } catch (const std::exception& e) {
      pass = false;
      detail += std::string(", report unreadable: ") + e.what();
    }
  }
  std::error_code ec;
  std::filesystem::remove(csv, ec);
  std::filesystem::remove(out, ec);
  report_line(11, "CLI end-to-end smoke", pass, detail);
#endif
}

}  // namespace

int main() {
  std::puts("acceptance criteria");
  std::puts("-------------------");
  criterion_1_bias_mse_ph();
  criterion_2_bias_mse_po();
  criterion_3_two_covariate_bias();
  criterion_4_coverage_width();
  criterion_5_breslow();
  criterion_6_oracle_equivalence();
  criterion_7_cox_crosscheck();
  criterion_8_score_at_solution();
  criterion_9_variance_sanity();
  criterion_10_determinism();
  criterion_11_cli_smoke();
  std::printf("-------------------\n%d of 11 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
