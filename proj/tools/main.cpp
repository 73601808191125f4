// Command-line front end: `fit` for real-data analyses (naive and
// instrument-corrected estimates side by side), `simulate` for replicated
// Monte Carlo studies, `calibrate` for the censoring constant.

#include <cstdio>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "ivtrans/ivtrans.hpp"

namespace {

ivtrans::HazardFamily parse_family(const std::string& text) {
  if (text == "ph") return ivtrans::HazardFamily::proportional_hazards();
  if (text == "po") return ivtrans::HazardFamily::proportional_odds();
  if (text.rfind("r=", 0) == 0) {
    try {
      return ivtrans::HazardFamily(std::stod(text.substr(2)));
    } catch (const std::exception&) {
      throw ivtrans::validation_error("cannot parse family index in '" + text + "'");
    }
  }
  throw ivtrans::validation_error("--family must be ph, po, or r=<float>, got '" + text + "'");
}

std::string family_title(double r) {
  if (r == 0.0) return "Proportional hazards model";
  if (r == 1.0) return "Proportional odds model";
  std::ostringstream title;
  title << "Transformation model (r = " << r << ")";
  return title.str();
}

ivtrans::SimCase parse_case(const std::string& text) {
  if (text == "i") return ivtrans::SimCase::case_i;
  if (text == "ii") return ivtrans::SimCase::case_ii;
  if (text == "iii") return ivtrans::SimCase::case_iii;
  throw ivtrans::validation_error("--case must be i, ii or iii, got '" + text + "'");
}

Eigen::VectorXd parse_beta_list(const std::vector<double>& values) {
  Eigen::VectorXd beta(static_cast<Eigen::Index>(values.size()));
  for (Eigen::Index j = 0; j < beta.size(); ++j) beta(j) = values[static_cast<std::size_t>(j)];
  return beta;
}

// Table with naive and corrected estimates side by side, one column pair per
// covariate.
void print_fit_table(const std::string& title, const std::vector<std::string>& names,
                     const ivtrans::FitResult& naive, const ivtrans::FitResult& proposed) {
  std::printf("%s\n", title.c_str());
  std::printf("%-10s", "");
  for (const auto& name : names) std::printf("  %-22s", name.c_str());
  std::printf("\n%-10s", "Method");
  for (std::size_t j = 0; j < names.size(); ++j) std::printf("  %-10s %-10s", "Estimate", "SE");
  std::printf("\n");
  auto print_row = [&](const char* label, const ivtrans::FitResult& fit) {
    std::printf("%-10s", label);
    for (Eigen::Index j = 0; j < fit.beta_hat.size(); ++j)
      std::printf("  %-10.4f %-10.4f", fit.beta_hat(j), fit.std_errors(j));
    std::printf("\n");
  };
  print_row("Naive", naive);
  print_row("Proposed", proposed);
}

int run_fit(const std::string& input, const ivtrans::ColumnMapping& mapping,
            const std::string& family_text, const std::string& variance_text, int boot_reps,
            std::uint64_t boot_seed, double ci_level, const std::string& out_path,
            bool emit_components) {
  const ivtrans::HazardFamily family = parse_family(family_text);
  ivtrans::FitOptions options;
  options.ci_level = ci_level;
  options.boot_reps = boot_reps;
  options.boot_seed = boot_seed;
  if (variance_text == "plugin") {
    options.variance = ivtrans::VarianceMethod::plugin;
  } else if (variance_text == "bootstrap") {
    options.variance = ivtrans::VarianceMethod::bootstrap;
  } else {
    throw ivtrans::validation_error("--variance must be plugin or bootstrap");
  }

  const ivtrans::SurvivalDataset data = ivtrans::read_dataset(input, mapping);

  nlohmann::json config;
  config["command"] = "fit";
  config["input"] = input;
  config["time_col"] = mapping.time_col;
  config["status_col"] = mapping.status_col;
  config["z_cols"] = mapping.z_cols;
  config["w_cols"] = mapping.w_cols;
  config["family"] = family_text;
  config["family_r"] = family.r;
  config["variance"] = variance_text;
  config["boot_reps"] = boot_reps;
  config["boot_seed"] = boot_seed;
  config["ci_level"] = ci_level;

  nlohmann::json body;
  body["config"] = config;
  body["n"] = data.n();
  body["n_events"] = data.n_events();
  // The naive fit reuses the estimating equations with Z as the design; its
  // SE keeps only the martingale variance term (no instrument stage exists
  // that could feed the first-stage noise terms).
  body["naive_variance_note"] =
      "naive SE from the same sandwich with Z as design and the first-stage "
      "terms dropped (Sigma_1 = Sigma_12 = 0)";

  int exit_code = 0;
  try {
    const ivtrans::FitResult proposed = ivtrans::fit(data, family, options);
    const ivtrans::FitResult naive = ivtrans::fit_naive(data, family, options);
    print_fit_table(family_title(family.r), mapping.z_cols, naive, proposed);
    body["proposed"] = ivtrans::fit_to_json(proposed, emit_components);
    body["naive"] = ivtrans::fit_to_json(naive, emit_components);
  } catch (const ivtrans::nonconvergence_error& e) {
    nlohmann::json failed;
    failed["converged"] = false;
    failed["final_score_norm"] = e.score_norm();
    failed["iterations"] = e.iterations();
    failed["last_beta"] = e.last_beta();
    failed["message"] = e.what();
    body["proposed"] = failed;
    std::cerr << "fit did not converge: " << e.what() << "\n";
    exit_code = e.exit_code();
  }
  if (!out_path.empty()) ivtrans::write_json_report(out_path, body);
  return exit_code;
}

int run_simulate(const std::string& case_text, int n, const std::vector<double>& beta_values,
                 const std::string& family_text, int reps, std::uint64_t seed,
                 double target_censoring, int workers, const std::string& out_path) {
  const ivtrans::HazardFamily family = parse_family(family_text);
  ivtrans::CaseSpec spec = ivtrans::CaseSpec::make(parse_case(case_text), n,
                                                   parse_beta_list(beta_values), family.r, reps,
                                                   seed);
  spec.target_censoring = target_censoring;
  const ivtrans::MetricsReport report = ivtrans::run_study(spec, workers);

  std::printf("case %s  n=%d  r=%g  reps=%d  seed=%llu\n", case_text.c_str(), n, family.r, reps,
              static_cast<unsigned long long>(seed));
  for (Eigen::Index j = 0; j < report.bias.size(); ++j)
    std::printf("beta[%ld]=%g  bias=%.6f  mse=%.6f  cp=%.4f  aw=%.4f\n", static_cast<long>(j),
                spec.beta(j), report.bias(j), report.mse(j), report.coverage_probability(j),
                report.average_width(j));
  std::printf("censoring rate %.4f  convergence rate %.4f  c=%.6g\n",
              report.empirical_censoring_rate, report.convergence_rate, report.spec.censoring_c);

  if (!out_path.empty()) {
    nlohmann::json config;
    config["command"] = "simulate";
    config["workers_hint"] = workers;
    nlohmann::json body = ivtrans::metrics_to_json(report);
    body["config"] = config;
    ivtrans::write_json_report(out_path, body);
  }
  return 0;
}

int run_calibrate(const std::string& case_text, const std::vector<double>& beta_values,
                  const std::string& family_text, double target, std::uint64_t seed) {
  const ivtrans::HazardFamily family = parse_family(family_text);
  ivtrans::CaseSpec spec = ivtrans::CaseSpec::make(parse_case(case_text), 50,
                                                   parse_beta_list(beta_values), family.r, 1,
                                                   seed);
  spec.target_censoring = target;
  const double c = ivtrans::calibrate_censoring(spec);
  std::printf("%.17g\n", c);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Transformation-model survival regression with instrument-corrected covariates"};
  app.require_subcommand(1);

  // fit
  auto* fit_cmd = app.add_subcommand("fit", "Fit a dataset read from CSV");
  std::string input, time_col, status_col, out_path;
  std::vector<std::string> z_cols, w_cols;
  std::string family_text = "ph";
  std::string variance_text = "plugin";
  int boot_reps = 200;
  std::uint64_t boot_seed = 20250811;
  double ci_level = 0.95;
  bool emit_components = false;
  fit_cmd->add_option("--input", input, "CSV file with a header row")->required();
  fit_cmd->add_option("--time-col", time_col, "follow-up time column")->required();
  fit_cmd->add_option("--status-col", status_col, "event indicator column (0/1)")->required();
  fit_cmd->add_option("--z-cols", z_cols, "surrogate covariate columns")
      ->required()
      ->delimiter(',');
  fit_cmd->add_option("--w-cols", w_cols, "instrument columns")->required()->delimiter(',');
  fit_cmd->add_option("--family", family_text, "ph, po, or r=<float>");
  fit_cmd->add_option("--variance", variance_text, "plugin or bootstrap");
  fit_cmd->add_option("--boot-reps", boot_reps, "bootstrap replicates");
  fit_cmd->add_option("--boot-seed", boot_seed, "bootstrap seed");
  fit_cmd->add_option("--ci-level", ci_level, "confidence level");
  fit_cmd->add_option("--out", out_path, "JSON report path");
  fit_cmd->add_flag("--emit-components", emit_components, "include variance component matrices");

  // simulate
  auto* sim_cmd = app.add_subcommand("simulate", "Run a replicated simulation study");
  std::string case_text = "i";
  int n = 50;
  std::vector<double> beta_values;
  std::string sim_family = "ph";
  int reps = 1000;
  std::uint64_t seed = 1;
  double target_censoring = 0.20;
  int workers = 0;
  std::string sim_out;
  sim_cmd->add_option("--case", case_text, "i, ii or iii")->required();
  sim_cmd->add_option("--n", n, "sample size per replicate")->required();
  sim_cmd->add_option("--beta", beta_values, "true coefficients")->required()->delimiter(',');
  sim_cmd->add_option("--family", sim_family, "ph, po, or r=<float>");
  sim_cmd->add_option("--reps", reps, "number of replicates")->required();
  sim_cmd->add_option("--seed", seed, "study seed")->required();
  sim_cmd->add_option("--target-censoring", target_censoring, "censored fraction to calibrate");
  sim_cmd->add_option("--workers", workers, "worker threads (0 = auto)");
  sim_cmd->add_option("--out", sim_out, "JSON report path");

  // calibrate
  auto* cal_cmd = app.add_subcommand("calibrate", "Calibrate the uniform censoring bound");
  std::string cal_case = "i";
  std::vector<double> cal_beta;
  std::string cal_family = "ph";
  double cal_target = 0.20;
  std::uint64_t cal_seed = 1;
  cal_cmd->add_option("--case", cal_case, "i, ii or iii")->required();
  cal_cmd->add_option("--beta", cal_beta, "true coefficients")->required()->delimiter(',');
  cal_cmd->add_option("--family", cal_family, "ph, po, or r=<float>");
  cal_cmd->add_option("--target-censoring", cal_target, "censored fraction")->required();
  cal_cmd->add_option("--seed", cal_seed, "calibration seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return e.get_exit_code() == 0 ? 0 : 2;
  }

  try {
    if (fit_cmd->parsed()) {
      ivtrans::ColumnMapping mapping{time_col, status_col, z_cols, w_cols};
      return run_fit(input, mapping, family_text, variance_text, boot_reps, boot_seed, ci_level,
                     out_path, emit_components);
    }
    if (sim_cmd->parsed())
      return run_simulate(case_text, n, beta_values, sim_family, reps, seed, target_censoring,
                          workers, sim_out);
    if (cal_cmd->parsed())
      return run_calibrate(cal_case, cal_beta, cal_family, cal_target, cal_seed);
  } catch (const ivtrans::error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
