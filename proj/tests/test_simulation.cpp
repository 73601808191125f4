#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "ivtrans/report.hpp"
#include "ivtrans/simulation.hpp"
#include "ivtrans/variance.hpp"

using namespace ivtrans;

namespace {

Eigen::VectorXd beta1(double v) {
  Eigen::VectorXd b(1);
  b << v;
  return b;
}

}  // namespace

TEST_CASE("case defaults follow the study design") {
  const CaseSpec s1 = CaseSpec::make(SimCase::case_i, 50, beta1(1.0), 0.0, 10, 1);
  CHECK(s1.Q(0, 0) == 3.0);
  CHECK(s1.instrument_means(0) == 4.0);

  const CaseSpec s2 = CaseSpec::make(SimCase::case_ii, 50, beta1(2.0), 1.0, 10, 1);
  CHECK(s2.Q.rows() == 2);
  CHECK(s2.Q(0, 0) == 2.0);
  CHECK(s2.Q(1, 0) == 3.0);
  CHECK(s2.instrument_means(0) == 2.0);
  CHECK(s2.instrument_means(1) == 4.0);

  Eigen::VectorXd b2(2);
  b2 << 2.0, 4.0;
  const CaseSpec s3 = CaseSpec::make(SimCase::case_iii, 50, b2, 0.0, 10, 1);
  CHECK(s3.Q(0, 0) == 2.0);
  CHECK(s3.Q(1, 1) == 5.0);
  CHECK(s3.Q(0, 1) == 0.0);

  CHECK_THROWS_AS(CaseSpec::make(SimCase::case_i, 50, b2, 0.0, 10, 1), validation_error);
}

TEST_CASE("instrument draws have the configured mean") {
  CaseSpec spec = CaseSpec::make(SimCase::case_i, 100000, beta1(1.0), 0.0, 1, 2024);
  spec.censoring_c = 1.0;
  const GeneratedCase g = generate_case(spec, 0);
  CHECK(g.data.W.col(0).mean() == Catch::Approx(4.0).margin(0.05));
}

TEST_CASE("zero-noise draws make the surrogate equal the latent design") {
  CaseSpec spec = CaseSpec::make(SimCase::case_i, 500, beta1(1.0), 0.0, 1, 7);
  spec.error_sd_v = 0.0;
  spec.error_sd_eps = 0.0;
  spec.censoring_c = 1.0;
  const GeneratedCase g = generate_case(spec, 3);
  CHECK((g.data.Z - g.X_true).norm() == 0.0);
  CHECK((g.X_true - g.data.W * spec.Q).norm() == 0.0);
}

TEST_CASE("latent-surrogate correlation matches the variance arithmetic") {
  CaseSpec spec = CaseSpec::make(SimCase::case_i, 100000, beta1(1.0), 0.0, 1, 11);
  spec.censoring_c = 1.0;
  const GeneratedCase g = generate_case(spec, 0);
  const Eigen::VectorXd x = g.X_true.col(0);
  const Eigen::VectorXd z = g.data.Z.col(0);
  const double mx = x.mean(), mz = z.mean();
  const double cov = ((x.array() - mx) * (z.array() - mz)).mean();
  const double corr = cov / std::sqrt((x.array() - mx).square().mean() *
                                      (z.array() - mz).square().mean());
  CHECK(corr == Catch::Approx(std::sqrt(145.0 / 146.0)).margin(0.002));
}

TEST_CASE("generation is deterministic per (seed, replicate)") {
  CaseSpec spec = CaseSpec::make(SimCase::case_ii, 60, beta1(1.0), 1.0, 1, 5);
  spec.censoring_c = 0.5;
  const GeneratedCase a = generate_case(spec, 9);
  const GeneratedCase b = generate_case(spec, 9);
  CHECK((a.data.times - b.data.times).norm() == 0.0);
  CHECK((a.data.W - b.data.W).norm() == 0.0);
  const GeneratedCase c = generate_case(spec, 10);
  CHECK((a.data.times - c.data.times).norm() != 0.0);
}

TEST_CASE("censoring must be calibrated before generating") {
  CaseSpec spec = CaseSpec::make(SimCase::case_i, 50, beta1(1.0), 0.0, 1, 5);
  CHECK_THROWS_AS(generate_case(spec, 0), precondition_error);
}

TEST_CASE("censoring calibration hits the target") {
  CaseSpec spec = CaseSpec::make(SimCase::case_i, 50, beta1(1.0), 0.0, 1, 42);
  const double c = calibrate_censoring(spec);
  CHECK(c > 0.0);

  // fresh draws censored near 20%
  CaseSpec big = spec;
  big.n = 100000;
  big.censoring_c = c;
  const GeneratedCase g = generate_case(big, 1);
  const double censored =
      1.0 - static_cast<double>(g.data.n_events()) / static_cast<double>(g.data.n());
  CHECK(censored >= 0.19);
  CHECK(censored <= 0.21);

  // heavier censoring needs a smaller bound
  CaseSpec heavier = spec;
  heavier.target_censoring = 0.4;
  CHECK(calibrate_censoring(heavier) < c);

  CaseSpec invalid = spec;
  invalid.target_censoring = 0.0;
  CHECK_THROWS_AS(calibrate_censoring(invalid), domain_error);
}

TEST_CASE("unreachable censoring target errors at the cap") {
  // beta < 0 makes T heavy-tailed enough that even c = 1e12 censors too much
  CaseSpec spec = CaseSpec::make(SimCase::case_i, 50, beta1(-1.0), 0.0, 1, 13);
  spec.target_censoring = 0.05;
  CHECK_THROWS_AS(calibrate_censoring(spec), calibration_error);
}

TEST_CASE("small study metrics are sane and reproducible across workers") {
  CaseSpec spec = CaseSpec::make(SimCase::case_i, 40, beta1(1.0), 0.0, 48, 314);
  const MetricsReport a = run_study(spec, 1);
  const MetricsReport b = run_study(spec, 4);
  CHECK(metrics_to_json(a).dump() == metrics_to_json(b).dump());

  CHECK(a.convergence_rate >= 0.95);
  CHECK(a.empirical_censoring_rate == Catch::Approx(0.20).margin(0.06));
  CHECK(a.mse(0) >= a.bias(0) * a.bias(0) - 1e-12);
  CHECK(a.coverage_probability(0) >= 0.0);
  CHECK(a.coverage_probability(0) <= 1.0);
  CHECK(a.average_width(0) > 0.0);
  CHECK(a.spec.censoring_c > 0.0);

  const MetricsReport cov = coverage_study(spec, 2);
  CHECK(metrics_to_json(cov).dump() == metrics_to_json(a).dump());
}

TEST_CASE("wider nominal level never lowers coverage on the same fits") {
  CaseSpec spec = CaseSpec::make(SimCase::case_i, 50, beta1(1.0), 0.0, 40, 2718);
  spec.censoring_c = calibrate_censoring(spec);
  const HazardFamily family(0.0);
  int cover95 = 0, cover99 = 0, total = 0;
  for (int rep = 0; rep < spec.reps; ++rep) {
    try {
      const GeneratedCase g = generate_case(spec, rep);
      const FitResult f = fit(g.data, family);
      const auto ci95 = confidence_intervals(f.beta_hat, f.covariance, 0.95);
      const auto ci99 = confidence_intervals(f.beta_hat, f.covariance, 0.99);
      cover95 += ci95[0].first <= 1.0 && 1.0 <= ci95[0].second;
      cover99 += ci99[0].first <= 1.0 && 1.0 <= ci99[0].second;
      ++total;
    } catch (const error&) {
    }
  }
  REQUIRE(total > 0);
  CHECK(cover99 >= cover95);
}

TEST_CASE("exact instruments give a nearly unbiased study") {
  CaseSpec spec = CaseSpec::make(SimCase::case_i, 400, beta1(1.0), 0.0, 200, 606);
  spec.error_sd_v = 0.0;
  spec.error_sd_eps = 0.0;
  const MetricsReport rep = run_study(spec, 2);
  CHECK(std::abs(rep.bias(0)) < 0.01);
}

TEST_CASE("interval width shrinks with sample size") {
  CaseSpec small = CaseSpec::make(SimCase::case_i, 50, beta1(1.0), 0.0, 60, 99);
  CaseSpec large = CaseSpec::make(SimCase::case_i, 200, beta1(1.0), 0.0, 60, 99);
  const MetricsReport a = run_study(small, 2);
  const MetricsReport b = run_study(large, 2);
  CHECK(b.average_width(0) < a.average_width(0));
}
