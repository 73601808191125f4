#pragma once

#include <Eigen/Dense>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "ivtrans/dataset.hpp"
#include "ivtrans/errors.hpp"
#include "ivtrans/fit.hpp"
#include "ivtrans/hazard.hpp"
#include "ivtrans/rng.hpp"

namespace ivtrans {

enum class SimCase { case_i, case_ii, case_iii };

inline const char* to_string(SimCase c) {
  switch (c) {
    case SimCase::case_i: return "i";
    case SimCase::case_ii: return "ii";
    case SimCase::case_iii: return "iii";
  }
  return "?";
}

// Monte Carlo configuration. Case (i): one covariate, one instrument drawn
// exponential with mean 4, Q = 3. Case (ii): one covariate, two instruments
// with means (2,4), Q = (2,3)^T. Case (iii): two covariates, two instruments
// with means (2,4), Q = diag(2,5). Surrogate and instrument-stage noise are
// standard normal by default; the censoring bound c is calibrated so that the
// requested fraction of records is censored.
struct CaseSpec {
  SimCase case_id = SimCase::case_i;
  int n = 50;
  Eigen::VectorXd beta;
  Eigen::MatrixXd Q;                 // q x p
  double family_r = 0.0;
  Eigen::VectorXd instrument_means;  // q
  double error_sd_v = 1.0;
  double error_sd_eps = 1.0;
  double target_censoring = 0.20;
  int reps = 1000;
  std::uint64_t seed = 1;
  double censoring_c = 0.0;  // calibrated uniform-censoring bound; 0 = not yet set

  Eigen::Index p() const { return Q.cols(); }
  Eigen::Index q() const { return Q.rows(); }

  static CaseSpec make(SimCase id, int n, Eigen::VectorXd beta, double family_r, int reps,
                       std::uint64_t seed) {
    CaseSpec spec;
    spec.case_id = id;
    spec.n = n;
    spec.beta = std::move(beta);
    spec.family_r = family_r;
    spec.reps = reps;
    spec.seed = seed;
    switch (id) {
      case SimCase::case_i:
        spec.Q = Eigen::MatrixXd::Constant(1, 1, 3.0);
        spec.instrument_means = Eigen::VectorXd::Constant(1, 4.0);
        break;
      case SimCase::case_ii:
        spec.Q.resize(2, 1);
        spec.Q << 2.0, 3.0;
        spec.instrument_means.resize(2);
        spec.instrument_means << 2.0, 4.0;
        break;
      case SimCase::case_iii:
        spec.Q = Eigen::MatrixXd::Zero(2, 2);
        spec.Q(0, 0) = 2.0;
        spec.Q(1, 1) = 5.0;
        spec.instrument_means.resize(2);
        spec.instrument_means << 2.0, 4.0;
        break;
    }
    spec.validate();
    return spec;
  }

  void validate() const {
    const Eigen::Index expected_p = case_id == SimCase::case_iii ? 2 : 1;
    const Eigen::Index expected_q = case_id == SimCase::case_i ? 1 : 2;
    if (Q.cols() != expected_p || Q.rows() != expected_q)
      throw validation_error("case spec: Q dimensions do not match the simulation case");
    if (beta.size() != expected_p)
      throw validation_error("case spec: beta length does not match the simulation case");
    if (instrument_means.size() != expected_q)
      throw validation_error("case spec: instrument mean count does not match the case");
    for (Eigen::Index j = 0; j < instrument_means.size(); ++j)
      if (!(instrument_means(j) > 0.0))
        throw validation_error("case spec: instrument means must be positive");
    if (n <= static_cast<int>(q())) throw validation_error("case spec: n must exceed q");
    if (reps <= 0) throw validation_error("case spec: reps must be positive");
    if (!(error_sd_v >= 0.0) || !(error_sd_eps >= 0.0))
      throw validation_error("case spec: noise standard deviations must be >= 0");
    if (!(target_censoring >= 0.0 && target_censoring < 1.0))
      throw validation_error("case spec: target censoring must lie in [0,1)");
  }
};

// Per-coefficient bias, MSE, coverage and width summaries over replications.
struct MetricsReport {
  CaseSpec spec;  // echo, including the calibrated censoring constant
  Eigen::VectorXd bias;
  Eigen::VectorXd mse;
  Eigen::VectorXd coverage_probability;
  Eigen::VectorXd average_width;
  double empirical_censoring_rate = 0.0;
  double convergence_rate = 0.0;
  double ci_level = 0.95;
};

struct GeneratedCase {
  SurvivalDataset data;
  Eigen::MatrixXd X_true;  // latent covariates, rows aligned with data
  Eigen::VectorXd T_true;
  Eigen::VectorXd C;
};

namespace detail {

// Draws everything but the censoring times; also used by the calibration,
// which only needs T.
struct RawDraw {
  Eigen::MatrixXd W, X, Z;
  Eigen::VectorXd T;
};

inline RawDraw draw_sample(const CaseSpec& spec, Eigen::Index n_records, Rng& rng,
                           bool need_surrogates) {
  const Eigen::Index p = spec.p();
  const Eigen::Index q = spec.q();
  RawDraw draw;
  draw.W.resize(n_records, q);
  for (Eigen::Index i = 0; i < n_records; ++i)
    for (Eigen::Index j = 0; j < q; ++j)
      draw.W(i, j) = rng.exponential(spec.instrument_means(j));
  Eigen::MatrixXd eps(n_records, p);
  for (Eigen::Index i = 0; i < n_records; ++i)
    for (Eigen::Index j = 0; j < p; ++j) eps(i, j) = spec.error_sd_eps * rng.normal();
  draw.X = draw.W * spec.Q + eps;
  if (need_surrogates) {
    Eigen::MatrixXd v(n_records, p);
    for (Eigen::Index i = 0; i < n_records; ++i)
      for (Eigen::Index j = 0; j < p; ++j) v(i, j) = spec.error_sd_v * rng.normal();
    draw.Z = draw.X + v;
  }
  // log T = -(W Q) beta + e: survival follows the transformation model in the
  // instrument-level covariate, while eps and v together form the surrogate
  // noise around it (their combined variance is what the first stage
  // estimates). Generating T from X = WQ + eps instead would break the model
  // the estimating equations solve and biases the fit far beyond anything the
  // reference tables show.
  const HazardFamily family(spec.family_r);
  const Eigen::VectorXd predicted = draw.W * (spec.Q * spec.beta);
  draw.T.resize(n_records);
  for (Eigen::Index i = 0; i < n_records; ++i) {
    const double e = sample_error(family, rng.uniform_open());
    draw.T(i) = std::exp(-predicted(i) + e);
  }
  return draw;
}

}  // namespace detail

// log T = -X beta + e with W, eps, v, e and the uniform censoring draw taken
// from a stream keyed by (seed, replicate); deterministic per replicate.
inline GeneratedCase generate_case(const CaseSpec& spec, int replicate) {
  spec.validate();
  if (!(spec.censoring_c > 0.0))
    throw precondition_error("generate_case: censoring constant not calibrated");
  Rng rng = Rng::keyed(spec.seed, static_cast<std::uint64_t>(replicate), rng_stream::data);
  detail::RawDraw draw = detail::draw_sample(spec, spec.n, rng, true);

  Eigen::VectorXd follow_up(spec.n);
  Eigen::VectorXi status(spec.n);
  Eigen::VectorXd censor(spec.n);
  for (Eigen::Index i = 0; i < spec.n; ++i) {
    censor(i) = spec.censoring_c * rng.uniform();
    const bool event = draw.T(i) <= censor(i);
    follow_up(i) = event ? draw.T(i) : censor(i);
    status(i) = event ? 1 : 0;
  }

  SurvivalDataset data(follow_up, status, draw.Z, draw.W);
  // Reorder the hidden truth to the dataset's canonical record order.
  Eigen::MatrixXd X_sorted(spec.n, spec.p());
  Eigen::VectorXd T_sorted(spec.n), C_sorted(spec.n);
  for (Eigen::Index i = 0; i < spec.n; ++i) {
    const Eigen::Index src = data.original_index(i);
    X_sorted.row(i) = draw.X.row(src);
    T_sorted(i) = draw.T(src);
    C_sorted(i) = censor(src);
  }
  return GeneratedCase{std::move(data), std::move(X_sorted), std::move(T_sorted),
                       std::move(C_sorted)};
}

// Bisection on the uniform bound c over a fixed synthetic draw of 1e5 records
// until the empirical censoring fraction hits the target. The fraction is
// monotone decreasing in c; c is capped at 1e12.
inline double calibrate_censoring(const CaseSpec& spec) {
  spec.validate();
  if (!(spec.target_censoring > 0.0 && spec.target_censoring <= 0.9))
    throw domain_error("calibrate_censoring: target must lie in (0, 0.9]");

  constexpr Eigen::Index calibration_n = 100000;
  constexpr double c_cap = 1e12;
  Rng rng = Rng::keyed(spec.seed, 0, rng_stream::censoring);
  const detail::RawDraw draw = detail::draw_sample(spec, calibration_n, rng, false);
  Eigen::VectorXd uniforms(calibration_n);
  for (Eigen::Index i = 0; i < calibration_n; ++i) uniforms(i) = rng.uniform();

  auto censored_fraction = [&](double c) {
    Eigen::Index censored = 0;
    for (Eigen::Index i = 0; i < calibration_n; ++i) censored += (draw.T(i) > c * uniforms(i));
    return static_cast<double>(censored) / static_cast<double>(calibration_n);
  };

  double lo = 0.0;  // fully censored
  double hi = 1.0;
  while (censored_fraction(hi) > spec.target_censoring) {
    lo = hi;
    hi *= 2.0;
    if (hi > c_cap) {
      std::ostringstream msg;
      msg << "censoring target " << spec.target_censoring
          << " unreachable: empirical rate still " << censored_fraction(c_cap)
          << " at the cap c = 1e12";
      throw calibration_error(msg.str());
    }
  }

  double mid = 0.5 * (lo + hi);
  for (int iter = 0; iter < 200; ++iter) {
    mid = 0.5 * (lo + hi);
    const double rate = censored_fraction(mid);
    if (std::abs(rate - spec.target_censoring) <= 1e-3) return mid;
    if (rate > spec.target_censoring)
      lo = mid;
    else
      hi = mid;
    if (hi - lo <= 1e-12 * std::max(1.0, hi)) break;
  }
  if (std::abs(censored_fraction(mid) - spec.target_censoring) > 0.01) {
    std::ostringstream msg;
    msg << "censoring calibration failed to land within 0.01 of target "
        << spec.target_censoring;
    throw calibration_error(msg.str());
  }
  return mid;
}

namespace detail {

struct ReplicateOutcome {
  bool ok = false;
  Eigen::VectorXd beta;
  Eigen::VectorXd width;
  std::vector<bool> covered;
  double censored_fraction = 0.0;
  bool generated = false;
  std::string failure;
};

}  // namespace detail

// Replicated generate/fit study with bias, MSE, coverage and width summaries.
// Replicates run on `workers` threads; outcomes are stored per replicate index
// and aggregated in index order, so the report does not depend on scheduling.
inline MetricsReport run_study(const CaseSpec& spec_in, int workers = 0) {
  CaseSpec spec = spec_in;
  spec.validate();
  if (!(spec.censoring_c > 0.0)) spec.censoring_c = calibrate_censoring(spec);

  const Eigen::Index p = spec.p();
  const HazardFamily family(spec.family_r);
  FitOptions options;

  std::vector<detail::ReplicateOutcome> outcomes(static_cast<std::size_t>(spec.reps));
  std::atomic<int> next_replicate{0};
  auto worker_loop = [&]() {
    for (;;) {
      const int rep = next_replicate.fetch_add(1);
      if (rep >= spec.reps) return;
      auto& out = outcomes[static_cast<std::size_t>(rep)];
      try {
        const GeneratedCase generated = generate_case(spec, rep);
        out.censored_fraction =
            1.0 - static_cast<double>(generated.data.n_events()) /
                      static_cast<double>(generated.data.n());
        out.generated = true;
        const FitResult result = fit(generated.data, family, options);
        out.beta = result.beta_hat;
        out.width.resize(p);
        out.covered.resize(static_cast<std::size_t>(p));
        for (Eigen::Index j = 0; j < p; ++j) {
          const auto& ci = result.conf_intervals[static_cast<std::size_t>(j)];
          out.width(j) = ci.second - ci.first;
          out.covered[static_cast<std::size_t>(j)] =
              ci.first <= spec.beta(j) && spec.beta(j) <= ci.second;
        }
        out.ok = true;
      } catch (const error& e) {
        out.failure = e.what();
      }
    }
  };

  int thread_count = workers > 0 ? workers
                                 : static_cast<int>(std::thread::hardware_concurrency());
  if (thread_count < 1) thread_count = 1;
  thread_count = std::min(thread_count, spec.reps);
  if (thread_count == 1) {
    worker_loop();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(thread_count));
    for (int t = 0; t < thread_count; ++t) pool.emplace_back(worker_loop);
    for (auto& th : pool) th.join();
  }

  MetricsReport report;
  report.spec = spec;
  report.bias = Eigen::VectorXd::Zero(p);
  report.mse = Eigen::VectorXd::Zero(p);
  report.coverage_probability = Eigen::VectorXd::Zero(p);
  report.average_width = Eigen::VectorXd::Zero(p);

  int n_ok = 0;
  int n_generated = 0;
  double censoring_acc = 0.0;
  std::string first_failure;
  for (const auto& out : outcomes) {
    if (out.generated) {
      ++n_generated;
      censoring_acc += out.censored_fraction;
    }
    if (!out.ok) {
      if (first_failure.empty() && !out.failure.empty()) first_failure = out.failure;
      continue;
    }
    ++n_ok;
    for (Eigen::Index j = 0; j < p; ++j) {
      const double dev = out.beta(j) - spec.beta(j);
      report.bias(j) += dev;
      report.mse(j) += dev * dev;
      report.coverage_probability(j) += out.covered[static_cast<std::size_t>(j)] ? 1.0 : 0.0;
      report.average_width(j) += out.width(j);
    }
  }

  report.convergence_rate = static_cast<double>(n_ok) / static_cast<double>(spec.reps);
  if (report.convergence_rate < 0.95) {
    std::ostringstream msg;
    msg << "study quality: only " << n_ok << " of " << spec.reps
        << " replicates converged (rate " << report.convergence_rate << ")";
    if (!first_failure.empty()) msg << "; first failure: " << first_failure;
    throw study_quality_error(msg.str());
  }
  report.bias /= static_cast<double>(n_ok);
  report.mse /= static_cast<double>(n_ok);
  report.coverage_probability /= static_cast<double>(n_ok);
  report.average_width /= static_cast<double>(n_ok);
  report.empirical_censoring_rate =
      n_generated > 0 ? censoring_acc / static_cast<double>(n_generated) : 0.0;
  return report;
}

// Identical machinery; the name marks studies run for coverage and width
// summaries, where the interval bookkeeping is the point.
inline MetricsReport coverage_study(const CaseSpec& spec, int workers = 0) {
  return run_study(spec, workers);
}

}  // namespace ivtrans
