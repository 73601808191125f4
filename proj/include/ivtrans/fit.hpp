#pragma once

#include <Eigen/Dense>
#include <utility>
#include <vector>

#include "ivtrans/dataset.hpp"
#include "ivtrans/iv_regression.hpp"
#include "ivtrans/score.hpp"
#include "ivtrans/variance.hpp"

namespace ivtrans {

struct FitResult {
  Eigen::VectorXd beta_hat;
  StepTransform transform;
  Eigen::MatrixXd covariance;  // of beta_hat
  Eigen::VectorXd std_errors;
  std::vector<std::pair<double, double>> conf_intervals;
  int iterations = 0;
  bool converged = false;
  double final_score_norm = 0.0;
  double ci_level = 0.95;
  VarianceComponents components;  // empty when the bootstrap covariance is used
  IVRegressionFit iv;             // empty for naive / direct-design fits
  bool instrumented = false;
};

namespace detail {

inline FitResult assemble_result(ProfileFit&& pf, Eigen::MatrixXd&& covariance,
                                 VarianceComponents&& comps, double ci_level) {
  FitResult result;
  result.beta_hat = std::move(pf.beta);
  result.transform = std::move(pf.transform);
  result.iterations = pf.iterations;
  result.converged = pf.converged;
  result.final_score_norm = pf.final_score_norm;
  result.ci_level = ci_level;
  result.covariance = std::move(covariance);
  result.std_errors = result.covariance.diagonal().cwiseSqrt();
  result.conf_intervals = confidence_intervals(result.beta_hat, result.covariance, ci_level);
  result.components = std::move(comps);
  return result;
}

}  // namespace detail

// Two-stage fit: impute the design from the instruments, solve the profiled
// score, then attach the requested covariance estimate.
inline FitResult fit(const SurvivalDataset& data, const HazardFamily& family,
                     const FitOptions& options = {}) {
  IVRegressionFit iv = estimate_Q(data);
  ProfileFit pf = fit_design(iv.imputed_design, data.times, data.status, family, options);

  Eigen::MatrixXd covariance;
  VarianceComponents comps;
  if (options.variance == VarianceMethod::plugin) {
    comps = sandwich_covariance(pf, iv.imputed_design, data, family, iv);
    covariance = comps.sandwich;
  } else {
    covariance = bootstrap_covariance(data, family, options, options.boot_reps,
                                      options.boot_seed);
  }
  FitResult result = detail::assemble_result(std::move(pf), std::move(covariance),
                                             std::move(comps), options.ci_level);
  result.iv = std::move(iv);
  result.instrumented = true;
  return result;
}

// Fit on a directly observed design (no instrument stage). Used for the naive
// comparison fit and for oracle checks; the covariance keeps only the
// martingale term.
inline FitResult fit_with_design(const Eigen::MatrixXd& design, const Eigen::VectorXd& times,
                                 const Eigen::VectorXi& status, const HazardFamily& family,
                                 const FitOptions& options = {}) {
  ProfileFit pf = fit_design(design, times, status, family, options);
  VarianceComponents comps = sandwich_covariance_naive(pf, design, times, status, family);
  Eigen::MatrixXd covariance = comps.sandwich;
  return detail::assemble_result(std::move(pf), std::move(covariance), std::move(comps),
                                 options.ci_level);
}

// Naive fit: the surrogate matrix Z plugged in as if measured exactly.
inline FitResult fit_naive(const SurvivalDataset& data, const HazardFamily& family,
                           const FitOptions& options = {}) {
  return fit_with_design(data.Z, data.times, data.status, family, options);
}

}  // namespace ivtrans
