#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <limits>
#include <sstream>

#include "ivtrans/dataset.hpp"
#include "ivtrans/errors.hpp"
#include "ivtrans/hazard.hpp"
#include "ivtrans/transform.hpp"

namespace ivtrans {

enum class VarianceMethod { plugin, bootstrap };

struct FitOptions {
  Eigen::VectorXd beta_init;       // empty => zeros
  int max_outer_iters = 100;
  double beta_tol = 1e-6;          // sup-norm on the accepted beta change
  double score_tol = 1e-8;         // on ||U1|| / n
  double jacobian_step = 1e-6;     // relative forward-difference step
  int step_halving_max = 30;
  double ci_level = 0.95;
  VarianceMethod variance = VarianceMethod::plugin;
  int boot_reps = 200;
  std::uint64_t boot_seed = 20250811;

  void validate() const {
    if (max_outer_iters <= 0) throw domain_error("max_outer_iters must be positive");
    if (!(beta_tol > 0.0)) throw domain_error("beta_tol must be positive");
    if (!(score_tol > 0.0)) throw domain_error("score_tol must be positive");
    if (!(jacobian_step > 0.0)) throw domain_error("jacobian_step must be positive");
    if (step_halving_max <= 0) throw domain_error("step_halving_max must be positive");
    if (!(ci_level > 0.0 && ci_level < 1.0)) throw domain_error("ci_level must lie in (0,1)");
  }
};

// Converged (beta, transform) pair from the profiled-score iteration, before
// any variance estimation.
struct ProfileFit {
  Eigen::VectorXd beta;
  StepTransform transform;
  bool converged = false;
  int iterations = 0;
  double final_score_norm = std::numeric_limits<double>::quiet_NaN();
};

namespace detail {

// U1 for a given linear predictor and already-solved transform. The double sum
// over events and risk sets telescopes record-wise: each record contributes
// x_i * (delta_i - Lambda(eta_i + l(T_i))).
inline Eigen::VectorXd score_from_eta(const Eigen::MatrixXd& design, const Eigen::VectorXd& eta,
                                      const Eigen::VectorXi& status, const StepTransform& transform,
                                      const EventGrid& grid, const HazardFamily& family) {
  require_matching_transform(transform, grid);
  Eigen::VectorXd score = Eigen::VectorXd::Zero(design.cols());
  for (Eigen::Index i = 0; i < grid.n; ++i) {
    const Eigen::Index last = grid.step_index(i);
    const double compensator =
        last < 0 ? 0.0 : cumulative_hazard(family, eta(i) + transform.values(last));
    const double residual = static_cast<double>(status(i)) - compensator;
    score.noalias() += design.row(i).transpose() * residual;
  }
  return score;
}

}  // namespace detail

inline Eigen::VectorXd score_U1(const Eigen::VectorXd& beta, const StepTransform& transform,
                                const Eigen::MatrixXd& design, const Eigen::VectorXd& times,
                                const Eigen::VectorXi& status, const HazardFamily& family) {
  if (design.rows() != times.size() || design.cols() != beta.size())
    throw shape_error("score_U1: design dimensions do not match beta/times");
  const EventGrid grid = EventGrid::build(times, status);
  return detail::score_from_eta(design, design * beta, status, transform, grid, family);
}

inline Eigen::VectorXd score_U1(const Eigen::VectorXd& beta, const StepTransform& transform,
                                const Eigen::MatrixXd& design, const SurvivalDataset& data,
                                const HazardFamily& family) {
  return score_U1(beta, transform, design, data.times, data.status, family);
}

// Alternating iteration on the profiled score: re-solve the transform at the
// trial beta, update beta by a quasi-Newton step with a forward-difference
// Jacobian of the profiled score, halve the step until ||U1|| decreases.
// Convergence requires both a small accepted beta change and a small score
// norm. Throws nonconvergence_error (carrying the last iterate) at the
// iteration cap and solver_stall_error when no descent step can be found.
inline ProfileFit fit_design(const Eigen::MatrixXd& design, const Eigen::VectorXd& times,
                             const Eigen::VectorXi& status, const HazardFamily& family,
                             const FitOptions& options = {}) {
  options.validate();
  const Eigen::Index n = times.size();
  const Eigen::Index p = design.cols();
  if (design.rows() != n || status.size() != n)
    throw shape_error("fit_design: design/status dimensions do not match times");
  const EventGrid grid = EventGrid::build(times, status);

  Eigen::VectorXd beta;
  if (options.beta_init.size() == 0) {
    beta = Eigen::VectorXd::Zero(p);
  } else if (options.beta_init.size() == p) {
    beta = options.beta_init;
  } else {
    throw shape_error("beta_init length differs from the number of design columns");
  }

  auto profiled = [&](const Eigen::VectorXd& b, const Eigen::VectorXd* warm,
                      StepTransform& tr_out) {
    const Eigen::VectorXd eta = design * b;
    tr_out = solve_transform_eta(eta, grid, family, warm);
    return detail::score_from_eta(design, eta, status, tr_out, grid, family);
  };

  StepTransform transform;
  Eigen::VectorXd score = profiled(beta, nullptr, transform);
  double score_norm = score.norm() / static_cast<double>(n);

  bool converged = score_norm <= options.score_tol;
  int iterations = 0;

  while (!converged && iterations < options.max_outer_iters) {
    ++iterations;

    Eigen::MatrixXd jacobian(p, p);
    for (Eigen::Index j = 0; j < p; ++j) {
      const double h = options.jacobian_step * std::max(1.0, std::abs(beta(j)));
      Eigen::VectorXd probe = beta;
      probe(j) += h;
      StepTransform probe_transform;
      const Eigen::VectorXd probe_score = profiled(probe, &transform.values, probe_transform);
      jacobian.col(j) = (probe_score - score) / h;
    }

    Eigen::VectorXd direction = jacobian.partialPivLu().solve(-score);
    if (!direction.allFinite()) {
      std::ostringstream msg;
      msg << "singular finite-difference Jacobian at iteration " << iterations;
      throw solver_stall_error(msg.str());
    }

    double step_scale = 1.0;
    bool accepted = false;
    const double current_norm = score.norm();
    for (int halving = 0; halving <= options.step_halving_max; ++halving) {
      const Eigen::VectorXd trial = beta + step_scale * direction;
      StepTransform trial_transform;
      Eigen::VectorXd trial_score;
      try {
        trial_score = profiled(trial, &transform.values, trial_transform);
      } catch (const bracket_failure_error&) {
        step_scale *= 0.5;
        continue;
      }
      if (trial_score.allFinite() && trial_score.norm() < current_norm) {
        const double change = (step_scale * direction).lpNorm<Eigen::Infinity>();
        beta = trial;
        transform = std::move(trial_transform);
        score = std::move(trial_score);
        score_norm = score.norm() / static_cast<double>(n);
        converged = change < options.beta_tol && score_norm <= options.score_tol;
        accepted = true;
        break;
      }
      step_scale *= 0.5;
    }
    if (!accepted) {
      if (score_norm <= options.score_tol) {
        converged = true;  // stalled exactly on the solution
        break;
      }
      std::ostringstream msg;
      msg << "no descent step found after " << options.step_halving_max
          << " halvings at iteration " << iterations << " (||U1||/n = " << score_norm << ")";
      throw solver_stall_error(msg.str());
    }
  }

  if (!converged) {
    std::ostringstream msg;
    msg << "fit did not converge in " << options.max_outer_iters
        << " outer iterations (||U1||/n = " << score_norm << ")";
    throw nonconvergence_error(
        msg.str(), std::vector<double>(beta.data(), beta.data() + beta.size()), score_norm,
        iterations);
  }

  // Re-solve the transform from a cold start so the returned pair is exactly
  // reproducible via solve_transform(beta_hat, ...).
  ProfileFit fit;
  fit.beta = beta;
  fit.transform = solve_transform_eta(design * beta, grid, family);
  fit.iterations = iterations;
  const Eigen::VectorXd final_score =
      detail::score_from_eta(design, design * beta, status, fit.transform, grid, family);
  fit.final_score_norm = final_score.norm() / static_cast<double>(n);
  fit.converged = fit.final_score_norm <= options.score_tol;
  if (!fit.converged) {
    std::ostringstream msg;
    msg << "score norm degraded on the final transform re-solve (||U1||/n = "
        << fit.final_score_norm << ")";
    throw nonconvergence_error(
        msg.str(), std::vector<double>(beta.data(), beta.data() + beta.size()),
        fit.final_score_norm, iterations);
  }
  return fit;
}

inline ProfileFit fit_design(const Eigen::MatrixXd& design, const SurvivalDataset& data,
                             const HazardFamily& family, const FitOptions& options = {}) {
  return fit_design(design, data.times, data.status, family, options);
}

}  // namespace ivtrans
