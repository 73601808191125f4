#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <sstream>

#include "ivtrans/dataset.hpp"
#include "ivtrans/errors.hpp"
#include "ivtrans/hazard.hpp"

namespace ivtrans {

// Monotone step-function estimate of the unspecified transform. Jumps only at
// the distinct observed failure times; by convention the function is -inf
// (equivalently, Lambda of it is 0) before the first failure time.
struct StepTransform {
  Eigen::VectorXd event_times;   // K strictly increasing
  Eigen::VectorXd values;        // strictly increasing step values
  Eigen::VectorXi event_counts;  // ties per failure time

  Eigen::Index steps() const { return values.size(); }

  // Largest step index with event time <= t; -1 before the first event.
  Eigen::Index step_at(double t) const {
    const double* begin = event_times.data();
    const double* pos = std::upper_bound(begin, begin + event_times.size(), t);
    return static_cast<Eigen::Index>(pos - begin) - 1;
  }

  double value_at(double t) const {
    const Eigen::Index k = step_at(t);
    return k < 0 ? -std::numeric_limits<double>::infinity() : values(k);
  }
};

namespace detail {

inline double log_sum_exp(const Eigen::VectorXd& eta, Eigen::Index from) {
  double max_val = -std::numeric_limits<double>::infinity();
  for (Eigen::Index i = from; i < eta.size(); ++i) max_val = std::max(max_val, eta(i));
  double acc = 0.0;
  for (Eigen::Index i = from; i < eta.size(); ++i) acc += std::exp(eta(i) - max_val);
  return max_val + std::log(acc);
}

}  // namespace detail

// Solves the per-event recursion
//
//   sum_{i at risk at t_1} Lambda(eta_i + l(t_1))                    = d_1,
//   sum_{i at risk at t_k} [Lambda(eta_i + l(t_k)) - Lambda(eta_i + l(t_{k-1}))] = d_k,
//
// left to right. Each step is the unique root of a strictly increasing scalar
// map, found by safeguarded Newton inside an expanding bracket. The paper's
// unit right side generalizes to the tie count d_k. `warm_start`, when given,
// seeds each step's iteration (used by the outer fit loop; the solution does
// not depend on it).
inline StepTransform solve_transform_eta(const Eigen::VectorXd& eta, const EventGrid& grid,
                                         const HazardFamily& family,
                                         const Eigen::VectorXd* warm_start = nullptr) {
  if (eta.size() != grid.n) throw shape_error("linear predictor length differs from record count");
  const Eigen::Index n = grid.n;
  const Eigen::Index K = grid.steps();

  StepTransform transform;
  transform.event_times = grid.event_times;
  transform.event_counts = grid.event_counts;
  transform.values.resize(K);

  // Lambda(eta_i + l(t_{k-1})) for records still at risk; zero before t_1.
  Eigen::VectorXd base = Eigen::VectorXd::Zero(n);

  double previous = -std::numeric_limits<double>::infinity();
  for (Eigen::Index k = 0; k < K; ++k) {
    const Eigen::Index at_risk_from = grid.first_at_risk(k);
    if (at_risk_from >= n) {
      std::ostringstream msg;
      msg << "empty risk set at failure time " << grid.event_times(k);
      throw degenerate_risk_set_error(msg.str());
    }
    const double d_k = static_cast<double>(grid.event_counts(k));

    auto evaluate = [&](double v, double* slope) {
      double acc = 0.0;
      double slope_acc = 0.0;
      for (Eigen::Index i = at_risk_from; i < n; ++i) {
        acc += cumulative_hazard(family, eta(i) + v) - base(i);
        if (slope) slope_acc += hazard(family, eta(i) + v);
      }
      if (slope) *slope = slope_acc;
      return acc - d_k;
    };

    // Starting point: previous value for k > 1, Breslow-type guess for k = 1
    // (exact root when r = 0, a lower bound otherwise since Lambda <= exp).
    double x;
    if (warm_start && warm_start->size() == K && std::isfinite((*warm_start)(k))) {
      x = (*warm_start)(k);
      if (k > 0 && x <= previous) x = previous + 1.0;
    } else if (k == 0) {
      x = std::log(d_k) - detail::log_sum_exp(eta, at_risk_from);
    } else {
      x = previous + 1.0;
    }

    // Bracket the root: lo with g < 0, hi with g > 0, expanding geometrically.
    double lo, hi;
    if (k > 0) {
      lo = previous;  // g(previous) = -d_k < 0
      hi = std::max(x, previous + 1.0);
    } else {
      lo = x;
      hi = x + 1.0;
    }
    bool bracketed = false;
    double step = 1.0;
    for (int attempt = 0; attempt <= 60; ++attempt) {
      if (evaluate(hi, nullptr) > 0.0) {
        bracketed = true;
        break;
      }
      lo = hi;
      hi += step;
      step *= 2.0;
    }
    if (!bracketed) {
      std::ostringstream msg;
      msg << "transform step not bracketable at failure time " << grid.event_times(k)
          << " after 60 doublings";
      throw bracket_failure_error(msg.str());
    }
    if (k == 0) {
      step = 1.0;
      bool low_ok = false;
      for (int attempt = 0; attempt <= 60; ++attempt) {
        if (evaluate(lo, nullptr) < 0.0) {
          low_ok = true;
          break;
        }
        hi = std::min(hi, lo);
        lo -= step;
        step *= 2.0;
      }
      if (!low_ok) {
        std::ostringstream msg;
        msg << "transform step not bracketable below at failure time " << grid.event_times(k);
        throw bracket_failure_error(msg.str());
      }
    }

    // Safeguarded Newton: iterates clamped to the shrinking bracket, bisection
    // when a step leaves it.
    if (!(x > lo && x < hi)) x = 0.5 * (lo + hi);
    const double f_tol = 1e-12;
    for (int iter = 0; iter < 300; ++iter) {
      double slope = 0.0;
      const double f = evaluate(x, &slope);
      if (std::isfinite(f)) {
        if (f < 0.0)
          lo = x;
        else
          hi = x;
        if (std::abs(f) <= f_tol) break;
      } else {
        hi = x;  // overflow region lies above the root
      }
      if (hi - lo <= 4.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(x)))
        break;
      double candidate = x - f / slope;
      if (!std::isfinite(candidate) || candidate <= lo || candidate >= hi)
        candidate = 0.5 * (lo + hi);
      x = candidate;
    }

    transform.values(k) = x;
    previous = x;
    for (Eigen::Index i = at_risk_from; i < n; ++i)
      base(i) = cumulative_hazard(family, eta(i) + x);
  }
  return transform;
}

inline StepTransform solve_transform(const Eigen::VectorXd& beta, const Eigen::MatrixXd& design,
                                     const Eigen::VectorXd& times, const Eigen::VectorXi& status,
                                     const HazardFamily& family) {
  if (design.rows() != times.size() || design.cols() != beta.size())
    throw shape_error("solve_transform: design dimensions do not match beta/times");
  const EventGrid grid = EventGrid::build(times, status);
  return solve_transform_eta(design * beta, grid, family);
}

inline StepTransform solve_transform(const Eigen::VectorXd& beta, const Eigen::MatrixXd& design,
                                     const SurvivalDataset& data, const HazardFamily& family) {
  return solve_transform(beta, design, data.times, data.status, family);
}

namespace detail {

inline void require_matching_transform(const StepTransform& transform, const EventGrid& grid) {
  if (transform.steps() != grid.steps())
    throw shape_error("transform step count differs from the event grid");
  for (Eigen::Index k = 0; k < grid.steps(); ++k)
    if (transform.event_times(k) != grid.event_times(k))
      throw shape_error("transform event times differ from the dataset's failure times");
}

// n x K matrix of per-record increments g(eta_i + l(t_k)) - g(eta_i + l(t_{k-1}))
// masked by at-risk status, where g is either Lambda or lambda. These are the
// Lebesgue-Stieltjes weights used by the score and variance stages; column
// sums of the Lambda version equal the tie counts once the recursion is solved.
template <typename Fn>
inline Eigen::MatrixXd stieltjes_increments(const StepTransform& transform,
                                            const Eigen::VectorXd& eta, const EventGrid& grid,
                                            Fn&& g) {
  require_matching_transform(transform, grid);
  if (eta.size() != grid.n) throw shape_error("linear predictor length differs from record count");
  Eigen::MatrixXd increments = Eigen::MatrixXd::Zero(grid.n, grid.steps());
  for (Eigen::Index i = 0; i < grid.n; ++i) {
    const Eigen::Index last = grid.step_index(i);
    double prev = 0.0;  // g treated as 0 before the first failure time
    for (Eigen::Index k = 0; k <= last; ++k) {
      const double cur = g(eta(i) + transform.values(k));
      increments(i, k) = std::max(0.0, cur - prev);
      prev = cur;
    }
  }
  return increments;
}

}  // namespace detail

inline Eigen::MatrixXd cumhaz_increments_eta(const StepTransform& transform,
                                             const Eigen::VectorXd& eta, const EventGrid& grid,
                                             const HazardFamily& family) {
  return detail::stieltjes_increments(transform, eta, grid,
                                      [&](double t) { return cumulative_hazard(family, t); });
}

// Same layout with the hazard rate in place of the cumulative hazard; used by
// the plug-in variance, where lambda'(.) dl integrates to lambda(.).
inline Eigen::MatrixXd hazard_rate_increments_eta(const StepTransform& transform,
                                                  const Eigen::VectorXd& eta,
                                                  const EventGrid& grid,
                                                  const HazardFamily& family) {
  return detail::stieltjes_increments(transform, eta, grid,
                                      [&](double t) { return hazard(family, t); });
}

inline Eigen::MatrixXd cumhaz_increments(const StepTransform& transform,
                                         const Eigen::VectorXd& beta,
                                         const Eigen::MatrixXd& design,
                                         const SurvivalDataset& data,
                                         const HazardFamily& family) {
  if (design.rows() != data.n() || design.cols() != beta.size())
    throw shape_error("cumhaz_increments: design dimensions do not match beta/dataset");
  const EventGrid grid = EventGrid::build(data);
  return cumhaz_increments_eta(transform, design * beta, grid, family);
}

}  // namespace ivtrans
