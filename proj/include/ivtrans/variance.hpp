#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <utility>
#include <vector>

#include "ivtrans/dataset.hpp"
#include "ivtrans/errors.hpp"
#include "ivtrans/hazard.hpp"
#include "ivtrans/iv_regression.hpp"
#include "ivtrans/rng.hpp"
#include "ivtrans/score.hpp"
#include "ivtrans/transform.hpp"

namespace ivtrans {

// Martingale residual increments dN_i(t_k) - Y_i(t_k) dLambda_hat_i(t_k).
// Column sums vanish because the transform recursion balances each failure
// time's compensator against its tie count.
struct MartingaleResiduals {
  Eigen::MatrixXd increments;  // n x K
};

// Plug-in ingredients of the asymptotic covariance
//   Sigma_beta^{-1} (Sigma_1 - Sigma_2 + 2 Sigma_12) (Sigma_beta^{-1})^T,
// with expectations replaced by sample means, integrals against dl by
// Stieltjes sums over the fitted step transform, and (beta, l, Q) by their
// estimates. `sandwich` is already scaled to estimate the covariance of
// beta_hat itself (the 1/n is absorbed).
struct VarianceComponents {
  Eigen::MatrixXd B_matrix;     // K x K, lower triangle; B(t_k, t_s) for s <= k
  Eigen::MatrixXd mu;           // K x p weighted risk-set means of the design
  Eigen::MatrixXd mu_W;         // K x q weighted risk-set means of the instruments
  Eigen::MatrixXd Sigma_beta;   // p x p slope of the profiled score
  Eigen::MatrixXd Sigma_Q;      // p x q first-stage sensitivity
  Eigen::MatrixXd Sigma_1;      // p x p first-stage noise contribution
  Eigen::MatrixXd Sigma_2;      // p x p martingale variance
  Eigen::MatrixXd Sigma_12;     // p x p cross term (equals Sigma_2 under plug-in)
  Eigen::MatrixXd Sigma_total;  // Sigma_1 - Sigma_2 + 2 Sigma_12
  Eigen::MatrixXd sandwich;     // p x p covariance estimate of beta_hat
};

inline MartingaleResiduals martingale_residuals(const ProfileFit& fit,
                                                const Eigen::MatrixXd& design,
                                                const Eigen::VectorXd& times,
                                                const Eigen::VectorXi& status,
                                                const HazardFamily& family) {
  if (!fit.converged) throw precondition_error("martingale residuals require a converged fit");
  const EventGrid grid = EventGrid::build(times, status);
  const Eigen::VectorXd eta = design * fit.beta;
  MartingaleResiduals residuals;
  residuals.increments = -cumhaz_increments_eta(fit.transform, eta, grid, family);
  for (Eigen::Index i = 0; i < grid.n; ++i)
    if (grid.event_column(i) >= 0) residuals.increments(i, grid.event_column(i)) += 1.0;
  return residuals;
}

inline MartingaleResiduals martingale_residuals(const ProfileFit& fit,
                                                const Eigen::MatrixXd& design,
                                                const SurvivalDataset& data,
                                                const HazardFamily& family) {
  return martingale_residuals(fit, design, data.times, data.status, family);
}

namespace detail {

// Cumulative log of B along the step transform:
//   cum[k] = sum_{1 < j <= k} [sum_i lambda'(eta_i + l_j) Y_i(t_j)] /
//                             [sum_i lambda (eta_i + l_j) Y_i(t_j)] * (l_j - l_{j-1}),
// so that B(t_k, t_s) = exp(cum[k] - cum[s]). For r = 0 the ratio is one and B
// collapses to exp(l_k - l_s).
inline Eigen::VectorXd log_B_cumulative(const ProfileFit& fit, const Eigen::VectorXd& eta,
                                        const EventGrid& grid, const HazardFamily& family) {
  require_matching_transform(fit.transform, grid);
  const Eigen::Index K = grid.steps();
  Eigen::VectorXd cum = Eigen::VectorXd::Zero(K);
  for (Eigen::Index j = 1; j < K; ++j) {
    double numer = 0.0;
    double denom = 0.0;
    for (Eigen::Index i = grid.first_at_risk(j); i < grid.n; ++i) {
      const double arg = eta(i) + fit.transform.values(j);
      numer += hazard_derivative(family, arg);
      denom += hazard(family, arg);
    }
    if (!(denom > 0.0)) {
      std::ostringstream msg;
      msg << "no one at risk contributes hazard mass at failure time " << grid.event_times(j);
      throw degenerate_risk_set_error(msg.str());
    }
    cum(j) = cum(j - 1) +
             (numer / denom) * (fit.transform.values(j) - fit.transform.values(j - 1));
  }
  return cum;
}

}  // namespace detail

inline Eigen::MatrixXd estimate_B(const ProfileFit& fit, const Eigen::MatrixXd& design,
                                  const Eigen::VectorXd& times, const Eigen::VectorXi& status,
                                  const HazardFamily& family) {
  if (!fit.converged) throw precondition_error("estimate_B requires a converged fit");
  const EventGrid grid = EventGrid::build(times, status);
  const Eigen::VectorXd eta = design * fit.beta;
  const Eigen::VectorXd cum = detail::log_B_cumulative(fit, eta, grid, family);
  const Eigen::Index K = grid.steps();
  Eigen::MatrixXd B = Eigen::MatrixXd::Zero(K, K);
  for (Eigen::Index k = 0; k < K; ++k)
    for (Eigen::Index s = 0; s <= k; ++s) B(k, s) = std::exp(cum(k) - cum(s));
  return B;
}

inline Eigen::MatrixXd estimate_B(const ProfileFit& fit, const Eigen::MatrixXd& design,
                                  const SurvivalDataset& data, const HazardFamily& family) {
  return estimate_B(fit, design, data.times, data.status, family);
}

// Exact derivative of the profiled score at the fitted pair: the transform
// solves the per-event balance equations at every beta, so a beta perturbation
// moves every step value; differentiating those balance equations gives the
// step sensitivities and, through them, the full Jacobian dU1/dbeta. Column m
// is the directional derivative along beta_m. This is the finite-sample
// version of the slope matrix the sandwich inverts.
inline Eigen::MatrixXd profiled_score_jacobian(const ProfileFit& fit,
                                               const Eigen::MatrixXd& design,
                                               const Eigen::VectorXd& times,
                                               const Eigen::VectorXi& status,
                                               const HazardFamily& family) {
  if (!fit.converged) throw precondition_error("profiled score Jacobian requires a converged fit");
  const EventGrid grid = EventGrid::build(times, status);
  detail::require_matching_transform(fit.transform, grid);
  if (design.rows() != grid.n) throw shape_error("design row count differs from record count");
  const Eigen::Index n = grid.n;
  const Eigen::Index K = grid.steps();
  const Eigen::Index p = design.cols();
  const Eigen::VectorXd eta = design * fit.beta;

  // Per-step risk-set sums of lambda at the current and previous step values.
  // S_cur(k) = sum_{i in R_k} lambda(eta_i + l_k), and analogously with the
  // design columns; *_prev uses l_{k-1} over the same risk set R_k.
  Eigen::VectorXd s_cur(K), s_prev(K);
  Eigen::MatrixXd sx_cur(K, p), sx_prev(K, p);
  for (Eigen::Index k = 0; k < K; ++k) {
    double cur = 0.0, prev = 0.0;
    Eigen::RowVectorXd xcur = Eigen::RowVectorXd::Zero(p);
    Eigen::RowVectorXd xprev = Eigen::RowVectorXd::Zero(p);
    for (Eigen::Index i = grid.first_at_risk(k); i < n; ++i) {
      const double lam_cur = hazard(family, eta(i) + fit.transform.values(k));
      cur += lam_cur;
      xcur += design.row(i) * lam_cur;
      if (k > 0) {
        const double lam_prev = hazard(family, eta(i) + fit.transform.values(k - 1));
        prev += lam_prev;
        xprev += design.row(i) * lam_prev;
      }
    }
    s_cur(k) = cur;
    s_prev(k) = prev;
    sx_cur.row(k) = xcur;
    sx_prev.row(k) = xprev;
  }

  // Step sensitivities dl_k/dbeta_m from the differentiated balance equations:
  //   S_cur(k) (x_m + dl_k) - S_prev(k) (x_m + dl_{k-1}) = 0 summed over R_k.
  Eigen::MatrixXd dl(K, p);
  for (Eigen::Index m = 0; m < p; ++m) {
    double prev_dl = 0.0;
    for (Eigen::Index k = 0; k < K; ++k) {
      const double rhs = -sx_cur(k, m) + (k > 0 ? sx_prev(k, m) + prev_dl * s_prev(k) : 0.0);
      prev_dl = rhs / s_cur(k);
      dl(k, m) = prev_dl;
    }
  }

  // dU/dbeta_m = -sum_i sum_{k <= last_i} x_i [lambda_ik (x_im + dl_k)
  //              - lambda_{i,k-1} (x_im + dl_{k-1})], which telescopes to the
  // record's own-time term.
  Eigen::MatrixXd jacobian = Eigen::MatrixXd::Zero(p, p);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Index last = grid.step_index(i);
    if (last < 0) continue;
    const double lam_own = hazard(family, eta(i) + fit.transform.values(last));
    Eigen::RowVectorXd acc(p);
    for (Eigen::Index m = 0; m < p; ++m) acc(m) = lam_own * (design(i, m) + dl(last, m));
    jacobian.noalias() -= design.row(i).transpose() * acc;
  }
  return jacobian;
}

inline Eigen::MatrixXd profiled_score_jacobian(const ProfileFit& fit,
                                               const Eigen::MatrixXd& design,
                                               const SurvivalDataset& data,
                                               const HazardFamily& family) {
  return profiled_score_jacobian(fit, design, data.times, data.status, family);
}

namespace detail {

// Centering function entering Sigma_2: the weighted risk-set mean of the
// design plus the feedback of the estimated transform, accumulated backward
// through the B kernel. For r = 0 the feedback term vanishes identically and
// mu reduces to the exp-weighted risk-set mean.
inline Eigen::MatrixXd influence_centering(const Eigen::MatrixXd& columns,
                                           const Eigen::MatrixXd& design_rates,
                                           const Eigen::VectorXd& eta,
                                           const ProfileFit& fit, const EventGrid& grid,
                                           const HazardFamily& family,
                                           const Eigen::VectorXd& cum) {
  const Eigen::Index n = grid.n;
  const Eigen::Index K = grid.steps();
  const Eigen::Index width = columns.cols();
  const double inv_n = 1.0 / static_cast<double>(n);

  Eigen::VectorXd a(K), b(K);
  Eigen::MatrixXd c(K, width), d(K, width);
  for (Eigen::Index k = 0; k < K; ++k) {
    double a_k = 0.0, b_k = 0.0;
    Eigen::RowVectorXd c_k = Eigen::RowVectorXd::Zero(width);
    Eigen::RowVectorXd d_k = Eigen::RowVectorXd::Zero(width);
    for (Eigen::Index i = grid.first_at_risk(k); i < n; ++i) {
      const double lam = hazard(family, eta(i) + fit.transform.values(k));
      a_k += lam;
      c_k += columns.row(i) * lam;
      b_k += design_rates(i, k);
      d_k += columns.row(i) * design_rates(i, k);
    }
    if (!(a_k > 0.0)) {
      std::ostringstream msg;
      msg << "degenerate risk set in centering at failure time " << grid.event_times(k);
      throw degenerate_risk_set_error(msg.str());
    }
    a(k) = a_k * inv_n;
    b(k) = b_k * inv_n;
    c.row(k) = c_k * inv_n;
    d.row(k) = d_k * inv_n;
  }

  // Backward recursion carry_k = (carry_{k+1} + g_{k+1}) * exp(cum_k - cum_{k+1});
  // cum is nondecreasing, so every damping factor is <= 1 and nothing can
  // overflow regardless of the transform's range.
  Eigen::MatrixXd mu(K, width);
  Eigen::RowVectorXd carry = Eigen::RowVectorXd::Zero(width);
  for (Eigen::Index k = K - 1; k >= 0; --k) {
    mu.row(k) = (c.row(k) + carry) / a(k);
    if (k > 0) {
      const Eigen::RowVectorXd g = d.row(k) - c.row(k) * (b(k) / a(k));
      carry = (carry + g) * std::exp(cum(k - 1) - cum(k));
    }
  }
  return mu;
}

// Shared assembly for the instrumented and naive variants. `instruments` and
// `iv` are null for the naive fit, which keeps only the martingale part
// (Sigma_1 = 0, Sigma_12 = 0, Sigma = Sigma_2).
inline VarianceComponents sandwich_components(const ProfileFit& fit,
                                              const Eigen::MatrixXd& design,
                                              const Eigen::VectorXd& times,
                                              const Eigen::VectorXi& status,
                                              const HazardFamily& family,
                                              const Eigen::MatrixXd* instruments,
                                              const IVRegressionFit* iv) {
  if (!fit.converged) throw precondition_error("sandwich covariance requires a converged fit");
  const EventGrid grid = EventGrid::build(times, status);
  const Eigen::Index n = grid.n;
  const Eigen::Index K = grid.steps();
  const Eigen::Index p = design.cols();
  const Eigen::Index q = instruments ? instruments->cols() : 0;
  if (design.rows() != n) throw shape_error("design row count differs from record count");

  const Eigen::VectorXd eta = design * fit.beta;
  const Eigen::MatrixXd cumhaz_inc = cumhaz_increments_eta(fit.transform, eta, grid, family);
  const Eigen::MatrixXd rate_inc = hazard_rate_increments_eta(fit.transform, eta, grid, family);
  const Eigen::VectorXd cum = detail::log_B_cumulative(fit, eta, grid, family);

  VarianceComponents comps;
  comps.B_matrix = Eigen::MatrixXd::Zero(K, K);
  for (Eigen::Index k = 0; k < K; ++k)
    for (Eigen::Index s = 0; s <= k; ++s) comps.B_matrix(k, s) = std::exp(cum(k) - cum(s));

  comps.mu = detail::influence_centering(design, rate_inc, eta, fit, grid, family, cum);
  if (q > 0)
    comps.mu_W = detail::influence_centering(*instruments, rate_inc, eta, fit, grid, family, cum);
  else
    comps.mu_W = Eigen::MatrixXd::Zero(K, 0);

  // Slope of the profiled score: computed exactly through the solved
  // transform rather than from the Stieltjes-sum approximation, so the
  // inverted matrix matches what a finite-difference probe of U1 sees.
  comps.Sigma_beta =
      -profiled_score_jacobian(fit, design, times, status, family) / static_cast<double>(n);

  comps.Sigma_2 = Eigen::MatrixXd::Zero(p, p);
  comps.Sigma_Q = Eigen::MatrixXd::Zero(p, q);
  for (Eigen::Index k = 0; k < K; ++k) {
    for (Eigen::Index i = grid.first_at_risk(k); i < n; ++i) {
      const Eigen::RowVectorXd centered = design.row(i) - comps.mu.row(k);
      comps.Sigma_2.noalias() += centered.transpose() * centered * cumhaz_inc(i, k);
      if (q > 0)
        comps.Sigma_Q.noalias() += design.row(i).transpose() *
                                   (instruments->row(i) - comps.mu_W.row(k)) * rate_inc(i, k);
    }
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  comps.Sigma_2 *= inv_n;
  comps.Sigma_Q *= inv_n;

  // Under the plug-in substitution Q -> Q_hat the cross-term integrand
  // coincides with Sigma_2's.
  comps.Sigma_12 = comps.Sigma_2;
  if (iv) {
    const double sigma_eta = iv->sigma_eta_sq.mean();
    // (W^T W / n)^{-1}: the Gram inverse normalized to the per-record scale.
    comps.Sigma_1 = comps.Sigma_Q * (static_cast<double>(n) * iv->gram_inverse) *
                    comps.Sigma_Q.transpose() * sigma_eta;
    comps.Sigma_total = comps.Sigma_1 - comps.Sigma_2 + 2.0 * comps.Sigma_12;
  } else {
    comps.Sigma_1 = Eigen::MatrixXd::Zero(p, p);
    comps.Sigma_12 = Eigen::MatrixXd::Zero(p, p);
    comps.Sigma_total = comps.Sigma_2;
  }

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(comps.Sigma_beta,
                                        Eigen::ComputeThinU | Eigen::ComputeThinV);
  const double smin = svd.singularValues()(p - 1);
  const double smax = svd.singularValues()(0);
  if (!(smax > 0.0) || smin / smax < 1e-12) {
    std::ostringstream msg;
    msg << "Sigma_beta numerically singular (singular values " << smax << " .. " << smin << ")";
    throw singular_information_error(msg.str());
  }
  const Eigen::MatrixXd sigma_beta_inv = comps.Sigma_beta.partialPivLu().solve(
      Eigen::MatrixXd::Identity(p, p));
  Eigen::MatrixXd sandwich = sigma_beta_inv * comps.Sigma_total * sigma_beta_inv.transpose();
  sandwich = 0.5 * (sandwich + sandwich.transpose()).eval();
  sandwich *= inv_n;

  for (Eigen::Index j = 0; j < p; ++j) {
    if (!(sandwich(j, j) > 0.0)) {
      std::ostringstream msg;
      msg << "invalid covariance: nonpositive diagonal " << sandwich(j, j) << " at coefficient "
          << j << "; Sigma_1 diag " << comps.Sigma_1(j, j) << ", Sigma_2 diag "
          << comps.Sigma_2(j, j) << ", Sigma_12 diag " << comps.Sigma_12(j, j);
      throw invalid_covariance_error(msg.str());
    }
  }
  comps.sandwich = sandwich;
  return comps;
}

}  // namespace detail

inline VarianceComponents sandwich_covariance(const ProfileFit& fit, const Eigen::MatrixXd& design,
                                              const SurvivalDataset& data,
                                              const HazardFamily& family,
                                              const IVRegressionFit& iv) {
  return detail::sandwich_components(fit, design, data.times, data.status, family, &data.W, &iv);
}

// Naive variant: design used as observed, no first-stage noise propagated.
inline VarianceComponents sandwich_covariance_naive(const ProfileFit& fit,
                                                    const Eigen::MatrixXd& design,
                                                    const Eigen::VectorXd& times,
                                                    const Eigen::VectorXi& status,
                                                    const HazardFamily& family) {
  return detail::sandwich_components(fit, design, times, status, family, nullptr, nullptr);
}

// AS241 inverse of the standard normal CDF.
inline double normal_quantile(double prob) {
  if (!(prob > 0.0 && prob < 1.0)) throw domain_error("normal_quantile requires p in (0,1)");
  const double x = prob - 0.5;
  if (std::abs(x) <= 0.425) {
    const double r = 0.180625 - x * x;
    return x *
           (((((((2.5090809287301226727e3 * r + 3.3430575583588128105e4) * r +
                 6.7265770927008700853e4) * r + 4.5921953931549871457e4) * r +
               1.3731693765509461125e4) * r + 1.9715909503065514427e3) * r +
             1.3314166789178437745e2) * r + 3.3871328727963666080e0) /
           (((((((5.2264952788528545610e3 * r + 2.8729085735721942674e4) * r +
                 3.9307895800092710610e4) * r + 2.1213794301586595867e4) * r +
               5.3941960214247511077e3) * r + 6.8718700749205790830e2) * r +
             4.2313330701600911252e1) * r + 1.0);
  }
  double r = x < 0.0 ? prob : 1.0 - prob;
  r = std::sqrt(-std::log(r));
  double value;
  if (r <= 5.0) {
    r -= 1.6;
    value = (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r +
                  2.41780725177450611770e-1) * r + 1.27045825245236838258e0) * r +
                3.64784832476320460504e0) * r + 5.76949722146069140550e0) * r +
              4.63033784615654529590e0) * r + 1.42343711074968357734e0) /
            (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r +
                  1.51986665636164571966e-2) * r + 1.48103976427480074590e-1) * r +
                6.89767334985100004550e-1) * r + 1.67638483018380384940e0) * r +
              2.05319162663775882187e0) * r + 1.0);
  } else {
    r -= 5.0;
    value = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r +
                  1.24266094738807843860e-3) * r + 2.65321895265761230930e-2) * r +
                2.96560571828504891230e-1) * r + 1.78482653991729133580e0) * r +
              5.46378491116411436990e0) * r + 6.65790464350110377720e0) /
            (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r +
                  1.84631831751005468180e-5) * r + 7.86869131145613259100e-4) * r +
                1.48753612908506148525e-2) * r + 1.36929880922735805310e-1) * r +
              5.99832206555887937690e-1) * r + 1.0);
  }
  return x < 0.0 ? -value : value;
}

// Wald intervals beta_j +- z_{(1+level)/2} sqrt(cov_jj).
inline std::vector<std::pair<double, double>> confidence_intervals(const Eigen::VectorXd& beta,
                                                                   const Eigen::MatrixXd& cov,
                                                                   double level) {
  if (!(level > 0.0 && level < 1.0)) throw domain_error("confidence level must lie in (0,1)");
  if (cov.rows() != beta.size() || cov.cols() != beta.size())
    throw shape_error("covariance dimensions do not match the coefficient vector");
  for (Eigen::Index j = 0; j < beta.size(); ++j)
    if (!(cov(j, j) >= 0.0) || !std::isfinite(cov(j, j)))
      throw precondition_error("covariance diagonal must be finite and nonnegative");
  const double z = normal_quantile(0.5 * (1.0 + level));
  std::vector<std::pair<double, double>> intervals;
  intervals.reserve(static_cast<std::size_t>(beta.size()));
  for (Eigen::Index j = 0; j < beta.size(); ++j) {
    const double half_width = z * std::sqrt(cov(j, j));
    intervals.emplace_back(beta(j) - half_width, beta(j) + half_width);
  }
  return intervals;
}

// Nonparametric bootstrap: resample records with replacement, rerun the full
// two-stage fit, and take the sample covariance of the replicated estimates.
inline Eigen::MatrixXd bootstrap_covariance(const SurvivalDataset& data,
                                            const HazardFamily& family,
                                            const FitOptions& options, int n_boot,
                                            std::uint64_t seed) {
  if (n_boot < 50) throw precondition_error("bootstrap requires n_boot >= 50");
  const Eigen::Index n = data.n();
  const Eigen::Index p = data.p();

  std::vector<Eigen::VectorXd> replicates;
  replicates.reserve(static_cast<std::size_t>(n_boot));
  int failures = 0;
  for (int b = 0; b < n_boot; ++b) {
    Rng rng = Rng::keyed(seed, static_cast<std::uint64_t>(b), rng_stream::bootstrap);
    Eigen::VectorXd times(n);
    Eigen::VectorXi status(n);
    Eigen::MatrixXd Z(n, p);
    Eigen::MatrixXd W(n, data.q());
    for (Eigen::Index i = 0; i < n; ++i) {
      const Eigen::Index pick =
          static_cast<Eigen::Index>(rng.uniform_index(static_cast<std::uint64_t>(n)));
      times(i) = data.times(pick);
      status(i) = data.status(pick);
      Z.row(i) = data.Z.row(pick);
      W.row(i) = data.W.row(pick);
    }
    try {
      const SurvivalDataset resampled(std::move(times), std::move(status), std::move(Z),
                                      std::move(W));
      const IVRegressionFit iv = estimate_Q(resampled);
      const ProfileFit pf =
          fit_design(iv.imputed_design, resampled.times, resampled.status, family, options);
      replicates.push_back(pf.beta);
    } catch (const error&) {
      ++failures;
    }
  }

  if (failures * 5 > n_boot) {
    std::ostringstream msg;
    msg << "bootstrap unstable: " << failures << " of " << n_boot << " refits failed";
    throw bootstrap_instability_error(msg.str());
  }

  const auto count = static_cast<Eigen::Index>(replicates.size());
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(p);
  for (const auto& b : replicates) mean += b;
  mean /= static_cast<double>(count);
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(p, p);
  for (const auto& b : replicates) {
    const Eigen::VectorXd centered = b - mean;
    cov.noalias() += centered * centered.transpose();
  }
  cov /= static_cast<double>(count > 1 ? count - 1 : 1);
  return cov;
}

}  // namespace ivtrans
