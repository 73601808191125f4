#pragma once

#include <Eigen/Dense>
#include <sstream>

#include "ivtrans/dataset.hpp"
#include "ivtrans/errors.hpp"

namespace ivtrans {

// First estimation stage: least squares of the surrogates on the instruments.
// Q_hat solves the normal equations (W^T W) Q = W^T Z; the per-column residual
// variance of Z - W Q_hat estimates the combined noise variance of the
// surrogate around the instrument prediction.
struct IVRegressionFit {
  Eigen::MatrixXd Q_hat;           // q x p
  Eigen::MatrixXd imputed_design;  // W * Q_hat, n x p
  Eigen::VectorXd sigma_eta_sq;    // p per-column residual variances, divisor n - q
  Eigen::MatrixXd gram_inverse;    // (W^T W)^{-1}, symmetric positive definite
};

inline IVRegressionFit estimate_Q(const SurvivalDataset& data) {
  const Eigen::Index n = data.n();
  const Eigen::Index q = data.q();
  const Eigen::MatrixXd gram = data.W.transpose() * data.W;

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
  const Eigen::VectorXd ev = eig.eigenvalues();  // ascending
  const double rcond = ev(q - 1) > 0.0 ? ev(0) / ev(q - 1) : 0.0;
  if (!(rcond > 1e-12)) {
    std::ostringstream msg;
    msg << "instrument Gram matrix W^T W is numerically singular: "
        << "reciprocal condition number " << rcond << " <= 1e-12";
    throw singular_design_error(msg.str());
  }

  IVRegressionFit fit;
  // Solve through an orthogonal decomposition of W; the explicit Gram inverse
  // is kept because the variance stage needs (W^T W)^{-1} itself.
  fit.Q_hat = Eigen::ColPivHouseholderQR<Eigen::MatrixXd>(data.W).solve(data.Z);
  fit.imputed_design = data.W * fit.Q_hat;
  fit.gram_inverse =
      eig.eigenvectors() * ev.cwiseInverse().asDiagonal() * eig.eigenvectors().transpose();

  const Eigen::MatrixXd residuals = data.Z - fit.imputed_design;
  fit.sigma_eta_sq.resize(data.p());
  for (Eigen::Index j = 0; j < data.p(); ++j)
    fit.sigma_eta_sq(j) = residuals.col(j).squaredNorm() / static_cast<double>(n - q);
  return fit;
}

inline Eigen::MatrixXd impute_design(const IVRegressionFit& fit, const Eigen::MatrixXd& W_new) {
  if (W_new.cols() != fit.Q_hat.rows()) {
    std::ostringstream msg;
    msg << "impute_design: W_new has " << W_new.cols() << " columns, expected "
        << fit.Q_hat.rows();
    throw shape_error(msg.str());
  }
  return W_new * fit.Q_hat;
}

}  // namespace ivtrans
