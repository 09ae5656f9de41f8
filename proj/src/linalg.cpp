#include "wgmm/linalg.hpp"

#include <cmath>

#include "wgmm/errors.hpp"

namespace wgmm {

Eigen::MatrixXd regularize(const Eigen::MatrixXd& S, double ridge, double* applied) {
  if (applied) *applied = 0.0;
  const auto k = static_cast<double>(S.rows());
  const double scale = S.trace() / k;
  if (!(scale > 0.0)) throw DegenerateCovariance("covariance has zero trace");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S, Eigen::EigenvaluesOnly);
  if (es.eigenvalues().minCoeff() >= kRidgeFloor * scale) return S;
  if (ridge <= 0.0) throw DegenerateCovariance("covariance is singular and ridge is disabled");
  Eigen::MatrixXd R = S;
  R.diagonal().array() += ridge * scale;
  if (applied) *applied = ridge * scale;
  return R;
}

Eigen::MatrixXd regularized_inverse(const Eigen::MatrixXd& S, double ridge) {
  const Eigen::MatrixXd R = regularize(S, ridge);
  Eigen::LLT<Eigen::MatrixXd> llt(R);
  if (llt.info() != Eigen::Success) throw DegenerateCovariance("covariance is not positive definite");
  Eigen::MatrixXd inv = llt.solve(Eigen::MatrixXd::Identity(S.rows(), S.cols()));
  return 0.5 * (inv + inv.transpose());
}

Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& S) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S);
  const Eigen::VectorXd d = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * d.asDiagonal() * es.eigenvectors().transpose();
}

Eigen::MatrixXd span_basis(const Eigen::MatrixXd& S, double rel_tol) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S);
  const double cut = rel_tol * es.eigenvalues().cwiseAbs().maxCoeff();
  Eigen::Index count = 0;
  for (Eigen::Index i = 0; i < S.rows(); ++i) count += es.eigenvalues()(i) > cut;
  Eigen::MatrixXd U(S.rows(), count);
  Eigen::Index c = 0;
  for (Eigen::Index i = 0; i < S.rows(); ++i)
    if (es.eigenvalues()(i) > cut) U.col(c++) = es.eigenvectors().col(i);
  return U;
}

Eigen::Index numerical_rank(const Eigen::MatrixXd& S, double rel_tol) {
  if (S.size() == 0) return 0;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S, Eigen::EigenvaluesOnly);
  const double top = es.eigenvalues().cwiseAbs().maxCoeff();
  if (top == 0.0) return 0;
  return (es.eigenvalues().array() > rel_tol * top).count();
}

Eigen::MatrixXd pseudo_inverse_sym(const Eigen::MatrixXd& S, double rel_tol) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S);
  const double cut = rel_tol * es.eigenvalues().cwiseAbs().maxCoeff();
  Eigen::VectorXd inv = es.eigenvalues();
  for (Eigen::Index i = 0; i < inv.size(); ++i) inv(i) = std::abs(inv(i)) > cut ? 1.0 / inv(i) : 0.0;
  return es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().transpose();
}

double log_det_spd(const Eigen::MatrixXd& S) {
  Eigen::LLT<Eigen::MatrixXd> llt(S);
  if (llt.info() != Eigen::Success) throw NumericalError("matrix is not positive definite");
  return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

}  // namespace wgmm
