#pragma once

#include <Eigen/Dense>

namespace wgmm {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Default ridge multiplier and the eigenvalue floor (both relative to tr/k).
inline constexpr double kDefaultRidge = 1e-8;
inline constexpr double kRidgeFloor = 1e-10;
/// Relative eigenvalue cutoff for numerical rank.
inline constexpr double kRankTolerance = 1e-10;

/// S, plus ridge * tr(S)/k on the diagonal when the smallest eigenvalue of S
/// falls below kRidgeFloor * tr(S)/k. Throws DegenerateCovariance when S is
/// near-singular and ridge == 0, or when tr(S) <= 0.
Eigen::MatrixXd regularize(const Eigen::MatrixXd& S, double ridge, double* applied = nullptr);

/// Inverse of regularize(S, ridge) via Cholesky.
Eigen::MatrixXd regularized_inverse(const Eigen::MatrixXd& S, double ridge);

/// Symmetric PSD square root, negative eigenvalues clipped at zero.
Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& S);

/// Orthonormal basis of the column span of symmetric PSD S.
Eigen::MatrixXd span_basis(const Eigen::MatrixXd& S, double rel_tol = kRankTolerance);

/// Numerical rank of symmetric S (eigenvalues above rel_tol * max|eig|).
Eigen::Index numerical_rank(const Eigen::MatrixXd& S, double rel_tol = kRankTolerance);

/// Moore-Penrose pseudo-inverse of symmetric S.
Eigen::MatrixXd pseudo_inverse_sym(const Eigen::MatrixXd& S, double rel_tol = kRankTolerance);

/// log|det S| for symmetric positive definite S.
double log_det_spd(const Eigen::MatrixXd& S);

}  // namespace wgmm
