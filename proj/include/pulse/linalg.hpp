#pragma once

#include <Eigen/Dense>

namespace pulse::linalg {

/// Gram matrices whose reciprocal condition number (min/max eigenvalue) is
/// below this are treated as singular.
inline constexpr double kSingularRcond = 1e-12;

/// Eigenvalues below kEigenClampRel * lambda_max are clamped before inversion.
inline constexpr double kEigenClampRel = 1e-14;

/// lambda_min / lambda_max of a symmetric PSD matrix; 0 when lambda_max <= 0.
double rcond_sym(const Eigen::MatrixXd& m);

/// (M)^{-1/2} of a symmetric PSD matrix via eigendecomposition, with
/// eigenvalues clamped at kEigenClampRel * lambda_max.
Eigen::MatrixXd inv_sqrt_sym(const Eigen::MatrixXd& m);

/// Lower-triangular L with L L^T = M for symmetric PSD M. Zero pivots yield
/// zero columns instead of failing; throws when M is clearly indefinite.
Eigen::MatrixXd psd_factor(const Eigen::MatrixXd& m);

/// Smallest eigenvalue of a symmetric matrix.
double min_eigenvalue(const Eigen::MatrixXd& m);

}  // namespace pulse::linalg
