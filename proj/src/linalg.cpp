#include "pulse/linalg.hpp"

#include <cmath>

#include "pulse/errors.hpp"

namespace pulse::linalg {

double rcond_sym(const Eigen::MatrixXd& m) {
  if (m.size() == 0) return 1.0;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m, Eigen::EigenvaluesOnly);
  const auto& ev = es.eigenvalues();
  const double hi = ev.maxCoeff();
  if (!(hi > 0.0)) return 0.0;
  return std::max(ev.minCoeff(), 0.0) / hi;
}

Eigen::MatrixXd inv_sqrt_sym(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
  const auto& ev = es.eigenvalues();
  const double floor = kEigenClampRel * std::max(ev.maxCoeff(), 0.0);
  Eigen::VectorXd inv_root(ev.size());
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    const double lam = std::max(ev(i), floor);
    inv_root(i) = lam > 0.0 ? 1.0 / std::sqrt(lam) : 0.0;
  }
  return es.eigenvectors() * inv_root.asDiagonal() * es.eigenvectors().transpose();
}

Eigen::MatrixXd psd_factor(const Eigen::MatrixXd& m) {
  const auto k = m.rows();
  Eigen::MatrixXd l = Eigen::MatrixXd::Zero(k, k);
  const double scale = m.diagonal().cwiseAbs().maxCoeff();
  const double tol = 1e-12 * std::max(scale, 1e-300);
  for (Eigen::Index j = 0; j < k; ++j) {
    double diag = m(j, j) - l.row(j).head(j).squaredNorm();
    if (diag < -tol) {
      throw Error(ErrorCode::InvalidArgument, "covariance matrix is not positive semi-definite");
    }
    if (diag <= tol) continue;  // zero pivot: column stays zero
    const double root = std::sqrt(diag);
    l(j, j) = root;
    for (Eigen::Index i = j + 1; i < k; ++i) {
      l(i, j) = (m(i, j) - l.row(i).head(j).dot(l.row(j).head(j))) / root;
    }
  }
  return l;
}

double min_eigenvalue(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

}  // namespace pulse::linalg
