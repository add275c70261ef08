#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "pulse/dataset.hpp"

namespace pulse {

enum class Identification { Under, Just, Over };

std::string_view to_string(Identification id);

/// Which endogenous columns of x and which exogenous columns of a enter the
/// target equation. The remaining exogenous columns are the excluded
/// instruments.
struct ModelPartition {
  std::vector<int> included_endogenous;
  std::vector<int> included_exogenous;

  /// Every endogenous column included, no included exogenous columns.
  static ModelPartition all_endogenous(Eigen::Index d);

  /// Throws InvalidArgument on out-of-range or duplicate indices.
  void validate(Eigen::Index d, Eigen::Index q) const;

  int d1() const { return static_cast<int>(included_endogenous.size()); }
  int q1() const { return static_cast<int>(included_exogenous.size()); }
};

/// How the raw data is prepared before forming the design.
enum class Preprocess {
  None,
  /// Mean-center every column (default pipeline, no intercept fitted).
  Center,
  /// Append a constant column to both Z (as included exogenous, last
  /// coefficient) and A.
  Intercept,
};

/// Immutable regression design Z = [X_* A_*] with the full exogenous matrix A
/// and cached cross products. All estimators read from this view.
class DesignView {
 public:
  DesignView(const Dataset& ds, const ModelPartition& partition,
             Preprocess preprocess = Preprocess::None);

  Eigen::Index n() const { return y_.size(); }
  /// Number of coefficients d1 + q1 (+1 with intercept).
  Eigen::Index p() const { return z_.cols(); }
  /// Number of exogenous columns used for projection (includes the constant
  /// in intercept mode).
  Eigen::Index q() const { return a_.cols(); }
  Eigen::Index d1() const { return d1_; }
  /// Included exogenous columns (incl. constant in intercept mode).
  Eigen::Index q1() const { return p() - d1_; }
  Eigen::Index q2() const { return q() - q1(); }
  int identification_degree() const { return static_cast<int>(q2() - d1_); }
  Identification identification() const;

  const Vector& y() const { return y_; }
  const Matrix& z() const { return z_; }
  const Matrix& a() const { return a_; }
  /// Endogenous block X_* of Z.
  Matrix x_endogenous() const { return z_.leftCols(d1_); }
  /// Included exogenous block A_* of Z (the columns of A inside Z).
  Matrix a_included() const { return z_.rightCols(q1()); }

  const Matrix& ztz() const { return ztz_; }
  const Matrix& ata() const { return ata_; }
  const Matrix& atz() const { return atz_; }
  const Vector& zty() const { return zty_; }
  const Vector& aty() const { return aty_; }
  double yty() const { return yty_; }

  /// (A^T A)^{-1/2}.
  const Matrix& ata_inv_sqrt() const { return ata_inv_sqrt_; }
  /// (A^T A)^{-1/2} A^T Z, so that Z^T P_A Z = G^T G.
  const Matrix& whitened_atz() const { return whitened_atz_; }
  /// (A^T A)^{-1/2} A^T y.
  const Vector& whitened_aty() const { return whitened_aty_; }
  /// R and Q^T y from a thin QR of Z: ||y - Z a||^2 = ||qty - R a||^2 + rss.
  const Matrix& z_r() const { return z_r_; }
  const Vector& z_qty() const { return z_qty_; }
  /// Residual sum of squares of the OLS fit, read off the QR factorisation.
  double z_rss() const { return z_rss_; }

  double rcond_ztz() const { return rcond_ztz_; }
  double rcond_ata() const { return rcond_ata_; }
  /// Reciprocal condition number of Z^T P_A Z (zero when q < p).
  double rcond_ztpaz() const { return rcond_ztpaz_; }

  /// Throws SingularGram naming Z^T Z when it fails the condition check.
  void require_ztz_full_rank() const;
  /// Throws SingularGram naming Z^T P_A Z (A^T Z column rank) when it fails.
  void require_atz_full_column_rank() const;

  const std::vector<std::string>& coefficient_names() const { return names_; }
  bool has_intercept() const { return intercept_; }
  bool centered() const { return centered_; }

 private:
  Vector y_;
  Matrix z_;
  Matrix a_;
  Eigen::Index d1_ = 0;
  Matrix ztz_, ata_, atz_;
  Vector zty_, aty_;
  double yty_ = 0.0;
  Matrix ata_inv_sqrt_;
  Matrix whitened_atz_;
  Vector whitened_aty_;
  Matrix z_r_;
  Vector z_qty_;
  double z_rss_ = 0.0;
  double rcond_ztz_ = 0.0, rcond_ata_ = 0.0, rcond_ztpaz_ = 0.0;
  std::vector<std::string> names_;
  bool intercept_ = false;
  bool centered_ = false;
};

/// P_A v = A (A^T A)^{-1} A^T v. Throws SingularGram when A^T A fails the
/// condition check.
Vector projection_apply(const Matrix& a, const Vector& v);

/// n^{-1} ||y - Z alpha||^2.
double ols_loss(const DesignView& view, const Vector& alpha);

/// n^{-1} (y - Z alpha)^T P_A (y - Z alpha).
double iv_loss(const DesignView& view, const Vector& alpha);

}  // namespace pulse
