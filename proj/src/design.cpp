#include "pulse/design.hpp"

#include <algorithm>
#include <set>

#include "pulse/errors.hpp"
#include "pulse/linalg.hpp"

namespace pulse {

std::string_view to_string(Identification id) {
  switch (id) {
    case Identification::Under: return "under-identified";
    case Identification::Just: return "just-identified";
    case Identification::Over: return "over-identified";
  }
  return "unknown";
}

ModelPartition ModelPartition::all_endogenous(Eigen::Index d) {
  ModelPartition p;
  for (int j = 0; j < d; ++j) p.included_endogenous.push_back(j);
  return p;
}

void ModelPartition::validate(Eigen::Index d, Eigen::Index q) const {
  auto check = [](const std::vector<int>& idx, Eigen::Index bound, const char* what) {
    std::set<int> seen;
    for (int i : idx) {
      if (i < 0 || i >= bound) {
        throw Error(ErrorCode::InvalidArgument,
                    std::string(what) + " index " + std::to_string(i) + " out of range");
      }
      if (!seen.insert(i).second) {
        throw Error(ErrorCode::InvalidArgument,
                    std::string(what) + " index " + std::to_string(i) + " listed twice");
      }
    }
  };
  check(included_endogenous, d, "included endogenous");
  check(included_exogenous, q, "included exogenous");
  if (included_endogenous.empty() && included_exogenous.empty()) {
    throw Error(ErrorCode::InvalidArgument, "the model has no regressors");
  }
}

DesignView::DesignView(const Dataset& raw, const ModelPartition& partition, Preprocess preprocess) {
  partition.validate(raw.d(), raw.q());
  if (raw.q() == 0 && preprocess != Preprocess::Intercept) {
    throw Error(ErrorCode::InvalidArgument, "at least one exogenous variable is required");
  }
  const Dataset ds = preprocess == Preprocess::Center ? center(raw) : raw;
  centered_ = preprocess == Preprocess::Center;
  intercept_ = preprocess == Preprocess::Intercept;

  const auto n = ds.n();
  d1_ = partition.d1();
  const auto extra = intercept_ ? 1 : 0;
  y_ = ds.y();
  z_.resize(n, d1_ + partition.q1() + extra);
  a_.resize(n, ds.q() + extra);
  for (int j = 0; j < d1_; ++j) {
    z_.col(j) = ds.x().col(partition.included_endogenous[j]);
    names_.push_back(ds.endogenous_names()[partition.included_endogenous[j]]);
  }
  for (int j = 0; j < partition.q1(); ++j) {
    z_.col(d1_ + j) = ds.a().col(partition.included_exogenous[j]);
    names_.push_back(ds.exogenous_names()[partition.included_exogenous[j]]);
  }
  a_.leftCols(ds.q()) = ds.a();
  if (intercept_) {
    z_.col(z_.cols() - 1).setOnes();
    a_.col(a_.cols() - 1).setOnes();
    names_.emplace_back("(intercept)");
  }
  if (n < std::max(p(), q())) {
    throw Error(ErrorCode::DataError, "n is smaller than the number of design columns");
  }

  ztz_ = z_.transpose() * z_;
  ata_ = a_.transpose() * a_;
  atz_ = a_.transpose() * z_;
  zty_ = z_.transpose() * y_;
  aty_ = a_.transpose() * y_;
  yty_ = y_.squaredNorm();

  rcond_ata_ = linalg::rcond_sym(ata_);
  if (rcond_ata_ < linalg::kSingularRcond) {
    throw Error(ErrorCode::SingularGram, "A^T A is singular (rcond " + std::to_string(rcond_ata_) + ")");
  }
  rcond_ztz_ = linalg::rcond_sym(ztz_);
  ata_inv_sqrt_ = linalg::inv_sqrt_sym(ata_);
  whitened_atz_ = ata_inv_sqrt_ * atz_;
  whitened_aty_ = ata_inv_sqrt_ * aty_;
  rcond_ztpaz_ = q() >= p() ? linalg::rcond_sym(whitened_atz_.transpose() * whitened_atz_) : 0.0;

  Eigen::HouseholderQR<Matrix> qr(z_);
  z_r_ = qr.matrixQR().topRows(p()).triangularView<Eigen::Upper>();
  const Vector qty = qr.householderQ().transpose() * y_;
  z_qty_ = qty.head(p());
  z_rss_ = qty.tail(n - p()).squaredNorm();
}

Identification DesignView::identification() const {
  const int deg = identification_degree();
  if (deg < 0) return Identification::Under;
  if (deg == 0) return Identification::Just;
  return Identification::Over;
}

void DesignView::require_ztz_full_rank() const {
  if (rcond_ztz_ < linalg::kSingularRcond) {
    throw Error(ErrorCode::SingularGram, "Z^T Z is singular (rcond " + std::to_string(rcond_ztz_) + ")");
  }
}

void DesignView::require_atz_full_column_rank() const {
  if (q() < p()) {
    throw Error(ErrorCode::UnderIdentified, "A^T Z cannot have full column rank: q < d1 + q1");
  }
  if (rcond_ztpaz_ < linalg::kSingularRcond) {
    throw Error(ErrorCode::SingularGram,
                "Z^T P_A Z is singular (rcond " + std::to_string(rcond_ztpaz_) + ")");
  }
}

Vector projection_apply(const Matrix& a, const Vector& v) {
  if (a.rows() != v.size()) throw Error(ErrorCode::DimensionMismatch, "projection: row mismatch");
  const Matrix ata = a.transpose() * a;
  const double rc = linalg::rcond_sym(ata);
  if (rc < linalg::kSingularRcond) {
    throw Error(ErrorCode::SingularGram, "A^T A is singular (rcond " + std::to_string(rc) + ")");
  }
  const Matrix w = linalg::inv_sqrt_sym(ata);
  return a * (w * (w * (a.transpose() * v)));
}

namespace {
void check_alpha(const DesignView& view, const Vector& alpha) {
  if (alpha.size() != view.p()) {
    throw Error(ErrorCode::DimensionMismatch, "coefficient vector has length " +
                                                  std::to_string(alpha.size()) + ", expected " +
                                                  std::to_string(view.p()));
  }
}
}  // namespace

double ols_loss(const DesignView& view, const Vector& alpha) {
  check_alpha(view, alpha);
  return (view.y() - view.z() * alpha).squaredNorm() / static_cast<double>(view.n());
}

double iv_loss(const DesignView& view, const Vector& alpha) {
  check_alpha(view, alpha);
  const Vector atr = view.a().transpose() * (view.y() - view.z() * alpha);
  return (view.ata_inv_sqrt() * atr).squaredNorm() / static_cast<double>(view.n());
}

}  // namespace pulse
