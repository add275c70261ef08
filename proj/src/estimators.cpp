#include "pulse/estimators.hpp"

#include <cmath>
#include <sstream>

#include "pulse/errors.hpp"
#include "pulse/linalg.hpp"

namespace pulse {

namespace {

constexpr double kNearOne = 1e-8;

EstimateDiagnostics base_diagnostics(const DesignView& view) {
  EstimateDiagnostics diag;
  diag.identification = view.identification();
  diag.rcond_ztz = view.rcond_ztz();
  diag.rcond_ata = view.rcond_ata();
  diag.rcond_ztpaz = view.rcond_ztpaz();
  return diag;
}

void require_finite(const Vector& alpha, const char* what) {
  if (!alpha.allFinite()) {
    throw Error(ErrorCode::SingularGram, std::string(what) + " produced non-finite coefficients");
  }
}

/// argmin w_ols * ||y - Z a||^2 + w_iv * ||P_A (y - Z a)||^2 for w_ols > 0,
/// w_iv >= 0, as a stacked least-squares problem on the cached factors.
Vector solve_weighted(const DesignView& view, double w_ols, double w_iv) {
  view.require_ztz_full_rank();
  const auto p = view.p();
  const auto q = view.q();
  const double s_ols = std::sqrt(w_ols);
  const double s_iv = std::sqrt(w_iv);
  Matrix stacked(p + q, p);
  Vector rhs(p + q);
  // Heavier block first: Householder QR is only reliable on strongly
  // weighted problems when rows come in decreasing weight.
  const bool iv_first = s_iv > s_ols;
  const Eigen::Index ols_at = iv_first ? q : 0;
  const Eigen::Index iv_at = iv_first ? 0 : p;
  stacked.middleRows(ols_at, p) = s_ols * view.z_r();
  stacked.middleRows(iv_at, q) = s_iv * view.whitened_atz();
  rhs.segment(ols_at, p) = s_ols * view.z_qty();
  rhs.segment(iv_at, q) = s_iv * view.whitened_aty();
  return stacked.householderQr().solve(rhs);
}

Vector solve_tsls(const DesignView& view) {
  view.require_atz_full_column_rank();
  return view.whitened_atz().colPivHouseholderQr().solve(view.whitened_aty());
}

/// Normal equations for kappa outside [0, 1].
Vector solve_normal(const DesignView& view, double kappa) {
  const Matrix& g = view.whitened_atz();
  const Matrix m = (1.0 - kappa) * view.ztz() + kappa * (g.transpose() * g);
  const Vector b = (1.0 - kappa) * view.zty() + kappa * (g.transpose() * view.whitened_aty());
  Eigen::FullPivLU<Matrix> lu(m);
  lu.setThreshold(linalg::kSingularRcond);
  if (!lu.isInvertible()) {
    throw Error(ErrorCode::SingularGram, "Z^T (I - kappa P_A^perp) Z is singular");
  }
  return lu.solve(b);
}

/// Residual of v after least-squares projection on the columns of basis.
Matrix residualize(const Matrix& v, const Matrix& basis) {
  if (basis.cols() == 0) return v;
  Eigen::ColPivHouseholderQR<Matrix> qr(basis);
  return v - basis * qr.solve(v);
}

}  // namespace

EstimatorSpec EstimatorSpec::parse(const std::string& text) {
  auto colon = text.find(':');
  const std::string name = text.substr(0, colon);
  const bool has_arg = colon != std::string::npos;
  double arg = 0.0;
  if (has_arg) {
    const std::string tail = text.substr(colon + 1);
    std::size_t used = 0;
    try {
      arg = std::stod(tail, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != tail.size()) {
      throw Error(ErrorCode::InvalidArgument, "invalid estimator parameter in '" + text + "'");
    }
  }
  auto no_arg = [&](EstimatorSpec s) {
    if (has_arg) throw Error(ErrorCode::InvalidArgument, "estimator '" + name + "' takes no parameter");
    return s;
  };
  auto need_arg = [&](EstimatorSpec s) {
    if (!has_arg) throw Error(ErrorCode::InvalidArgument, "estimator '" + name + "' needs a parameter");
    s.validate();
    return s;
  };
  if (name == "ols") return no_arg(ols());
  if (name == "tsls") return no_arg(tsls());
  if (name == "liml") return no_arg(liml());
  if (name == "modified-tsls") return no_arg(modified_tsls());
  if (name == "kclass") return need_arg(kclass(arg));
  if (name == "anchor") return need_arg(anchor(arg));
  if (name == "fuller") return need_arg(fuller(arg));
  throw Error(ErrorCode::InvalidArgument, "unknown estimator '" + text + "'");
}

std::string EstimatorSpec::to_string() const {
  std::ostringstream out;
  switch (kind) {
    case Kind::Ols: return "ols";
    case Kind::Tsls: return "tsls";
    case Kind::Liml: return "liml";
    case Kind::ModifiedTsls: return "modified-tsls";
    case Kind::Kclass: out << "kclass:" << param; break;
    case Kind::Anchor: out << "anchor:" << param; break;
    case Kind::Fuller: out << "fuller:" << param; break;
  }
  return out.str();
}

void EstimatorSpec::validate() const {
  if (!std::isfinite(param)) throw Error(ErrorCode::InvalidArgument, "estimator parameter must be finite");
  if (kind == Kind::Anchor && !(param > -1.0)) {
    throw Error(ErrorCode::InvalidArgument, "anchor regression requires lambda > -1");
  }
  if (kind == Kind::Fuller && !(param > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "Fuller estimator requires a > 0");
  }
}

EstimateResult kclass_estimate(const DesignView& view, double kappa) {
  if (!std::isfinite(kappa)) throw Error(ErrorCode::InvalidArgument, "kappa must be finite");
  EstimateResult res;
  res.diagnostics = base_diagnostics(view);
  res.kappa = kappa;
  const bool identified = view.identification() != Identification::Under;
  if (kappa == 1.0 || (kappa > 1.0 - kNearOne && kappa < 1.0 && identified)) {
    if (!identified) {
      throw Error(ErrorCode::UnidentifiedAtOne, "kappa = 1 requires q2 >= d1");
    }
    res.alpha = solve_tsls(view);
  } else if (kappa >= 0.0 && kappa < 1.0) {
    res.alpha = solve_weighted(view, 1.0 - kappa, kappa);
    res.lambda = kappa / (1.0 - kappa);
  } else {
    res.diagnostics.warnings.push_back("kappa outside [0, 1]");
    view.require_ztz_full_rank();
    res.alpha = solve_normal(view, kappa);
    if (kappa < 1.0) res.lambda = kappa / (1.0 - kappa);
  }
  require_finite(res.alpha, "K-class estimator");
  return res;
}

EstimateResult anchor_estimate(const DesignView& view, double lambda) {
  if (!(lambda > -1.0) || !std::isfinite(lambda)) {
    throw Error(ErrorCode::InvalidArgument, "anchor regression requires finite lambda > -1");
  }
  EstimateResult res;
  res.diagnostics = base_diagnostics(view);
  res.lambda = lambda;
  res.kappa = lambda / (1.0 + lambda);
  if (lambda >= 0.0) {
    res.alpha = solve_weighted(view, 1.0, lambda);
  } else {
    // (I + lambda P_A) is still positive definite for lambda in (-1, 0).
    view.require_ztz_full_rank();
    res.alpha = solve_normal(view, *res.kappa);
  }
  require_finite(res.alpha, "anchor regression");
  return res;
}

EstimateResult ols_estimate(const DesignView& view) {
  auto res = kclass_estimate(view, 0.0);
  res.lambda = 0.0;
  return res;
}

EstimateResult tsls_estimate(const DesignView& view) {
  if (view.identification() == Identification::Under) {
    throw Error(ErrorCode::UnderIdentified,
                "TSLS is not defined in an under-identified design; use modified-tsls");
  }
  EstimateResult res;
  res.diagnostics = base_diagnostics(view);
  res.kappa = 1.0;
  res.alpha = solve_tsls(view);
  require_finite(res.alpha, "TSLS");
  return res;
}

EstimateResult modified_tsls(const DesignView& view) {
  if (view.identification() == Identification::Over) {
    throw Error(ErrorCode::InfeasibleConstraint,
                "A^T (y - Z alpha) = 0 has no solution in an over-identified design");
  }
  view.require_ztz_full_rank();
  const auto p = view.p();
  const auto q = view.q();
  const Matrix& g = view.whitened_atz();
  Matrix kkt = Matrix::Zero(p + q, p + q);
  kkt.topLeftCorner(p, p) = view.ztz();
  kkt.topRightCorner(p, q) = g.transpose();
  kkt.bottomLeftCorner(q, p) = g;
  Vector rhs(p + q);
  rhs.head(p) = view.zty();
  rhs.tail(q) = view.whitened_aty();

  Eigen::FullPivLU<Matrix> lu(kkt);
  lu.setThreshold(linalg::kSingularRcond);
  Vector sol = lu.isInvertible() ? Vector(lu.solve(rhs))
                                 : Vector(kkt.completeOrthogonalDecomposition().solve(rhs));
  EstimateResult res;
  res.diagnostics = base_diagnostics(view);
  res.kappa = 1.0;
  res.alpha = sol.head(p);
  if (!lu.isInvertible()) res.diagnostics.warnings.push_back("rank-deficient KKT system, pseudo-inverse used");
  require_finite(res.alpha, "modified TSLS");

  const double violation = (g * res.alpha - view.whitened_aty()).norm();
  const double scale = std::max(1.0, view.whitened_aty().norm());
  if (violation > 1e-9 * scale) {
    throw Error(ErrorCode::InfeasibleConstraint, "moment condition A^T (y - Z alpha) = 0 cannot be met "
                                                 "(A^T Z lacks full row rank)");
  }
  return res;
}

double liml_kappa(const DesignView& view) {
  const auto d1 = view.d1();
  Matrix v(view.n(), 1 + d1);
  v.col(0) = view.y();
  v.rightCols(d1) = view.x_endogenous();

  const Matrix resid_full = residualize(v, view.a());
  const Matrix resid_incl = residualize(v, view.a_included());
  const Matrix w = resid_full.transpose() * resid_full;
  const Matrix w1 = resid_incl.transpose() * resid_incl;

  if (linalg::rcond_sym(w) < linalg::kSingularRcond) {
    throw Error(ErrorCode::SingularGram, "W = [y X]^T P_A^perp [y X] is singular");
  }
  Eigen::LLT<Matrix> llt(w);
  if (llt.info() != Eigen::Success) {
    throw Error(ErrorCode::SingularGram, "W = [y X]^T P_A^perp [y X] is not positive definite");
  }
  // L^{-1} W1 L^{-T}
  Matrix c = llt.matrixL().solve(w1);
  c = llt.matrixL().solve(c.transpose().eval());
  c = 0.5 * (c + c.transpose()).eval();
  return linalg::min_eigenvalue(c);
}

double fuller_kappa(const DesignView& view, double a) {
  if (!(a > 0.0)) throw Error(ErrorCode::InvalidArgument, "Fuller estimator requires a > 0");
  if (view.n() <= view.q()) throw Error(ErrorCode::InvalidArgument, "Fuller estimator requires n > q");
  return liml_kappa(view) - a / static_cast<double>(view.n() - view.q());
}

EstimateResult liml_estimate(const DesignView& view) {
  return kclass_estimate(view, liml_kappa(view));
}

EstimateResult fuller_estimate(const DesignView& view, double a) {
  return kclass_estimate(view, fuller_kappa(view, a));
}

EstimateResult estimate(const DesignView& view, const EstimatorSpec& spec) {
  spec.validate();
  using Kind = EstimatorSpec::Kind;
  switch (spec.kind) {
    case Kind::Ols: return ols_estimate(view);
    case Kind::Tsls: return tsls_estimate(view);
    case Kind::Kclass: return kclass_estimate(view, spec.param);
    case Kind::Anchor: return anchor_estimate(view, spec.param);
    case Kind::Liml: return liml_estimate(view);
    case Kind::Fuller: return fuller_estimate(view, spec.param);
    case Kind::ModifiedTsls: return modified_tsls(view);
  }
  throw Error(ErrorCode::InvalidArgument, "unknown estimator kind");
}

}  // namespace pulse
