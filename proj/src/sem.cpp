#include "pulse/sem.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Eigenvalues>

#include "pulse/errors.hpp"
#include "pulse/linalg.hpp"
#include "pulse/rng.hpp"

namespace pulse {

namespace {

constexpr double kStationaryMargin = 1e-8;

void require_symmetric(const Matrix& m, const char* what) {
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
    throw Error(ErrorCode::InvalidArgument, std::string(what) + " is not symmetric");
  }
}

void require_psd(const Matrix& m, const char* what) {
  require_symmetric(m, what);
  if (m.size() == 0) return;
  const double scale = std::max(1.0, m.diagonal().cwiseAbs().maxCoeff());
  if (linalg::min_eigenvalue(m) < -1e-12 * scale) {
    throw Error(ErrorCode::InvalidArgument, std::string(what) + " is not positive semi-definite");
  }
}

Matrix gamma_inverse(const SemModel& model) {
  const Matrix gamma = Matrix::Identity(model.size(), model.size()) - model.b;
  Eigen::FullPivLU<Matrix> lu(gamma);
  if (!lu.isInvertible()) throw Error(ErrorCode::NonStationary, "I - B is singular");
  return lu.inverse();
}

Matrix second_moment(const SemModel& model, const InterventionSpec& iv) {
  if (iv.kind == InterventionSpec::Kind::None) return model.anchor_cov;
  return iv.cov + iv.mean * iv.mean.transpose();
}

/// Joint second moment of W = [S A].
Matrix joint_moment(const PopulationMoments& pm) {
  const auto m = pm.ss.rows();
  const auto q = pm.aa.rows();
  Matrix j(m + q, m + q);
  j.topLeftCorner(m, m) = pm.ss;
  j.topRightCorner(m, q) = pm.as.transpose();
  j.bottomLeftCorner(q, m) = pm.as;
  j.bottomRightCorner(q, q) = pm.aa;
  return j;
}

}  // namespace

Eigen::Index SemModel::target_index() const {
  for (std::size_t i = 0; i < roles.size(); ++i) {
    if (roles[i] == VariableRole::Target) return static_cast<Eigen::Index>(i);
  }
  throw Error(ErrorCode::InvalidArgument, "SEM has no target variable");
}

std::vector<Eigen::Index> SemModel::endogenous_indices() const {
  std::vector<Eigen::Index> out;
  for (std::size_t i = 0; i < roles.size(); ++i) {
    if (roles[i] == VariableRole::Endogenous) out.push_back(static_cast<Eigen::Index>(i));
  }
  return out;
}

double spectral_radius(const Matrix& b) {
  if (b.size() == 0) return 0.0;
  Eigen::EigenSolver<Matrix> es(b, false);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

void SemModel::validate() const {
  const auto s = size();
  if (s < 1 || b.cols() != s) throw Error(ErrorCode::InvalidArgument, "B must be a non-empty square matrix");
  if (q() < 1 || anchor_cov.cols() != q()) {
    throw Error(ErrorCode::InvalidArgument, "anchor covariance must be a non-empty square matrix");
  }
  if (m.rows() != q() || m.cols() != s) {
    throw Error(ErrorCode::InvalidArgument, "M must have one row per anchor and one column per variable");
  }
  if (noise_cov.rows() != s || noise_cov.cols() != s) {
    throw Error(ErrorCode::InvalidArgument, "noise covariance must match the number of variables");
  }
  if (static_cast<Eigen::Index>(roles.size()) != s || static_cast<Eigen::Index>(names.size()) != s) {
    throw Error(ErrorCode::InvalidArgument, "every variable needs a name and a role");
  }
  if (static_cast<Eigen::Index>(anchor_names.size()) != q()) {
    throw Error(ErrorCode::InvalidArgument, "every anchor needs a name");
  }
  if (std::count(roles.begin(), roles.end(), VariableRole::Target) != 1) {
    throw Error(ErrorCode::InvalidArgument, "SEM needs exactly one target variable");
  }
  if (!b.allFinite() || !m.allFinite() || !noise_cov.allFinite() || !anchor_cov.allFinite()) {
    throw Error(ErrorCode::InvalidArgument, "SEM matrices must be finite");
  }
  require_psd(noise_cov, "noise covariance");
  require_symmetric(anchor_cov, "anchor covariance");
  if (linalg::rcond_sym(anchor_cov) < linalg::kSingularRcond) {
    throw Error(ErrorCode::InvalidArgument, "anchor covariance must be positive definite");
  }
  const double rho = spectral_radius(b);
  if (rho >= 1.0 - kStationaryMargin) {
    throw Error(ErrorCode::NonStationary, "spectral radius of B is " + std::to_string(rho) + " (needs < 1)");
  }
}

InterventionSpec InterventionSpec::hard(Vector v) {
  InterventionSpec iv;
  iv.kind = Kind::Hard;
  iv.cov = Matrix::Zero(v.size(), v.size());
  iv.mean = std::move(v);
  return iv;
}

InterventionSpec InterventionSpec::stochastic(Vector mean, Matrix cov) {
  InterventionSpec iv;
  iv.kind = Kind::Stochastic;
  iv.mean = std::move(mean);
  iv.cov = std::move(cov);
  return iv;
}

void InterventionSpec::validate(Eigen::Index q) const {
  if (kind == Kind::None) return;
  if (mean.size() != q || cov.rows() != q || cov.cols() != q) {
    throw Error(ErrorCode::InvalidArgument, "intervention must have one entry per anchor");
  }
  if (!mean.allFinite() || !cov.allFinite()) throw Error(ErrorCode::InvalidArgument, "intervention must be finite");
  require_psd(cov, "intervention covariance");
}

Matrix solve_structural(const SemModel& model, const Matrix& a, const Matrix& eps) {
  return (a * model.m + eps) * gamma_inverse(model);
}

SemDraw sem_draw(const SemModel& model, Eigen::Index n, std::uint64_t seed, const InterventionSpec& iv) {
  model.validate();
  iv.validate(model.q());
  if (n < 1) throw Error(ErrorCode::InvalidArgument, "sample size must be positive");
  const auto q = model.q();
  const auto s = model.size();
  const bool intervened = iv.kind != InterventionSpec::Kind::None;
  const Matrix l_a = linalg::psd_factor(intervened ? iv.cov : model.anchor_cov);
  const Matrix l_e = linalg::psd_factor(model.noise_cov);
  const Vector shift = intervened ? iv.mean : Vector::Zero(q);

  Rng rng(seed);
  SemDraw out;
  out.a.resize(n, q);
  out.eps.resize(n, s);
  Vector za(q), ze(s);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < q; ++j) za(j) = rng.normal();
    for (Eigen::Index j = 0; j < s; ++j) ze(j) = rng.normal();
    out.a.row(i) = (shift + l_a * za).transpose();
    out.eps.row(i) = (l_e * ze).transpose();
  }
  out.s = solve_structural(model, out.a, out.eps);
  return out;
}

Dataset sem_sample(const SemModel& model, Eigen::Index n, std::uint64_t seed, const InterventionSpec& iv) {
  const SemDraw draw = sem_draw(model, n, seed, iv);
  const auto endo = model.endogenous_indices();
  Matrix x(n, static_cast<Eigen::Index>(endo.size()));
  std::vector<std::string> x_names;
  for (std::size_t j = 0; j < endo.size(); ++j) {
    x.col(static_cast<Eigen::Index>(j)) = draw.s.col(endo[j]);
    x_names.push_back(model.names[endo[j]]);
  }
  const auto t = model.target_index();
  return Dataset(draw.s.col(t), std::move(x), draw.a, model.names[t], std::move(x_names), model.anchor_names);
}

PopulationMoments population_moments(const SemModel& model, const InterventionSpec& iv) {
  model.validate();
  iv.validate(model.q());
  const Matrix g_inv = gamma_inverse(model);
  PopulationMoments pm;
  pm.aa = second_moment(model, iv);
  pm.as = pm.aa * model.m * g_inv;
  pm.ss = g_inv.transpose() * (model.m.transpose() * pm.aa * model.m + model.noise_cov) * g_inv;
  pm.ss = 0.5 * (pm.ss + pm.ss.transpose()).eval();
  return pm;
}

DesignMoments design_moments(const SemModel& model, const ModelPartition& partition, const InterventionSpec& iv) {
  const auto endo = model.endogenous_indices();
  partition.validate(static_cast<Eigen::Index>(endo.size()), model.q());
  const PopulationMoments pm = population_moments(model, iv);
  const Matrix j = joint_moment(pm);
  const auto s = model.size();
  const auto q = model.q();
  const auto p = partition.d1() + partition.q1();

  Matrix sel_z = Matrix::Zero(s + q, p);
  for (int k = 0; k < partition.d1(); ++k) sel_z(endo[partition.included_endogenous[k]], k) = 1.0;
  for (int k = 0; k < partition.q1(); ++k) sel_z(s + partition.included_exogenous[k], partition.d1() + k) = 1.0;
  const auto t = model.target_index();

  DesignMoments dm;
  dm.zz = sel_z.transpose() * j * sel_z;
  dm.az = j.bottomRows(q) * sel_z;
  dm.zy = sel_z.transpose() * j.col(t);
  dm.ay = j.bottomRows(q).col(t);
  dm.yy = j(t, t);
  dm.aa = pm.aa;
  return dm;
}

Vector population_kclass(const SemModel& model, const ModelPartition& partition, double kappa) {
  if (!(kappa >= 0.0 && kappa <= 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "population K-class needs kappa in [0, 1]");
  }
  const DesignMoments dm = design_moments(model, partition);
  const Eigen::LDLT<Matrix> aa(dm.aa);
  const Matrix za_aa_az = dm.az.transpose() * aa.solve(dm.az);
  const Vector za_aa_ay = dm.az.transpose() * aa.solve(dm.ay);
  const Matrix lhs = (1.0 - kappa) * dm.zz + kappa * za_aa_az;
  const Vector rhs = (1.0 - kappa) * dm.zy + kappa * za_aa_ay;
  if (linalg::rcond_sym(0.5 * (lhs + lhs.transpose())) < linalg::kSingularRcond) {
    throw Error(ErrorCode::SingularPopulationGram,
                kappa == 1.0 ? "E[Z A^T] E[A A^T]^{-1} E[A Z^T] is singular"
                             : "population K-class matrix is singular");
  }
  return lhs.ldlt().solve(rhs);
}

Vector population_constrained_ols(const SemModel& model, const ModelPartition& partition) {
  const DesignMoments dm = design_moments(model, partition);
  const auto p = dm.zz.rows();
  const auto q = dm.aa.rows();
  if (linalg::rcond_sym(dm.zz) < linalg::kSingularRcond) {
    throw Error(ErrorCode::SingularPopulationGram, "E[Z Z^T] is singular");
  }
  Matrix kkt = Matrix::Zero(p + q, p + q);
  kkt.topLeftCorner(p, p) = dm.zz;
  kkt.topRightCorner(p, q) = dm.az.transpose();
  kkt.bottomLeftCorner(q, p) = dm.az;
  Vector rhs(p + q);
  rhs << dm.zy, dm.ay;
  Eigen::FullPivLU<Matrix> lu(kkt);
  lu.setThreshold(linalg::kSingularRcond);
  const Vector sol = lu.isInvertible() ? Vector(lu.solve(rhs))
                                       : Vector(kkt.completeOrthogonalDecomposition().solve(rhs));
  Vector alpha = sol.head(p);
  if ((dm.az * alpha - dm.ay).norm() > 1e-9 * std::max(1.0, dm.ay.norm())) {
    throw Error(ErrorCode::InfeasibleConstraint, "E[A (Y - Z alpha)] = 0 has no solution");
  }
  return alpha;
}

double population_ols_loss(const DesignMoments& mom, const Vector& alpha) {
  return mom.yy - 2.0 * alpha.dot(mom.zy) + alpha.dot(mom.zz * alpha);
}

double population_iv_loss(const DesignMoments& mom, const Vector& alpha) {
  const Vector ar = mom.ay - mom.az * alpha;
  return ar.dot(mom.aa.ldlt().solve(ar));
}

double worst_case_mspe(const SemModel& model, const ModelPartition& partition, const Vector& alpha,
                       double kappa) {
  if (!(kappa >= 0.0 && kappa < 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "worst-case MSPE needs kappa in [0, 1)");
  }
  const DesignMoments dm = design_moments(model, partition);
  if (alpha.size() != dm.zz.rows()) throw Error(ErrorCode::DimensionMismatch, "coefficient length mismatch");
  return population_ols_loss(dm, alpha) + kappa / (1.0 - kappa) * population_iv_loss(dm, alpha);
}

std::vector<double> wcmspe_curve_e1(double gamma_hat, const std::vector<double>& x_grid) {
  std::vector<double> out;
  out.reserve(x_grid.size());
  const double g1 = 1.0 - gamma_hat;
  for (double x : x_grid) out.push_back(x * x * g1 * g1 + gamma_hat * gamma_hat + 3.0 * g1);
  return out;
}

std::optional<Interval> superiority_interval(double gamma, const std::vector<double>& competitors) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  Interval acc{0.0, inf};
  for (double other : competitors) {
    // curve(gamma) - curve(other) = c2 x^2 + c0
    const double c2 = (1.0 - gamma) * (1.0 - gamma) - (1.0 - other) * (1.0 - other);
    const double c0 = gamma * gamma - other * other + 3.0 * (other - gamma);
    Interval part{0.0, inf};
    if (c2 > 0.0) {
      if (-c0 / c2 < 0.0) return std::nullopt;
      part.upper = std::sqrt(-c0 / c2);
    } else if (c2 < 0.0) {
      part.lower = std::sqrt(std::max(0.0, -c0 / c2));
    } else if (c0 > 0.0) {
      return std::nullopt;
    }
    acc.lower = std::max(acc.lower, part.lower);
    acc.upper = std::min(acc.upper, part.upper);
  }
  if (acc.lower > acc.upper) return std::nullopt;
  return acc;
}

Interval round_inward(const Interval& iv, int decimals) {
  const double scale = std::pow(10.0, decimals);
  // Values already on the grid (up to representation error) stay put.
  auto snap = [&](double v) {
    const double r = std::nearbyint(v * scale);
    return std::abs(v * scale - r) < 1e-9 ? r : v * scale;
  };
  Interval out;
  out.lower = std::ceil(snap(iv.lower)) / scale;
  out.upper = std::isfinite(iv.upper) ? std::floor(snap(iv.upper)) / scale : iv.upper;
  return out;
}

std::pair<double, double> population_pulse_underid(double delta2, double gamma, double beta) {
  const double v = 1.0 + delta2 * delta2;
  const double alpha2 = v * gamma / (1.0 + v * gamma * gamma);
  return {(1.0 - alpha2 * gamma) * beta, alpha2};
}

SemModel robustness_e1_model(double gamma, double rho) { return univariate_model(1, rho, 1.0, gamma); }

SemModel univariate_model(int q, double rho, double xi, double gamma) {
  if (q < 1) throw Error(ErrorCode::InvalidArgument, "q must be >= 1");
  SemModel m;
  m.b = Matrix::Zero(2, 2);
  m.b(1, 0) = gamma;
  m.m = Matrix::Zero(q, 2);
  m.m.col(1).setConstant(xi);
  m.noise_cov.resize(2, 2);
  m.noise_cov << 1.0, rho, rho, 1.0;
  m.anchor_cov = Matrix::Identity(q, q);
  m.roles = {VariableRole::Target, VariableRole::Endogenous};
  m.names = {"Y", "X"};
  if (q == 1) {
    m.anchor_names = {"A"};
  } else {
    for (int i = 0; i < q; ++i) m.anchor_names.push_back("A" + std::to_string(i + 1));
  }
  return m;
}

SemModel multivariate_model(const MultivariateParams& prm) {
  SemModel m;
  m.b = Matrix::Zero(5, 5);
  m.m = Matrix::Zero(2, 5);
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) {
      m.m(i, 1 + j) = prm.xi(i, j);
      m.b(3 + i, 1 + j) = prm.delta(i, j);
    }
    m.b(1 + i, 0) = prm.gamma(i);
    m.b(3 + i, 0) = prm.mu(i);
  }
  m.noise_cov = Matrix::Identity(5, 5);
  m.noise_cov(1, 1) = prm.sigma2(0);
  m.noise_cov(2, 2) = prm.sigma2(1);
  m.anchor_cov = Matrix::Identity(2, 2);
  m.roles = {VariableRole::Target, VariableRole::Endogenous, VariableRole::Endogenous, VariableRole::Hidden,
             VariableRole::Hidden};
  m.names = {"Y", "X1", "X2", "H1", "H2"};
  m.anchor_names = {"A1", "A2"};
  return m;
}

MultivariateParams draw_multivariate_params(std::uint64_t seed, double bound, double sigma2_lo,
                                            double sigma2_hi) {
  Rng rng(seed);
  MultivariateParams prm;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) prm.xi(i, j) = rng.uniform(-bound, bound);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) prm.delta(i, j) = rng.uniform(-bound, bound);
  for (int i = 0; i < 2; ++i) prm.mu(i) = rng.uniform(-bound, bound);
  for (int i = 0; i < 2; ++i) prm.sigma2(i) = rng.uniform(sigma2_lo, sigma2_hi);
  return prm;
}

SemModel fixed_noise_model(const Matrix& xi, double eta, double phi1, double phi2, const Vector& gamma) {
  if (xi.rows() != 2 || xi.cols() != 2 || gamma.size() != 2) {
    throw Error(ErrorCode::InvalidArgument, "fixed-noise design needs a 2x2 xi and 2 gammas");
  }
  SemModel m;
  m.b = Matrix::Zero(3, 3);
  m.b(1, 0) = gamma(0);
  m.b(2, 0) = gamma(1);
  m.m = Matrix::Zero(2, 3);
  m.m.rightCols(2) = xi;
  m.noise_cov.resize(3, 3);
  m.noise_cov << 1.0, phi1, phi2, phi1, 1.0, eta, phi2, eta, 1.0;
  m.anchor_cov = Matrix::Identity(2, 2);
  m.roles = {VariableRole::Target, VariableRole::Endogenous, VariableRole::Endogenous};
  m.names = {"Y", "X1", "X2"};
  m.anchor_names = {"A1", "A2"};
  return m;
}

SemModel underid_e3_model(double eta, double delta1, double delta2, double beta, double gamma) {
  SemModel m;
  m.b = Matrix::Zero(4, 4);
  m.b(3, 1) = delta1;
  m.b(1, 0) = beta;
  m.b(3, 0) = delta2;
  m.b(0, 2) = gamma;
  m.m = Matrix::Zero(1, 4);
  m.m(0, 1) = eta;
  m.noise_cov = Matrix::Identity(4, 4);
  m.anchor_cov = Matrix::Identity(1, 1);
  m.roles = {VariableRole::Target, VariableRole::Endogenous, VariableRole::Endogenous, VariableRole::Hidden};
  m.names = {"Y", "X1", "X2", "H"};
  m.anchor_names = {"A"};
  return m;
}

}  // namespace pulse
