#include "pulse/pulse.hpp"

#include <cmath>
#include <limits>

#include "pulse/errors.hpp"
#include "pulse/linalg.hpp"

namespace pulse {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kLambdaCap = 1e30;

/// T_n along the dual path, with both losses evaluated from the cached
/// factors in O(p q) per probe.
class PathStatistic {
 public:
  PathStatistic(const DesignView& view, const TestConfig& test)
      : view_(view),
        n_(static_cast<double>(view.n())),
        scale_(test.scale(view.n(), static_cast<int>(view.q()))),
        threshold_(test.threshold(static_cast<int>(view.q()))) {}

  double threshold() const { return threshold_; }

  double at_alpha(const Vector& alpha) const {
    const double l_ols = ((view_.z_qty() - view_.z_r() * alpha).squaredNorm() + view_.z_rss()) / n_;
    const double l_iv = (view_.whitened_aty() - view_.whitened_atz() * alpha).squaredNorm() / n_;
    if (l_ols <= 1e-14 * view_.yty() / n_) {
      throw Error(ErrorCode::ZeroResidual, "l_OLS vanishes along the K-class path");
    }
    return scaled_statistic(scale_, l_iv, l_ols);
  }

  double at_lambda(double lambda) const { return at_alpha(anchor_estimate(view_, lambda).alpha); }

 private:
  const DesignView& view_;
  double n_;
  double scale_;
  double threshold_;
};

bool tsls_rejected(const DesignView& view, const TestConfig& test) {
  if (view.identification() != Identification::Over) return false;
  const auto tsls = tsls_estimate(view);
  const auto res = test_statistic(view, tsls.alpha, test);
  return res.statistic >= res.threshold;
}

/// Upper bound on lambda* from the penalised-loss comparison with an exact
/// l_IV minimiser; valid when that minimiser has l_IV = 0.
double lambda_bound(const DesignView& view, const PathStatistic& path, const TestConfig& test) {
  const Vector tilde = view.identification() == Identification::Under ? modified_tsls(view).alpha
                                                                      : tsls_estimate(view).alpha;
  const double c_n = test.scale(view.n(), static_cast<int>(view.q()));
  const double l_ols_ols = view.z_rss() / static_cast<double>(view.n());
  return c_n * ols_loss(view, tilde) / (l_ols_ols * path.threshold());
}

/// Algorithm 1 after the guards: T(OLS) > Q and lambda* < infinity.
double bisect_lambda(const DesignView& view, const PulseConfig& cfg, const PathStatistic& path) {
  const double q_thr = path.threshold();
  double lo = 0.0;
  double hi = 2.0;
  if (cfg.use_lambda_bound && view.identification() != Identification::Over) {
    const double bound = lambda_bound(view, path, cfg.test);
    if (std::isfinite(bound) && bound > 0.0 && bound <= kLambdaCap && path.at_lambda(bound) <= q_thr) {
      hi = bound;
    }
  }
  while (path.at_lambda(hi) > q_thr) {
    if (hi >= kLambdaCap) {
      throw Error(ErrorCode::NonMonotoneDetected,
                  "test statistic still above the threshold at lambda = 1e30");
    }
    lo = hi;
    hi = std::min(hi * hi, kLambdaCap);
  }
  const double width = 1.0 / static_cast<double>(cfg.precision_n);
  while (hi - lo > width) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if (path.at_lambda(mid) > q_thr) lo = mid; else hi = mid;
  }
  return hi;
}

/// Dual path in the coordinates of the SVD of H = G R^{-1}, where
/// ||y - Z a||^2 = ||c - R a||^2 + rss and n l_IV = ||g - G a||^2.
struct SpectralPath {
  Matrix r;
  Matrix v;
  Vector s;
  Vector c_hat;
  Vector g_hat;
  /// n l_IV contributions that no alpha can remove.
  double floor = 0.0;
  /// n l_IV at mu = 0 (the OLS solution).
  double total = 0.0;
  Eigen::Index active = 0;

  explicit SpectralPath(const DesignView& view) {
    view.require_ztz_full_rank();
    const auto p = view.p();
    const auto q = view.q();
    r = view.z_r();
    const Matrix ht = r.transpose().triangularView<Eigen::Lower>().solve(view.whitened_atz().transpose());
    Eigen::JacobiSVD<Matrix> svd(ht.transpose(), Eigen::ComputeFullU | Eigen::ComputeFullV);
    v = svd.matrixV();
    s = svd.singularValues();
    c_hat = v.transpose() * view.z_qty();
    g_hat = svd.matrixU().transpose() * view.whitened_aty();
    const auto k = std::min(p, q);
    const double s_max = k > 0 ? s(0) : 0.0;
    for (Eigen::Index i = 0; i < k; ++i) {
      if (s(i) > 1e-12 * s_max) active = i + 1;
    }
    for (Eigen::Index i = active; i < q; ++i) {
      const double si = i < k ? s(i) : 0.0;
      const double ci = i < p ? c_hat(i) : 0.0;
      floor += (g_hat(i) - si * ci) * (g_hat(i) - si * ci);
    }
    total = iv_sum(0.0);
  }

  double iv_sum(double mu) const {
    double acc = floor;
    for (Eigen::Index i = 0; i < active; ++i) {
      const double num = g_hat(i) - s(i) * c_hat(i);
      const double den = 1.0 + mu * s(i) * s(i);
      acc += num * num / (den * den);
    }
    return acc;
  }

  Vector alpha_at(double mu) const {
    Vector gamma = c_hat;
    for (Eigen::Index i = 0; i < active; ++i) {
      gamma(i) = (c_hat(i) + mu * s(i) * g_hat(i)) / (1.0 + mu * s(i) * s(i));
    }
    const Vector beta = v * gamma;
    return r.triangularView<Eigen::Upper>().solve(beta);
  }

  /// mu >= 0 with iv_sum(mu) = target, for floor < target <= total.
  double mu_for(double target) const {
    if (target >= total) return 0.0;
    double lo = 0.0;
    double hi = 1.0;
    while (iv_sum(hi) > target) {
      lo = hi;
      hi *= 2.0;
      if (!std::isfinite(hi)) return lo;
    }
    for (int iter = 0; iter < 4000; ++iter) {
      const double mid = lo > 0.0 ? std::sqrt(lo * hi) : 0.5 * (lo + hi);
      if (mid <= lo || mid >= hi || hi - lo <= 1e-15 * hi) break;
      if (iv_sum(mid) > target) lo = mid; else hi = mid;
    }
    return 0.5 * (lo + hi);
  }
};

}  // namespace

std::string_view warning_text(PulseMessage message) {
  switch (message) {
    case PulseMessage::None: return "";
    case PulseMessage::OlsAccepted: return "Warning: The OLS is accepted.";
    case PulseMessage::TslsRejectedFallback: return "Warning: TSLS outside interior of acceptance region.";
  }
  return "";
}

std::string_view message_label(PulseMessage message) {
  switch (message) {
    case PulseMessage::None: return "";
    case PulseMessage::OlsAccepted: return "OLS Accepted";
    case PulseMessage::TslsRejectedFallback: return "TSLS Rejected";
  }
  return "";
}

void PulseConfig::validate() const {
  test.validate();
  if (precision_n < 1) throw Error(ErrorCode::InvalidArgument, "precision N must be >= 1");
  if (fallback) {
    using Kind = EstimatorSpec::Kind;
    const auto k = fallback->kind;
    if (k != Kind::Tsls && k != Kind::Liml && k != Kind::Fuller) {
      throw Error(ErrorCode::InvalidArgument, "fallback must be tsls, liml or fuller:A");
    }
    fallback->validate();
  }
}

double lambda_star_search(const DesignView& view, const PulseConfig& cfg) {
  cfg.validate();
  view.require_ztz_full_rank();
  if (tsls_rejected(view, cfg.test)) return kInf;
  const auto ols = ols_estimate(view);
  if (test_statistic(view, ols.alpha, cfg.test).accepted) return 0.0;
  const PathStatistic path(view, cfg.test);
  return bisect_lambda(view, cfg, path);
}

PulseResult pulse_estimate(const DesignView& view, const PulseConfig& cfg) {
  cfg.validate();
  view.require_ztz_full_rank();
  PulseResult res;
  if (tsls_rejected(view, cfg.test)) {
    if (!cfg.fallback) {
      throw Error(ErrorCode::DualInfeasible,
                  "TSLS is rejected, so no K-class estimator is accepted, and no fallback was given");
    }
    res.alpha = estimate(view, *cfg.fallback).alpha;
    res.lambda_star = kInf;
    res.message = PulseMessage::TslsRejectedFallback;
    res.fallback_used = true;
    res.test_at_solution = test_statistic(view, res.alpha, cfg.test);
    return res;
  }
  const auto ols = ols_estimate(view);
  const auto ols_test = test_statistic(view, ols.alpha, cfg.test);
  if (ols_test.accepted) {
    res.alpha = ols.alpha;
    res.lambda_star = 0.0;
    res.kappa_star = 0.0;
    res.message = PulseMessage::OlsAccepted;
    res.test_at_solution = ols_test;
    return res;
  }
  const PathStatistic path(view, cfg.test);
  const double lambda = bisect_lambda(view, cfg, path);
  res.alpha = anchor_estimate(view, lambda).alpha;
  res.lambda_star = lambda;
  res.kappa_star = lambda / (1.0 + lambda);
  res.test_at_solution = test_statistic(view, res.alpha, cfg.test);
  return res;
}

double iv_loss_infimum(const DesignView& view) {
  return SpectralPath(view).floor / static_cast<double>(view.n());
}

Vector primal_solve(const DesignView& view, double t) {
  const SpectralPath path(view);
  const double n = static_cast<double>(view.n());
  const double target = t * n;
  if (!(target > path.floor) || !std::isfinite(t)) {
    throw Error(ErrorCode::OutOfDomain, "t must exceed inf l_IV = " + std::to_string(path.floor / n));
  }
  if (target >= path.total) {
    if (target > path.total * (1.0 + 1e-12)) {
      throw Error(ErrorCode::OutOfDomain, "t exceeds l_IV(OLS) = " + std::to_string(path.total / n));
    }
    return ols_estimate(view).alpha;
  }
  return path.alpha_at(path.mu_for(target));
}

double t_star(const DesignView& view, const PulseConfig& cfg) {
  cfg.validate();
  if (tsls_rejected(view, cfg.test)) return -kInf;
  const SpectralPath spectral(view);
  const double n = static_cast<double>(view.n());
  const auto ols = ols_estimate(view);
  if (test_statistic(view, ols.alpha, cfg.test).accepted) return spectral.total / n;

  const PathStatistic path(view, cfg.test);
  double lo = spectral.floor;
  double hi = spectral.total;
  for (int iter = 0; iter < 60; ++iter) {
    const double mid = 0.5 * (lo + hi);
    const Vector alpha = spectral.alpha_at(spectral.mu_for(mid));
    if (path.at_alpha(alpha) <= path.threshold()) lo = mid; else hi = mid;
  }
  return lo / n;
}

}  // namespace pulse
