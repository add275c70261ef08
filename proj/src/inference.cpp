#include "pulse/inference.hpp"

#include <cmath>
#include <limits>

#include "pulse/errors.hpp"
#include "pulse/linalg.hpp"

namespace pulse {

namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();

// Series for P(s, x), valid for x < s + 1.
double gamma_p_series(double s, double x) {
  double term = 1.0 / s;
  double sum = term;
  for (int k = 1; k < 100000; ++k) {
    term *= x / (s + k);
    sum += term;
    if (std::abs(term) < std::abs(sum) * kEps) break;
  }
  return sum * std::exp(-x + s * std::log(x) - std::lgamma(s));
}

// Continued fraction (modified Lentz) for Q(s, x), valid for x >= s + 1.
double gamma_q_fraction(double s, double x) {
  constexpr double tiny = 1e-300;
  double b = x + 1.0 - s;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < 100000; ++i) {
    const double an = -i * (i - s);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < kEps) break;
  }
  return std::exp(-x + s * std::log(x) - std::lgamma(s)) * h;
}

double gamma_q(double s, double x) {
  if (x <= 0.0) return 1.0;
  if (x < s + 1.0) return 1.0 - gamma_p_series(s, x);
  return gamma_q_fraction(s, x);
}

double chi2_pdf(int dof, double x) {
  if (x <= 0.0) return 0.0;
  const double k = 0.5 * dof;
  return std::exp((k - 1.0) * std::log(x) - 0.5 * x - k * std::log(2.0) - std::lgamma(k));
}

}  // namespace

double regularized_gamma_p(double s, double x) {
  if (!(s > 0.0)) throw Error(ErrorCode::InvalidArgument, "gamma shape must be positive");
  if (x <= 0.0) return 0.0;
  if (x < s + 1.0) return gamma_p_series(s, x);
  return 1.0 - gamma_q_fraction(s, x);
}

double chi2_cdf(int dof, double x) {
  if (dof < 1) throw Error(ErrorCode::InvalidArgument, "chi-squared needs dof >= 1");
  return regularized_gamma_p(0.5 * dof, 0.5 * x);
}

double chi2_quantile(int dof, double prob) {
  if (dof < 1) throw Error(ErrorCode::InvalidArgument, "chi-squared needs dof >= 1");
  if (!(prob > 0.0 && prob < 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "quantile probability must lie in (0, 1)");
  }
  const double s = 0.5 * dof;
  // Work in whichever tail is smaller to keep relative precision.
  const bool upper = prob > 0.5;
  const double target = upper ? 1.0 - prob : prob;
  auto tail = [&](double x) { return upper ? gamma_q(s, 0.5 * x) : regularized_gamma_p(s, 0.5 * x); };
  // f is increasing in x.
  auto f = [&](double x) { return upper ? target - tail(x) : tail(x) - target; };

  // Wilson-Hilferty start from a rational normal quantile (A&S 26.2.23).
  double z;
  {
    const double t = std::sqrt(-2.0 * std::log(std::min(prob, 1.0 - prob)));
    z = t - (2.515517 + 0.802853 * t + 0.010328 * t * t) /
                (1.0 + 1.432788 * t + 0.189269 * t * t + 0.001308 * t * t * t);
    if (prob < 0.5) z = -z;
  }
  const double h = 2.0 / (9.0 * dof);
  double x = dof * std::pow(std::max(1.0 - h + z * std::sqrt(h), 1e-3), 3.0);

  double lo = 0.0;
  double hi = std::max(x, 1.0);
  while (f(hi) < 0.0) {
    lo = hi;
    hi *= 2.0;
  }
  if (x <= lo || x >= hi) x = 0.5 * (lo + hi);

  for (int iter = 0; iter < 500; ++iter) {
    const double fx = f(x);
    if (fx == 0.0) return x;
    if (fx < 0.0) lo = x; else hi = x;
    if (hi - lo <= 4.0 * kEps * hi) break;
    const double slope = chi2_pdf(dof, x);
    double next = slope > 0.0 ? x - fx / slope : 0.5 * (lo + hi);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::abs(next - x) <= 2.0 * kEps * x) {
      x = next;
      break;
    }
    x = next;
  }
  return x;
}

void TestConfig::validate() const {
  if (!(p_min > 0.0 && p_min < 1.0)) throw Error(ErrorCode::InvalidArgument, "p_min must lie in (0, 1)");
}

double TestConfig::threshold(int q) const { return chi2_quantile(q, 1.0 - p_min); }

double TestConfig::scale(Eigen::Index n, int q) const {
  if (scaling == Scaling::Plain) return static_cast<double>(n);
  if (n <= q) throw Error(ErrorCode::InvalidArgument, "Anderson-Rubin scaling requires n > q");
  return static_cast<double>(n - q) + threshold(q);
}

double scaled_statistic(double c_n, double l_iv, double l_ols) { return c_n * l_iv / l_ols; }

TestResult test_statistic(const DesignView& view, const Vector& alpha, const TestConfig& cfg) {
  cfg.validate();
  const double l_ols = ols_loss(view, alpha);
  const double l_iv = iv_loss(view, alpha);
  if (l_ols <= 1e-14 * view.yty() / static_cast<double>(view.n())) {
    throw Error(ErrorCode::ZeroResidual, "l_OLS(alpha) is zero; the test statistic is undefined");
  }
  const int q = static_cast<int>(view.q());
  TestResult res;
  res.statistic = scaled_statistic(cfg.scale(view.n(), q), l_iv, l_ols);
  res.threshold = cfg.threshold(q);
  res.accepted = res.statistic <= res.threshold;
  res.p_value_bound = 1.0 - chi2_cdf(q, res.statistic);
  return res;
}

double ar_statistic(const DesignView& view, const Vector& alpha) {
  const double l_ols = ols_loss(view, alpha);
  const double l_iv = iv_loss(view, alpha);
  const double denom = l_ols - l_iv;
  if (!(denom > 1e-14 * std::max(l_ols, 1e-300))) {
    throw Error(ErrorCode::DegenerateResidual, "residual lies in the column space of A");
  }
  const double n = static_cast<double>(view.n());
  const double q = static_cast<double>(view.q());
  return (n - q) / q * l_iv / denom;
}

WeakInstrumentReport weak_instrument_stat(const DesignView& view) {
  const auto n = view.n();
  const auto q2 = view.q2();
  if (n <= view.q()) throw Error(ErrorCode::InvalidArgument, "weak-instrument statistic requires n > q");
  if (q2 < 1) throw Error(ErrorCode::InvalidArgument, "weak-instrument statistic requires excluded instruments");
  const Matrix x = view.x_endogenous();
  if (x.cols() == 0) throw Error(ErrorCode::InvalidArgument, "no endogenous regressors");

  auto residual = [](const Matrix& v, const Matrix& basis) -> Matrix {
    if (basis.cols() == 0) return v;
    return v - basis * basis.colPivHouseholderQr().solve(v);
  };
  const Matrix r_full = residual(x, view.a());
  const Matrix r_incl = residual(x, view.a_included());
  const Matrix resid_gram = r_full.transpose() * r_full;
  if (linalg::rcond_sym(resid_gram) < linalg::kSingularRcond) {
    throw Error(ErrorCode::SingularGram, "X^T P_A^perp X is singular");
  }
  // X^T (P_A - P_{A_*}) X
  Matrix explained = r_incl.transpose() * r_incl - resid_gram;
  explained = 0.5 * (explained + explained.transpose()).eval();
  const Matrix sigma = resid_gram / static_cast<double>(n - view.q());
  const Matrix root = linalg::inv_sqrt_sym(sigma);

  WeakInstrumentReport rep;
  rep.g_matrix = root * explained * root / static_cast<double>(q2);
  rep.g_matrix = 0.5 * (rep.g_matrix + rep.g_matrix.transpose()).eval();
  rep.min_eigenvalue = linalg::min_eigenvalue(rep.g_matrix);
  rep.rule_of_thumb_pass = rep.min_eigenvalue > 10.0;
  return rep;
}

}  // namespace pulse
