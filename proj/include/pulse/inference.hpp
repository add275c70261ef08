#pragma once

#include <optional>

#include "pulse/design.hpp"

namespace pulse {

/// Regularised lower incomplete gamma P(s, x).
double regularized_gamma_p(double s, double x);

/// CDF of the central chi-squared distribution with dof degrees of freedom.
double chi2_cdf(int dof, double x);

/// Quantile Q with chi2_cdf(dof, Q) = prob. Throws InvalidArgument unless
/// prob is in (0, 1) and dof >= 1.
double chi2_quantile(int dof, double prob);

enum class Scaling {
  /// c(n) = n
  Plain,
  /// c(n) = n - q + Q_{chi2_q}(1 - p_min); acceptance then coincides with the
  /// asymptotic Anderson-Rubin region.
  AndersonRubin,
};

struct TestConfig {
  double p_min = 0.05;
  Scaling scaling = Scaling::AndersonRubin;

  void validate() const;
  /// Q_{chi2_q}(1 - p_min).
  double threshold(int q) const;
  /// c(n) for this configuration.
  double scale(Eigen::Index n, int q) const;
};

struct TestResult {
  double statistic = 0.0;
  double threshold = 0.0;
  bool accepted = false;
  /// 1 - CDF_{chi2_q}(statistic); asymptotic.
  std::optional<double> p_value_bound;
};

/// T_n^c(alpha) = c(n) l_IV(alpha) / l_OLS(alpha) compared with the chi2_q
/// quantile (accepted when statistic <= threshold). Throws ZeroResidual when
/// l_OLS(alpha) <= 1e-14 ||y||^2 / n.
TestResult test_statistic(const DesignView& view, const Vector& alpha, const TestConfig& cfg);

/// Statistic only, from precomputed losses.
double scaled_statistic(double c_n, double l_iv, double l_ols);

/// Anderson-Rubin F-form (n - q)/q * l_IV / (l_OLS - l_IV). Throws
/// DegenerateResidual when the residual lies in span(A).
double ar_statistic(const DesignView& view, const Vector& alpha);

struct WeakInstrumentReport {
  Matrix g_matrix;
  double min_eigenvalue = 0.0;
  /// min_eigenvalue > 10
  bool rule_of_thumb_pass = false;
};

/// Multivariate first-stage F statistic G_n = S^{-1/2} X^T P_A X S^{-1/2} / q
/// with S = X^T P_A^perp X / (n - q). Included exogenous columns are
/// partialled out of X and of the excluded instruments first; with none
/// included this is exactly the formula above.
WeakInstrumentReport weak_instrument_stat(const DesignView& view);

}  // namespace pulse
