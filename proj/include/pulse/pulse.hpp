#pragma once

#include <cstdint>
#include <optional>
#include <string_view>

#include "pulse/estimators.hpp"
#include "pulse/inference.hpp"

namespace pulse {

enum class PulseMessage { None, OlsAccepted, TslsRejectedFallback };

/// The user-facing warning for a message, empty for None.
std::string_view warning_text(PulseMessage message);
/// Short label used in tables ("OLS Accepted", ...).
std::string_view message_label(PulseMessage message);

struct PulseConfig {
  TestConfig test;
  /// Binary search stops once the bracket is no wider than 1 / precision_n.
  std::uint64_t precision_n = std::uint64_t{1} << 20;
  /// Estimator used when TSLS itself is rejected. Must be TSLS, LIML or
  /// Fuller; nullopt makes that case an error (DualInfeasible).
  std::optional<EstimatorSpec> fallback = EstimatorSpec::fuller(4.0);
  /// Start the search at the closed-form upper bound instead of squaring
  /// from 2 (only used in under- and just-identified designs).
  bool use_lambda_bound = false;

  void validate() const;
};

struct PulseResult {
  Vector alpha;
  /// +infinity when the fallback was used.
  double lambda_star = 0.0;
  std::optional<double> kappa_star;
  PulseMessage message = PulseMessage::None;
  TestResult test_at_solution;
  bool fallback_used = false;
};

/// Algorithm 1. Returns +infinity in the over-identified case when TSLS is
/// rejected, 0 when OLS is accepted, otherwise the upper end of a bracket of
/// width <= 1/N around the infimum.
double lambda_star_search(const DesignView& view, const PulseConfig& cfg);

/// Algorithm 2 (PULSE+).
PulseResult pulse_estimate(const DesignView& view, const PulseConfig& cfg);

/// Minimiser of l_OLS subject to l_IV <= t, solved on the singular value
/// decomposition of the whitened instrument block (independent of the
/// K-class code path). Throws OutOfDomain unless inf l_IV < t <= l_IV(OLS).
Vector primal_solve(const DesignView& view, double t);

/// inf over alpha of l_IV(alpha).
double iv_loss_infimum(const DesignView& view);

/// sup { t : T(primal_solve(t)) <= Q }, or -infinity when that set is empty.
double t_star(const DesignView& view, const PulseConfig& cfg);

}  // namespace pulse
