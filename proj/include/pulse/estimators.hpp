#pragma once

#include <optional>
#include <string>
#include <vector>

#include "pulse/design.hpp"

namespace pulse {

/// Single-equation estimator selector.
struct EstimatorSpec {
  enum class Kind { Ols, Tsls, Kclass, Anchor, Liml, Fuller, ModifiedTsls };

  Kind kind = Kind::Ols;
  /// kappa for Kclass, lambda for Anchor, a for Fuller; unused otherwise.
  double param = 0.0;

  static EstimatorSpec ols() { return {Kind::Ols, 0.0}; }
  static EstimatorSpec tsls() { return {Kind::Tsls, 0.0}; }
  static EstimatorSpec kclass(double kappa) { return {Kind::Kclass, kappa}; }
  static EstimatorSpec anchor(double lambda) { return {Kind::Anchor, lambda}; }
  static EstimatorSpec liml() { return {Kind::Liml, 0.0}; }
  static EstimatorSpec fuller(double a) { return {Kind::Fuller, a}; }
  static EstimatorSpec modified_tsls() { return {Kind::ModifiedTsls, 0.0}; }

  /// Parses "ols", "tsls", "kclass:K", "anchor:L", "liml", "fuller:A",
  /// "modified-tsls".
  static EstimatorSpec parse(const std::string& text);
  std::string to_string() const;

  /// Throws InvalidArgument for lambda <= -1 or Fuller a <= 0.
  void validate() const;
};

struct EstimateDiagnostics {
  Identification identification = Identification::Just;
  double rcond_ztz = 0.0;
  double rcond_ata = 0.0;
  double rcond_ztpaz = 0.0;
  std::vector<std::string> warnings;
};

/// Coefficients ordered [endogenous..., included exogenous..., intercept].
struct EstimateResult {
  Vector alpha;
  std::optional<double> kappa;
  std::optional<double> lambda;
  EstimateDiagnostics diagnostics;
};

/// Closed-form K-class solution (Z^T (I - kappa P_A^perp) Z)^{-1} Z^T (I - kappa P_A^perp) y.
/// kappa outside [0, 1] is computed but flagged in the warnings.
EstimateResult kclass_estimate(const DesignView& view, double kappa);

/// Minimiser of l_OLS + lambda * l_IV for lambda > -1; reports kappa = lambda / (1 + lambda).
EstimateResult anchor_estimate(const DesignView& view, double lambda);

EstimateResult ols_estimate(const DesignView& view);

/// Throws UnderIdentified when q2 < d1.
EstimateResult tsls_estimate(const DesignView& view);

/// l_OLS-minimal point of {alpha : A^T Z alpha = A^T y}. Throws
/// InfeasibleConstraint in over-identified designs.
EstimateResult modified_tsls(const DesignView& view);

/// Smallest generalised eigenvalue of (W1, W) with W = [y X]^T P_A^perp [y X]
/// and W1 = [y X]^T P_{A_*}^perp [y X]; P_{A_*}^perp = I when there are no
/// included exogenous columns.
double liml_kappa(const DesignView& view);

/// kappa_LIML - a / (n - q).
double fuller_kappa(const DesignView& view, double a);

EstimateResult liml_estimate(const DesignView& view);
EstimateResult fuller_estimate(const DesignView& view, double a);

EstimateResult estimate(const DesignView& view, const EstimatorSpec& spec);

}  // namespace pulse
