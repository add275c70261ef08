#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "pulse/estimators.hpp"
#include "pulse/inference.hpp"
#include "pulse/pulse.hpp"
#include "pulse/sem.hpp"

namespace pulse {

enum class Design { RobustnessE1, Univariate, MultivariateRandom, MultivariateFixedNoise, UnderIdE3 };

/// "robustness-e1", "univariate", "mv-random", "mv-fixed", "underid-e3".
std::string_view to_string(Design d);
std::optional<Design> parse_design(std::string_view name);
/// Comma separated list of the names above.
std::string design_names();

/// A method evaluated in every repetition: a single-equation estimator or
/// PULSE+ ("pulse").
struct MethodSpec {
  std::string label;
  std::optional<EstimatorSpec> estimator;

  static MethodSpec parse(const std::string& text);
  bool is_pulse() const { return !estimator.has_value(); }
};

struct FixedNoiseSetting {
  double eta = 0.0;
  double phi1 = 0.0;
  double phi2 = 0.0;
};

struct E3Params {
  double eta = 1.0;
  double delta1 = 1.0;
  double delta2 = 1.0;
  double beta = 1.0;
  double gamma = 1.0;
};

struct ExperimentConfig {
  Design design = Design::Univariate;
  int repetitions = 1000;
  std::uint64_t master_seed = 1;
  /// 0 = one worker per hardware thread.
  int threads = 0;
  std::vector<MethodSpec> methods;
  double p_min = 0.05;
  Scaling scaling = Scaling::AndersonRubin;
  std::uint64_t precision_n = std::uint64_t{1} << 20;

  // Univariate grid.
  std::vector<int> q_list;
  std::vector<double> rho_list;
  std::vector<double> r2_list;
  std::vector<int> n_list;
  double gamma = 1.0;

  // Robustness curves.
  double x_max = 6.0;
  double x_step = 0.1;

  // Multivariate designs.
  int models = 0;
  std::vector<FixedNoiseSetting> noise;

  // Under-identified design.
  E3Params e3;

  /// Paper grid with desk-scale repetition counts.
  static ExperimentConfig defaults(Design design);
  void validate() const;
};

/// Strict JSON reader (unknown keys are rejected). Missing keys take the
/// defaults of the named design.
ExperimentConfig parse_experiment_json(const std::string& text);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);
std::string experiment_config_json(const ExperimentConfig& cfg);

enum class MsePartialOrder { ALessOrEqual, BLessOrEqual, Incomparable, Equal };
std::string_view to_string(MsePartialOrder o);

struct MethodReport {
  std::string label;
  int repetitions_used = 0;
  std::map<std::string, int> failures;
  Vector mean;
  Vector bias;
  Matrix mse;
  Matrix variance;
  double trace_mse = 0.0;
  double det_mse = 0.0;
  double rmse = 0.0;
  double bias_norm = 0.0;
  /// Median of ||estimate - target||_2.
  double median_abs_error = 0.0;
  Vector iqr;
  /// Accepted estimates in repetition order.
  std::vector<Vector> estimates;
};

struct PairwiseReport {
  std::string competitor;
  double rel_rmse = 0.0;
  double rel_trace = 0.0;
  double rel_det = 0.0;
  double rel_bias_norm = 0.0;
  /// A = PULSE, B = competitor.
  MsePartialOrder order = MsePartialOrder::Incomparable;
};

struct CellReport {
  std::vector<std::pair<std::string, double>> params;
  Vector target;
  std::vector<MethodReport> methods;
  std::vector<PairwiseReport> pairwise;
  /// Mean over repetitions of lambda_min(G_n).
  double mean_lambda_min_gn = 0.0;
  /// lambda_min of the mean G_n.
  double lambda_min_mean_gn = 0.0;
  int gn_repetitions = 0;
  int pulse_ols_accepted = 0;
  int pulse_fallback = 0;
  std::vector<std::string> warnings;
};

struct ExperimentReport {
  ExperimentConfig config;
  std::vector<std::string> param_names;
  std::vector<CellReport> cells;
};

ExperimentReport run_experiment(const ExperimentConfig& cfg);

/// Bias, MSE, variance and scalarisations of a set of estimates around
/// `target`; the variance uses divisor N so trace(MSE) = trace(Var) + |bias|^2.
MethodReport summarize_estimates(const std::string& label, const std::vector<Vector>& estimates,
                                 const Vector& target);

/// Quantile with linear interpolation between order statistics (type 7).
double quantile_type7(std::vector<double> values, double prob);

/// xi with q xi^2 / (q xi^2 + 1) = r2.
double xi_from_r2(double r2, int q);

/// (competitor - pulse) / pulse; positive means PULSE is better.
double relative_change(double metric_competitor, double metric_pulse);

/// PSD ordering with tolerance: smallest eigenvalue >= -1e-9 * trace.
MsePartialOrder mse_partial_order(const Matrix& mse_a, const Matrix& mse_b);

/// ||rho|| for the varying-confounding design.
double rho_norm_multivariate(const Vector& mu, const Matrix& delta, const Vector& sigma2);

/// ||rho|| for the fixed-noise design.
double rho_norm_fixed_noise(double eta, double phi1, double phi2);

/// phi with rho_norm_fixed_noise(eta, phi, phi) = rho.
double phi_for_rho(double rho, double eta);

/// Files written by write_report, relative to the output directory.
struct ReportFiles {
  std::filesystem::path table;
  std::filesystem::path manifest;
  std::optional<std::filesystem::path> curves;
};

/// Long-format CSV (cell parameters..., estimator, metric, value,
/// repetitions_used), a JSON manifest and, for the robustness design, the
/// per-repetition worst-case curves (rep, kappa, estimate, x, wcmspe).
ReportFiles write_report(const ExperimentReport& report, const std::filesystem::path& out_dir);

/// Shortest round-trip decimal form of a double.
std::string format_double(double v);

}  // namespace pulse
