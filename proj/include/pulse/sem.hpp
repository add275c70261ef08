#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "pulse/dataset.hpp"
#include "pulse/design.hpp"

namespace pulse {

enum class VariableRole { Target, Endogenous, Hidden };

/// Linear SEM in row form: S = S B + A M + eps, with S = [Y X H] ordered as
/// the `roles` vector, A ~ N(0, anchor_cov) and eps ~ N(0, noise_cov).
/// Column j of B holds the coefficients of the assignment of variable j.
struct SemModel {
  Matrix b;
  Matrix m;
  Matrix noise_cov;
  Matrix anchor_cov;
  std::vector<VariableRole> roles;
  std::vector<std::string> names;
  std::vector<std::string> anchor_names;

  Eigen::Index size() const { return b.rows(); }
  Eigen::Index q() const { return anchor_cov.rows(); }
  /// Position of Y in S.
  Eigen::Index target_index() const;
  /// Positions of the observed endogenous X in S, in order.
  std::vector<Eigen::Index> endogenous_indices() const;

  /// Throws InvalidArgument on inconsistent shapes, non-PSD covariances or a
  /// missing/duplicate target, NonStationary when rho(B) >= 1 - 1e-8.
  void validate() const;
};

/// Largest eigenvalue modulus of B.
double spectral_radius(const Matrix& b);

/// do(A := v) with v ~ N(mean, cov); a hard intervention has cov = 0.
struct InterventionSpec {
  enum class Kind { None, Hard, Stochastic };
  Kind kind = Kind::None;
  Vector mean;
  Matrix cov;

  static InterventionSpec none() { return {}; }
  static InterventionSpec hard(Vector v);
  static InterventionSpec stochastic(Vector mean, Matrix cov);

  void validate(Eigen::Index q) const;
};

/// One sample with every coordinate, including the hidden ones and noise.
struct SemDraw {
  Matrix a;
  Matrix eps;
  /// Rows [Y X H] in the model's variable order.
  Matrix s;
};

/// Per row: q standard normals for A, then |S| for eps. The anchor normals
/// are drawn under every intervention so eps does not depend on it.
SemDraw sem_draw(const SemModel& model, Eigen::Index n, std::uint64_t seed,
                 const InterventionSpec& iv = {});

/// Observed columns only (Y, X, A).
Dataset sem_sample(const SemModel& model, Eigen::Index n, std::uint64_t seed,
                   const InterventionSpec& iv = {});

/// (A M + eps) Gamma^{-1} with Gamma = I - B.
Matrix solve_structural(const SemModel& model, const Matrix& a, const Matrix& eps);

/// Exact second moments of (S, A) under an intervention.
struct PopulationMoments {
  /// E[A A^T]
  Matrix aa;
  /// E[A S^T] (q x |S|)
  Matrix as;
  /// E[S S^T]
  Matrix ss;
};

PopulationMoments population_moments(const SemModel& model, const InterventionSpec& iv = {});

/// Moments of the regression design Z = [X_* A_*] built from a partition
/// over the observed X (in role order) and A columns.
struct DesignMoments {
  Matrix zz;
  Matrix az;
  Vector zy;
  Vector ay;
  double yy = 0.0;
  Matrix aa;
};

DesignMoments design_moments(const SemModel& model, const ModelPartition& partition,
                             const InterventionSpec& iv = {});

/// Population K-class estimand for kappa in [0, 1]. Throws
/// SingularPopulationGram when the defining matrix is singular.
Vector population_kclass(const SemModel& model, const ModelPartition& partition, double kappa);

/// Population minimiser of l_OLS subject to l_IV = 0 (the population PULSE
/// target in an under-identified design).
Vector population_constrained_ols(const SemModel& model, const ModelPartition& partition);

double population_ols_loss(const DesignMoments& mom, const Vector& alpha);
double population_iv_loss(const DesignMoments& mom, const Vector& alpha);

/// sup over C(kappa) of the interventional MSPE, evaluated as
/// l_OLS + kappa / (1 - kappa) * l_IV at the population.
double worst_case_mspe(const SemModel& model, const ModelPartition& partition,
                       const Vector& alpha, double kappa);

/// x^2 (1 - g)^2 + g^2 + 3 (1 - g) at each x.
std::vector<double> wcmspe_curve_e1(double gamma_hat, const std::vector<double>& x_grid);

struct Interval {
  double lower = 0.0;
  double upper = 0.0;
};

/// Set of x >= 0 on which the worst-case curve of `gamma` is no larger than
/// the curve of every competitor; nullopt when empty. `upper` may be
/// +infinity.
std::optional<Interval> superiority_interval(double gamma, const std::vector<double>& competitors);

/// Shrinks an interval to the grid 10^-decimals (lower rounded up, upper
/// rounded down), so the reported interval lies inside the exact one.
Interval round_inward(const Interval& iv, int decimals);

/// (alpha1*, alpha2*) of the under-identified example.
std::pair<double, double> population_pulse_underid(double delta2, double gamma, double beta);

// Model builders for the simulation designs.

/// X := A + U_X, Y := gamma X + U_Y, corr(U_X, U_Y) = rho, A ~ N(0, 1).
SemModel robustness_e1_model(double gamma = 1.0, double rho = 0.5);

/// X := A^T (xi, ..., xi) + U_X, Y := gamma X + U_Y, A ~ N(0, I_q).
SemModel univariate_model(int q, double rho, double xi, double gamma = 1.0);

/// Two endogenous X, two hidden H, two anchors:
/// X := xi^T A + delta^T H + N_X, Y := gamma^T X + mu^T H + N_Y.
struct MultivariateParams {
  Matrix xi = Matrix::Zero(2, 2);
  Matrix delta = Matrix::Zero(2, 2);
  Vector mu = Vector::Zero(2);
  Vector sigma2 = Vector::Ones(2);
  Vector gamma = Vector::Zero(2);
};

SemModel multivariate_model(const MultivariateParams& params);

/// Draws xi, delta, mu ~ Unif(-2, 2), sigma^2 ~ Unif(0.1, 1).
MultivariateParams draw_multivariate_params(std::uint64_t seed, double bound = 2.0,
                                            double sigma2_lo = 0.1, double sigma2_hi = 1.0);

/// X := xi^T A + U_X, Y := gamma^T X + U_Y, Var(U_X1, U_X2, U_Y) with
/// unit diagonal, corr(U_X1, U_X2) = eta, corr(U_Xj, U_Y) = phi_j.
SemModel fixed_noise_model(const Matrix& xi, double eta, double phi1, double phi2,
                           const Vector& gamma = Vector::Zero(2));

/// A := e_A, H := e_H, X1 := eta A + delta1 H + e_1, Y := beta X1 + delta2 H + e_Y,
/// X2 := gamma Y + e_2 with standard normal noise.
SemModel underid_e3_model(double eta, double delta1, double delta2, double beta, double gamma);

/// Reads a SEM from JSON (format in README). When the file carries an
/// "intervention" block it is returned as well.
SemModel load_sem_config(const std::filesystem::path& path, InterventionSpec* embedded = nullptr);
SemModel parse_sem_json(const std::string& text, InterventionSpec* embedded = nullptr);
InterventionSpec load_intervention(const std::filesystem::path& path);
InterventionSpec parse_intervention_json(const std::string& text);

}  // namespace pulse
