#include "pulse/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <thread>

#include "pulse/errors.hpp"
#include "pulse/linalg.hpp"
#include "pulse/rng.hpp"

namespace pulse {

namespace {

constexpr std::uint64_t kModelSalt = 0x6d6f64656c73ULL;
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct Cell {
  std::vector<std::pair<std::string, double>> params;
  SemModel model;
  ModelPartition partition;
  Vector target;
  Eigen::Index n = 0;
};

struct RepOutcome {
  std::vector<std::optional<Vector>> estimates;
  std::vector<std::string> causes;
  std::optional<Matrix> gn;
  PulseMessage message = PulseMessage::None;
};

template <class F>
void parallel_for(int count, int threads, F&& body) {
  std::atomic<int> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (int i = next++; i < count; i = next++) {
      try {
        body(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const int workers = std::max(1, std::min(threads, count));
  std::vector<std::thread> pool;
  for (int t = 1; t < workers; ++t) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
}

/// Fixed-shape pairwise summation of term(i) over [lo, hi).
template <class T, class Term>
T pairwise_sum(std::size_t lo, std::size_t hi, const Term& term) {
  if (hi - lo == 1) return term(lo);
  const std::size_t mid = lo + (hi - lo) / 2;
  return pairwise_sum<T>(lo, mid, term) + pairwise_sum<T>(mid, hi, term);
}

std::uint64_t cell_seed(std::uint64_t master, std::size_t cell) {
  return splitmix64(master ^ splitmix64(static_cast<std::uint64_t>(cell) + 1));
}

int resolve_threads(int requested) {
  if (requested > 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

std::vector<Cell> build_cells(const ExperimentConfig& cfg, std::vector<std::string>& names) {
  std::vector<Cell> cells;
  switch (cfg.design) {
    case Design::Univariate: {
      names = {"q", "rho", "r2", "n", "xi"};
      for (int q : cfg.q_list)
        for (double rho : cfg.rho_list)
          for (double r2 : cfg.r2_list)
            for (int n : cfg.n_list) {
              Cell c;
              const double xi = xi_from_r2(r2, q);
              c.model = univariate_model(q, rho, xi, cfg.gamma);
              c.partition = ModelPartition::all_endogenous(1);
              c.target = Vector::Constant(1, cfg.gamma);
              c.n = n;
              c.params = {{"q", q}, {"rho", rho}, {"r2", r2}, {"n", n}, {"xi", xi}};
              cells.push_back(std::move(c));
            }
      break;
    }
    case Design::RobustnessE1: {
      names = {"n"};
      for (int n : cfg.n_list) {
        Cell c;
        c.model = robustness_e1_model(cfg.gamma, 0.5);
        c.partition = ModelPartition::all_endogenous(1);
        c.target = Vector::Constant(1, cfg.gamma);
        c.n = n;
        c.params = {{"n", n}};
        cells.push_back(std::move(c));
      }
      break;
    }
    case Design::MultivariateRandom: {
      names = {"model", "n", "rho_norm"};
      const std::uint64_t base = splitmix64(cfg.master_seed ^ kModelSalt);
      for (int i = 0; i < cfg.models; ++i) {
        const auto prm = draw_multivariate_params(stream_seed(base, static_cast<std::uint64_t>(i)));
        const double rho = rho_norm_multivariate(prm.mu, prm.delta, prm.sigma2);
        for (int n : cfg.n_list) {
          Cell c;
          c.model = multivariate_model(prm);
          c.partition = ModelPartition::all_endogenous(2);
          c.target = prm.gamma;
          c.n = n;
          c.params = {{"model", i}, {"n", n}, {"rho_norm", rho}};
          cells.push_back(std::move(c));
        }
      }
      break;
    }
    case Design::MultivariateFixedNoise: {
      names = {"setting", "rho_norm", "eta", "phi1", "phi2", "model", "n"};
      const std::uint64_t base = splitmix64(cfg.master_seed ^ kModelSalt);
      std::vector<Matrix> xis;
      for (int i = 0; i < cfg.models; ++i) {
        Rng rng(stream_seed(base, static_cast<std::uint64_t>(i)));
        Matrix xi(2, 2);
        for (int r = 0; r < 2; ++r)
          for (int k = 0; k < 2; ++k) xi(r, k) = rng.uniform(-2.0, 2.0);
        xis.push_back(xi);
      }
      for (std::size_t s = 0; s < cfg.noise.size(); ++s) {
        const auto& nz = cfg.noise[s];
        const double rho = rho_norm_fixed_noise(nz.eta, nz.phi1, nz.phi2);
        for (int i = 0; i < cfg.models; ++i)
          for (int n : cfg.n_list) {
            Cell c;
            c.model = fixed_noise_model(xis[static_cast<std::size_t>(i)], nz.eta, nz.phi1, nz.phi2);
            c.partition = ModelPartition::all_endogenous(2);
            c.target = Vector::Zero(2);
            c.n = n;
            c.params = {{"setting", static_cast<double>(s)}, {"rho_norm", rho}, {"eta", nz.eta},
                        {"phi1", nz.phi1}, {"phi2", nz.phi2}, {"model", i}, {"n", n}};
            cells.push_back(std::move(c));
          }
      }
      break;
    }
    case Design::UnderIdE3: {
      names = {"n"};
      const auto& e = cfg.e3;
      const auto [a1, a2] = population_pulse_underid(e.delta2, e.gamma, e.beta);
      for (int n : cfg.n_list) {
        Cell c;
        c.model = underid_e3_model(e.eta, e.delta1, e.delta2, e.beta, e.gamma);
        c.partition = ModelPartition::all_endogenous(2);
        c.target = Vector(2);
        c.target << a1, a2;
        c.n = n;
        c.params = {{"n", n}};
        cells.push_back(std::move(c));
      }
      break;
    }
  }
  return cells;
}

RepOutcome run_repetition(const Cell& cell, const ExperimentConfig& cfg, const PulseConfig& pcfg,
                          std::uint64_t seed) {
  RepOutcome out;
  const auto m = cfg.methods.size();
  out.estimates.resize(m);
  out.causes.resize(m);
  const Dataset ds = sem_sample(cell.model, cell.n, seed);
  std::optional<DesignView> view;
  try {
    view.emplace(ds, cell.partition, Preprocess::None);
  } catch (const Error& e) {
    for (auto& c : out.causes) c = std::string(to_string(e.code()));
    return out;
  }
  for (std::size_t k = 0; k < m; ++k) {
    const auto& method = cfg.methods[k];
    try {
      if (method.is_pulse()) {
        auto res = pulse_estimate(*view, pcfg);
        out.message = res.message;
        out.estimates[k] = std::move(res.alpha);
      } else {
        out.estimates[k] = estimate(*view, *method.estimator).alpha;
      }
    } catch (const Error& e) {
      out.causes[k] = std::string(to_string(e.code()));
    }
  }
  if (view->q2() >= 1 && view->d1() >= 1 && view->n() > view->q()) {
    try {
      out.gn = weak_instrument_stat(*view).g_matrix;
    } catch (const Error&) {
    }
  }
  return out;
}

CellReport reduce_cell(const Cell& cell, const ExperimentConfig& cfg, const std::vector<RepOutcome>& reps) {
  CellReport rep;
  rep.params = cell.params;
  rep.target = cell.target;
  const auto n_reps = static_cast<int>(reps.size());
  for (std::size_t k = 0; k < cfg.methods.size(); ++k) {
    std::vector<Vector> est;
    std::map<std::string, int> failures;
    for (const auto& r : reps) {
      if (r.estimates[k]) est.push_back(*r.estimates[k]);
      else ++failures[r.causes[k]];
    }
    MethodReport mr = summarize_estimates(cfg.methods[k].label, est, cell.target);
    mr.failures = std::move(failures);
    const int excluded = n_reps - mr.repetitions_used;
    if (excluded * 100 > n_reps) {
      rep.warnings.push_back(mr.label + " excluded " + std::to_string(excluded) + " of " +
                             std::to_string(n_reps) + " repetitions");
    }
    rep.methods.push_back(std::move(mr));
  }
  for (const auto& r : reps) {
    if (r.message == PulseMessage::OlsAccepted) ++rep.pulse_ols_accepted;
    if (r.message == PulseMessage::TslsRejectedFallback) ++rep.pulse_fallback;
  }

  std::vector<const Matrix*> gns;
  for (const auto& r : reps)
    if (r.gn) gns.push_back(&*r.gn);
  rep.gn_repetitions = static_cast<int>(gns.size());
  if (!gns.empty()) {
    const double count = static_cast<double>(gns.size());
    const Matrix mean_gn =
        pairwise_sum<Matrix>(0, gns.size(), [&](std::size_t i) { return Matrix(*gns[i]); }) / count;
    rep.lambda_min_mean_gn = linalg::min_eigenvalue(mean_gn);
    rep.mean_lambda_min_gn =
        pairwise_sum<double>(0, gns.size(), [&](std::size_t i) { return linalg::min_eigenvalue(*gns[i]); }) /
        count;
  } else {
    rep.lambda_min_mean_gn = kNaN;
    rep.mean_lambda_min_gn = kNaN;
  }

  const auto pulse_it = std::find_if(cfg.methods.begin(), cfg.methods.end(),
                                     [](const MethodSpec& m) { return m.is_pulse(); });
  if (pulse_it != cfg.methods.end()) {
    const auto& pm = rep.methods[static_cast<std::size_t>(pulse_it - cfg.methods.begin())];
    auto rel = [](double other, double mine) { return mine > 0.0 ? relative_change(other, mine) : kNaN; };
    for (const auto& om : rep.methods) {
      if (&om == &pm || om.repetitions_used == 0 || pm.repetitions_used == 0) continue;
      PairwiseReport pr;
      pr.competitor = om.label;
      pr.rel_rmse = rel(om.rmse, pm.rmse);
      pr.rel_trace = rel(om.trace_mse, pm.trace_mse);
      pr.rel_det = rel(om.det_mse, pm.det_mse);
      pr.rel_bias_norm = rel(om.bias_norm, pm.bias_norm);
      pr.order = mse_partial_order(pm.mse, om.mse);
      rep.pairwise.push_back(pr);
    }
  }
  return rep;
}

}  // namespace

std::string_view to_string(Design d) {
  switch (d) {
    case Design::RobustnessE1: return "robustness-e1";
    case Design::Univariate: return "univariate";
    case Design::MultivariateRandom: return "mv-random";
    case Design::MultivariateFixedNoise: return "mv-fixed";
    case Design::UnderIdE3: return "underid-e3";
  }
  return "unknown";
}

std::optional<Design> parse_design(std::string_view name) {
  for (Design d : {Design::RobustnessE1, Design::Univariate, Design::MultivariateRandom,
                   Design::MultivariateFixedNoise, Design::UnderIdE3}) {
    if (to_string(d) == name) return d;
  }
  return std::nullopt;
}

std::string design_names() { return "robustness-e1, univariate, mv-random, mv-fixed, underid-e3"; }

MethodSpec MethodSpec::parse(const std::string& text) {
  if (text == "pulse") return {"pulse", std::nullopt};
  const auto spec = EstimatorSpec::parse(text);
  return {spec.to_string(), spec};
}

std::string_view to_string(MsePartialOrder o) {
  switch (o) {
    case MsePartialOrder::ALessOrEqual: return "a_le_b";
    case MsePartialOrder::BLessOrEqual: return "b_le_a";
    case MsePartialOrder::Incomparable: return "incomparable";
    case MsePartialOrder::Equal: return "equal";
  }
  return "unknown";
}

ExperimentConfig ExperimentConfig::defaults(Design design) {
  ExperimentConfig c;
  c.design = design;
  auto methods = [&](std::initializer_list<const char*> names) {
    c.methods.clear();
    for (const char* n : names) c.methods.push_back(MethodSpec::parse(n));
  };
  switch (design) {
    case Design::Univariate:
      c.q_list = {1, 2, 3, 4, 5, 10, 20, 30};
      c.rho_list = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
      c.r2_list = {0.0001, 0.001, 0.01, 0.1, 0.3};
      c.n_list = {50, 100, 150};
      methods({"ols", "tsls", "fuller:1", "fuller:4", "pulse"});
      break;
    case Design::RobustnessE1:
      c.repetitions = 50;
      c.n_list = {2000};
      methods({"kclass:0", "kclass:0.75", "kclass:1"});
      break;
    case Design::MultivariateRandom:
      c.models = 100;
      c.n_list = {50};
      methods({"ols", "fuller:1", "fuller:4", "pulse"});
      break;
    case Design::MultivariateFixedNoise:
      c.models = 50;
      c.n_list = {50};
      for (double rho : {0.2, 0.5, 0.8})
        for (double eta : {0.8, 0.2}) {
          const double phi = phi_for_rho(rho, eta);
          c.noise.push_back({eta, phi, phi});
        }
      methods({"ols", "fuller:1", "fuller:4", "pulse"});
      break;
    case Design::UnderIdE3:
      c.repetitions = 100;
      c.n_list = {50, 500, 5000};
      methods({"pulse", "modified-tsls"});
      break;
  }
  return c;
}

void ExperimentConfig::validate() const {
  auto fail = [](const std::string& what) { throw Error(ErrorCode::InvalidArgument, "experiment config: " + what); };
  if (repetitions < 1) fail("repetitions must be >= 1");
  if (threads < 0) fail("threads must be >= 0");
  if (methods.empty()) fail("no estimators given");
  if (!(p_min > 0.0 && p_min < 1.0)) fail("p_min must lie in (0, 1)");
  if (precision_n < 1) fail("precision must be >= 1");
  if (n_list.empty()) fail("n list is empty");
  for (int n : n_list)
    if (n < 3) fail("sample sizes must be >= 3");
  switch (design) {
    case Design::Univariate:
      if (q_list.empty() || rho_list.empty() || r2_list.empty()) fail("univariate grid has an empty list");
      for (int q : q_list)
        if (q < 1) fail("q must be >= 1");
      for (double r : rho_list)
        if (!(r > -1.0 && r < 1.0)) fail("rho must lie in (-1, 1)");
      for (double r : r2_list)
        if (!(r > 0.0 && r < 1.0)) fail("R^2 must lie in (0, 1)");
      for (int q : q_list)
        for (int n : n_list)
          if (n <= q + 1) fail("n must exceed q + 1");
      break;
    case Design::RobustnessE1:
      if (!(x_step > 0.0) || !(x_max >= 0.0)) fail("x grid needs x_step > 0 and x_max >= 0");
      break;
    case Design::MultivariateRandom:
      if (models < 1) fail("models must be >= 1");
      break;
    case Design::MultivariateFixedNoise:
      if (models < 1) fail("models must be >= 1");
      if (noise.empty()) fail("no noise settings");
      break;
    case Design::UnderIdE3:
      break;
  }
}

ExperimentReport run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  ExperimentReport report;
  report.config = cfg;
  const std::vector<Cell> cells = build_cells(cfg, report.param_names);
  PulseConfig pcfg;
  pcfg.test.p_min = cfg.p_min;
  pcfg.test.scaling = cfg.scaling;
  pcfg.precision_n = cfg.precision_n;
  const int threads = resolve_threads(cfg.threads);

  for (std::size_t c = 0; c < cells.size(); ++c) {
    const std::uint64_t seed = cell_seed(cfg.master_seed, c);
    std::vector<RepOutcome> outcomes(static_cast<std::size_t>(cfg.repetitions));
    parallel_for(cfg.repetitions, threads, [&](int r) {
      outcomes[static_cast<std::size_t>(r)] =
          run_repetition(cells[c], cfg, pcfg, stream_seed(seed, static_cast<std::uint64_t>(r)));
    });
    report.cells.push_back(reduce_cell(cells[c], cfg, outcomes));
  }
  return report;
}

MethodReport summarize_estimates(const std::string& label, const std::vector<Vector>& estimates,
                                 const Vector& target) {
  MethodReport mr;
  mr.label = label;
  mr.repetitions_used = static_cast<int>(estimates.size());
  mr.estimates = estimates;
  const auto p = target.size();
  if (estimates.empty()) {
    mr.mean = mr.bias = mr.iqr = Vector::Constant(p, kNaN);
    mr.mse = mr.variance = Matrix::Constant(p, p, kNaN);
    mr.trace_mse = mr.det_mse = mr.rmse = mr.bias_norm = mr.median_abs_error = kNaN;
    return mr;
  }
  for (const auto& e : estimates) {
    if (e.size() != p) throw Error(ErrorCode::DimensionMismatch, "estimate and target differ in length");
  }
  const double count = static_cast<double>(estimates.size());
  const std::size_t m = estimates.size();
  mr.mean = pairwise_sum<Vector>(0, m, [&](std::size_t i) { return estimates[i]; }) / count;
  mr.bias = mr.mean - target;
  mr.mse = pairwise_sum<Matrix>(0, m, [&](std::size_t i) {
             const Vector d = estimates[i] - target;
             return Matrix(d * d.transpose());
           }) / count;
  mr.variance = pairwise_sum<Matrix>(0, m, [&](std::size_t i) {
                  const Vector d = estimates[i] - mr.mean;
                  return Matrix(d * d.transpose());
                }) / count;
  mr.trace_mse = mr.mse.trace();
  mr.det_mse = mr.mse.determinant();
  mr.rmse = std::sqrt(mr.trace_mse);
  mr.bias_norm = mr.bias.norm();

  std::vector<double> errors;
  errors.reserve(m);
  for (const auto& e : estimates) errors.push_back((e - target).norm());
  mr.median_abs_error = quantile_type7(errors, 0.5);
  mr.iqr.resize(p);
  for (Eigen::Index j = 0; j < p; ++j) {
    std::vector<double> comp;
    comp.reserve(m);
    for (const auto& e : estimates) comp.push_back(e(j));
    mr.iqr(j) = quantile_type7(comp, 0.75) - quantile_type7(comp, 0.25);
  }
  return mr;
}

double quantile_type7(std::vector<double> values, double prob) {
  if (values.empty()) throw Error(ErrorCode::InvalidArgument, "quantile of an empty sample");
  if (!(prob >= 0.0 && prob <= 1.0)) throw Error(ErrorCode::InvalidArgument, "quantile probability outside [0, 1]");
  std::sort(values.begin(), values.end());
  const double h = static_cast<double>(values.size() - 1) * prob;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= values.size()) return values.back();
  return values[lo] + (h - static_cast<double>(lo)) * (values[lo + 1] - values[lo]);
}

double xi_from_r2(double r2, int q) {
  if (!(r2 > 0.0 && r2 < 1.0)) throw Error(ErrorCode::InvalidArgument, "R^2 must lie in (0, 1)");
  if (q < 1) throw Error(ErrorCode::InvalidArgument, "q must be >= 1");
  return std::sqrt(r2 / (q * (1.0 - r2)));
}

double relative_change(double metric_competitor, double metric_pulse) {
  if (!(metric_pulse > 0.0)) throw Error(ErrorCode::DivisionByZero, "PULSE metric must be positive");
  return (metric_competitor - metric_pulse) / metric_pulse;
}

MsePartialOrder mse_partial_order(const Matrix& mse_a, const Matrix& mse_b) {
  if (mse_a.rows() != mse_b.rows() || mse_a.cols() != mse_b.cols() || mse_a.rows() != mse_a.cols()) {
    throw Error(ErrorCode::DimensionMismatch, "MSE matrices must be square and of equal size");
  }
  const double tol = 1e-9 * std::max(std::abs(mse_a.trace()), std::abs(mse_b.trace()));
  const Matrix diff = 0.5 * ((mse_b - mse_a) + (mse_b - mse_a).transpose());
  const bool a_le = linalg::min_eigenvalue(diff) >= -tol;
  const bool b_le = linalg::min_eigenvalue(-diff) >= -tol;
  if (a_le && b_le) return MsePartialOrder::Equal;
  if (a_le) return MsePartialOrder::ALessOrEqual;
  if (b_le) return MsePartialOrder::BLessOrEqual;
  return MsePartialOrder::Incomparable;
}

double rho_norm_multivariate(const Vector& mu, const Matrix& delta, const Vector& sigma2) {
  if (mu.size() != delta.cols() || delta.rows() != delta.cols() || sigma2.size() != delta.cols()) {
    throw Error(ErrorCode::DimensionMismatch, "rho norm: inconsistent dimensions");
  }
  const Matrix inner = delta.transpose() * delta + Matrix(sigma2.asDiagonal());
  if (linalg::rcond_sym(inner) < linalg::kSingularRcond) {
    throw Error(ErrorCode::SingularGram, "delta^T delta + diag(sigma^2) is singular");
  }
  const Vector dm = delta.transpose() * mu;
  const double sq = dm.dot(inner.ldlt().solve(dm)) / (mu.squaredNorm() + 1.0);
  return std::sqrt(std::max(0.0, sq));
}

double rho_norm_fixed_noise(double eta, double phi1, double phi2) {
  if (!(std::abs(eta) < 1.0)) throw Error(ErrorCode::InvalidArgument, "eta must lie in (-1, 1)");
  const double sq = (phi1 * phi1 + phi2 * phi2 - 2.0 * eta * phi1 * phi2) / (1.0 - eta * eta);
  return std::sqrt(std::max(0.0, sq));
}

double phi_for_rho(double rho, double eta) {
  if (!(eta > -1.0 && eta < 1.0)) throw Error(ErrorCode::InvalidArgument, "eta must lie in (-1, 1)");
  return rho * std::sqrt(0.5 * (1.0 + eta));
}

}  // namespace pulse
