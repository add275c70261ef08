#include "pulse/pulse_c.h"

#include <cmath>
#include <limits>
#include <new>
#include <string>
#include <vector>

#include <json.hpp>

#include "pulse/dataset.hpp"
#include "pulse/design.hpp"
#include "pulse/errors.hpp"
#include "pulse/estimators.hpp"
#include "pulse/experiments.hpp"
#include "pulse/inference.hpp"
#include "pulse/pulse.hpp"
#include "pulse/sem.hpp"

struct pulse_dataset {
  pulse::Dataset ds;
};

struct pulse_design {
  pulse::DesignView view;
};

struct pulse_result {
  pulse::Vector alpha;
  std::optional<double> kappa;
  std::optional<double> lambda;
  pulse::PulseMessage message = pulse::PulseMessage::None;
  std::optional<pulse::TestResult> test;
  bool fallback_used = false;
  std::string warning;
  std::vector<std::string> diagnostics;
};

struct pulse_sem {
  pulse::SemModel model;
  pulse::InterventionSpec intervention;
  std::string intervention_json;
};

struct pulse_experiment {
  pulse::ExperimentConfig config;
  std::string design_name;
};

struct pulse_experiment_result {
  pulse::ExperimentReport report;
  std::vector<std::string> files;
  std::vector<std::string> warnings;
};

namespace {

thread_local std::string g_error;
thread_local std::string g_error_code;

pulse_status status_for(pulse::ErrorCode code) {
  using pulse::ErrorCode;
  switch (code) {
    case ErrorCode::InvalidArgument:
    case ErrorCode::DimensionMismatch: return PULSE_ERR_USAGE;
    case ErrorCode::DataError: return PULSE_ERR_DATA;
    case ErrorCode::DualInfeasible: return PULSE_ERR_DUAL_INFEASIBLE;
    default: return PULSE_ERR_NUMERICAL;
  }
}

template <class F>
pulse_status guarded(F&& f) {
  g_error.clear();
  g_error_code.clear();
  try {
    f();
    return PULSE_OK;
  } catch (const pulse::Error& e) {
    g_error = e.what();
    g_error_code = std::string(pulse::to_string(e.code()));
    return status_for(e.code());
  } catch (const std::bad_alloc&) {
    g_error = "out of memory";
    g_error_code = "Internal";
  } catch (const std::exception& e) {
    g_error = e.what();
    g_error_code = "Internal";
  }
  return PULSE_ERR_INTERNAL;
}

[[noreturn]] void usage(const std::string& msg) { throw pulse::Error(pulse::ErrorCode::InvalidArgument, msg); }

void require(const void* p, const char* what) {
  if (!p) usage(std::string(what) + " must not be NULL");
}

pulse::PulseConfig to_config(const pulse_options* opts) {
  pulse_options o;
  pulse_options_default(&o);
  if (opts) o = *opts;
  pulse::PulseConfig cfg;
  cfg.test.p_min = o.p_min;
  switch (o.scaling) {
    case PULSE_SCALING_AR: cfg.test.scaling = pulse::Scaling::AndersonRubin; break;
    case PULSE_SCALING_PLAIN: cfg.test.scaling = pulse::Scaling::Plain; break;
    default: usage("unknown scaling");
  }
  cfg.precision_n = o.precision;
  if (o.fallback) {
    const std::string fb(o.fallback);
    if (fb == "none") cfg.fallback.reset();
    else cfg.fallback = pulse::EstimatorSpec::parse(fb);
  }
  cfg.use_lambda_bound = o.use_lambda_bound != 0;
  cfg.validate();
  return cfg;
}

pulse_test_result to_c(const pulse::TestResult& t) {
  pulse_test_result r;
  r.statistic = t.statistic;
  r.threshold = t.threshold;
  r.accepted = t.accepted ? 1 : 0;
  r.p_value_bound = t.p_value_bound.value_or(std::numeric_limits<double>::quiet_NaN());
  return r;
}

std::string intervention_to_json(const pulse::InterventionSpec& iv) {
  nlohmann::json j;
  using K = pulse::InterventionSpec::Kind;
  auto vec = [](const pulse::Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
  switch (iv.kind) {
    case K::None: j["kind"] = "none"; break;
    case K::Hard:
      j["kind"] = "hard";
      j["value"] = vec(iv.mean);
      break;
    case K::Stochastic: {
      j["kind"] = "stochastic";
      j["mean"] = vec(iv.mean);
      nlohmann::json rows = nlohmann::json::array();
      for (Eigen::Index i = 0; i < iv.cov.rows(); ++i) {
        rows.push_back(vec(iv.cov.row(i).transpose()));
      }
      j["cov"] = rows;
      break;
    }
  }
  return j.dump();
}

}  // namespace

extern "C" {

const char* pulse_version(void) { return PULSE_VERSION_STRING; }
const char* pulse_last_error(void) { return g_error.c_str(); }
const char* pulse_last_error_code(void) { return g_error_code.c_str(); }

void pulse_options_default(pulse_options* opts) {
  if (!opts) return;
  opts->p_min = 0.05;
  opts->scaling = PULSE_SCALING_AR;
  opts->precision = std::uint64_t{1} << 20;
  opts->fallback = nullptr;
  opts->use_lambda_bound = 0;
}

pulse_status pulse_dataset_load_csv(const char* path, const char* target, const char* const* endogenous,
                                    size_t n_endogenous, const char* const* exogenous, size_t n_exogenous,
                                    pulse_dataset** out) {
  return guarded([&] {
    require(path, "path");
    require(target, "target");
    require(out, "out");
    if (n_endogenous) require(endogenous, "endogenous");
    if (n_exogenous) require(exogenous, "exogenous");
    pulse::ColumnSchema schema;
    schema.target = target;
    for (size_t i = 0; i < n_endogenous; ++i) schema.endogenous.emplace_back(endogenous[i]);
    for (size_t i = 0; i < n_exogenous; ++i) schema.exogenous.emplace_back(exogenous[i]);
    *out = new pulse_dataset{pulse::load_csv(path, schema)};
  });
}

pulse_status pulse_dataset_from_arrays(size_t n, size_t d, size_t q, const double* y, const double* x,
                                       const double* a, pulse_dataset** out) {
  return guarded([&] {
    require(y, "y");
    require(out, "out");
    if (n * d) require(x, "x");
    if (n * q) require(a, "a");
    const auto rows = static_cast<Eigen::Index>(n);
    using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    pulse::Vector yv = Eigen::Map<const pulse::Vector>(y, rows);
    pulse::Matrix xm = d ? pulse::Matrix(Eigen::Map<const RowMajor>(x, rows, static_cast<Eigen::Index>(d)))
                         : pulse::Matrix(rows, 0);
    pulse::Matrix am = q ? pulse::Matrix(Eigen::Map<const RowMajor>(a, rows, static_cast<Eigen::Index>(q)))
                         : pulse::Matrix(rows, 0);
    *out = new pulse_dataset{pulse::Dataset(std::move(yv), std::move(xm), std::move(am))};
  });
}

void pulse_dataset_free(pulse_dataset* ds) { delete ds; }

pulse_status pulse_dataset_dims(const pulse_dataset* ds, size_t* n, size_t* d, size_t* q) {
  return guarded([&] {
    require(ds, "dataset");
    if (n) *n = static_cast<size_t>(ds->ds.n());
    if (d) *d = static_cast<size_t>(ds->ds.d());
    if (q) *q = static_cast<size_t>(ds->ds.q());
  });
}

pulse_status pulse_dataset_write_csv(const pulse_dataset* ds, const char* path) {
  return guarded([&] {
    require(ds, "dataset");
    require(path, "path");
    const auto& d = ds->ds;
    std::vector<std::string> header = d.exogenous_names();
    header.insert(header.end(), d.endogenous_names().begin(), d.endogenous_names().end());
    header.push_back(d.target_name());
    pulse::Matrix values(d.n(), d.q() + d.d() + 1);
    values << d.a(), d.x(), d.y();
    pulse::write_csv_table(path, header, values);
  });
}

pulse_status pulse_design_create(const pulse_dataset* ds, const int* included_endogenous, size_t n_endo,
                                 const int* included_exogenous, size_t n_exo, pulse_preprocess pre,
                                 pulse_design** out) {
  return guarded([&] {
    require(ds, "dataset");
    require(out, "out");
    pulse::ModelPartition part;
    if (included_endogenous) {
      part.included_endogenous.assign(included_endogenous, included_endogenous + n_endo);
    } else {
      part = pulse::ModelPartition::all_endogenous(ds->ds.d());
    }
    if (n_exo) {
      require(included_exogenous, "included_exogenous");
      part.included_exogenous.assign(included_exogenous, included_exogenous + n_exo);
    }
    pulse::Preprocess p;
    switch (pre) {
      case PULSE_PREPROCESS_NONE: p = pulse::Preprocess::None; break;
      case PULSE_PREPROCESS_CENTER: p = pulse::Preprocess::Center; break;
      case PULSE_PREPROCESS_INTERCEPT: p = pulse::Preprocess::Intercept; break;
      default: usage("unknown preprocessing mode");
    }
    *out = new pulse_design{pulse::DesignView(ds->ds, part, p)};
  });
}

void pulse_design_free(pulse_design* design) { delete design; }

pulse_status pulse_design_dims(const pulse_design* design, size_t* n, size_t* p, size_t* q, size_t* d1,
                               pulse_identification* id) {
  return guarded([&] {
    require(design, "design");
    const auto& v = design->view;
    if (n) *n = static_cast<size_t>(v.n());
    if (p) *p = static_cast<size_t>(v.p());
    if (q) *q = static_cast<size_t>(v.q());
    if (d1) *d1 = static_cast<size_t>(v.d1());
    if (id) {
      switch (v.identification()) {
        case pulse::Identification::Under: *id = PULSE_UNDER_IDENTIFIED; break;
        case pulse::Identification::Just: *id = PULSE_JUST_IDENTIFIED; break;
        case pulse::Identification::Over: *id = PULSE_OVER_IDENTIFIED; break;
      }
    }
  });
}

const char* pulse_design_coef_name(const pulse_design* design, size_t i) {
  if (!design || i >= design->view.coefficient_names().size()) return "";
  return design->view.coefficient_names()[i].c_str();
}

pulse_status pulse_estimate(const pulse_design* design, const char* spec, pulse_result** out) {
  return guarded([&] {
    require(design, "design");
    require(spec, "spec");
    require(out, "out");
    const auto s = pulse::EstimatorSpec::parse(spec);
    auto est = pulse::estimate(design->view, s);
    auto* r = new pulse_result;
    r->alpha = std::move(est.alpha);
    r->kappa = est.kappa;
    r->lambda = est.lambda;
    r->diagnostics = std::move(est.diagnostics.warnings);
    *out = r;
  });
}

pulse_status pulse_run(const pulse_design* design, const pulse_options* opts, pulse_result** out) {
  return guarded([&] {
    require(design, "design");
    require(out, "out");
    const auto cfg = to_config(opts);
    auto res = pulse::pulse_estimate(design->view, cfg);
    auto* r = new pulse_result;
    r->alpha = std::move(res.alpha);
    r->kappa = res.kappa_star;
    r->lambda = res.lambda_star;
    r->message = res.message;
    r->test = res.test_at_solution;
    r->fallback_used = res.fallback_used;
    r->warning = std::string(pulse::warning_text(res.message));
    *out = r;
  });
}

void pulse_result_free(pulse_result* res) { delete res; }

size_t pulse_result_coef_count(const pulse_result* res) {
  return res ? static_cast<size_t>(res->alpha.size()) : 0;
}

pulse_status pulse_result_coefs(const pulse_result* res, double* buf, size_t len) {
  return guarded([&] {
    require(res, "result");
    require(buf, "buf");
    if (len < static_cast<size_t>(res->alpha.size())) usage("buffer too small for coefficients");
    for (Eigen::Index i = 0; i < res->alpha.size(); ++i) buf[i] = res->alpha(i);
  });
}

pulse_status pulse_result_kappa(const pulse_result* res, double* kappa, int* has) {
  return guarded([&] {
    require(res, "result");
    if (has) *has = res->kappa ? 1 : 0;
    if (kappa) *kappa = res->kappa.value_or(std::numeric_limits<double>::quiet_NaN());
  });
}

pulse_status pulse_result_lambda(const pulse_result* res, double* lambda, int* has) {
  return guarded([&] {
    require(res, "result");
    if (has) *has = res->lambda ? 1 : 0;
    if (lambda) *lambda = res->lambda.value_or(std::numeric_limits<double>::quiet_NaN());
  });
}

pulse_message pulse_result_message(const pulse_result* res) {
  if (!res) return PULSE_MESSAGE_NONE;
  switch (res->message) {
    case pulse::PulseMessage::OlsAccepted: return PULSE_MESSAGE_OLS_ACCEPTED;
    case pulse::PulseMessage::TslsRejectedFallback: return PULSE_MESSAGE_TSLS_REJECTED;
    case pulse::PulseMessage::None: break;
  }
  return PULSE_MESSAGE_NONE;
}

const char* pulse_result_warning(const pulse_result* res) { return res ? res->warning.c_str() : ""; }

int pulse_result_fallback_used(const pulse_result* res) { return res && res->fallback_used ? 1 : 0; }

pulse_status pulse_result_test(const pulse_result* res, pulse_test_result* out) {
  return guarded([&] {
    require(res, "result");
    require(out, "out");
    if (!res->test) usage("result carries no test; use pulse_test");
    *out = to_c(*res->test);
  });
}

size_t pulse_result_diagnostic_count(const pulse_result* res) { return res ? res->diagnostics.size() : 0; }

const char* pulse_result_diagnostic(const pulse_result* res, size_t i) {
  if (!res || i >= res->diagnostics.size()) return "";
  return res->diagnostics[i].c_str();
}

pulse_status pulse_test(const pulse_design* design, const double* alpha, size_t len, const pulse_options* opts,
                        pulse_test_result* out) {
  return guarded([&] {
    require(design, "design");
    require(alpha, "alpha");
    require(out, "out");
    if (len != static_cast<size_t>(design->view.p())) {
      throw pulse::Error(pulse::ErrorCode::DimensionMismatch, "alpha has " + std::to_string(len) +
                                                                  " entries, design has " +
                                                                  std::to_string(design->view.p()));
    }
    const auto cfg = to_config(opts);
    const pulse::Vector a = Eigen::Map<const pulse::Vector>(alpha, static_cast<Eigen::Index>(len));
    *out = to_c(pulse::test_statistic(design->view, a, cfg.test));
  });
}

pulse_status pulse_weak_instrument(const pulse_design* design, double* min_eigenvalue, int* passes, double* g,
                                   size_t g_len) {
  return guarded([&] {
    require(design, "design");
    const auto rep = pulse::weak_instrument_stat(design->view);
    if (min_eigenvalue) *min_eigenvalue = rep.min_eigenvalue;
    if (passes) *passes = rep.rule_of_thumb_pass ? 1 : 0;
    const auto k = rep.g_matrix.rows();
    if (g && g_len >= static_cast<size_t>(k * k)) {
      for (Eigen::Index i = 0; i < k; ++i)
        for (Eigen::Index j = 0; j < k; ++j) g[i * k + j] = rep.g_matrix(i, j);
    }
  });
}

pulse_status pulse_chi2_quantile(int dof, double prob, double* out) {
  return guarded([&] {
    require(out, "out");
    *out = pulse::chi2_quantile(dof, prob);
  });
}

pulse_status pulse_sem_load(const char* path, pulse_sem** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    auto* s = new pulse_sem;
    try {
      s->model = pulse::load_sem_config(path, &s->intervention);
      s->intervention.validate(s->model.q());
      s->intervention_json = intervention_to_json(s->intervention);
    } catch (...) {
      delete s;
      throw;
    }
    *out = s;
  });
}

void pulse_sem_free(pulse_sem* sem) { delete sem; }

pulse_status pulse_sem_set_intervention_file(pulse_sem* sem, const char* path) {
  return guarded([&] {
    require(sem, "sem");
    require(path, "path");
    auto iv = pulse::load_intervention(path);
    iv.validate(sem->model.q());
    sem->intervention = std::move(iv);
    sem->intervention_json = intervention_to_json(sem->intervention);
  });
}

const char* pulse_sem_intervention_kind(const pulse_sem* sem) {
  if (!sem) return "";
  switch (sem->intervention.kind) {
    case pulse::InterventionSpec::Kind::None: return "none";
    case pulse::InterventionSpec::Kind::Hard: return "hard";
    case pulse::InterventionSpec::Kind::Stochastic: return "stochastic";
  }
  return "";
}

const char* pulse_sem_intervention_json(const pulse_sem* sem) { return sem ? sem->intervention_json.c_str() : ""; }

pulse_status pulse_sem_sample(const pulse_sem* sem, size_t n, uint64_t seed, pulse_dataset** out) {
  return guarded([&] {
    require(sem, "sem");
    require(out, "out");
    if (n == 0) usage("sample size must be positive");
    *out = new pulse_dataset{pulse::sem_sample(sem->model, static_cast<Eigen::Index>(n), seed, sem->intervention)};
  });
}

pulse_status pulse_experiment_from_file(const char* path, pulse_experiment** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    auto cfg = pulse::load_experiment_config(path);
    std::string name(pulse::to_string(cfg.design));
    *out = new pulse_experiment{std::move(cfg), std::move(name)};
  });
}

pulse_status pulse_experiment_from_design(const char* design, pulse_experiment** out) {
  return guarded([&] {
    require(design, "design");
    require(out, "out");
    const auto d = pulse::parse_design(design);
    if (!d) usage(std::string("unknown design '") + design + "'; valid designs: " + pulse::design_names());
    *out = new pulse_experiment{pulse::ExperimentConfig::defaults(*d), std::string(pulse::to_string(*d))};
  });
}

void pulse_experiment_free(pulse_experiment* exp) { delete exp; }

const char* pulse_experiment_design(const pulse_experiment* exp) { return exp ? exp->design_name.c_str() : ""; }

const char* pulse_experiment_design_names(void) {
  static const std::string names = pulse::design_names();
  return names.c_str();
}

pulse_status pulse_experiment_set_repetitions(pulse_experiment* exp, int reps) {
  return guarded([&] {
    require(exp, "experiment");
    if (reps < 1) usage("repetitions must be positive");
    exp->config.repetitions = reps;
  });
}

pulse_status pulse_experiment_set_seed(pulse_experiment* exp, uint64_t seed) {
  return guarded([&] {
    require(exp, "experiment");
    exp->config.master_seed = seed;
  });
}

pulse_status pulse_experiment_set_threads(pulse_experiment* exp, int threads) {
  return guarded([&] {
    require(exp, "experiment");
    if (threads < 0) usage("threads must be non-negative");
    exp->config.threads = threads;
  });
}

pulse_status pulse_experiment_run(const pulse_experiment* exp, const char* out_dir, pulse_experiment_result** out) {
  return guarded([&] {
    require(exp, "experiment");
    require(out_dir, "out_dir");
    exp->config.validate();
    auto* r = new pulse_experiment_result;
    try {
      r->report = pulse::run_experiment(exp->config);
      const auto files = pulse::write_report(r->report, out_dir);
      r->files.push_back((std::filesystem::path(out_dir) / files.table).string());
      r->files.push_back((std::filesystem::path(out_dir) / files.manifest).string());
      if (files.curves) r->files.push_back((std::filesystem::path(out_dir) / *files.curves).string());
      for (const auto& cell : r->report.cells)
        for (const auto& w : cell.warnings) r->warnings.push_back(w);
    } catch (...) {
      delete r;
      throw;
    }
    if (out) *out = r;
    else delete r;
  });
}

void pulse_experiment_result_free(pulse_experiment_result* res) { delete res; }

size_t pulse_experiment_cell_count(const pulse_experiment_result* res) {
  return res ? res->report.cells.size() : 0;
}

size_t pulse_experiment_param_count(const pulse_experiment_result* res) {
  return res ? res->report.param_names.size() : 0;
}

const char* pulse_experiment_param_name(const pulse_experiment_result* res, size_t j) {
  if (!res || j >= res->report.param_names.size()) return "";
  return res->report.param_names[j].c_str();
}

double pulse_experiment_param_value(const pulse_experiment_result* res, size_t cell, size_t j) {
  if (!res || cell >= res->report.cells.size() || j >= res->report.cells[cell].params.size()) {
    return std::numeric_limits<double>::quiet_NaN();
  }
  return res->report.cells[cell].params[j].second;
}

size_t pulse_experiment_method_count(const pulse_experiment_result* res) {
  return res ? res->report.config.methods.size() : 0;
}

const char* pulse_experiment_method_label(const pulse_experiment_result* res, size_t k) {
  if (!res || k >= res->report.config.methods.size()) return "";
  return res->report.config.methods[k].label.c_str();
}

double pulse_experiment_metric(const pulse_experiment_result* res, size_t cell, size_t k, const char* metric) {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  if (!res || !metric || cell >= res->report.cells.size()) return nan;
  const auto& methods = res->report.cells[cell].methods;
  if (k >= methods.size()) return nan;
  const auto& m = methods[k];
  const std::string name(metric);
  if (name == "trace_mse") return m.trace_mse;
  if (name == "det_mse") return m.det_mse;
  if (name == "rmse") return m.rmse;
  if (name == "bias_norm") return m.bias_norm;
  if (name == "median_abs_error") return m.median_abs_error;
  if (name == "repetitions_used") return m.repetitions_used;
  return nan;
}

size_t pulse_experiment_file_count(const pulse_experiment_result* res) { return res ? res->files.size() : 0; }

const char* pulse_experiment_file(const pulse_experiment_result* res, size_t i) {
  if (!res || i >= res->files.size()) return "";
  return res->files[i].c_str();
}

size_t pulse_experiment_warning_count(const pulse_experiment_result* res) { return res ? res->warnings.size() : 0; }

const char* pulse_experiment_warning(const pulse_experiment_result* res, size_t i) {
  if (!res || i >= res->warnings.size()) return "";
  return res->warnings[i].c_str();
}

}  // extern "C"
