// pulse: command line front end over the C API.
//
//   pulse estimate   --data FILE --target COL --endogenous COLS ... --estimator SPECS
//   pulse simulate   --sem FILE --n N --seed S [--intervene FILE] --out FILE
//   pulse experiment --config FILE | --design NAME [--reps N] [--seed S] [--threads T] --out DIR
//   pulse diagnose   --data FILE (schema flags as for estimate)
//
// Exit codes: 0 ok, 1 internal, 2 usage/config, 3 data, 4 numerical, 5 no
// fallback for a rejected TSLS.

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "pulse/pulse_c.h"

namespace {

using nlohmann::json;

struct Failure {
  int code;
  std::string message;
};

void check(pulse_status st) {
  if (st != PULSE_OK) {
    std::string msg = pulse_last_error();
    const std::string code = pulse_last_error_code();
    if (!code.empty() && code != "Internal") msg = code + ": " + msg;
    throw Failure{static_cast<int>(st), msg};
  }
}

template <class T, void (*Free)(T*)>
struct Deleter {
  void operator()(T* p) const { Free(p); }
};
using DatasetPtr = std::unique_ptr<pulse_dataset, Deleter<pulse_dataset, pulse_dataset_free>>;
using DesignPtr = std::unique_ptr<pulse_design, Deleter<pulse_design, pulse_design_free>>;
using ResultPtr = std::unique_ptr<pulse_result, Deleter<pulse_result, pulse_result_free>>;
using SemPtr = std::unique_ptr<pulse_sem, Deleter<pulse_sem, pulse_sem_free>>;
using ExperimentPtr = std::unique_ptr<pulse_experiment, Deleter<pulse_experiment, pulse_experiment_free>>;
using ExperimentResultPtr =
    std::unique_ptr<pulse_experiment_result, Deleter<pulse_experiment_result, pulse_experiment_result_free>>;

// printf rounds the exact binary value, ties to even.
std::string fixed4(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

std::string general(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

// Rounded to 10 significant digits; json prints the shortest form.
json sig10(double v) {
  if (!std::isfinite(v)) return std::isnan(v) ? json("nan") : json(v > 0 ? "inf" : "-inf");
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return std::strtod(buf, nullptr);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
  }
  return out;
}

std::vector<const char*> c_strings(const std::vector<std::string>& v) {
  std::vector<const char*> out;
  for (const auto& s : v) out.push_back(s.c_str());
  return out;
}

struct SchemaFlags {
  std::string data;
  std::string target;
  std::string endogenous;
  std::string included_exogenous;
  std::string instruments;
  bool center = false;
  bool intercept = false;
};

void add_schema_flags(CLI::App* cmd, SchemaFlags& f) {
  cmd->add_option("--data", f.data, "CSV file with a header row")->required();
  cmd->add_option("--target", f.target, "Response column")->required();
  cmd->add_option("--endogenous", f.endogenous, "Comma separated endogenous regressors")->required();
  cmd->add_option("--included-exogenous", f.included_exogenous,
                  "Comma separated exogenous regressors in the target equation");
  cmd->add_option("--instruments", f.instruments, "Comma separated excluded instruments");
  auto* c = cmd->add_flag("--center", f.center, "Mean-center every column (default)");
  auto* i = cmd->add_flag("--intercept", f.intercept, "Fit a constant instead of centering");
  c->excludes(i);
}

DesignPtr load_design(const SchemaFlags& f) {
  const auto endo = split_list(f.endogenous);
  const auto incl = split_list(f.included_exogenous);
  auto exo = incl;
  for (const auto& s : split_list(f.instruments)) exo.push_back(s);
  const auto endo_c = c_strings(endo);
  const auto exo_c = c_strings(exo);
  pulse_dataset* raw = nullptr;
  check(pulse_dataset_load_csv(f.data.c_str(), f.target.c_str(), endo_c.data(), endo_c.size(), exo_c.data(),
                               exo_c.size(), &raw));
  DatasetPtr ds(raw);
  std::vector<int> incl_idx;
  for (std::size_t i = 0; i < incl.size(); ++i) incl_idx.push_back(static_cast<int>(i));
  const auto pre = f.intercept ? PULSE_PREPROCESS_INTERCEPT : PULSE_PREPROCESS_CENTER;
  pulse_design* design = nullptr;
  check(pulse_design_create(ds.get(), nullptr, 0, incl_idx.data(), incl_idx.size(), pre, &design));
  return DesignPtr(design);
}

const char* identification_name(pulse_identification id) {
  switch (id) {
    case PULSE_UNDER_IDENTIFIED: return "under-identified";
    case PULSE_JUST_IDENTIFIED: return "just-identified";
    case PULSE_OVER_IDENTIFIED: return "over-identified";
  }
  return "unknown";
}

struct GnReport {
  std::size_t d1 = 0;
  std::vector<double> g;
  double min_eigenvalue = 0.0;
  bool passes = false;
  std::string error;
};

GnReport weak_instruments(const pulse_design* design) {
  GnReport r;
  check(pulse_design_dims(design, nullptr, nullptr, nullptr, &r.d1, nullptr));
  r.g.assign(r.d1 * r.d1, 0.0);
  int passes = 0;
  if (pulse_weak_instrument(design, &r.min_eigenvalue, &passes, r.g.data(), r.g.size()) != PULSE_OK) {
    r.error = pulse_last_error();
  }
  r.passes = passes != 0;
  return r;
}

void print_gn(std::ostream& os, const GnReport& gn) {
  if (!gn.error.empty()) {
    os << "G_n: not available (" << gn.error << ")\n";
    return;
  }
  os << "G_n:\n";
  for (std::size_t i = 0; i < gn.d1; ++i) {
    os << " ";
    for (std::size_t j = 0; j < gn.d1; ++j) os << ' ' << fixed4(gn.g[i * gn.d1 + j]);
    os << '\n';
  }
  os << "lambda_min(G_n): " << fixed4(gn.min_eigenvalue) << (gn.passes ? " (> 10)" : " (<= 10, weak instruments)")
     << '\n';
}

json gn_json(const GnReport& gn) {
  if (!gn.error.empty()) return {{"error", gn.error}};
  json rows = json::array();
  for (std::size_t i = 0; i < gn.d1; ++i) {
    json row = json::array();
    for (std::size_t j = 0; j < gn.d1; ++j) row.push_back(sig10(gn.g[i * gn.d1 + j]));
    rows.push_back(row);
  }
  return {{"matrix", rows}, {"lambda_min", sig10(gn.min_eigenvalue)}, {"rule_of_thumb_pass", gn.passes}};
}

struct EstimateFlags {
  SchemaFlags schema;
  std::string estimators = "ols,tsls,fuller:4,pulse";
  double pmin = 0.05;
  std::string scaling = "ar";
  std::uint64_t precision = std::uint64_t{1} << 20;
  std::string fallback = "fuller:4";
  std::string json_path;
};

struct Row {
  std::string label;
  std::vector<double> coefs;
  std::optional<double> kappa;
  std::optional<double> lambda;
  std::string message;
  std::string warning;
  pulse_test_result test{};
  bool has_test = false;
};

int cmd_estimate(const EstimateFlags& f) {
  auto design = load_design(f.schema);
  pulse_options opts;
  pulse_options_default(&opts);
  opts.p_min = f.pmin;
  opts.scaling = f.scaling == "plain" ? PULSE_SCALING_PLAIN : PULSE_SCALING_AR;
  opts.precision = f.precision;
  opts.fallback = f.fallback.c_str();

  std::size_t n = 0, p = 0, q = 0, d1 = 0;
  pulse_identification id{};
  check(pulse_design_dims(design.get(), &n, &p, &q, &d1, &id));
  std::vector<std::string> names;
  for (std::size_t i = 0; i < p; ++i) names.emplace_back(pulse_design_coef_name(design.get(), i));

  std::vector<Row> rows;
  for (const auto& spec : split_list(f.estimators)) {
    pulse_result* raw = nullptr;
    const bool is_pulse = spec == "pulse";
    if (is_pulse) check(pulse_run(design.get(), &opts, &raw));
    else check(pulse_estimate(design.get(), spec.c_str(), &raw));
    ResultPtr res(raw);
    Row row;
    row.label = spec;
    row.coefs.resize(pulse_result_coef_count(res.get()));
    check(pulse_result_coefs(res.get(), row.coefs.data(), row.coefs.size()));
    double v = 0.0;
    int has = 0;
    check(pulse_result_kappa(res.get(), &v, &has));
    if (has) row.kappa = v;
    check(pulse_result_lambda(res.get(), &v, &has));
    if (has) row.lambda = v;
    if (is_pulse) {
      switch (pulse_result_message(res.get())) {
        case PULSE_MESSAGE_OLS_ACCEPTED: row.message = "OLS Accepted"; break;
        case PULSE_MESSAGE_TSLS_REJECTED: row.message = "TSLS Rejected"; break;
        case PULSE_MESSAGE_NONE: break;
      }
      row.warning = pulse_result_warning(res.get());
      check(pulse_result_test(res.get(), &row.test));
      row.has_test = true;
    } else if (pulse_test(design.get(), row.coefs.data(), row.coefs.size(), &opts, &row.test) == PULSE_OK) {
      row.has_test = true;
    }
    for (std::size_t i = 0; i < pulse_result_diagnostic_count(res.get()); ++i) {
      std::cerr << spec << ": " << pulse_result_diagnostic(res.get(), i) << '\n';
    }
    rows.push_back(std::move(row));
  }
  const auto gn = weak_instruments(design.get());

  std::cout << "n = " << n << ", q = " << q << ", " << identification_name(id) << '\n';
  std::cout << "estimator";
  for (const auto& nm : names) std::cout << '\t' << nm;
  std::cout << "\tkappa\tlambda\ttest\tthreshold\tmessage\n";
  for (const auto& r : rows) {
    std::cout << r.label;
    for (double c : r.coefs) std::cout << '\t' << fixed4(c);
    std::cout << '\t' << (r.kappa ? fixed4(*r.kappa) : "-") << '\t' << (r.lambda ? fixed4(*r.lambda) : "-");
    std::cout << '\t' << (r.has_test ? fixed4(r.test.statistic) : "-") << '\t'
              << (r.has_test ? fixed4(r.test.threshold) : "-") << '\t' << (r.message.empty() ? "-" : r.message)
              << '\n';
  }
  for (const auto& r : rows) {
    if (!r.warning.empty()) std::cout << r.warning << '\n';
  }
  print_gn(std::cout, gn);

  if (!f.json_path.empty()) {
    json out;
    out["n"] = n;
    out["q"] = q;
    out["identification"] = identification_name(id);
    out["coefficient_names"] = names;
    json ests = json::array();
    for (const auto& r : rows) {
      json e;
      e["estimator"] = r.label;
      json coefs = json::array();
      for (double c : r.coefs) coefs.push_back(sig10(c));
      e["coefficients"] = coefs;
      e["kappa"] = r.kappa ? sig10(*r.kappa) : json(nullptr);
      e["lambda"] = r.lambda ? sig10(*r.lambda) : json(nullptr);
      if (r.has_test) {
        e["test_statistic"] = sig10(r.test.statistic);
        e["threshold"] = sig10(r.test.threshold);
        e["accepted"] = r.test.accepted != 0;
        e["p_value_bound"] = sig10(r.test.p_value_bound);
      }
      if (!r.message.empty()) e["message"] = r.message;
      if (!r.warning.empty()) e["warning"] = r.warning;
      ests.push_back(e);
    }
    out["estimates"] = ests;
    out["weak_instruments"] = gn_json(gn);
    std::ofstream os(f.json_path);
    if (!os) throw Failure{PULSE_ERR_USAGE, "cannot write " + f.json_path};
    os << out.dump(2) << '\n';
  }
  return 0;
}

int cmd_diagnose(const SchemaFlags& f) {
  auto design = load_design(f);
  std::size_t n = 0, p = 0, q = 0, d1 = 0;
  pulse_identification id{};
  check(pulse_design_dims(design.get(), &n, &p, &q, &d1, &id));
  std::cout << "n = " << n << ", coefficients = " << p << ", exogenous = " << q << ", endogenous = " << d1 << '\n';
  std::cout << "identification: " << identification_name(id) << '\n';
  print_gn(std::cout, weak_instruments(design.get()));
  return 0;
}

struct SimulateFlags {
  std::string sem;
  std::size_t n = 0;
  std::uint64_t seed = 0;
  std::string intervene;
  std::string out;
};

int cmd_simulate(const SimulateFlags& f) {
  pulse_sem* raw = nullptr;
  check(pulse_sem_load(f.sem.c_str(), &raw));
  SemPtr sem(raw);
  if (!f.intervene.empty()) check(pulse_sem_set_intervention_file(sem.get(), f.intervene.c_str()));
  pulse_dataset* ds_raw = nullptr;
  check(pulse_sem_sample(sem.get(), f.n, f.seed, &ds_raw));
  DatasetPtr ds(ds_raw);
  check(pulse_dataset_write_csv(ds.get(), f.out.c_str()));

  const std::filesystem::path out(f.out);
  const auto manifest = out.parent_path() / (out.stem().string() + "_manifest.json");
  json m;
  m["version"] = pulse_version();
  m["sem"] = f.sem;
  m["n"] = f.n;
  m["seed"] = f.seed;
  m["intervention"] = json::parse(pulse_sem_intervention_json(sem.get()));
  if (!f.intervene.empty()) m["intervention_file"] = f.intervene;
  m["data"] = out.filename().string();
  std::ofstream os(manifest);
  if (!os) throw Failure{PULSE_ERR_USAGE, "cannot write " + manifest.string()};
  os << m.dump(2) << '\n';
  std::cout << "wrote " << f.out << " and " << manifest.string() << '\n';
  return 0;
}

struct ExperimentFlags {
  std::string config;
  std::string design;
  std::optional<int> reps;
  std::optional<std::uint64_t> seed;
  int threads = 0;
  std::string out;
};

int cmd_experiment(const ExperimentFlags& f) {
  pulse_experiment* raw = nullptr;
  if (!f.config.empty()) check(pulse_experiment_from_file(f.config.c_str(), &raw));
  else check(pulse_experiment_from_design(f.design.c_str(), &raw));
  ExperimentPtr exp(raw);
  if (f.reps) check(pulse_experiment_set_repetitions(exp.get(), *f.reps));
  if (f.seed) check(pulse_experiment_set_seed(exp.get(), *f.seed));
  check(pulse_experiment_set_threads(exp.get(), f.threads));
  pulse_experiment_result* res_raw = nullptr;
  check(pulse_experiment_run(exp.get(), f.out.c_str(), &res_raw));
  ExperimentResultPtr res(res_raw);

  const std::size_t cells = pulse_experiment_cell_count(res.get());
  const std::size_t params = pulse_experiment_param_count(res.get());
  const std::size_t methods = pulse_experiment_method_count(res.get());
  std::cout << "design " << pulse_experiment_design(exp.get()) << ": " << cells << " cell(s)\n";
  if (cells <= 50) {
    for (std::size_t j = 0; j < params; ++j) std::cout << pulse_experiment_param_name(res.get(), j) << '\t';
    std::cout << "estimator\ttrace_mse\tmedian_abs_error\n";
    for (std::size_t c = 0; c < cells; ++c) {
      for (std::size_t k = 0; k < methods; ++k) {
        for (std::size_t j = 0; j < params; ++j) {
          std::cout << general(pulse_experiment_param_value(res.get(), c, j)) << '\t';
        }
        std::cout << pulse_experiment_method_label(res.get(), k) << '\t'
                  << fixed4(pulse_experiment_metric(res.get(), c, k, "trace_mse")) << '\t'
                  << fixed4(pulse_experiment_metric(res.get(), c, k, "median_abs_error")) << '\n';
      }
    }
  }
  for (std::size_t i = 0; i < pulse_experiment_warning_count(res.get()); ++i) {
    std::cerr << "warning: " << pulse_experiment_warning(res.get(), i) << '\n';
  }
  for (std::size_t i = 0; i < pulse_experiment_file_count(res.get()); ++i) {
    std::cout << "wrote " << pulse_experiment_file(res.get(), i) << '\n';
  }
  return 0;
}

int default_threads() {
  if (const char* env = std::getenv("PULSE_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v >= 0) return static_cast<int>(v);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"K-class and PULSE instrumental-variable estimation"};
  app.set_version_flag("--version", std::string(pulse_version()));
  app.require_subcommand(1);

  EstimateFlags est;
  auto* estimate = app.add_subcommand("estimate", "Fit estimators to a CSV data set");
  add_schema_flags(estimate, est.schema);
  estimate->add_option("--estimator", est.estimators,
                       "Comma separated: ols, tsls, kclass:K, anchor:L, liml, fuller:A, pulse, modified-tsls")
      ->capture_default_str();
  estimate->add_option("--pmin", est.pmin, "Test level for PULSE")->capture_default_str();
  estimate->add_option("--scaling", est.scaling, "Test statistic scaling")
      ->check(CLI::IsMember({"ar", "plain"}))
      ->capture_default_str();
  estimate->add_option("--precision", est.precision, "Binary search resolution N (bracket width 1/N)")
      ->capture_default_str();
  estimate->add_option("--fallback", est.fallback, "Estimator when TSLS is rejected: tsls, liml, fuller:A or none")
      ->capture_default_str();
  estimate->add_option("--json", est.json_path, "Write results as JSON");

  SchemaFlags diag;
  auto* diagnose = app.add_subcommand("diagnose", "Identification and weak-instrument diagnostics");
  add_schema_flags(diagnose, diag);

  SimulateFlags sim;
  auto* simulate = app.add_subcommand("simulate", "Sample observed columns from a linear SEM");
  simulate->add_option("--sem", sim.sem, "SEM JSON file")->required();
  simulate->add_option("--n", sim.n, "Sample size")->required()->check(CLI::PositiveNumber);
  simulate->add_option("--seed", sim.seed, "RNG seed")->required();
  simulate->add_option("--intervene", sim.intervene, "Intervention JSON file");
  simulate->add_option("--out", sim.out, "Output CSV")->required();

  ExperimentFlags exf;
  exf.threads = default_threads();
  auto* experiment = app.add_subcommand("experiment", "Run a simulation study and write report files");
  auto* cfg_opt = experiment->add_option("--config", exf.config, "Experiment JSON file");
  auto* design_opt = experiment->add_option("--design", exf.design, "Built-in design name");
  cfg_opt->excludes(design_opt);
  experiment->add_option("--reps", exf.reps, "Repetitions per cell");
  experiment->add_option("--seed", exf.seed, "Master seed");
  experiment->add_option("--threads", exf.threads, "Worker threads, 0 = hardware (default from PULSE_THREADS)")
      ->check(CLI::NonNegativeNumber);
  experiment->add_option("--out", exf.out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : PULSE_ERR_USAGE;
  }

  try {
    if (*estimate) return cmd_estimate(est);
    if (*diagnose) return cmd_diagnose(diag);
    if (*simulate) return cmd_simulate(sim);
    if (*experiment) {
      if (exf.config.empty() && exf.design.empty()) {
        std::cerr << "error: one of --config or --design is required; designs: " << pulse_experiment_design_names()
                  << '\n';
        return PULSE_ERR_USAGE;
      }
      return cmd_experiment(exf);
    }
  } catch (const Failure& f) {
    std::cerr << "error: " << f.message << '\n';
    return f.code;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return PULSE_ERR_INTERNAL;
  }
  return PULSE_ERR_USAGE;
}
