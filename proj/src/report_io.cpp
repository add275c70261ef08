#include <charconv>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "pulse/errors.hpp"
#include "pulse/experiments.hpp"

namespace pulse {

namespace {

std::string index_label(const char* name, Eigen::Index i) {
  return std::string(name) + "[" + std::to_string(i + 1) + "]";
}

std::string index_label(const char* name, Eigen::Index i, Eigen::Index j) {
  return std::string(name) + "[" + std::to_string(i + 1) + "," + std::to_string(j + 1) + "]";
}

double order_code(MsePartialOrder o) {
  switch (o) {
    case MsePartialOrder::ALessOrEqual: return 1.0;
    case MsePartialOrder::BLessOrEqual: return -1.0;
    case MsePartialOrder::Equal: return 2.0;
    case MsePartialOrder::Incomparable: return 0.0;
  }
  return 0.0;
}

class LongWriter {
 public:
  LongWriter(std::ofstream& out, const std::vector<std::string>& param_names) : out_(out) {
    for (const auto& p : param_names) out_ << p << ',';
    out_ << "estimator,metric,value,repetitions_used\n";
  }

  void set_cell(const CellReport& cell) {
    prefix_.clear();
    for (const auto& [_, v] : cell.params) prefix_ += format_double(v) + ",";
  }

  void row(const std::string& estimator, const std::string& metric, double value, int reps) {
    out_ << prefix_ << estimator << ',' << metric << ',' << format_double(value) << ',' << reps << '\n';
  }

 private:
  std::ofstream& out_;
  std::string prefix_;
};

void write_method(LongWriter& w, const MethodReport& m) {
  const int r = m.repetitions_used;
  const auto p = m.mean.size();
  for (Eigen::Index j = 0; j < p; ++j) w.row(m.label, index_label("mean", j), m.mean(j), r);
  for (Eigen::Index j = 0; j < p; ++j) w.row(m.label, index_label("bias", j), m.bias(j), r);
  for (Eigen::Index i = 0; i < p; ++i)
    for (Eigen::Index j = 0; j < p; ++j) w.row(m.label, index_label("mse", i, j), m.mse(i, j), r);
  for (Eigen::Index i = 0; i < p; ++i)
    for (Eigen::Index j = 0; j < p; ++j) w.row(m.label, index_label("variance", i, j), m.variance(i, j), r);
  w.row(m.label, "trace_mse", m.trace_mse, r);
  w.row(m.label, "det_mse", m.det_mse, r);
  w.row(m.label, "rmse", m.rmse, r);
  w.row(m.label, "bias_norm", m.bias_norm, r);
  w.row(m.label, "median_abs_error", m.median_abs_error, r);
  for (Eigen::Index j = 0; j < p; ++j) w.row(m.label, index_label("iqr", j), m.iqr(j), r);
  int failed = 0;
  for (const auto& [cause, count] : m.failures) {
    w.row(m.label, "failures:" + cause, count, r);
    failed += count;
  }
  w.row(m.label, "failures", failed, r);
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::InvalidArgument, "cannot write " + path.string());
  out << content;
}

}  // namespace

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

ReportFiles write_report(const ExperimentReport& report, const std::filesystem::path& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw Error(ErrorCode::InvalidArgument, "cannot create " + out_dir.string() + ": " + ec.message());
  const auto& cfg = report.config;
  const std::string stem(to_string(cfg.design));
  ReportFiles files;
  files.table = stem + ".csv";
  files.manifest = stem + "_manifest.json";

  std::vector<std::string> warnings;
  {
    std::ofstream out(out_dir / files.table, std::ios::binary);
    if (!out) throw Error(ErrorCode::InvalidArgument, "cannot write " + (out_dir / files.table).string());
    LongWriter w(out, report.param_names);
    for (const auto& cell : report.cells) {
      w.set_cell(cell);
      for (Eigen::Index j = 0; j < cell.target.size(); ++j) {
        w.row("target", index_label("alpha", j), cell.target(j), 0);
      }
      for (const auto& m : cell.methods) write_method(w, m);
      for (const auto& pr : cell.pairwise) {
        const int r = cfg.repetitions;
        w.row(pr.competitor, "relative_change_rmse", pr.rel_rmse, r);
        w.row(pr.competitor, "relative_change_trace", pr.rel_trace, r);
        w.row(pr.competitor, "relative_change_det", pr.rel_det, r);
        w.row(pr.competitor, "relative_change_bias_norm", pr.rel_bias_norm, r);
        w.row(pr.competitor, "mse_order_vs_pulse", order_code(pr.order), r);
      }
      w.row("diagnostics", "mean_lambda_min_gn", cell.mean_lambda_min_gn, cell.gn_repetitions);
      w.row("diagnostics", "lambda_min_mean_gn", cell.lambda_min_mean_gn, cell.gn_repetitions);
      w.row("diagnostics", "pulse_ols_accepted", cell.pulse_ols_accepted, cfg.repetitions);
      w.row("diagnostics", "pulse_fallback", cell.pulse_fallback, cfg.repetitions);
      for (const auto& msg : cell.warnings) warnings.push_back(msg);

      if (cfg.design == Design::RobustnessE1) {
        const SemModel model = robustness_e1_model(cfg.gamma, 0.5);
        const auto part = ModelPartition::all_endogenous(1);
        std::vector<double> pop;
        for (const auto& m : cfg.methods) {
          if (!m.estimator || m.estimator->kind != EstimatorSpec::Kind::Kclass) continue;
          const double kappa = m.estimator->param;
          if (kappa < 0.0 || kappa > 1.0) continue;
          const double value = population_kclass(model, part, kappa)(0);
          pop.push_back(value);
          w.row("population", "estimand:" + m.label, value, 0);
        }
        if (pop.size() == 3) {
          if (auto iv = superiority_interval(pop[1], {pop[0], pop[2]})) {
            w.row("population", "superiority_lower", iv->lower, 0);
            w.row("population", "superiority_upper", iv->upper, 0);
          }
        }
      }
    }
  }

  if (cfg.design == Design::RobustnessE1) {
    files.curves = stem + "_curves.csv";
    std::ofstream out(out_dir / *files.curves, std::ios::binary);
    if (!out) throw Error(ErrorCode::InvalidArgument, "cannot write " + (out_dir / *files.curves).string());
    out << "rep,kappa,estimate,x,wcmspe\n";
    std::vector<double> xs;
    const auto steps = static_cast<int>(std::floor(cfg.x_max / cfg.x_step + 1e-9));
    for (int i = 0; i <= steps; ++i) xs.push_back(i * cfg.x_step);
    for (const auto& cell : report.cells) {
      for (std::size_t k = 0; k < cell.methods.size(); ++k) {
        const auto& m = cell.methods[k];
        const auto& spec = cfg.methods[k].estimator;
        if (!spec || spec->kind != EstimatorSpec::Kind::Kclass) continue;
        for (std::size_t r = 0; r < m.estimates.size(); ++r) {
          const double g = m.estimates[r](0);
          const auto curve = wcmspe_curve_e1(g, xs);
          for (std::size_t i = 0; i < xs.size(); ++i) {
            out << r << ',' << format_double(spec->param) << ',' << format_double(g) << ','
                << format_double(xs[i]) << ',' << format_double(curve[i]) << '\n';
          }
        }
      }
    }
  }

  nlohmann::json man;
  man["library"] = "pulse";
  man["version"] = PULSE_VERSION_STRING;
  man["design"] = stem;
  man["master_seed"] = cfg.master_seed;
  man["config"] = nlohmann::json::parse(experiment_config_json(cfg));
  std::vector<std::string> columns = report.param_names;
  for (const char* c : {"estimator", "metric", "value", "repetitions_used"}) columns.emplace_back(c);
  man["columns"] = columns;
  man["cells"] = report.cells.size();
  man["files"] = {{"table", files.table.string()}};
  if (files.curves) man["files"]["curves"] = files.curves->string();
  man["preprocessing"] = "none";
  man["rng"] = "mt19937_64 seeded with splitmix64(splitmix64(cell seed xor repetition)); Box-Muller normals";
  man["mse_order_codes"] = {{"1", "pulse <= competitor"}, {"-1", "competitor <= pulse"},
                            {"0", "incomparable"}, {"2", "equal"}};
  man["warnings"] = warnings;
  write_file(out_dir / files.manifest, man.dump(2) + "\n");
  return files;
}

}  // namespace pulse
