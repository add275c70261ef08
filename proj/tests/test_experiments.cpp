#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>

#include "pulse/dataset.hpp"
#include "pulse/errors.hpp"
#include "pulse/experiments.hpp"
#include "pulse/rng.hpp"

using namespace pulse;

namespace {

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no pulse::Error thrown");
  return ErrorCode::InvalidArgument;
}

ExperimentConfig small_univariate() {
  auto cfg = ExperimentConfig::defaults(Design::Univariate);
  cfg.q_list = {2};
  cfg.rho_list = {0.5};
  cfg.r2_list = {0.1};
  cfg.n_list = {40, 60};
  cfg.repetitions = 30;
  cfg.master_seed = 11;
  cfg.threads = 1;
  return cfg;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("estimate summaries") {
  std::mt19937_64 gen(401);
  std::normal_distribution<double> nd;
  std::vector<Vector> est;
  for (int i = 0; i < 57; ++i) {
    Vector v(3);
    v << 1 + nd(gen), -2 + 0.5 * nd(gen), 0.3 * nd(gen);
    est.push_back(v);
  }
  Vector target(3);
  target << 1.2, -2.0, 0.1;
  const auto m = summarize_estimates("x", est, target);
  CHECK(m.repetitions_used == 57);

  Vector mean = Vector::Zero(3);
  for (const auto& e : est) mean += e;
  mean /= 57.0;
  Matrix mse = Matrix::Zero(3, 3), var = Matrix::Zero(3, 3);
  std::vector<double> abs_err;
  for (const auto& e : est) {
    mse += (e - target) * (e - target).transpose();
    var += (e - mean) * (e - mean).transpose();
    abs_err.push_back((e - target).norm());
  }
  mse /= 57.0;
  var /= 57.0;
  CHECK((m.mean - mean).norm() <= 1e-12);
  CHECK((m.bias - (mean - target)).norm() <= 1e-12);
  CHECK((m.mse - mse).norm() <= 1e-12);
  CHECK((m.variance - var).norm() <= 1e-12);
  CHECK(m.trace_mse == doctest::Approx(var.trace() + m.bias.squaredNorm()).epsilon(1e-12));
  CHECK(m.det_mse == doctest::Approx(mse.determinant()).epsilon(1e-10));
  CHECK(m.rmse == doctest::Approx(std::sqrt(mse.trace())).epsilon(1e-12));
  CHECK(m.bias_norm == doctest::Approx((mean - target).norm()));
  std::sort(abs_err.begin(), abs_err.end());
  CHECK(m.median_abs_error == doctest::Approx(abs_err[28]));

  const auto empty = summarize_estimates("none", {}, target);
  CHECK(empty.repetitions_used == 0);
}

TEST_CASE("type-7 quantiles") {
  CHECK(quantile_type7({1, 2, 3, 4}, 0.25) == doctest::Approx(1.75));
  CHECK(quantile_type7({4, 1, 3, 2}, 0.5) == doctest::Approx(2.5));
  CHECK(quantile_type7({5}, 0.9) == 5.0);
  CHECK(quantile_type7({1, 2, 3, 4}, 0.0) == 1.0);
  CHECK(quantile_type7({1, 2, 3, 4}, 1.0) == 4.0);
}

TEST_CASE("design helpers") {
  for (int q : {1, 3, 30}) {
    for (double r2 : {1e-4, 0.1, 0.3}) {
      const double xi = xi_from_r2(r2, q);
      CHECK(q * xi * xi / (q * xi * xi + 1) == doctest::Approx(r2).epsilon(1e-12));
    }
  }
  CHECK(code_of([] { xi_from_r2(0.0, 2); }) == ErrorCode::InvalidArgument);
  CHECK(relative_change(3.0, 2.0) == doctest::Approx(0.5));
  CHECK(code_of([] { relative_change(1.0, 0.0); }) == ErrorCode::DivisionByZero);

  for (double eta : {0.2, 0.8}) {
    for (double rho : {0.2, 0.5, 0.8}) {
      const double phi = phi_for_rho(rho, eta);
      CHECK(rho_norm_fixed_noise(eta, phi, phi) == doctest::Approx(rho).epsilon(1e-10));
      // Dense: corr(U_X, U_Y)^T corr(U_X)^{-1} corr(U_X, U_Y).
      Matrix sx(2, 2);
      sx << 1, eta, eta, 1;
      Vector c(2);
      c << phi, phi;
      CHECK(std::sqrt(c.dot(sx.ldlt().solve(c))) == doctest::Approx(rho).epsilon(1e-10));
    }
  }
}

TEST_CASE("confounding norm of the random multivariate design matches simulated noise") {
  const auto prm = draw_multivariate_params(23);
  const auto model = multivariate_model(prm);
  const Eigen::Index n = 300000;
  // Gamma is zero, so Y is pure noise and X is xi^T A plus noise.
  const auto ds = sem_sample(model, n, 5);
  const Matrix a = ds.a();
  const Matrix coef = (a.transpose() * a).ldlt().solve(a.transpose() * ds.x());
  const Matrix ux = ds.x() - a * coef;
  const Vector uy = ds.y();
  const Matrix sxx = ux.transpose() * ux / double(n);
  const Vector sxy = ux.transpose() * uy / double(n);
  const double syy = uy.squaredNorm() / double(n);
  const double sim = std::sqrt(sxy.dot(sxx.ldlt().solve(sxy)) / syy);
  CHECK(rho_norm_multivariate(prm.mu, prm.delta, prm.sigma2) == doctest::Approx(sim).epsilon(0.02));
}

TEST_CASE("MSE partial order") {
  Matrix a(2, 2), b(2, 2);
  a << 1, 0, 0, 1;
  b << 2, 0, 0, 3;
  CHECK(mse_partial_order(a, b) == MsePartialOrder::ALessOrEqual);
  CHECK(mse_partial_order(b, a) == MsePartialOrder::BLessOrEqual);
  CHECK(mse_partial_order(a, a) == MsePartialOrder::Equal);
  Matrix c(2, 2);
  c << 0.5, 0, 0, 2;
  CHECK(mse_partial_order(a, c) == MsePartialOrder::Incomparable);
  CHECK(code_of([&] { mse_partial_order(a, Matrix::Identity(3, 3)); }) == ErrorCode::DimensionMismatch);
}

TEST_CASE("repetitions use the documented seed streams") {
  auto cfg = small_univariate();
  cfg.methods = {MethodSpec::parse("ols")};
  cfg.repetitions = 4;
  const auto rep = run_experiment(cfg);
  REQUIRE(rep.cells.size() == 2);
  for (std::size_t c = 0; c < 2; ++c) {
    const auto model = univariate_model(2, 0.5, xi_from_r2(0.1, 2), 1.0);
    const std::uint64_t cell = splitmix64(cfg.master_seed ^ splitmix64(c + 1));
    for (int r = 0; r < cfg.repetitions; ++r) {
      const auto ds = sem_sample(model, cfg.n_list[c], stream_seed(cell, std::uint64_t(r)));
      DesignView v(ds, ModelPartition::all_endogenous(1), Preprocess::None);
      CHECK(rep.cells[c].methods[0].estimates[std::size_t(r)] == ols_estimate(v).alpha);
    }
  }
}

TEST_CASE("results do not depend on the thread count") {
  auto cfg = small_univariate();
  const auto one = run_experiment(cfg);
  cfg.threads = 4;
  const auto four = run_experiment(cfg);
  REQUIRE(one.cells.size() == four.cells.size());
  for (std::size_t c = 0; c < one.cells.size(); ++c) {
    for (std::size_t k = 0; k < one.cells[c].methods.size(); ++k) {
      const auto& a = one.cells[c].methods[k];
      const auto& b = four.cells[c].methods[k];
      CHECK(a.estimates == b.estimates);
      CHECK(a.trace_mse == b.trace_mse);
      CHECK(a.det_mse == b.det_mse);
    }
    CHECK(one.cells[c].mean_lambda_min_gn == four.cells[c].mean_lambda_min_gn);
  }
  cfg.master_seed = 12;
  CHECK(run_experiment(cfg).cells[0].methods[0].estimates != one.cells[0].methods[0].estimates);
}

TEST_CASE("experiment config files are read strictly") {
  const auto cfg = parse_experiment_json(
      R"({"design":"univariate","repetitions":5,"seed":3,"q":[1],"rho":[0.5],"r2":[0.1],"n":[30],
          "estimators":["ols","pulse"]})");
  CHECK(cfg.design == Design::Univariate);
  CHECK(cfg.repetitions == 5);
  CHECK(cfg.master_seed == 3);
  CHECK(cfg.methods.size() == 2);
  CHECK(cfg.methods[1].is_pulse());
  CHECK(parse_experiment_json(experiment_config_json(cfg)).q_list == cfg.q_list);

  const auto fixed = parse_experiment_json(R"({"design":"mv-fixed","noise":[{"eta":0.2,"rho":0.5}]})");
  REQUIRE(fixed.noise.size() == 1);
  CHECK(rho_norm_fixed_noise(0.2, fixed.noise[0].phi1, fixed.noise[0].phi2) == doctest::Approx(0.5));

  for (const char* text : {R"({"design":"univariate","reps":5})", R"({"design":"nope"})", R"({"repetitions":5})",
                           R"({"design":"univariate","repetitions":0})", R"({"design":"underid-e3","e3":{"zeta":1}})",
                           R"({"design":"univariate","estimators":["magic"]})", "[1,2"}) {
    CHECK(code_of([&] { parse_experiment_json(text).validate(); }) == ErrorCode::InvalidArgument);
  }
}

TEST_CASE("reports are written as long tables") {
  const auto dir = std::filesystem::temp_directory_path() / "pulse_test_experiments";
  std::filesystem::remove_all(dir);
  auto cfg = small_univariate();
  cfg.n_list = {40};
  const auto rep = run_experiment(cfg);
  const auto files = write_report(rep, dir);
  CHECK(files.table == "univariate.csv");
  CHECK_FALSE(files.curves.has_value());
  const std::string text = slurp(dir / files.table);
  CHECK(text.rfind("q,rho,r2,n,xi,estimator,metric,value,repetitions_used\n", 0) == 0);
  CHECK(text.find("pulse,trace_mse,") != std::string::npos);
  CHECK(text.find("diagnostics,mean_lambda_min_gn,") != std::string::npos);
  CHECK(text.find("ols,mse_order_vs_pulse,") != std::string::npos);
  CHECK(std::filesystem::exists(dir / files.manifest));
  CHECK(slurp(dir / files.manifest).find("\"seed\"") != std::string::npos);

  auto e1 = ExperimentConfig::defaults(Design::RobustnessE1);
  e1.repetitions = 3;
  e1.n_list = {200};
  const auto e1_files = write_report(run_experiment(e1), dir);
  REQUIRE(e1_files.curves.has_value());
  const auto curves = read_csv_table(dir / *e1_files.curves);
  CHECK(curves.header == std::vector<std::string>{"rep", "kappa", "estimate", "x", "wcmspe"});
  // 3 repetitions, 3 estimators, x = 0, 0.1, ..., 6.
  CHECK(curves.rows.size() == 3 * 3 * 61);
  for (const auto& row : curves.rows) {
    CHECK(row[4] == doctest::Approx(wcmspe_curve_e1(row[2], {row[3]})[0]));
  }
}

TEST_CASE("format_double round trips") {
  for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 12345.678}) CHECK(std::stod(format_double(v)) == v);
  CHECK(format_double(std::numeric_limits<double>::quiet_NaN()) == "nan");
}
