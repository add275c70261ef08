#include <doctest.h>

#include <random>

#include "oracles.hpp"
#include "pulse/errors.hpp"
#include "pulse/pulse.hpp"

using namespace pulse;

namespace {

struct Dense {
  Matrix z;
  Matrix pa;
  Vector y;
  double n;
  int q;

  explicit Dense(const DesignView& v)
      : z(v.z()), pa(oracle::projection(v.a())), y(v.y()), n(double(v.n())), q(int(v.q())) {}

  Vector penalized(double lambda) const {
    const Matrix w = Matrix::Identity(z.rows(), z.rows()) + lambda * pa;
    return (z.transpose() * w * z).ldlt().solve(z.transpose() * w * y);
  }
  double l_ols(const Vector& a) const { return (y - z * a).squaredNorm() / n; }
  double l_iv(const Vector& a) const {
    const Vector r = y - z * a;
    return r.dot(pa * r) / n;
  }
  double stat(const Vector& a, const TestConfig& cfg) const { return cfg.scale(Eigen::Index(n), q) * l_iv(a) / l_ols(a); }
};

// Over-identified unless stated; strong confounding so OLS is rejected.
oracle::Instance confounded(std::mt19937_64& gen, int n, int d1, int q1, int q2) {
  return oracle::random_instance(gen, n, d1, q1, q2, 1.0, 2.0);
}

}  // namespace

TEST_CASE("warning strings") {
  CHECK(warning_text(PulseMessage::OlsAccepted) == "Warning: The OLS is accepted.");
  CHECK(warning_text(PulseMessage::TslsRejectedFallback) == "Warning: TSLS outside interior of acceptance region.");
  CHECK(warning_text(PulseMessage::None).empty());
  CHECK(message_label(PulseMessage::OlsAccepted) == "OLS Accepted");
}

TEST_CASE("lambda* brackets the first accepted penalty") {
  std::mt19937_64 gen(301);
  int checked = 0;
  for (int rep = 0; rep < 12; ++rep) {
    const int d1 = 1 + rep % 2;
    auto inst = confounded(gen, 200, d1, rep % 2, d1 + rep % 3);
    DesignView v(inst.data, inst.partition);
    PulseConfig cfg;
    cfg.precision_n = 1 << 16;
    const double lambda = lambda_star_search(v, cfg);
    if (!std::isfinite(lambda) || lambda == 0.0) continue;
    const Dense d(v);
    const double q_thr = cfg.test.threshold(d.q);
    CHECK(d.stat(d.penalized(lambda), cfg.test) <= q_thr * (1 + 1e-9));
    const double below = std::max(0.0, lambda - 1.0 / double(cfg.precision_n));
    CHECK(d.stat(d.penalized(below), cfg.test) > q_thr * (1 - 1e-9));
    ++checked;
  }
  CHECK(checked >= 6);
}

TEST_CASE("PULSE outcome follows the test of OLS and TSLS") {
  std::mt19937_64 gen(302);
  SUBCASE("OLS accepted") {
    auto inst = oracle::random_instance(gen, 100, 1, 0, 2, 1.0, 0.0);
    DesignView v(inst.data, inst.partition);
    PulseConfig cfg;
    const auto res = pulse_estimate(v, cfg);
    REQUIRE(res.message == PulseMessage::OlsAccepted);
    CHECK(res.alpha == ols_estimate(v).alpha);
    CHECK(res.lambda_star == 0.0);
    CHECK(*res.kappa_star == 0.0);
    CHECK(res.test_at_solution.accepted);
    CHECK(lambda_star_search(v, cfg) == 0.0);
  }
  SUBCASE("TSLS rejected in an over-identified design") {
    // Instruments enter the outcome directly.
    auto inst = oracle::random_instance(gen, 300, 1, 0, 3);
    Vector y = inst.data.y() + 3.0 * inst.data.a().col(0) - 3.0 * inst.data.a().col(1);
    Dataset ds(y, inst.data.x(), inst.data.a());
    DesignView v(ds, inst.partition);
    PulseConfig cfg;
    const auto res = pulse_estimate(v, cfg);
    REQUIRE(res.message == PulseMessage::TslsRejectedFallback);
    CHECK(res.fallback_used);
    CHECK(std::isinf(res.lambda_star));
    CHECK((res.alpha - fuller_estimate(v, 4.0).alpha).norm() == 0.0);
    CHECK(std::isinf(lambda_star_search(v, cfg)));
    CHECK(std::isinf(t_star(v, cfg)));
    cfg.fallback = EstimatorSpec::liml();
    CHECK((pulse_estimate(v, cfg).alpha - liml_estimate(v).alpha).norm() == 0.0);
    cfg.fallback.reset();
    try {
      pulse_estimate(v, cfg);
      FAIL("expected DualInfeasible");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::DualInfeasible);
    }
  }
  SUBCASE("interior solution lies on the boundary") {
    auto inst = confounded(gen, 400, 1, 0, 2);
    DesignView v(inst.data, inst.partition);
    PulseConfig cfg;
    const auto res = pulse_estimate(v, cfg);
    REQUIRE(res.message == PulseMessage::None);
    CHECK(res.test_at_solution.accepted);
    CHECK(res.test_at_solution.statistic == doctest::Approx(res.test_at_solution.threshold).epsilon(1e-4));
    CHECK(*res.kappa_star == doctest::Approx(res.lambda_star / (1 + res.lambda_star)));
  }
}

TEST_CASE("invalid PULSE configuration") {
  PulseConfig cfg;
  cfg.fallback = EstimatorSpec::ols();
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg.fallback = EstimatorSpec::fuller(1.0);
  cfg.precision_n = 0;
  CHECK_THROWS_AS(cfg.validate(), Error);
}

TEST_CASE("losses and statistic are monotone along the dual path") {
  std::mt19937_64 gen(303);
  for (int rep = 0; rep < 10; ++rep) {
    const int d1 = 1 + rep % 3;
    auto inst = confounded(gen, 60 + 10 * rep, d1, rep % 2, std::max(1, d1 - 1 + rep % 3));
    DesignView v(inst.data, inst.partition);
    TestConfig cfg;
    double prev_ols = -1, prev_iv = 1e300, prev_t = 1e300;
    for (int i = 0; i < 200; ++i) {
      const double lambda = 100.0 * i / 199.0;
      const Vector a = anchor_estimate(v, lambda).alpha;
      const double lo = ols_loss(v, a), li = iv_loss(v, a);
      const double t = test_statistic(v, a, cfg).statistic;
      CHECK(lo >= prev_ols - 1e-12 * std::abs(prev_ols));
      CHECK(li <= prev_iv + 1e-12 * std::abs(prev_iv) + 1e-300);
      CHECK(t <= prev_t + 1e-12 * std::abs(prev_t));
      prev_ols = lo;
      prev_iv = li;
      prev_t = t;
    }
  }
}

TEST_CASE("primal solution is the dense penalised solution with active constraint") {
  std::mt19937_64 gen(304);
  for (int rep = 0; rep < 8; ++rep) {
    const int d1 = 1 + rep % 2;
    auto inst = confounded(gen, 120, d1, rep % 2, std::max(1, d1 - 1 + rep % 3));
    DesignView v(inst.data, inst.partition);
    const Dense d(v);
    const double top = d.l_iv(ols_estimate(v).alpha);
    const double bottom = iv_loss_infimum(v);
    for (double frac : {0.9, 0.5, 0.1, 0.01}) {
      const double t = bottom + frac * (top - bottom);
      const Vector a = primal_solve(v, t);
      CHECK(d.l_iv(a) == doctest::Approx(t).epsilon(1e-8));
      // Dense oracle: lambda with l_IV(penalized(lambda)) = t.
      const double lam = oracle::bisect_first_true([&](double l) { return d.l_iv(d.penalized(l)) <= t; }, 0.0, 1e12);
      const Vector ref = d.penalized(lam);
      CHECK((a - ref).norm() <= 1e-6 * (1 + ref.norm()));
    }
    CHECK_THROWS_AS(primal_solve(v, bottom), Error);
    CHECK_THROWS_AS(primal_solve(v, top * 1.5), Error);
    const Vector ols = ols_estimate(v).alpha;
    CHECK((primal_solve(v, top) - ols).norm() <= 1e-8 * (1 + ols.norm()));
  }
}

TEST_CASE("primal, dual and PULSE coincide") {
  std::mt19937_64 gen(305);
  int checked = 0;
  for (int rep = 0; rep < 12; ++rep) {
    const int d1 = 1 + rep % 2;
    auto inst = confounded(gen, 150, d1, rep % 2, std::max(1, d1 - 1 + rep % 3));
    DesignView v(inst.data, inst.partition);
    PulseConfig cfg;
    const auto res = pulse_estimate(v, cfg);
    if (res.message != PulseMessage::None) continue;
    const double t = t_star(v, cfg);
    const Vector a = primal_solve(v, t);
    CHECK((a - res.alpha).norm() <= 1e-5 * (1 + res.alpha.norm()));
    ++checked;
  }
  CHECK(checked >= 6);
}

TEST_CASE("closed-form lambda bound gives the same answer") {
  std::mt19937_64 gen(306);
  for (int rep = 0; rep < 6; ++rep) {
    auto inst = confounded(gen, 150, 1 + rep % 2, 0, 1 + rep % 2);
    DesignView v(inst.data, inst.partition);
    PulseConfig a, b;
    b.use_lambda_bound = true;
    const double la = lambda_star_search(v, a), lb = lambda_star_search(v, b);
    if (la == 0.0) continue;
    CHECK(std::abs(la - lb) <= 2.0 / double(a.precision_n) * std::max(1.0, la));
  }
}
