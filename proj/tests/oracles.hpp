#pragma once

// Reference computations used by the tests. Everything here is written from
// the defining formulas with dense matrices and generic optimisers, without
// touching the library's factorisation caches or solvers.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "pulse/dataset.hpp"
#include "pulse/design.hpp"

namespace oracle {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Orthogonal projection onto span(A) from an explicit thin Q factor.
inline Matrix projection(const Matrix& a) {
  Eigen::HouseholderQR<Matrix> qr(a);
  const Matrix q = qr.householderQ() * Matrix::Identity(a.rows(), a.cols());
  return q * q.transpose();
}

struct Losses {
  Matrix z;
  Matrix pa;
  Vector y;

  Losses(const Matrix& z_, const Matrix& a, const Vector& y_) : z(z_), pa(projection(a)), y(y_) {}

  double ols(const Vector& alpha) const { return (y - z * alpha).squaredNorm() / y.size(); }
  double iv(const Vector& alpha) const {
    const Vector r = y - z * alpha;
    return r.dot(pa * r) / y.size();
  }
  double kclass(const Vector& alpha, double kappa) const { return (1 - kappa) * ols(alpha) + kappa * iv(alpha); }
  double penalized(const Vector& alpha, double lambda) const { return ols(alpha) + lambda * iv(alpha); }
};

/// Nelder-Mead simplex search.
inline Vector nelder_mead(const std::function<double(const Vector&)>& f, Vector x0, double step = 1.0,
                          int max_iter = 20000, double ftol = 1e-15) {
  const auto p = x0.size();
  std::vector<Vector> pts(p + 1, x0);
  for (Eigen::Index i = 0; i < p; ++i) pts[i + 1](i) += step;
  std::vector<double> vals(p + 1);
  for (std::size_t i = 0; i < pts.size(); ++i) vals[i] = f(pts[i]);
  for (int it = 0; it < max_iter; ++it) {
    std::vector<std::size_t> idx(pts.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return vals[a] < vals[b]; });
    std::vector<Vector> sp;
    std::vector<double> sv;
    for (auto i : idx) {
      sp.push_back(pts[i]);
      sv.push_back(vals[i]);
    }
    pts = sp;
    vals = sv;
    if (std::abs(vals.back() - vals.front()) <= ftol * (1 + std::abs(vals.front()))) break;
    Vector centroid = Vector::Zero(p);
    for (Eigen::Index i = 0; i < p; ++i) centroid += pts[i];
    centroid /= static_cast<double>(p);
    const Vector xr = centroid + (centroid - pts.back());
    const double fr = f(xr);
    if (fr < vals.front()) {
      const Vector xe = centroid + 2.0 * (centroid - pts.back());
      const double fe = f(xe);
      if (fe < fr) {
        pts.back() = xe;
        vals.back() = fe;
      } else {
        pts.back() = xr;
        vals.back() = fr;
      }
    } else if (fr < vals[p - 1]) {
      pts.back() = xr;
      vals.back() = fr;
    } else {
      const Vector xc = centroid + 0.5 * (pts.back() - centroid);
      const double fc = f(xc);
      if (fc < vals.back()) {
        pts.back() = xc;
        vals.back() = fc;
      } else {
        for (std::size_t i = 1; i < pts.size(); ++i) {
          pts[i] = pts[0] + 0.5 * (pts[i] - pts[0]);
          vals[i] = f(pts[i]);
        }
      }
    }
  }
  return pts.front();
}

/// Newton steps with central-difference derivatives; exact for quadratics
/// up to rounding.
inline Vector newton_polish(const std::function<double(const Vector&)>& f, Vector x, int steps = 3) {
  const auto p = x.size();
  for (int s = 0; s < steps; ++s) {
    const double h = 1e-3 * (1 + x.norm());
    Vector g(p);
    Matrix hess(p, p);
    for (Eigen::Index i = 0; i < p; ++i) {
      Vector e = Vector::Zero(p);
      e(i) = h;
      g(i) = (f(x + e) - f(x - e)) / (2 * h);
      for (Eigen::Index j = 0; j < p; ++j) {
        Vector d = Vector::Zero(p);
        d(j) = h;
        hess(i, j) = (f(x + e + d) - f(x + e - d) - f(x - e + d) + f(x - e - d)) / (4 * h * h);
      }
    }
    x -= hess.ldlt().solve(g);
  }
  return x;
}

inline Vector minimize(const std::function<double(const Vector&)>& f, const Vector& x0) {
  return newton_polish(f, nelder_mead(f, x0));
}

/// Bisection for the largest x in [lo, hi] with pred(x) true, assuming pred
/// holds on a prefix.
inline double bisect_last_true(const std::function<bool(double)>& pred, double lo, double hi, int iters = 200) {
  for (int i = 0; i < iters; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (pred(mid)) lo = mid;
    else hi = mid;
  }
  return lo;
}

/// Smallest x in [lo, hi] with pred(x) true, assuming pred holds on a suffix.
inline double bisect_first_true(const std::function<bool(double)>& pred, double lo, double hi, int iters = 200) {
  for (int i = 0; i < iters; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (pred(mid)) hi = mid;
    else lo = mid;
  }
  return hi;
}

/// Confounded linear IV data: A ~ N(0, I_q), H ~ N(0, 1),
/// X = A Pi + H + e_x, Y = X beta + A_included gamma + H + e_y.
struct Instance {
  pulse::Dataset data;
  pulse::ModelPartition partition;
};

inline Instance random_instance(std::mt19937_64& gen, int n, int d1, int q1, int q2, double strength = 1.0,
                                double confounding = 1.0) {
  std::normal_distribution<double> nd;
  const int q = q1 + q2;
  Matrix a(n, q), pi(q, d1);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < q; ++j) a(i, j) = nd(gen);
  for (int j = 0; j < q; ++j)
    for (int k = 0; k < d1; ++k) pi(j, k) = strength * nd(gen);
  Vector beta(d1), gamma(q1);
  for (int k = 0; k < d1; ++k) beta(k) = nd(gen);
  for (int k = 0; k < q1; ++k) gamma(k) = nd(gen);
  Vector h(n);
  for (int i = 0; i < n; ++i) h(i) = nd(gen);
  Matrix x = a * pi;
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < d1; ++k) x(i, k) += confounding * h(i) + nd(gen);
  Vector y = x * beta + confounding * h;
  if (q1 > 0) y += a.leftCols(q1) * gamma;
  for (int i = 0; i < n; ++i) y(i) += nd(gen);
  pulse::ModelPartition part = pulse::ModelPartition::all_endogenous(d1);
  for (int j = 0; j < q1; ++j) part.included_exogenous.push_back(j);
  return {pulse::Dataset(y, x, a), part};
}

inline Losses losses_of(const pulse::DesignView& v) { return Losses(v.z(), v.a(), v.y()); }

}  // namespace oracle
