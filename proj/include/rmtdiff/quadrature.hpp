#pragma once

// Gauss-Legendre rules on (a, b) and on [0, inf) through u = tan(theta).

#include <cmath>
#include <numbers>
#include <utility>
#include <vector>

#include "rmtdiff/errors.hpp"

namespace rmtdiff {

/// Neumaier-compensated running sum. Summation order is the caller's, so a
/// fixed visiting order gives reproducible totals.
class CompensatedSum {
 public:
  void add(double x) noexcept {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) comp_ += (sum_ - t) + x;
    else comp_ += (x - t) + sum_;
    sum_ = t;
  }
  CompensatedSum& operator+=(double x) noexcept {
    add(x);
    return *this;
  }
  double value() const noexcept { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

struct QuadratureGrid {
  std::vector<double> theta_nodes;
  std::vector<double> weights;
  std::vector<double> mapped_nodes;  // equals theta_nodes when !mapped
  std::vector<double> jacobians;     // all 1 when !mapped
  bool mapped = false;

  std::size_t size() const noexcept { return weights.size(); }

  /// Effective weight of node i for integrating over the mapped variable.
  double weight(std::size_t i) const noexcept { return weights[i] * jacobians[i]; }
  double node(std::size_t i) const noexcept { return mapped_nodes[i]; }

  template <class F>
  double integrate(F&& f) const {
    CompensatedSum s;
    for (std::size_t i = 0; i < size(); ++i) s += weight(i) * f(mapped_nodes[i]);
    return s.value();
  }
};

/// n-point Gauss-Legendre rule on (a, b). Roots of P_n by Newton from the
/// Chebyshev-like initial guess, stopped at |dx| <= 1e-15.
inline QuadratureGrid gauss_legendre(long long n_nodes, double a, double b) {
  detail::require(n_nodes >= 1, "gauss_legendre: need at least one node");
  detail::require(std::isfinite(a) && std::isfinite(b) && a < b, "gauss_legendre: require a < b");
  const auto n = static_cast<std::size_t>(n_nodes);
  std::vector<double> x(n), w(n);
  const std::size_t half = (n + 1) / 2;
  for (std::size_t i = 0; i < half; ++i) {
    double r = std::cos(std::numbers::pi * (static_cast<double>(i) + 0.75) / (static_cast<double>(n) + 0.5));
    double dp = 1.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = r;
      for (std::size_t k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * r * p1 - (k - 1.0) * p0) / static_cast<double>(k);
        p0 = p1;
        p1 = p2;
      }
      // P_n'(r) from the recurrence (1 - r^2) P_n' = n (P_{n-1} - r P_n)
      dp = static_cast<double>(n) * (p0 - r * p1) / (1.0 - r * r);
      const double dx = p1 / dp;
      r -= dx;
      if (std::abs(dx) <= 1e-15) break;
    }
    double p0 = 1.0, p1 = r;
    for (std::size_t k = 2; k <= n; ++k) {
      const double p2 = ((2.0 * k - 1.0) * r * p1 - (k - 1.0) * p0) / static_cast<double>(k);
      p0 = p1;
      p1 = p2;
    }
    dp = static_cast<double>(n) * (p0 - r * p1) / (1.0 - r * r);
    const double wi = 2.0 / ((1.0 - r * r) * dp * dp);
    // r is in (0, 1) and decreasing with i; store ascending.
    x[i] = -r;
    x[n - 1 - i] = r;
    w[i] = wi;
    w[n - 1 - i] = wi;
  }
  if (n % 2 == 1) x[n / 2] = 0.0;

  QuadratureGrid g;
  const double mid = 0.5 * (a + b), half_len = 0.5 * (b - a);
  g.theta_nodes.resize(n);
  g.weights.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    g.theta_nodes[i] = mid + half_len * x[i];
    g.weights[i] = half_len * w[i];
  }
  g.mapped_nodes = g.theta_nodes;
  g.jacobians.assign(n, 1.0);
  return g;
}

/// Half-line rule: Gauss-Legendre on (0, pi/2) with u = tan(theta), J = 1 + u^2.
inline QuadratureGrid halfline_grid(long long n_nodes) {
  QuadratureGrid g = gauss_legendre(n_nodes, 0.0, std::numbers::pi / 2);
  g.mapped = true;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double u = std::tan(g.theta_nodes[i]);
    g.mapped_nodes[i] = u;
    g.jacobians[i] = 1.0 + u * u;
  }
  return g;
}

/// Tensor product of two 1D rules. Double integrals are sums over
/// (u_i, v_j, w_i J_i w_j J_j), visited row-major.
class TensorGrid2D {
 public:
  struct Point {
    std::size_t i, j;
    double u, v, weight;
  };

  TensorGrid2D(QuadratureGrid grid_u, QuadratureGrid grid_v) : gu_(std::move(grid_u)), gv_(std::move(grid_v)) {
    detail::require(gu_.size() > 0 && gv_.size() > 0, "tensor grid: empty factor grid");
  }

  const QuadratureGrid& grid_u() const noexcept { return gu_; }
  const QuadratureGrid& grid_v() const noexcept { return gv_; }
  std::size_t size() const noexcept { return gu_.size() * gv_.size(); }

  Point point(std::size_t i, std::size_t j) const noexcept {
    return {i, j, gu_.node(i), gv_.node(j), gu_.weight(i) * gv_.weight(j)};
  }

  std::vector<Point> points() const {
    std::vector<Point> out;
    out.reserve(size());
    for (std::size_t i = 0; i < gu_.size(); ++i)
      for (std::size_t j = 0; j < gv_.size(); ++j) out.push_back(point(i, j));
    return out;
  }

  template <class F>
  double integrate(F&& f) const {
    CompensatedSum s;
    for (std::size_t i = 0; i < gu_.size(); ++i)
      for (std::size_t j = 0; j < gv_.size(); ++j) {
        const Point p = point(i, j);
        s += p.weight * f(p.u, p.v);
      }
    return s.value();
  }

 private:
  QuadratureGrid gu_, gv_;
};

inline TensorGrid2D tensor_grid_2d(const QuadratureGrid& grid_u, const QuadratureGrid& grid_v) {
  return TensorGrid2D(grid_u, grid_v);
}

inline TensorGrid2D halfline_grid_2d(long long n_nodes) {
  auto g = halfline_grid(n_nodes);
  return TensorGrid2D(g, g);
}

}  // namespace rmtdiff
