#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "rmtdiff/quadrature.hpp"

using namespace rmtdiff;
constexpr double kPi = std::numbers::pi;

TEST(GaussLegendre, TwoPointRule) {
  const auto g = gauss_legendre(2, -1.0, 1.0);
  ASSERT_EQ(g.size(), 2u);
  EXPECT_NEAR(std::abs(g.theta_nodes[0]), 1.0 / std::sqrt(3.0), 1e-15);
  EXPECT_NEAR(g.theta_nodes[0], -g.theta_nodes[1], 1e-15);
  EXPECT_NEAR(g.weights[0], 1.0, 1e-15);
  EXPECT_NEAR(g.weights[1], 1.0, 1e-15);
  EXPECT_NEAR(g.integrate([](double x) { return x * x; }), 2.0 / 3.0, 1e-15);
}

TEST(GaussLegendre, Exactness) {
  for (long long n : {1, 3, 10, 57, 200}) {
    const auto g = gauss_legendre(n, 0.0, kPi / 2);
    EXPECT_NEAR(g.integrate([](double) { return 1.0; }), kPi / 2, 1e-13) << n;
  }
  EXPECT_DOUBLE_EQ(gauss_legendre(2, 0.0, 1.0).integrate([](double x) { return x * x * x; }), 0.25);
  const auto g = gauss_legendre(20, -2.0, 3.0);
  EXPECT_NEAR(g.integrate([](double x) { return std::pow(x, 39); }), (std::pow(3.0, 40) - std::pow(2.0, 40)) / 40.0,
              1e-12 * std::pow(3.0, 40) / 40.0);
}

TEST(GaussLegendre, Errors) {
  EXPECT_THROW(gauss_legendre(0, 0.0, 1.0), InvalidArgument);
  EXPECT_THROW(gauss_legendre(4, 1.0, 1.0), InvalidArgument);
  EXPECT_THROW(gauss_legendre(4, 2.0, 1.0), InvalidArgument);
  EXPECT_THROW(halfline_grid(0), InvalidArgument);
}

TEST(HalfLine, AnalyticIntegrals) {
  EXPECT_NEAR(halfline_grid(50).integrate([](double u) { return 2.0 / (kPi * (1.0 + u * u)); }), 1.0, 1e-13);
  EXPECT_NEAR(halfline_grid(100).integrate([](double u) { return std::exp(-u); }), 1.0, 1e-8);
  EXPECT_NEAR(halfline_grid(200).integrate([](double u) { return 1.0 / (4.0 + u * u); }), kPi / 4, 1e-10);
}

TEST(HalfLine, NodesArePositiveAndIncreasing) {
  const auto g = halfline_grid(64);
  EXPECT_TRUE(g.mapped);
  for (std::size_t i = 0; i < g.size(); ++i) {
    EXPECT_GT(g.node(i), 0.0);
    EXPECT_GT(g.weight(i), 0.0);
    if (i) EXPECT_GT(g.node(i), g.node(i - 1));
  }
}

TEST(Tensor, SeparableIntegrals) {
  const auto g = halfline_grid_2d(100);
  EXPECT_NEAR(g.integrate([](double u, double v) { return std::exp(-u - v); }), 1.0, 1e-7);
  const auto unit = tensor_grid_2d(gauss_legendre(7, 0.0, 1.0), gauss_legendre(5, 0.0, 1.0));
  EXPECT_NEAR(unit.integrate([](double, double) { return 1.0; }), 1.0, 1e-15);
  EXPECT_EQ(unit.size(), 35u);
  const auto pts = unit.points();
  ASSERT_EQ(pts.size(), 35u);
  double s = 0.0;
  for (const auto& p : pts) s += p.weight;
  EXPECT_NEAR(s, 1.0, 1e-15);
}

TEST(Compensated, CancelsRoundoff) {
  CompensatedSum s;
  s += 1.0;
  for (int i = 0; i < 1000; ++i) s += 1e-16;
  s += -1.0;
  EXPECT_NEAR(s.value(), 1e-13, 1e-20);
}

TEST(HalfLine, ConvergesOnResolventKernel) {
  // (2/pi) int lambda / (lambda + u^2 + c) du for a spread of lambda, at 100 vs 200 nodes.
  for (double lam : {1e-3, 0.1, 1.0}) {
    auto f = [lam](double u) { return 2.0 / kPi * lam / (lam + u * u + 0.05); };
    const double a = halfline_grid(100).integrate(f), b = halfline_grid(200).integrate(f);
    EXPECT_LT(std::abs(a - b), 1e-6 * std::abs(b));
  }
}
