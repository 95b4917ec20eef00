#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <thread>

#include "rmtdiff/kappa.hpp"

using namespace rmtdiff;

namespace {

double residual(const SpectralMeasure& s, double gamma, double z, double kappa) {
  double m = 0.0;
  const auto lam = s.eigenvalues();
  const auto w = s.weights();
  for (std::size_t k = 0; k < lam.size(); ++k) m += w[k] * lam[k] / (lam[k] + kappa);
  return kappa - z - gamma * kappa * m;
}

}  // namespace

TEST(KappaSolve, ClosedForms) {
  const auto iso = make_isotropic_spectrum(10);
  EXPECT_NEAR(kappa_solve(iso, 1.0, 1.0).kappa, (1.0 + std::sqrt(5.0)) / 2.0, 1e-12);
  EXPECT_NEAR(kappa_solve(iso, 2.0, 0.5).kappa, (1.5 + std::sqrt(1.5 * 1.5 + 2.0)) / 2.0, 1e-12);
  EXPECT_NEAR(kappa_solve(iso, 2.0, 0.5).kappa, 1.7807764064, 1e-10);
}

TEST(KappaSolve, GammaZeroIsExact) {
  const auto pl = make_powerlaw_spectrum(16, 1.5, 1.0);
  EXPECT_EQ(kappa_solve(pl, 0.0, 0.7).kappa, 0.7);
  const auto path = kappa_path(pl, 0.0, {4.0, 1.0, 0.25});
  EXPECT_EQ(path[0].kappa, 4.0);
  EXPECT_EQ(path[1].kappa, 1.0);
  EXPECT_EQ(path[2].kappa, 0.25);
}

TEST(KappaSolve, AllZeroSpectrum) {
  const auto zs = spectrum_from_eigenvalues({0.0, 0.0, 0.0});
  EXPECT_EQ(kappa_solve(zs, 2.0, 0.3).kappa, 0.3);
}

TEST(KappaSolve, Errors) {
  const auto iso = make_isotropic_spectrum(4);
  EXPECT_THROW(kappa_solve(iso, 1.0, 0.0), InvalidArgument);
  EXPECT_THROW(kappa_solve(iso, 1.0, -1.0), InvalidArgument);
  EXPECT_THROW(kappa_solve(iso, -0.5, 1.0), InvalidArgument);
  EXPECT_THROW(kappa_solve(iso, 1.0, std::nan("")), InvalidArgument);
}

TEST(KappaSolve, ResidualContractOnRandomInstances) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 300; ++i) {
    std::vector<double> lam(1 + static_cast<std::size_t>(u(rng) * 40));
    for (auto& l : lam) l = std::pow(10.0, -5.0 + 7.0 * u(rng));
    const auto s = spectrum_from_eigenvalues(lam);
    const double gamma = std::pow(10.0, -2.0 + 3.5 * u(rng));
    const double z = std::pow(10.0, -9.0 + 17.0 * u(rng));
    const auto sol = kappa_solve(s, gamma, z);
    EXPECT_GE(sol.kappa, z);
    EXPECT_LE(sol.residual, 1e-12 * std::max(1.0, sol.kappa));
    EXPECT_LE(std::abs(residual(s, gamma, z, sol.kappa)), 1e-11 * std::max(1.0, sol.kappa));
    EXPECT_EQ(sol.gamma, gamma);
    EXPECT_EQ(sol.z, z);
  }
}

TEST(KappaSolve, LargeZLimit) {
  const auto pl = make_powerlaw_spectrum(64, 1.5, 1.0);
  for (double g : {0.5, 1.0, 4.0}) {
    const double r = kappa_solve(pl, g, 1e8).kappa / 1e8;
    EXPECT_GE(r, 1.0);
    EXPECT_LE(r, 1.0 + 1e-3);
  }
}

TEST(KappaPath, MonotoneAndMatchesPointwise) {
  const auto iso = make_isotropic_spectrum(8);
  std::vector<double> z;
  for (int i = 0; i <= 40; ++i) z.push_back(std::pow(10.0, 3.0 - 0.15 * i));
  z.push_back(1.0);
  const auto path = kappa_path(iso, 1.0, z);
  for (std::size_t i = 1; i + 1 < z.size(); ++i) EXPECT_LT(path[i].kappa, path[i - 1].kappa);
  EXPECT_NEAR(path.back().kappa, kappa_solve(iso, 1.0, 1.0).kappa, 1e-12);
  for (std::size_t i = 0; i < z.size(); ++i) EXPECT_EQ(path[i].z, z[i]);  // input order kept
}

TEST(KappaPath, MonotoneInGamma) {
  const auto pl = make_powerlaw_spectrum(32, 1.5, 1.0);
  for (double z : {1e-4, 1e-2, 1.0, 10.0})
    EXPECT_GT(kappa_solve(pl, 3.0, z).kappa, kappa_solve(pl, 0.5, z).kappa);
}

TEST(KappaPath, AnnotatesFailingZ) {
  const auto iso = make_isotropic_spectrum(4);
  try {
    kappa_path(iso, 1.0, {1.0, -2.0});
    FAIL();
  } catch (const InvalidArgument& e) {
    SUCCEED();
  }
}

TEST(KappaCacheTest, IdempotentAndSeeded) {
  const auto pl = make_powerlaw_spectrum(32, 1.5, 1.0);
  KappaCache cache(pl, 0.5);
  const auto a = kappa_solve(pl, 0.5, 0.3, &cache);
  const auto b = kappa_solve(pl, 0.5, 0.3, &cache);
  EXPECT_EQ(a.kappa, b.kappa);
  EXPECT_EQ(cache.size(), 1u);
  const auto c = kappa_solve(pl, 0.5, 0.31, &cache);
  EXPECT_NEAR(c.kappa, kappa_solve(pl, 0.5, 0.31).kappa, 1e-12 * c.kappa);
  const auto e = cache.entries();
  ASSERT_EQ(e.size(), 2u);
  EXPECT_LT(e[0].first, e[1].first);
  EXPECT_LT(e[0].second, e[1].second);
  EXPECT_TRUE(cache.matches(pl, 0.5));
  EXPECT_FALSE(cache.matches(pl, 0.6));
  EXPECT_THROW(kappa_solve(pl, 0.6, 0.3, &cache), InvalidArgument);
}

TEST(KappaCacheTest, ConcurrentUse) {
  const auto pl = make_powerlaw_spectrum(32, 1.5, 1.0);
  KappaCache cache(pl, 1.0);
  std::vector<std::thread> threads;
  std::vector<double> out(8);
  for (int t = 0; t < 8; ++t)
    threads.emplace_back([&, t] { out[t] = kappa_solve(pl, 1.0, 0.1 * (1 + t % 4), &cache).kappa; });
  for (auto& th : threads) th.join();
  for (int t = 0; t < 8; ++t) EXPECT_NEAR(out[t], kappa_solve(pl, 1.0, 0.1 * (1 + t % 4)).kappa, 1e-12);
  EXPECT_EQ(cache.size(), 4u);
}

TEST(KappaDerivative, MatchesFiniteDifference) {
  const auto pl = make_powerlaw_spectrum(16, 1.0, 1.0);
  for (double z : {0.01, 0.5, 3.0}) {
    const double k = kappa_solve(pl, 2.0, z).kappa;
    const double h = 1e-6 * z;
    const double fd = (kappa_solve(pl, 2.0, z + h).kappa - kappa_solve(pl, 2.0, z - h).kappa) / (2 * h);
    EXPECT_NEAR(kappa_derivative(pl, 2.0, z, k), fd, 1e-6 * fd);
    EXPECT_GE(kappa_derivative(pl, 2.0, z, k), 1.0);
  }
}
