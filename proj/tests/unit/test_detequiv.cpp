#include <gtest/gtest.h>

#include <cmath>

#include "rmtdiff/detequiv.hpp"
#include "rmtdiff/linalg.hpp"
#include "rmtdiff/montecarlo.hpp"

using namespace rmtdiff;

namespace {

const double kGolden = (1.0 + std::sqrt(5.0)) / 2.0;

ProbeCoefficients random_probe(std::size_t d, Rng& rng, ProbeKind kind = ProbeKind::direction_v) {
  std::normal_distribution<double> normal;
  ProbeCoefficients p{std::vector<double>(d), kind};
  for (auto& c : p.coeffs) c = normal(rng);
  return p;
}

}  // namespace

TEST(Gain, Examples) {
  const auto pl = make_powerlaw_spectrum(16, 1.5, 1.0);
  EXPECT_NEAR(expected_denoiser_gain(pl, 0.0, 0.3, 0.5), 0.5 / 0.8, 1e-15);
  EXPECT_NEAR(expected_denoiser_gain(make_isotropic_spectrum(8), 1.0, 1.0, 1.0), 1.0 / (1.0 + kGolden), 1e-10);
  EXPECT_NEAR(expected_denoiser_gain(make_isotropic_spectrum(8), 1.0, 1.0, 1.0), 0.3819660113, 1e-10);
}

TEST(ChiXi, Values) {
  EXPECT_DOUBLE_EQ(chi(2.0, 2.0), 0.125);
  EXPECT_EQ(chi(0.0, 1.3), 0.0);
  EXPECT_EQ(xi(0.0, 1.0, 2.0), 0.0);
  EXPECT_NEAR(xi(1.0, 1.0, kGolden), 2.0 / ((1.0 + kGolden) * (1.0 + kGolden)), 1e-15);
  EXPECT_NEAR(xi(1.0, 1.0, kGolden), 0.29180, 1e-5);
  EXPECT_THROW(xi(1.0, 2.0, 1.0), InvalidArgument);
  double best = 0.0, arg = 0.0;
  for (int i = 0; i <= 200000; ++i) {
    const double l = 0.6 + 0.2 * i / 200000.0;
    if (chi(l, 0.7) > best) best = chi(l, 0.7), arg = l;
  }
  EXPECT_NEAR(arg, 0.7, 1e-6);
}

TEST(Diamond, Reductions) {
  const auto pl = make_powerlaw_spectrum(16, 1.5, 1.0);
  const auto lam = pl.expanded_eigenvalues();
  EXPECT_NEAR(diamond(eigen_probe(16, 3), 0.4, lam), chi(lam[3], 0.4), 1e-16);
  const std::vector<double> with_zero{1.0, 0.5, 0.0};
  EXPECT_EQ(diamond(eigen_probe(3, 2), 0.4, with_zero), 0.0);
  EXPECT_THROW(diamond(eigen_probe(17, 3), 0.4, lam), InvalidArgument);
}

TEST(Diamond, DenseOracle) {
  const auto pl = make_powerlaw_spectrum(16, 1.2, 2.0);
  const auto lam = pl.expanded_eigenvalues();
  Rng rng(12);
  const auto v = random_probe(16, rng);
  const double k = 0.3, kp = 1.9;
  const Vector l = Eigen::Map<const Vector>(lam.data(), 16);
  const Matrix S = l.asDiagonal();
  const Vector vv = Eigen::Map<const Vector>(v.coeffs.data(), 16);
  const Matrix G = (S + k * Matrix::Identity(16, 16)).inverse(), Gp = (S + kp * Matrix::Identity(16, 16)).inverse();
  const double dense_d = vv.dot(G * G * S * vv);
  const double dense_p = vv.dot(S * G * Gp * vv);
  EXPECT_NEAR(diamond(v, k, lam), dense_d, 1e-12 * dense_d);
  EXPECT_NEAR(pentagon(v, k, kp, lam), dense_p, 1e-12 * dense_p);
  EXPECT_NEAR(pentagon(v, k, k, lam), diamond(v, k, lam), 1e-14 * dense_d);
}

TEST(DenoiserVariance, FactorsAndLimits) {
  const auto pl = make_powerlaw_spectrum(32, 1.5, 1.0);
  const auto lam = pl.expanded_eigenvalues();
  const double r = std::sqrt(1.0 + lam[2]);
  const auto v = eigen_probe(32, 0);
  const auto x = eigen_probe(32, 2, r, ProbeKind::displacement_x);
  const auto p = denoiser_variance(pl, 0.5, 64, 1.0, v, x);
  EXPECT_NEAR(p.value, p.factors.scaling * p.factors.anisotropy * p.factors.inhomogeneity, 1e-15 * p.value);
  EXPECT_NEAR(p.factors.anisotropy, chi(lam[0], p.kappa), 1e-15);
  EXPECT_NEAR(score_variance(pl, 0.5, 64, 1.0, v, x).value, p.value, 1e-15);
  const auto big = denoiser_variance(pl, 32.0 / 1e9, 1000000000LL, 1.0, v, x);
  EXPECT_LT(big.value, 1e-9);
  EXPECT_NEAR(big.kappa, 1.0, 1e-6);
  const auto big2 = denoiser_variance(pl, 32.0 / 2e9, 2000000000LL, 1.0, v, x);
  EXPECT_NEAR(big2.value / big.value, 0.5, 1e-3);
  // With gamma = d/n the fixed point keeps df2 < n; an inconsistent gamma can break it.
  EXPECT_THROW(denoiser_variance(pl, 1e-3, 1, 1e-4, v, x), OutOfRegimeError);
}

TEST(DenoiserVariance, Marginal) {
  const auto zs = spectrum_from_eigenvalues({0.0, 0.0, 0.0, 0.0});
  EXPECT_EQ(denoiser_variance_marginal(zs, 0.5, 8, 1.0), 0.0);
  const auto pl = make_powerlaw_spectrum(32, 1.5, 1.0);
  const double a = denoiser_variance_marginal(pl, 32.0 / 64.0, 64, 1.0);
  const double b = denoiser_variance_marginal(pl, 32.0 / 128.0, 128, 1.0);
  EXPECT_GT(a, b);
  const long long n = 100000LL * 32;
  EXPECT_NEAR(denoiser_variance_marginal(pl, 32.0 / (2.0 * n), 2 * n, 1.0) / denoiser_variance_marginal(pl, 32.0 / n, n, 1.0), 0.5, 0.01);
}

TEST(Sampling, GainLimits) {
  const auto pl = make_powerlaw_spectrum(32, 1.5, 1.0);
  const auto g = halfline_grid(200);
  for (double l : pl.eigenvalues()) {
    EXPECT_NEAR(sampling_gain_expected(pl, 0.0, l, g), std::sqrt(l), 1e-6);
    EXPECT_LT(sampling_gain_expected(pl, 0.5, l, g), std::sqrt(l));
  }
  EXPECT_EQ(sampling_gain_expected(pl, 0.5, 0.0, g), 0.0);
  const SamplingPredictor pred(pl, 0.5, 64, g, halfline_grid_2d(60));
  EXPECT_NEAR(pred.gain(pl.eigenvalues()[4]), sampling_gain_expected(pl, 0.5, pl.eigenvalues()[4], g), 1e-14);
}

TEST(Sampling, VarianceSymmetryDecayAndRegime) {
  const auto pl = make_powerlaw_spectrum(16, 1.5, 1.0);
  const auto g2 = halfline_grid_2d(60);
  Rng rng(31);
  const auto a = random_probe(16, rng), b = random_probe(16, rng, ProbeKind::displacement_x);
  const double ab = sampling_variance(pl, 0.5, 32, a, b, g2), ba = sampling_variance(pl, 0.5, 32, b, a, g2);
  EXPECT_NEAR(ab, ba, 1e-12 * ab);
  EXPECT_LT(sampling_variance(pl, 16.0 / 1e8, 100000000LL, a, b, g2), 1e-6 * ab);
  EXPECT_THROW(sampling_variance(pl, 1e-3, 1, a, b, g2), OutOfRegimeError);
  const auto det = sampling_variance_detailed(pl, 0.5, 32, a, b, g2);
  EXPECT_GT(det.min_margin, 0.0);
  const SamplingPredictor pred(pl, 0.5, 32, halfline_grid(100), g2);
  EXPECT_NEAR(pred.variance(a, b), ab, 1e-12 * ab);
  EXPECT_NEAR(pred.min_margin(), det.min_margin, 1e-12);
}

TEST(Sampling, MarginalAveragesOverXbar) {
  // The xbar-averaged mode variance equals the variance with xbar replaced by
  // the sum over unit probes (E[xbar xbar^T] = I).
  const auto pl = make_powerlaw_spectrum(8, 1.5, 1.0);
  const auto g2 = halfline_grid_2d(40);
  const SamplingPredictor pred(pl, 0.5, 16, halfline_grid(40), g2);
  for (std::size_t k : {0u, 5u}) {
    double sum = 0.0;
    for (std::size_t j = 0; j < 8; ++j) sum += pred.variance(eigen_probe(8, k), eigen_probe(8, j, 1.0, ProbeKind::displacement_x));
    EXPECT_NEAR(pred.mode_variance_marginal(pl.eigenvalues()[k]), sum, 1e-12 * sum);
  }
}

TEST(HalfResolvent, Limits) {
  const auto pl = make_powerlaw_spectrum(32, 1.5, 1.0);
  const auto g2 = halfline_grid_2d(120);
  for (std::size_t k : {0u, 10u, 31u}) EXPECT_NEAR(half_resolvent_expected_gain(pl, 0.5, 0.0, pl.eigenvalues()[k], g2), 1.0, 1e-4);
  const auto g = halfline_grid(200);
  for (std::size_t k : {0u, 7u, 23u}) {
    const double l = pl.eigenvalues()[k];
    const double a = 80.0 * half_resolvent_expected_gain(pl, 0.5, 6400.0, l, g2), b = sampling_gain_expected(pl, 0.5, l, g);
    EXPECT_NEAR(a, b, 0.01 * b);
  }
}

TEST(HalfResolvent, MarchenkoPasturOracle) {
  // Isotropic, gamma = 1/4, sigma2 = 1: int sqrt(x / (x + 1)) dMP(x), computed
  // independently by adaptive quadrature of the Marchenko-Pastur density.
  const auto iso = make_isotropic_spectrum(16);
  EXPECT_NEAR(half_resolvent_expected_gain(iso, 0.25, 1.0, 1.0, halfline_grid_2d(120)), 0.6778288581204299, 1e-8);
}

TEST(HalfResolvent, MonteCarlo) {
  // d = 64 keeps the finite-d bias of the Monte-Carlo mean well below one SE.
  const auto iso = make_isotropic_spectrum(64);
  const double th = half_resolvent_expected_gain(iso, 0.25, 1.0, 1.0, halfline_grid_2d(120));
  Rng rng(77);
  const Vector lam = Vector::Ones(64);
  Moments m;
  for (int t = 0; t < 2000; ++t) {
    const auto e = eigendecompose(draw_covariance_eigen(lam, 256, rng, Sampler::automatic));
    const Matrix h = e.apply([](double l) { return std::sqrt(l / (l + 1.0)); });
    m.add(h(0, 0));
  }
  EXPECT_LE(std::abs(m.mean() - th), 3.0 * m.mean_se());
}
