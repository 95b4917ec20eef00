#include <gtest/gtest.h>

#include <cmath>

#include "rmtdiff/linalg.hpp"

using namespace rmtdiff;

namespace {

Matrix random_spd(Eigen::Index d, double cond, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const Matrix q = random_orthogonal(d, rng);
  Vector ev(d);
  for (Eigen::Index k = 0; k < d; ++k) ev[k] = std::pow(cond, -u(rng));
  ev[0] = 1.0;
  ev[d - 1] = 1.0 / cond;
  Matrix a = q * ev.asDiagonal() * q.transpose();
  return 0.5 * (a + a.transpose());
}

Matrix scalar(double v) { return Matrix::Constant(1, 1, v); }
Vector vec1(double v) { return Vector::Constant(1, v); }

}  // namespace

TEST(Population, ValidatesBasis) {
  EXPECT_THROW(PopulationModel(Vector::Zero(2), Matrix::Ones(2, 2), Vector::Ones(2)), InvalidArgument);
  Vector ev(2);
  ev << 1.0, 2.0;
  EXPECT_THROW(PopulationModel(Vector::Zero(2), Matrix::Identity(2, 2), ev), InvalidArgument);
  Rng rng(4);
  const Matrix q = random_orthogonal(6, rng);
  EXPECT_LT((q.transpose() * q - Matrix::Identity(6, 6)).cwiseAbs().maxCoeff(), 1e-12);
  const auto pop = make_population(make_powerlaw_spectrum(6, 1.0, 1.0), 9);
  EXPECT_LT((pop.covariance() - pop.sqrt_factor() * pop.sqrt_factor().transpose()).norm(), 1e-12);
}

TEST(Covariance, Examples) {
  Matrix x = Matrix::Zero(1, 3);
  x(0, 0) = 1.0;
  const auto c = empirical_covariance(x, Centering::population_mean, Vector::Zero(3));
  Matrix e1e1 = Matrix::Zero(3, 3);
  e1e1(0, 0) = 1.0;
  EXPECT_EQ(c.matrix, e1e1);

  Vector mu(2);
  mu << 1.0, -2.0;
  const Matrix same = mu.transpose().replicate(5, 1);
  EXPECT_EQ(empirical_covariance(same, Centering::population_mean, mu).matrix.norm(), 0.0);
  EXPECT_EQ(empirical_covariance(same, Centering::sample_mean).matrix.norm(), 0.0);

  EXPECT_THROW(empirical_covariance(same, Centering::population_mean, Vector::Zero(3)), InvalidArgument);
  EXPECT_THROW(empirical_covariance(same, Centering::population_mean), InvalidArgument);
}

TEST(Covariance, LawOfLargeNumbers) {
  Rng rng(17);
  std::normal_distribution<double> normal;
  Matrix x(100000, 8);
  for (Eigen::Index j = 0; j < x.cols(); ++j)
    for (Eigen::Index i = 0; i < x.rows(); ++i) x(i, j) = normal(rng);
  const auto c = empirical_covariance(x, Centering::population_mean, Vector::Zero(8));
  EXPECT_LT((c.matrix - Matrix::Identity(8, 8)).cwiseAbs().maxCoeff(), 0.05);
}

TEST(Eigen, ReconstructionAndClipping) {
  Rng rng(3);
  const Matrix a = random_spd(12, 100.0, rng);
  for (auto p : {Precision::standard, Precision::extended}) {
    const auto e = eigendecompose(a, p);
    EXPECT_LE((e.reconstruct() - a).norm(), 1e-8 * a.norm());
    for (Eigen::Index k = 1; k < e.eigenvalues.size(); ++k) EXPECT_GE(e.eigenvalues[k - 1], e.eigenvalues[k]);
  }
  Matrix b = Matrix::Zero(3, 3);
  b(0, 0) = 1.0;
  b(1, 1) = -1e-3;
  const auto eb = eigendecompose(b);
  EXPECT_EQ(eb.n_negative, 1);
  EXPECT_DOUBLE_EQ(eb.most_negative, -1e-3);
  EXPECT_GE(eb.eigenvalues.minCoeff(), 0.0);
  EXPECT_FALSE(eb.warning.empty());
  Matrix asym = Matrix::Identity(2, 2);
  asym(0, 1) = 1.0;
  EXPECT_THROW(eigendecompose(asym), InvalidArgument);
}

TEST(Denoiser, ScalarAndLimits) {
  const auto e = eigendecompose(scalar(1.0));
  EXPECT_NEAR(denoise(e, vec1(0.0), vec1(2.0), 1.0)[0], 1.0, 1e-15);
  EXPECT_NEAR(score(e, vec1(0.0), vec1(2.0), 1.0)[0], -1.0, 1e-15);
  EXPECT_EQ(score(e, vec1(0.3), vec1(0.3), 2.0)[0], 0.0);
  EXPECT_THROW(score(e, vec1(0.0), vec1(1.0), 0.0), InvalidArgument);

  Rng rng(8);
  const Matrix a = random_spd(5, 10.0, rng);
  const auto ea = eigendecompose(a);
  Vector mu = Vector::LinSpaced(5, -1.0, 1.0), x = Vector::Constant(5, 3.0);
  EXPECT_LT((denoise(ea, mu, x, 0.0) - x).cwiseAbs().maxCoeff(), 1e-12);
  const double bound = a.norm() * (x - mu).norm() / 1e12;
  EXPECT_LE((denoise(ea, mu, x, 1e6) - mu).cwiseAbs().maxCoeff(), bound + 1e-15);

  Matrix rank1 = Matrix::Zero(2, 2);
  rank1(0, 0) = 1.0;
  EXPECT_THROW(denoise(eigendecompose(rank1), Vector::Zero(2), Vector::Ones(2), 0.0), SingularityError);
}

TEST(Wiener, Examples) {
  Rng rng(2);
  const auto e = eigendecompose(random_spd(4, 50.0, rng));
  EXPECT_LT((wiener_matrix(e, 3.0, 3.0) - Matrix::Identity(4, 4)).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_NEAR(wiener_scalings(eigendecompose(scalar(1.0)), 80.0, 0.0)[0], std::sqrt(1.0 / 6401.0), 1e-15);
  EXPECT_NEAR(wiener_scalings(eigendecompose(scalar(0.0)), 80.0, 0.002)[0], std::sqrt((1e-16 + 4e-6) / (1e-16 + 6400.0)), 1e-18);
  EXPECT_NEAR(sample_map(eigendecompose(scalar(1.0)), vec1(0.0), vec1(80.0), 80.0, 0.0)[0], 80.0 * std::sqrt(1.0 / 6401.0), 1e-13);
  Vector xt = Vector::LinSpaced(4, 1.0, 4.0);
  EXPECT_EQ(sample_map(e, Vector::Zero(4), xt, 5.0, 5.0), xt);
}

TEST(MatrixFunctions, Quadrature) {
  const auto g200 = halfline_grid(200);
  EXPECT_LT((matrix_sqrt_quadrature(4.0 * Matrix::Identity(2, 2), g200) - 2.0 * Matrix::Identity(2, 2)).norm(), 1e-10);
  Matrix d = Matrix::Zero(2, 2);
  d(0, 0) = 1.0;
  d(1, 1) = 4.0;
  Matrix ds = Matrix::Zero(2, 2);
  ds(0, 0) = 1.0;
  ds(1, 1) = 2.0;
  EXPECT_LT((matrix_sqrt_quadrature(d, g200) - ds).cwiseAbs().maxCoeff(), 1e-8);
  const auto g2 = halfline_grid_2d(200);
  EXPECT_LT((half_resolvent_quadrature(Matrix::Identity(3, 3), 1.0, g2) - Matrix::Identity(3, 3) / std::sqrt(2.0)).cwiseAbs().maxCoeff(), 1e-6);

  Rng rng(21);
  const Matrix a = random_spd(10, 1e3, rng);
  const auto e = eigendecompose(a);
  EXPECT_LT((half_resolvent_quadrature(a, 0.0, g2) - Matrix::Identity(10, 10)).cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_LT((matrix_sqrt_quadrature(a, halfline_grid(400)) - matrix_sqrt(e)).norm() / matrix_sqrt(e).norm(), 1e-6);
  const Matrix ref = e.apply([](double l) { return std::sqrt(l / (l + 0.5)); });
  EXPECT_LT((half_resolvent_quadrature(a, 0.5, g2) - ref).norm() / ref.norm(), 1e-5);

  Matrix asym = Matrix::Identity(2, 2);
  asym(1, 0) = 0.5;
  EXPECT_THROW(matrix_sqrt_quadrature(asym, g200), InvalidArgument);
  EXPECT_THROW(half_resolvent_quadrature(asym, 1.0, g2), InvalidArgument);
}

TEST(MatrixFunctions, ResolventIdentity) {
  Rng rng(5);
  const Matrix a = random_spd(16, 1e3, rng);
  const double s = 0.3, u = 1.7;
  const Matrix rs = resolvent(a, s), ru = resolvent(a, u);
  EXPECT_LE((rs * ru - (ru - rs) / (s - u)).norm(), 1e-10 * (rs * ru).norm());
  const double h = 1e-6;
  const Matrix limit = (resolvent(a, s - h) - resolvent(a, s + h)) / (2 * h);
  EXPECT_LE((rs * rs - limit).norm(), 1e-6 * (rs * rs).norm());
}
