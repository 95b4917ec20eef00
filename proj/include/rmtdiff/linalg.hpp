#pragma once

// Dense symmetric linear algebra for the simulator: covariances, the linear
// denoiser, its score, the Wiener sampling map, and quadrature evaluations of
// A^{1/2} and A^{1/2}(A + zI)^{-1/2} that do not go through an eigensolver.

#include <Eigen/Dense>
#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <string>

#include "rmtdiff/errors.hpp"
#include "rmtdiff/quadrature.hpp"
#include "rmtdiff/random.hpp"
#include "rmtdiff/spectrum.hpp"

namespace rmtdiff {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline constexpr double kEigenClip = 1e-16;

namespace detail {

inline double max_abs(const Matrix& a) { return a.size() == 0 ? 0.0 : a.cwiseAbs().maxCoeff(); }

inline bool is_symmetric(const Matrix& a, double rel_tol = 1e-12) {
  if (a.rows() != a.cols()) return false;
  return max_abs(a - a.transpose()) <= rel_tol * std::max(max_abs(a), 1e-300);
}

inline std::uint64_t matrix_fingerprint(const Matrix& a) {
  std::uint64_t h = 1469598103934665603ull;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    h ^= std::bit_cast<std::uint64_t>(a.data()[i]);
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace detail

/// Population Gaussian N(mean, U diag(eigenvalues) U^T).
class PopulationModel {
 public:
  PopulationModel(Vector mean, Matrix eigenbasis, Vector eigenvalues)
      : mean_(std::move(mean)), basis_(std::move(eigenbasis)), eigenvalues_(std::move(eigenvalues)) {
    const auto d = eigenvalues_.size();
    detail::require(d >= 1, "population: dimension must be >= 1");
    detail::require(mean_.size() == d && basis_.rows() == d && basis_.cols() == d, "population: shape mismatch");
    for (Eigen::Index k = 0; k < d; ++k) {
      detail::require(std::isfinite(eigenvalues_[k]) && eigenvalues_[k] >= 0.0, "population: eigenvalues must be >= 0");
      if (k > 0) detail::require(eigenvalues_[k] <= eigenvalues_[k - 1], "population: eigenvalues must be descending");
    }
    const Matrix gram = basis_.transpose() * basis_ - Matrix::Identity(d, d);
    detail::require(detail::max_abs(gram) <= 1e-10, "population: eigenbasis is not orthonormal");
  }

  Eigen::Index dimension() const noexcept { return eigenvalues_.size(); }
  const Vector& mean() const noexcept { return mean_; }
  const Matrix& eigenbasis() const noexcept { return basis_; }
  const Vector& eigenvalues() const noexcept { return eigenvalues_; }
  Vector mode(Eigen::Index k) const { return basis_.col(k); }

  Matrix covariance() const { return basis_ * eigenvalues_.asDiagonal() * basis_.transpose(); }
  /// U Lambda^{1/2}, so x = mean + factor * z for standard normal z.
  Matrix sqrt_factor() const { return basis_ * eigenvalues_.cwiseSqrt().asDiagonal(); }

 private:
  Vector mean_;
  Matrix basis_;
  Vector eigenvalues_;
};

/// Haar-random orthogonal matrix: QR of a Gaussian matrix with the sign of
/// R's diagonal folded into Q.
inline Matrix random_orthogonal(Eigen::Index d, Rng& rng) {
  std::normal_distribution<double> normal;
  Matrix g(d, d);
  for (Eigen::Index j = 0; j < d; ++j)
    for (Eigen::Index i = 0; i < d; ++i) g(i, j) = normal(rng);
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ() * Matrix::Identity(d, d);
  const Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Eigen::Index j = 0; j < d; ++j)
    if (r(j, j) < 0.0) q.col(j) *= -1.0;
  return q;
}

/// Population model with the spectrum's eigenvalues, zero mean, and either
/// the standard basis or a random rotation.
inline PopulationModel make_population(const SpectralMeasure& spec, std::optional<std::uint64_t> basis_seed = std::nullopt) {
  const auto lam = spec.expanded_eigenvalues();
  const auto d = static_cast<Eigen::Index>(lam.size());
  Vector ev = Eigen::Map<const Vector>(lam.data(), d);
  Matrix basis = Matrix::Identity(d, d);
  if (basis_seed) {
    Rng rng(*basis_seed);
    basis = random_orthogonal(d, rng);
  }
  return PopulationModel(Vector::Zero(d), std::move(basis), std::move(ev));
}

enum class Centering { population_mean, sample_mean };

struct EmpiricalCovariance {
  Matrix matrix;
  long long n_samples = 0;
  Centering centered_by = Centering::population_mean;
  Vector center;  // the vector subtracted before forming the outer products
};

/// Sigma_hat = (1/n) sum_i (x_i - c)(x_i - c)^T; rows of `samples` are the x_i.
inline EmpiricalCovariance empirical_covariance(const Matrix& samples, Centering center,
                                                const std::optional<Vector>& known_mean = std::nullopt) {
  const auto n = samples.rows();
  const auto d = samples.cols();
  detail::require(n >= 1 && d >= 1, "empirical_covariance: need at least one sample");
  EmpiricalCovariance out;
  out.n_samples = n;
  out.centered_by = center;
  if (center == Centering::population_mean) {
    detail::require(known_mean.has_value(), "empirical_covariance: population-mean centering needs the mean");
    detail::require(known_mean->size() == d, "empirical_covariance: mean length does not match dimension");
    out.center = *known_mean;
  } else {
    out.center = samples.colwise().mean().transpose();
  }
  const Matrix xc = samples.rowwise() - out.center.transpose();
  out.matrix = Matrix::Zero(d, d);
  out.matrix.selfadjointView<Eigen::Lower>().rankUpdate(xc.transpose(), 1.0 / static_cast<double>(n));
  out.matrix = out.matrix.selfadjointView<Eigen::Lower>();
  return out;
}

enum class Precision { standard, extended };

/// Symmetric eigendecomposition, eigenvalues descending. Negative eigenvalues
/// from rounding are clipped to zero and counted.
struct EigenDecomposition {
  Vector eigenvalues;
  Matrix eigenvectors;
  std::uint64_t source_fingerprint = 0;
  int n_negative = 0;
  double most_negative = 0.0;
  std::string warning;

  Eigen::Index dimension() const noexcept { return eigenvalues.size(); }

  /// V diag(f(lambda)) V^T.
  template <class F>
  Matrix apply(F&& f) const {
    Vector s(dimension());
    for (Eigen::Index k = 0; k < dimension(); ++k) s[k] = f(eigenvalues[k]);
    return eigenvectors * s.asDiagonal() * eigenvectors.transpose();
  }

  Matrix reconstruct() const {
    return eigenvectors * eigenvalues.asDiagonal() * eigenvectors.transpose();
  }
};

inline EigenDecomposition eigendecompose(const Matrix& a, Precision precision = Precision::standard) {
  detail::require(a.rows() == a.cols() && a.rows() >= 1, "eigendecompose: matrix must be square");
  detail::require(detail::is_symmetric(a), "eigendecompose: matrix must be symmetric");
  const auto d = a.rows();
  EigenDecomposition out;
  out.source_fingerprint = detail::matrix_fingerprint(a);
  Vector ev;
  Matrix vecs;
  if (precision == Precision::extended) {
    using MatrixL = Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic>;
    Eigen::SelfAdjointEigenSolver<MatrixL> es(a.cast<long double>());
    if (es.info() != Eigen::Success) throw NumericalError("eigendecompose: solver failed");
    ev = es.eigenvalues().cast<double>();
    vecs = es.eigenvectors().cast<double>();
  } else {
    Eigen::SelfAdjointEigenSolver<Matrix> es(a);
    if (es.info() != Eigen::Success) throw NumericalError("eigendecompose: solver failed");
    ev = es.eigenvalues();
    vecs = es.eigenvectors();
  }
  // ascending -> descending
  out.eigenvalues = ev.reverse();
  out.eigenvectors = vecs.rowwise().reverse();
  for (Eigen::Index k = 0; k < d; ++k) {
    if (out.eigenvalues[k] < 0.0) {
      ++out.n_negative;
      out.most_negative = std::min(out.most_negative, out.eigenvalues[k]);
      out.eigenvalues[k] = 0.0;
    }
  }
  if (out.n_negative * 10 > d)
    out.warning = std::to_string(out.n_negative) + " of " + std::to_string(d) +
                  " eigenvalues were negative and clipped; consider extended precision";
  return out;
}

inline EigenDecomposition eigendecompose(const EmpiricalCovariance& cov, Precision precision = Precision::standard) {
  return eigendecompose(cov.matrix, precision);
}

/// Shrink factors lambda / (lambda + sigma^2) of the linear denoiser.
inline Vector denoiser_shrink(const EigenDecomposition& eig, double sigma) {
  detail::require(std::isfinite(sigma) && sigma >= 0.0, "denoise: sigma must be >= 0");
  const double s2 = sigma * sigma;
  Vector s(eig.dimension());
  for (Eigen::Index k = 0; k < s.size(); ++k) {
    const double l = eig.eigenvalues[k];
    s[k] = (l + s2) > 0.0 ? l / (l + s2) : 0.0;
  }
  return s;
}

/// D(x; sigma) = mean + Sigma (Sigma + sigma^2 I)^{-1} (x - mean).
inline Vector denoise(const EigenDecomposition& eig, const Vector& mean, const Vector& x, double sigma) {
  detail::require(mean.size() == eig.dimension() && x.size() == eig.dimension(), "denoise: dimension mismatch");
  if (sigma == 0.0) {
    const double top = eig.eigenvalues[0];
    const double bottom = eig.eigenvalues[eig.dimension() - 1];
    if (!(top > 0.0) || bottom <= 1e-10 * top) throw SingularityError("denoise: sigma = 0 needs a full-rank covariance");
    return x;
  }
  const Vector s = denoiser_shrink(eig, sigma);
  return mean + eig.eigenvectors * (s.asDiagonal() * (eig.eigenvectors.transpose() * (x - mean)));
}

inline Vector denoise(const EmpiricalCovariance& cov, const Vector& mean, const Vector& x, double sigma) {
  return denoise(eigendecompose(cov), mean, x, sigma);
}

/// Tweedie score (D(x) - x) / sigma^2.
inline Vector score(const EigenDecomposition& eig, const Vector& mean, const Vector& x, double sigma) {
  detail::require(std::isfinite(sigma) && sigma > 0.0, "score: sigma must be > 0");
  return (denoise(eig, mean, x, sigma) - x) / (sigma * sigma);
}

inline Vector score(const EmpiricalCovariance& cov, const Vector& mean, const Vector& x, double sigma) {
  return score(eigendecompose(cov), mean, x, sigma);
}

/// Per-mode Wiener scalings sqrt((lambda + s0^2) / (lambda + sT^2)) with lambda clipped at 1e-16.
inline Vector wiener_scalings(const EigenDecomposition& eig, double sigma_T, double sigma_0) {
  detail::require(std::isfinite(sigma_T) && sigma_T > 0.0, "wiener: sigma_T must be > 0");
  detail::require(std::isfinite(sigma_0) && sigma_0 >= 0.0, "wiener: sigma_0 must be >= 0");
  Vector s(eig.dimension());
  for (Eigen::Index k = 0; k < s.size(); ++k) {
    const double l = std::max(eig.eigenvalues[k], kEigenClip);
    s[k] = std::sqrt((l + sigma_0 * sigma_0) / (l + sigma_T * sigma_T));
  }
  return s;
}

inline Matrix wiener_matrix(const EigenDecomposition& eig, double sigma_T, double sigma_0) {
  const Vector s = wiener_scalings(eig, sigma_T, sigma_0);
  return eig.eigenvectors * s.asDiagonal() * eig.eigenvectors.transpose();
}

/// Closed-form probability-flow map from noise level sigma_T down to sigma_0.
inline Vector sample_map(const EigenDecomposition& eig, const Vector& mean, const Vector& x_T, double sigma_T, double sigma_0) {
  detail::require(mean.size() == eig.dimension() && x_T.size() == eig.dimension(), "sample_map: dimension mismatch");
  if (sigma_0 == sigma_T) return x_T;
  const Vector s = wiener_scalings(eig, sigma_T, sigma_0);
  return mean + eig.eigenvectors * (s.asDiagonal() * (eig.eigenvectors.transpose() * (x_T - mean)));
}

inline Vector sample_map(const EmpiricalCovariance& cov, const Vector& mean, const Vector& x_T, double sigma_T, double sigma_0) {
  return sample_map(eigendecompose(cov), mean, x_T, sigma_T, sigma_0);
}

/// Symmetric PSD square root through the eigendecomposition.
inline Matrix matrix_sqrt(const EigenDecomposition& eig) {
  return eig.apply([](double l) { return std::sqrt(std::max(l, 0.0)); });
}

inline Matrix resolvent(const Matrix& a, double shift) {
  const auto d = a.rows();
  Matrix m = a;
  m.diagonal().array() += shift;
  return m.ldlt().solve(Matrix::Identity(d, d));
}

/// A^{1/2} = (2/pi) int_0^inf A (A + s^2 I)^{-1} ds on a half-line grid.
inline Matrix matrix_sqrt_quadrature(const Matrix& a, const QuadratureGrid& grid) {
  detail::require(a.rows() == a.cols() && detail::is_symmetric(a), "matrix_sqrt_quadrature: matrix must be symmetric");
  detail::require(grid.mapped, "matrix_sqrt_quadrature: needs a half-line grid");
  const auto d = a.rows();
  Matrix acc = Matrix::Zero(d, d);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double s = grid.node(i);
    Matrix m = a;
    m.diagonal().array() += s * s;
    acc += grid.weight(i) * m.ldlt().solve(a);
  }
  acc *= 2.0 / std::numbers::pi;
  return 0.5 * (acc + acc.transpose());
}

/// A^{1/2}(A + zI)^{-1/2} = (4/pi^2) double integral of A (A + u^2)^{-1} (A + z + v^2)^{-1}.
/// The integrand is a product of a u-factor and a v-factor, so the tensor sum
/// is accumulated as A (sum_i w_i R(u_i)) (sum_j w_j R(z + v_j^2)).
inline Matrix half_resolvent_quadrature(const Matrix& a, double z, const TensorGrid2D& grid) {
  detail::require(a.rows() == a.cols() && detail::is_symmetric(a), "half_resolvent_quadrature: matrix must be symmetric");
  detail::require(std::isfinite(z) && z >= 0.0, "half_resolvent_quadrature: z must be >= 0");
  detail::require(grid.grid_u().mapped && grid.grid_v().mapped, "half_resolvent_quadrature: needs half-line grids");
  const auto d = a.rows();
  Matrix ru = Matrix::Zero(d, d), rv = Matrix::Zero(d, d);
  for (std::size_t i = 0; i < grid.grid_u().size(); ++i) {
    const double u = grid.grid_u().node(i);
    ru += grid.grid_u().weight(i) * resolvent(a, u * u);
  }
  for (std::size_t j = 0; j < grid.grid_v().size(); ++j) {
    const double v = grid.grid_v().node(j);
    rv += grid.grid_v().weight(j) * resolvent(a, z + v * v);
  }
  Matrix out = (4.0 / (std::numbers::pi * std::numbers::pi)) * a * ru * rv;
  return 0.5 * (out + out.transpose());
}

}  // namespace rmtdiff
