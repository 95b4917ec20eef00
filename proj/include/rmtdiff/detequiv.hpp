#pragma once

// Deterministic-equivalent predictions for the empirical linear denoiser and
// the large-sigma_T sampling map. Probes are given by their coordinates in the
// population eigenbasis, so every formula is a weighted sum over modes.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <span>
#include <vector>

#include "rmtdiff/errors.hpp"
#include "rmtdiff/kappa.hpp"
#include "rmtdiff/quadrature.hpp"
#include "rmtdiff/spectrum.hpp"

namespace rmtdiff {

enum class ProbeKind { direction_v, displacement_x };

struct ProbeCoefficients {
  std::vector<double> coeffs;
  ProbeKind kind = ProbeKind::direction_v;

  double norm() const {
    double s = 0.0;
    for (double c : coeffs) s += c * c;
    return std::sqrt(s);
  }
  bool is_unit() const { return std::abs(norm() - 1.0) <= 1e-10; }
};

/// Unit probe along eigenmode k (0-based) in dimension d.
inline ProbeCoefficients eigen_probe(std::size_t d, std::size_t k, double scale = 1.0,
                                     ProbeKind kind = ProbeKind::direction_v) {
  detail::require(k < d, "probe mode index out of range");
  ProbeCoefficients p{std::vector<double>(d, 0.0), kind};
  p.coeffs[k] = scale;
  return p;
}

struct VarianceFactors {
  double scaling = 0.0;
  double anisotropy = 0.0;
  double inhomogeneity = 0.0;
};

struct VariancePrediction {
  double value = 0.0;
  VarianceFactors factors;
  double kappa = 0.0;
};

namespace detail {

inline void check_probe(const ProbeCoefficients& p, std::span<const double> eigenvalues) {
  require(!p.coeffs.empty() && p.coeffs.size() <= eigenvalues.size(), "probe length does not match the eigenvalue list");
  for (double c : p.coeffs) require(std::isfinite(c), "probe coefficients must be finite");
}

}  // namespace detail

/// Per-mode expected shrink lambda_k / (lambda_k + kappa(sigma^2)).
inline double expected_denoiser_gain(const SpectralMeasure& spec, double gamma, double sigma2, double lambda_k) {
  detail::require(std::isfinite(sigma2) && sigma2 > 0.0, "expected_denoiser_gain: sigma2 must be > 0");
  detail::require(lambda_k >= 0.0, "expected_denoiser_gain: lambda_k must be >= 0");
  const double kappa = kappa_solve(spec, gamma, sigma2).kappa;
  return lambda_k / (lambda_k + kappa);
}

/// chi(lambda, kappa) = lambda / (lambda + kappa)^2; peaks at lambda = kappa with value 1/(4 kappa).
inline double chi(double lambda, double kappa) {
  detail::require(kappa > 0.0, "chi: kappa must be > 0");
  detail::require(lambda >= 0.0, "chi: lambda must be >= 0");
  return lambda / ((lambda + kappa) * (lambda + kappa));
}

/// xi = (sigma^2 + lambda) chi(lambda, kappa), the variance factor of a point at radius sqrt(sigma^2 + lambda).
inline double xi(double lambda, double sigma2, double kappa) {
  detail::require(sigma2 > 0.0, "xi: sigma2 must be > 0");
  detail::require(kappa >= sigma2, "xi: kappa must be >= sigma2");
  return (sigma2 + lambda) * chi(lambda, kappa);
}

/// sum_k a_k^2 lambda_k / (lambda_k + kappa)^2.
inline double diamond(const ProbeCoefficients& probe, double kappa, std::span<const double> eigenvalues) {
  detail::require(kappa > 0.0, "diamond: kappa must be > 0");
  detail::check_probe(probe, eigenvalues);
  double s = 0.0;
  for (std::size_t k = 0; k < probe.coeffs.size(); ++k) s += probe.coeffs[k] * probe.coeffs[k] * chi(eigenvalues[k], kappa);
  return s;
}

/// sum_k a_k^2 lambda_k / ((lambda_k + kappa)(lambda_k + kappa')).
inline double pentagon(const ProbeCoefficients& probe, double kappa, double kappa_prime, std::span<const double> eigenvalues) {
  detail::require(kappa > 0.0 && kappa_prime > 0.0, "pentagon: arguments must be > 0");
  detail::check_probe(probe, eigenvalues);
  double s = 0.0;
  for (std::size_t k = 0; k < probe.coeffs.size(); ++k) {
    const double l = eigenvalues[k];
    s += probe.coeffs[k] * probe.coeffs[k] * l / ((l + kappa) * (l + kappa_prime));
  }
  return s;
}

/// Variance of v^T D(x) across datasets of size n:
/// kappa^2 / (n - df2(kappa)) * diamond(v) * diamond(x - mu).
inline VariancePrediction denoiser_variance(const SpectralMeasure& spec, double gamma, long long n, double sigma2,
                                            const ProbeCoefficients& v, const ProbeCoefficients& x_disp) {
  detail::require(n >= 1, "denoiser_variance: n must be >= 1");
  const double kappa = kappa_solve(spec, gamma, sigma2).kappa;
  const double margin = static_cast<double>(n) - df2(spec, kappa);
  if (!(margin > 0.0)) throw OutOfRegimeError("denoiser_variance: n <= df2(kappa)", margin);
  const auto lam = spec.expanded_eigenvalues();
  VariancePrediction p;
  p.kappa = kappa;
  p.factors.scaling = kappa * kappa / margin;
  p.factors.anisotropy = diamond(v, kappa, lam);
  p.factors.inhomogeneity = diamond(x_disp, kappa, lam);
  p.value = p.factors.scaling * p.factors.anisotropy * p.factors.inhomogeneity;
  return p;
}

/// Score variance: the denoiser variance divided by sigma^4.
inline VariancePrediction score_variance(const SpectralMeasure& spec, double gamma, long long n, double sigma2,
                                         const ProbeCoefficients& v, const ProbeCoefficients& x_disp) {
  VariancePrediction p = denoiser_variance(spec, gamma, n, sigma2, v, x_disp);
  const double s4 = sigma2 * sigma2;
  p.value /= s4;
  p.factors.scaling /= s4;
  return p;
}

/// Total denoiser variance summed over modes, averaged over x ~ N(mu, Sigma + sigma^2 I):
/// (df1 - df2)(sigma^2 df1 + (kappa - sigma^2) df2) / (n - df2).
inline double denoiser_variance_marginal(const SpectralMeasure& spec, double gamma, long long n, double sigma2) {
  detail::require(n >= 1, "denoiser_variance_marginal: n must be >= 1");
  const double kappa = kappa_solve(spec, gamma, sigma2).kappa;
  const double d1 = df1(spec, kappa), d2 = df2(spec, kappa);
  const double margin = static_cast<double>(n) - d2;
  if (!(margin > 0.0)) throw OutOfRegimeError("denoiser_variance_marginal: n <= df2(kappa)", margin);
  return (d1 - d2) * (sigma2 * d1 + (kappa - sigma2) * d2) / margin;
}

/// kappa(u^2) at the nodes of a half-line grid, solved once by descending continuation.
struct KappaGrid {
  std::vector<double> nodes;
  std::vector<double> kappa;

  KappaGrid(const SpectralMeasure& spec, double gamma, const QuadratureGrid& grid, double shift = 0.0) {
    detail::require(grid.mapped, "kappa grid: needs a half-line grid");
    std::vector<double> z(grid.size());
    nodes = grid.mapped_nodes;
    for (std::size_t i = 0; i < grid.size(); ++i) z[i] = shift + nodes[i] * nodes[i];
    for (double zi : z)
      if (!(zi > 0.0)) throw NumericalError("kappa grid: a node maps to z = 0");
    const auto sols = kappa_path(spec, gamma, z);
    kappa.resize(sols.size());
    for (std::size_t i = 0; i < sols.size(); ++i) kappa[i] = sols[i].kappa;
  }
};

/// Large-sigma_T sampling-map predictions for one (spectrum, gamma, n) with
/// kappa paths precomputed on the quadrature grids.
class SamplingPredictor {
 public:
  SamplingPredictor(const SpectralMeasure& spec, double gamma, long long n, const QuadratureGrid& grid1d,
                    const TensorGrid2D& grid2d)
      : spec_(spec),
        gamma_(gamma),
        n_(n),
        g1_(grid1d),
        g2_(grid2d),
        k1_(spec, gamma, grid1d),
        ku_(spec, gamma, grid2d.grid_u()),
        kv_(spec, gamma, grid2d.grid_v()),
        lam_(spec.expanded_eigenvalues()) {
    detail::require(n >= 1, "sampling predictor: n must be >= 1");
    min_margin_ = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < ku_.kappa.size(); ++i)
      for (std::size_t j = 0; j < kv_.kappa.size(); ++j)
        min_margin_ = std::min(min_margin_, static_cast<double>(n_) - df2_two(spec_, ku_.kappa[i], kv_.kappa[j]));
  }

  /// (2/pi) int_0^inf lambda / (lambda + kappa(u^2)) du.
  double gain(double lambda_k) const {
    detail::require(lambda_k >= 0.0, "sampling gain: lambda_k must be >= 0");
    CompensatedSum s;
    for (std::size_t i = 0; i < g1_.size(); ++i) s += g1_.weight(i) * lambda_k / (lambda_k + k1_.kappa[i]);
    return 2.0 / std::numbers::pi * s.value();
  }

  /// Minimum of n - df2(kappa(u^2), kappa(v^2)) over the 2D grid.
  double min_margin() const noexcept { return min_margin_; }

  /// (4/pi^2) double integral of kappa kappa' / (n - df2(kappa, kappa')) * pentagon(v) * pentagon(xbar).
  double variance(const ProbeCoefficients& v, const ProbeCoefficients& xbar) const {
    if (!(min_margin_ > 0.0)) throw OutOfRegimeError("sampling_variance: n <= df2 somewhere on the grid", min_margin_);
    CompensatedSum s;
    for (std::size_t i = 0; i < ku_.kappa.size(); ++i) {
      const double a = ku_.kappa[i];
      const double wi = g2_.grid_u().weight(i);
      for (std::size_t j = 0; j < kv_.kappa.size(); ++j) {
        const double b = kv_.kappa[j];
        const double scale = a * b / (static_cast<double>(n_) - df2_two(spec_, a, b));
        s += wi * g2_.grid_v().weight(j) * scale * pentagon(v, a, b, lam_) * pentagon(xbar, a, b, lam_);
      }
    }
    return 4.0 / (std::numbers::pi * std::numbers::pi) * s.value();
  }

  /// Variance of the map along u_k averaged over xbar ~ N(0, I):
  /// (4/pi^2) double integral of kappa' (df1(kappa') - df2(kappa, kappa')) / (n - df2) * lambda_k / ((lambda_k + kappa)(lambda_k + kappa')).
  double mode_variance_marginal(double lambda_k) const {
    if (!(min_margin_ > 0.0)) throw OutOfRegimeError("sampling_variance: n <= df2 somewhere on the grid", min_margin_);
    CompensatedSum s;
    for (std::size_t i = 0; i < ku_.kappa.size(); ++i) {
      const double a = ku_.kappa[i];
      for (std::size_t j = 0; j < kv_.kappa.size(); ++j) {
        const double b = kv_.kappa[j];
        const double d2 = df2_two(spec_, a, b);
        const double tr = pentagon_trace(a, b);
        const double w = g2_.grid_u().weight(i) * g2_.grid_v().weight(j);
        s += w * a * b * tr / (static_cast<double>(n_) - d2) * lambda_k / ((lambda_k + a) * (lambda_k + b));
      }
    }
    return 4.0 / (std::numbers::pi * std::numbers::pi) * s.value();
  }

  std::span<const double> eigenvalues() const noexcept { return lam_; }

 private:
  // Tr[Sigma (Sigma + a)^-1 (Sigma + b)^-1] = (df1(b) - df2(a, b)) / a.
  double pentagon_trace(double a, double b) const {
    double s = 0.0;
    for (double l : lam_) s += l / ((l + a) * (l + b));
    return s;
  }

  const SpectralMeasure& spec_;
  double gamma_;
  long long n_;
  QuadratureGrid g1_;
  TensorGrid2D g2_;
  KappaGrid k1_, ku_, kv_;
  std::vector<double> lam_;
  double min_margin_ = 0.0;
};

inline double sampling_gain_expected(const SpectralMeasure& spec, double gamma, double lambda_k, const QuadratureGrid& grid) {
  detail::require(lambda_k >= 0.0, "sampling_gain_expected: lambda_k must be >= 0");
  const KappaGrid kg(spec, gamma, grid);
  CompensatedSum s;
  for (std::size_t i = 0; i < grid.size(); ++i) s += grid.weight(i) * lambda_k / (lambda_k + kg.kappa[i]);
  return 2.0 / std::numbers::pi * s.value();
}

struct SamplingVarianceResult {
  double value = 0.0;
  double min_margin = 0.0;
};

inline SamplingVarianceResult sampling_variance_detailed(const SpectralMeasure& spec, double gamma, long long n,
                                                         const ProbeCoefficients& v, const ProbeCoefficients& xbar,
                                                         const TensorGrid2D& grid2d) {
  detail::require(n >= 1, "sampling_variance: n must be >= 1");
  const auto lam = spec.expanded_eigenvalues();
  detail::check_probe(v, lam);
  detail::check_probe(xbar, lam);
  const KappaGrid ku(spec, gamma, grid2d.grid_u());
  const KappaGrid kv(spec, gamma, grid2d.grid_v());
  SamplingVarianceResult out;
  out.min_margin = std::numeric_limits<double>::infinity();
  CompensatedSum s;
  for (std::size_t i = 0; i < ku.kappa.size(); ++i) {
    const double a = ku.kappa[i];
    for (std::size_t j = 0; j < kv.kappa.size(); ++j) {
      const double b = kv.kappa[j];
      const double margin = static_cast<double>(n) - df2_two(spec, a, b);
      out.min_margin = std::min(out.min_margin, margin);
      if (!(margin > 0.0)) throw OutOfRegimeError("sampling_variance: n <= df2(kappa, kappa') on the grid", margin);
      const double w = grid2d.grid_u().weight(i) * grid2d.grid_v().weight(j);
      s += w * a * b / margin * pentagon(v, a, b, lam) * pentagon(xbar, a, b, lam);
    }
  }
  out.value = 4.0 / (std::numbers::pi * std::numbers::pi) * s.value();
  return out;
}

inline double sampling_variance(const SpectralMeasure& spec, double gamma, long long n, const ProbeCoefficients& v,
                                const ProbeCoefficients& xbar, const TensorGrid2D& grid2d) {
  return sampling_variance_detailed(spec, gamma, n, v, xbar, grid2d).value;
}

/// Expected u_k^T Sigma_hat^{1/2} (Sigma_hat + sigma^2 I)^{-1/2} u_k:
/// (4/pi^2) double integral of q(u, v) lambda / ((lambda + kappa(sigma^2 + u^2))(lambda + kappa(v^2))),
/// q the difference quotient of kappa between sigma^2 + u^2 and v^2.
inline double half_resolvent_expected_gain(const SpectralMeasure& spec, double gamma, double sigma2, double lambda_k,
                                           const TensorGrid2D& grid2d) {
  detail::require(std::isfinite(sigma2) && sigma2 >= 0.0, "half_resolvent_expected_gain: sigma2 must be >= 0");
  detail::require(lambda_k >= 0.0, "half_resolvent_expected_gain: lambda_k must be >= 0");
  const auto& gu = grid2d.grid_u();
  const auto& gv = grid2d.grid_v();
  std::vector<double> za(gu.size()), zb(gv.size());
  for (std::size_t i = 0; i < gu.size(); ++i) za[i] = sigma2 + gu.node(i) * gu.node(i);
  for (std::size_t j = 0; j < gv.size(); ++j) zb[j] = gv.node(j) * gv.node(j);
  std::vector<double> ka(za.size()), kb(zb.size());
  {
    const auto sa = kappa_path(spec, gamma, za);
    const auto sb = kappa_path(spec, gamma, zb);
    for (std::size_t i = 0; i < sa.size(); ++i) ka[i] = sa[i].kappa;
    for (std::size_t j = 0; j < sb.size(); ++j) kb[j] = sb[j].kappa;
  }
  CompensatedSum s;
  for (std::size_t i = 0; i < za.size(); ++i) {
    for (std::size_t j = 0; j < zb.size(); ++j) {
      const double dz = za[i] - zb[j];
      double q;
      if (std::abs(dz) < 1e-9) {
        const double zm = 0.5 * (za[i] + zb[j]);
        const double h = 1e-6 * zm;
        q = (kappa_solve(spec, gamma, zm + h).kappa - kappa_solve(spec, gamma, zm - h).kappa) / (2.0 * h);
      } else {
        q = (ka[i] - kb[j]) / dz;
      }
      const double w = gu.weight(i) * gv.weight(j);
      s += w * q * lambda_k / ((lambda_k + ka[i]) * (lambda_k + kb[j]));
    }
  }
  return 4.0 / (std::numbers::pi * std::numbers::pi) * s.value();
}

}  // namespace rmtdiff
