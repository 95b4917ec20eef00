#pragma once

// Renormalized noise kappa(z): the positive root of
//   F(kappa) = kappa - z - gamma * kappa * m(kappa),  m(kappa) = sum_k w_k lambda_k / (lambda_k + kappa).
// F is convex and increasing past its root, so Newton from the right converges
// monotonically; a bisection fallback keeps every iterate inside [z, upper].

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <mutex>
#include <numeric>
#include <optional>
#include <shared_mutex>
#include <sstream>
#include <utility>
#include <vector>

#include "rmtdiff/errors.hpp"
#include "rmtdiff/spectrum.hpp"

namespace rmtdiff {

struct KappaSolution {
  double z = 0.0;
  double kappa = 0.0;
  double gamma = 0.0;
  double residual = 0.0;
  int iterations = 0;
};

inline constexpr int kKappaMaxIterations = 200;

/// Solved (z, kappa) pairs for one (spectrum, gamma). Readers take a shared
/// lock; insertion is exclusive so a lookup never sees a half-written entry.
class KappaCache {
 public:
  KappaCache(const SpectralMeasure& spec, double gamma) : gamma_(gamma), fingerprint_(spec.fingerprint()) {}

  double gamma() const noexcept { return gamma_; }
  std::uint64_t spectrum_fingerprint() const noexcept { return fingerprint_; }

  bool matches(const SpectralMeasure& spec, double gamma) const noexcept {
    return gamma == gamma_ && spec.fingerprint() == fingerprint_;
  }

  std::optional<double> find(double z) const {
    std::shared_lock lock(mutex_);
    auto it = entries_.find(z);
    if (it == entries_.end()) return std::nullopt;
    return it->second;
  }

  /// Cached pair whose z is closest to the query (ties go to the larger z).
  std::optional<std::pair<double, double>> nearest(double z) const {
    std::shared_lock lock(mutex_);
    if (entries_.empty()) return std::nullopt;
    auto hi = entries_.lower_bound(z);
    if (hi == entries_.end()) return *std::prev(hi);
    if (hi == entries_.begin()) return *hi;
    auto lo = std::prev(hi);
    return (z - lo->first < hi->first - z) ? *lo : *hi;
  }

  void insert(double z, double kappa) {
    std::unique_lock lock(mutex_);
    entries_[z] = kappa;
  }

  std::size_t size() const {
    std::shared_lock lock(mutex_);
    return entries_.size();
  }

  std::vector<std::pair<double, double>> entries() const {
    std::shared_lock lock(mutex_);
    return {entries_.begin(), entries_.end()};
  }

 private:
  double gamma_;
  std::uint64_t fingerprint_;
  mutable std::shared_mutex mutex_;
  std::map<double, double> entries_;
};

namespace detail {

struct KappaEquation {
  const SpectralMeasure& spec;
  double gamma;
  double z;

  // Returns {F, F'} at kappa.
  std::pair<double, double> operator()(double kappa) const {
    const auto lam = spec.eigenvalues();
    const auto w = spec.weights();
    double m = 0.0, m2 = 0.0;
    for (std::size_t k = 0; k < spec.size(); ++k) {
      const double r = lam[k] / (lam[k] + kappa);
      m += w[k] * r;
      m2 += w[k] * r * r;
    }
    return {kappa - z - gamma * kappa * m, 1.0 - gamma * m2};
  }
};

inline bool kappa_converged(double residual, double step, double kappa) {
  return residual <= 1e-12 * std::max(1.0, kappa) && step <= 1e-14 * kappa;
}

inline KappaSolution kappa_newton(const SpectralMeasure& spec, double gamma, double z, std::optional<double> guess) {
  detail::require(std::isfinite(z) && z > 0.0, "kappa: z must be finite and > 0");
  detail::require(std::isfinite(gamma) && gamma >= 0.0, "kappa: gamma must be finite and >= 0");
  const double trace = spec.mean_eigenvalue();
  if (gamma == 0.0 || trace == 0.0) return {z, z, gamma, 0.0, 0};

  const KappaEquation eq{spec, gamma, z};
  double lo = z;
  double hi = (z + gamma * trace) * (1.0 + 1e-12) + 1e-300;
  for (int i = 0; eq(hi).first < 0.0; ++i) {
    if (i > 60) throw ConvergenceError("kappa: could not bracket root", hi, eq(hi).first);
    hi *= 1.0 + 1e-10 * std::pow(2.0, i);
  }

  double x = guess.value_or(z + gamma * trace);
  if (!(x > lo && x <= hi)) x = hi;
  double last_step = 0.0;
  for (int it = 1; it <= kKappaMaxIterations; ++it) {
    const auto [f, df] = eq(x);
    if (f == 0.0) return {z, x, gamma, 0.0, it};
    if (f > 0.0) hi = std::min(hi, x);
    else lo = std::max(lo, x);

    double next = x - f / df;
    if (!(df > 0.0) || !(next > lo && next < hi) || !std::isfinite(next)) next = 0.5 * (lo + hi);
    const double step = std::abs(next - x);
    const double residual = std::abs(f);
    // Either the Newton update is below the scale-free floor, or it no
    // longer moves the iterate (step under one ulp at large kappa).
    if (kappa_converged(residual, step, x) ||
        ((step == 0.0 || step == last_step || hi - lo <= 4.0 * std::numeric_limits<double>::epsilon() * x) &&
         residual <= 1e-12 * std::max(1.0, x))) {
      const double r_next = std::abs(eq(next).first);
      if (r_next <= residual) return {z, next, gamma, r_next, it};
      return {z, x, gamma, residual, it};
    }
    last_step = step;
    x = next;
  }
  throw ConvergenceError("kappa: no convergence after 200 iterations", x, std::abs(eq(x).first));
}

}  // namespace detail

/// Solve for kappa(z). With a cache, an exact-z hit returns the stored value
/// and otherwise the nearest cached kappa seeds Newton; the result is inserted.
inline KappaSolution kappa_solve(const SpectralMeasure& spec, double gamma, double z, KappaCache* cache = nullptr) {
  if (!cache) return detail::kappa_newton(spec, gamma, z, std::nullopt);
  detail::require(cache->matches(spec, gamma), "kappa cache belongs to a different spectrum or gamma");
  if (auto hit = cache->find(z)) {
    const double r = std::abs(detail::KappaEquation{spec, gamma, z}(*hit).first);
    return {z, *hit, gamma, r, 0};
  }
  std::optional<double> guess;
  if (auto near = cache->nearest(z)) guess = near->second + (z - near->first);
  auto sol = detail::kappa_newton(spec, gamma, z, guess);
  cache->insert(z, sol.kappa);
  return sol;
}

/// Solve along a z list by continuation from the largest z downward; results
/// come back in the caller's order.
inline std::vector<KappaSolution> kappa_path(const SpectralMeasure& spec, double gamma, const std::vector<double>& z_values,
                                             KappaCache* cache = nullptr) {
  detail::require(!z_values.empty(), "kappa_path: z list is empty");
  for (double z : z_values) detail::require(std::isfinite(z) && z > 0.0, "kappa_path: every z must be finite and > 0");
  if (cache) detail::require(cache->matches(spec, gamma), "kappa cache belongs to a different spectrum or gamma");

  std::vector<std::size_t> order(z_values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return z_values[a] > z_values[b]; });

  std::vector<KappaSolution> out(z_values.size());
  std::optional<double> guess;
  for (std::size_t i : order) {
    const double z = z_values[i];
    try {
      std::optional<double> hit = cache ? cache->find(z) : std::nullopt;
      if (hit) {
        out[i] = {z, *hit, gamma, std::abs(detail::KappaEquation{spec, gamma, z}(*hit).first), 0};
      } else {
        out[i] = detail::kappa_newton(spec, gamma, z, guess);
        if (cache) cache->insert(z, out[i].kappa);
      }
    } catch (const ConvergenceError& e) {
      std::ostringstream msg;
      msg.precision(17);
      msg << e.what() << " (gamma=" << gamma << ", z=" << z << ")";
      throw ConvergenceError(msg.str(), e.last_iterate(), e.residual());
    }
    guess = out[i].kappa;
  }
  return out;
}

/// dkappa/dz = 1 / F'(kappa) by implicit differentiation.
inline double kappa_derivative(const SpectralMeasure& spec, double gamma, double z, double kappa) {
  const double df = detail::KappaEquation{spec, gamma, z}(kappa).second;
  if (!(df > 0.0)) throw NumericalError("kappa derivative: F'(kappa) is not positive");
  return 1.0 / df;
}

}  // namespace rmtdiff
