#pragma once

// Population covariance spectra stored as weighted atoms, and the trace
// functionals (degrees of freedom) built on them.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "rmtdiff/errors.hpp"

namespace rmtdiff {

/// Limiting spectral measure of a population covariance: atoms lambda_k with
/// weights w_k (summing to one) in an ambient dimension d. Unnormalized traces
/// are d times the weighted average.
class SpectralMeasure {
 public:
  SpectralMeasure(std::vector<double> eigenvalues, std::vector<double> weights, std::size_t dimension)
      : eigenvalues_(std::move(eigenvalues)), weights_(std::move(weights)), dimension_(dimension) {
    detail::require(dimension_ >= 1, "spectrum dimension must be >= 1");
    detail::require(!eigenvalues_.empty(), "spectrum must have at least one eigenvalue");
    detail::require(eigenvalues_.size() == weights_.size(), "eigenvalue and weight lists differ in length");
    detail::require(eigenvalues_.size() <= dimension_, "more spectral atoms than the ambient dimension");
    double total = 0.0;
    for (std::size_t k = 0; k < eigenvalues_.size(); ++k) {
      detail::require(std::isfinite(eigenvalues_[k]) && eigenvalues_[k] >= 0.0, "eigenvalues must be finite and >= 0");
      detail::require(std::isfinite(weights_[k]) && weights_[k] > 0.0, "weights must be finite and > 0");
      if (k > 0) detail::require(eigenvalues_[k] <= eigenvalues_[k - 1], "eigenvalues must be sorted non-increasing");
      total += weights_[k];
    }
    detail::require(std::abs(total - 1.0) <= 1e-12, "weights must sum to 1 within 1e-12");
  }

  std::span<const double> eigenvalues() const noexcept { return eigenvalues_; }
  std::span<const double> weights() const noexcept { return weights_; }
  std::size_t dimension() const noexcept { return dimension_; }
  std::size_t size() const noexcept { return eigenvalues_.size(); }

  /// Weighted mean eigenvalue, tr[Sigma] in normalized-trace units.
  double mean_eigenvalue() const noexcept {
    double s = 0.0;
    for (std::size_t k = 0; k < size(); ++k) s += weights_[k] * eigenvalues_[k];
    return s;
  }

  bool has_positive_eigenvalue() const noexcept { return eigenvalues_.front() > 0.0; }

  /// One eigenvalue per ambient coordinate, descending. Requires every
  /// weight to be a multiple of 1/d (within 1e-6 in count units).
  std::vector<double> expanded_eigenvalues() const {
    std::vector<double> out;
    out.reserve(dimension_);
    for (std::size_t k = 0; k < size(); ++k) {
      const double count = weights_[k] * static_cast<double>(dimension_);
      const double rounded = std::round(count);
      if (std::abs(count - rounded) > 1e-6 || rounded < 1.0)
        throw InvalidArgument("spectrum weights are not multiples of 1/dimension; cannot expand to eigenmodes");
      out.insert(out.end(), static_cast<std::size_t>(rounded), eigenvalues_[k]);
    }
    if (out.size() != dimension_) throw InvalidArgument("expanded eigenmode count does not match dimension");
    return out;
  }

  /// Aggregate weights of exactly equal eigenvalues.
  SpectralMeasure merged() const {
    std::vector<double> lam, w;
    for (std::size_t k = 0; k < size(); ++k) {
      if (!lam.empty() && lam.back() == eigenvalues_[k]) {
        w.back() += weights_[k];
      } else {
        lam.push_back(eigenvalues_[k]);
        w.push_back(weights_[k]);
      }
    }
    return SpectralMeasure(std::move(lam), std::move(w), dimension_);
  }

  /// Stable 64-bit hash of the atoms, weights and dimension (FNV-1a over bit patterns).
  std::uint64_t fingerprint() const noexcept {
    std::uint64_t h = 1469598103934665603ull;
    auto mix = [&h](std::uint64_t v) {
      for (int i = 0; i < 8; ++i) {
        h ^= (v >> (8 * i)) & 0xffu;
        h *= 1099511628211ull;
      }
    };
    mix(dimension_);
    for (std::size_t k = 0; k < size(); ++k) {
      mix(std::bit_cast<std::uint64_t>(eigenvalues_[k]));
      mix(std::bit_cast<std::uint64_t>(weights_[k]));
    }
    return h;
  }

 private:
  std::vector<double> eigenvalues_;
  std::vector<double> weights_;
  std::size_t dimension_;
};

/// lambda_k = scale * k^(-exponent), k = 1..dimension, uniform weights.
inline SpectralMeasure make_powerlaw_spectrum(long long dimension, double exponent, double scale) {
  detail::require(dimension >= 1, "power-law spectrum: dimension must be positive");
  detail::require(exponent > 0.0 && std::isfinite(exponent), "power-law spectrum: exponent must be positive");
  detail::require(scale > 0.0 && std::isfinite(scale), "power-law spectrum: scale must be positive");
  const auto d = static_cast<std::size_t>(dimension);
  std::vector<double> lam(d), w(d, 1.0 / static_cast<double>(d));
  for (std::size_t k = 0; k < d; ++k) lam[k] = scale * std::pow(static_cast<double>(k + 1), -exponent);
  // 1/d summed d times can drift by a few ulps; pin the total to exactly representable form.
  const double total = std::accumulate(w.begin(), w.end(), 0.0);
  if (total != 1.0) w.back() += 1.0 - total;
  return SpectralMeasure(std::move(lam), std::move(w), d);
}

/// Every eigenvalue equal to `value`; stored as d unit-weight atoms so the spectrum expands to eigenmodes.
inline SpectralMeasure make_isotropic_spectrum(long long dimension, double value = 1.0) {
  detail::require(dimension >= 1, "isotropic spectrum: dimension must be positive");
  detail::require(value >= 0.0 && std::isfinite(value), "isotropic spectrum: eigenvalue must be >= 0");
  const auto d = static_cast<std::size_t>(dimension);
  std::vector<double> lam(d, value), w(d, 1.0 / static_cast<double>(d));
  const double total = std::accumulate(w.begin(), w.end(), 0.0);
  if (total != 1.0) w.back() += 1.0 - total;
  return SpectralMeasure(std::move(lam), std::move(w), d);
}

/// Build a spectrum from one eigenvalue per coordinate (any order).
inline SpectralMeasure spectrum_from_eigenvalues(std::vector<double> eigenvalues) {
  detail::require(!eigenvalues.empty(), "empty eigenvalue list");
  std::sort(eigenvalues.begin(), eigenvalues.end(), std::greater<>());
  const std::size_t d = eigenvalues.size();
  std::vector<double> w(d, 1.0 / static_cast<double>(d));
  const double total = std::accumulate(w.begin(), w.end(), 0.0);
  if (total != 1.0) w.back() += 1.0 - total;
  return SpectralMeasure(std::move(eigenvalues), std::move(w), d);
}

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline double parse_real(const std::string& token, std::size_t line, const char* what) {
  const std::string t = trim(token);
  if (t.empty()) throw ParseError(std::string("missing ") + what, line);
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(t, &used);
  } catch (const std::exception&) {
    throw ParseError(std::string("malformed ") + what + " '" + t + "'", line);
  }
  if (used != t.size() || !std::isfinite(v)) throw ParseError(std::string("malformed ") + what + " '" + t + "'", line);
  return v;
}

}  // namespace detail

/// Parse the spectrum CSV format: optional "# dimension=<d>" header, then
/// rows "eigenvalue[,weight]". Without a header d is the row count; omitted
/// weights default to uniform. Weight drift above 1e-9 is renormalized with a
/// warning, above 1e-3 rejected.
inline SpectralMeasure parse_spectrum(std::istream& in, std::vector<std::string>* warnings = nullptr) {
  std::string raw;
  std::size_t line_no = 0;
  std::size_t header_dim = 0;
  std::vector<double> lam, w;
  int weight_mode = -1;  // -1 unknown, 0 absent, 1 present
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string line = detail::trim(raw);
    if (line.empty()) continue;
    if (line.front() == '#') {
      const auto pos = line.find("dimension=");
      if (pos != std::string::npos) {
        if (!lam.empty()) throw ParseError("dimension header must precede data rows", line_no);
        const double d = detail::parse_real(line.substr(pos + 10), line_no, "dimension");
        if (d < 1.0 || d != std::floor(d)) throw ParseError("dimension must be a positive integer", line_no);
        header_dim = static_cast<std::size_t>(d);
      }
      continue;
    }
    const auto comma = line.find(',');
    const double ev = detail::parse_real(line.substr(0, comma), line_no, "eigenvalue");
    if (ev < 0.0) throw ParseError("negative eigenvalue", line_no);
    const int mode = comma == std::string::npos ? 0 : 1;
    if (weight_mode >= 0 && mode != weight_mode) throw ParseError("inconsistent weight column", line_no);
    weight_mode = mode;
    if (mode == 1) {
      const std::string rest = line.substr(comma + 1);
      if (rest.find(',') != std::string::npos) throw ParseError("too many columns", line_no);
      const double wt = detail::parse_real(rest, line_no, "weight");
      if (wt <= 0.0) throw ParseError("non-positive weight", line_no);
      w.push_back(wt);
    }
    lam.push_back(ev);
  }
  if (lam.empty()) throw ParseError("spectrum file has no data rows");
  const std::size_t d = header_dim == 0 ? lam.size() : header_dim;
  if (lam.size() > d) throw ParseError("more rows than the declared dimension", line_no);
  if (weight_mode == 0) w.assign(lam.size(), 1.0 / static_cast<double>(lam.size()));

  double total = 0.0;
  for (double x : w) total += x;
  const double drift = std::abs(total - 1.0);
  if (drift > 1e-3) throw ParseError("weights sum to " + std::to_string(total) + ", not 1");
  if (drift > 1e-9 && warnings) warnings->push_back("spectrum weights renormalized (drift " + std::to_string(drift) + ")");
  for (double& x : w) x /= total;

  std::vector<std::size_t> order(lam.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return lam[a] > lam[b]; });
  std::vector<double> sl, sw;
  for (auto i : order) {
    sl.push_back(lam[i]);
    sw.push_back(w[i]);
  }
  total = std::accumulate(sw.begin(), sw.end(), 0.0);
  if (total != 1.0) sw.front() += 1.0 - total;
  return SpectralMeasure(std::move(sl), std::move(sw), d);
}

inline SpectralMeasure load_spectrum(const std::string& path, std::vector<std::string>* warnings = nullptr) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open spectrum file '" + path + "'");
  return parse_spectrum(in, warnings);
}

/// df1(lambda) = Tr[Sigma (Sigma + lambda I)^-1].
inline double df1(const SpectralMeasure& spec, double lambda) {
  detail::require(lambda > 0.0, "df1: lambda must be > 0");
  double s = 0.0;
  const auto lam = spec.eigenvalues();
  const auto w = spec.weights();
  for (std::size_t k = 0; k < spec.size(); ++k) s += w[k] * lam[k] / (lam[k] + lambda);
  return static_cast<double>(spec.dimension()) * s;
}

/// df2(lambda, lambda') = Tr[Sigma^2 (Sigma + lambda I)^-1 (Sigma + lambda' I)^-1].
inline double df2_two(const SpectralMeasure& spec, double lambda, double lambda_prime) {
  detail::require(lambda > 0.0 && lambda_prime > 0.0, "df2: arguments must be > 0");
  double s = 0.0;
  const auto lam = spec.eigenvalues();
  const auto w = spec.weights();
  for (std::size_t k = 0; k < spec.size(); ++k) s += w[k] * lam[k] * lam[k] / ((lam[k] + lambda) * (lam[k] + lambda_prime));
  return static_cast<double>(spec.dimension()) * s;
}

inline double df2(const SpectralMeasure& spec, double lambda) { return df2_two(spec, lambda, lambda); }

}  // namespace rmtdiff
