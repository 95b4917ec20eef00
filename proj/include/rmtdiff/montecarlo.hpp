#pragma once

// Monte-Carlo simulator of finite-dataset linear denoisers and sampling maps.
//
// Statistics along population eigenmodes are rotation invariant, so the
// experiments draw Sigma_hat directly in the population eigenbasis
// (U^T Sigma_hat U); the counterfactual experiment draws real samples.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "rmtdiff/detequiv.hpp"
#include "rmtdiff/errors.hpp"
#include "rmtdiff/linalg.hpp"
#include "rmtdiff/parallel.hpp"
#include "rmtdiff/random.hpp"
#include "rmtdiff/stats.hpp"

namespace rmtdiff {

enum class Sampler { automatic, direct, wishart };
enum class SamplingOperator { sqrt_map, wiener };

struct ExperimentConfig {
  PopulationModel population;
  long long n_samples = 64;
  long long n_trials = 2000;
  std::vector<double> sigma_grid{1.0};  // noise variances sigma^2
  double sigma_T = 80.0;
  double sigma_0 = 0.002;
  std::vector<std::size_t> probe_modes;  // 0-based; empty = every mode
  std::uint64_t seed = 0;
  std::vector<std::size_t> shell_modes{2};  // x - mu = sqrt(sigma^2 + lambda_j) u_j
  long long n_probe_points = 0;             // random noised probe points
  long long n_xbar_seeds = 5;
  Sampler sampler = Sampler::automatic;
  SamplingOperator sampling_operator = SamplingOperator::sqrt_map;
  long long nodes1d = 200;
  long long nodes2d = 120;
};

struct ModeRow {
  long long mode = 0;  // 1-based
  double lambda = 0.0, theory = 0.0, mc = 0.0, mc_se = 0.0;
  long long n_trials = 0;
};

struct PointRow {
  long long point_id = 0;  // 1-based
  double theory_factor = 0.0, mse = 0.0;
};

/// Free-form table: header plus pre-formatted cells.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

struct ExperimentReport {
  std::map<std::string, std::vector<ModeRow>> mode_tables;
  std::map<std::string, std::vector<PointRow>> point_tables;
  std::map<std::string, Table> tables;
  nlohmann::ordered_json summary = nlohmann::ordered_json::object();
};

/// Shortest round-trip-safe decimal form, 17 significant digits.
inline std::string format_real(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline void validate_config(const ExperimentConfig& c) {
  const auto d = static_cast<std::size_t>(c.population.dimension());
  detail::require(c.n_samples >= 1, "n_samples must be >= 1");
  detail::require(c.n_trials >= 2, "n_trials must be >= 2");
  detail::require(!c.sigma_grid.empty(), "sigma grid must not be empty");
  for (double s : c.sigma_grid) detail::require(std::isfinite(s) && s > 0.0, "sigma^2 values must be > 0");
  detail::require(std::isfinite(c.sigma_T) && c.sigma_T > 0.0, "sigma_T must be > 0");
  detail::require(std::isfinite(c.sigma_0) && c.sigma_0 >= 0.0, "sigma_0 must be >= 0");
  for (auto k : c.probe_modes) detail::require(k < d, "probe mode index out of range");
  for (auto k : c.shell_modes) detail::require(k < d, "shell mode index out of range");
  detail::require(c.n_probe_points >= 0, "n_probe_points must be >= 0");
  detail::require(c.n_xbar_seeds >= 1, "n_xbar_seeds must be >= 1");
  detail::require(c.nodes1d >= 1 && c.nodes2d >= 1, "quadrature node counts must be >= 1");
  if (c.sampler == Sampler::wishart) detail::require(c.n_samples >= static_cast<long long>(d), "Wishart sampler needs n >= d");
}

/// x_i = mu + U Lambda^{1/2} z_i, one sample per row.
inline Matrix draw_dataset(const PopulationModel& population, long long n, std::uint64_t seed) {
  detail::require(n >= 1, "draw_dataset: n must be >= 1");
  const auto d = population.dimension();
  Rng rng(seed);
  std::normal_distribution<double> normal;
  Matrix z(n, d);
  for (long long i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < d; ++j) z(i, j) = normal(rng);
  Matrix x = z * population.sqrt_factor().transpose();
  x.rowwise() += population.mean().transpose();
  return x;
}

/// Sigma_hat (population-mean centering) in the population eigenbasis.
/// Wishart draws use the Bartlett decomposition: O(d^2) instead of O(n d^2).
inline Matrix draw_covariance_eigen(const Vector& lambda, long long n, Rng& rng, Sampler sampler) {
  const auto d = lambda.size();
  std::normal_distribution<double> normal;
  const bool wishart = sampler == Sampler::wishart || (sampler == Sampler::automatic && n >= d);
  const Vector root = lambda.cwiseSqrt();
  Matrix s(d, d);
  if (wishart) {
    Matrix l = Matrix::Zero(d, d);
    for (Eigen::Index i = 0; i < d; ++i) {
      std::chi_squared_distribution<double> chi2(static_cast<double>(n - i));
      l(i, i) = std::sqrt(chi2(rng));
      for (Eigen::Index j = 0; j < i; ++j) l(i, j) = normal(rng);
    }
    const Matrix a = root.asDiagonal() * l;
    s.setZero();
    s.selfadjointView<Eigen::Lower>().rankUpdate(a, 1.0 / static_cast<double>(n));
  } else {
    Matrix z(n, d);
    for (long long i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < d; ++j) z(i, j) = normal(rng);
    const Matrix y = z * root.asDiagonal();
    s.setZero();
    s.selfadjointView<Eigen::Lower>().rankUpdate(y.transpose(), 1.0 / static_cast<double>(n));
  }
  return s.selfadjointView<Eigen::Lower>();
}

namespace detail {

inline std::vector<std::size_t> modes_or_all(const std::vector<std::size_t>& modes, std::size_t d) {
  if (!modes.empty()) return modes;
  std::vector<std::size_t> all(d);
  std::iota(all.begin(), all.end(), 0);
  return all;
}

inline SpectralMeasure population_spectrum(const PopulationModel& p) {
  return spectrum_from_eigenvalues(std::vector<double>(p.eigenvalues().data(), p.eigenvalues().data() + p.dimension()));
}

/// Per-trial results stored flat, reduced in trial order afterwards.
struct TrialBuffer {
  std::size_t width;
  std::vector<double> data;
  TrialBuffer(std::size_t trials, std::size_t w) : width(w), data(trials * w, 0.0) {}
  double* row(std::size_t t) { return data.data() + t * width; }
  Moments moments(std::size_t column, std::size_t trials) const {
    Moments m;
    for (std::size_t t = 0; t < trials; ++t) m.add(data[t * width + column]);
    return m;
  }
};

inline Matrix spectral_operator(const EigenDecomposition& eig, const Vector& f) {
  return eig.eigenvectors * f.asDiagonal() * eig.eigenvectors.transpose();
}

inline double elapsed_seconds(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

constexpr std::uint64_t kProbeStream = 0x5eed0001ull;
constexpr std::uint64_t kXbarStream = 0x5eed0002ull;

}  // namespace detail

/// Two independent datasets per trial; evaluates both empirical denoisers.
///
/// Tables, for each sigma^2 index s (1-based, matching sigma_grid order):
///   gain_s<s>                 per-mode E[u_k^T Sigma_hat (Sigma_hat + sigma^2)^-1 u_k]
///   variance_s<s>_x<j>        per-mode Var[u_k^T D(x)] at the shell point x - mu = sqrt(sigma^2 + lambda_j) u_j
///   mse_s<s>_x<j>             per-mode cross-split E[(u_k^T (D_A - D_B)(x))^2], theory = 2 x variance
///   points_s<s>               per-point cross-split MSE (/d) vs diamond(x - mu); ids 1..d are shell
///                             points, ids d+1.. random noised draws
inline ExperimentReport denoiser_split_experiment(const ExperimentConfig& config) {
  validate_config(config);
  const auto start = std::chrono::steady_clock::now();
  const auto& pop = config.population;
  const auto d = static_cast<std::size_t>(pop.dimension());
  const Vector lam = pop.eigenvalues();
  const auto spec = detail::population_spectrum(pop);
  const auto lam_list = spec.expanded_eigenvalues();
  const double gamma = static_cast<double>(d) / static_cast<double>(config.n_samples);
  const auto trials = static_cast<std::size_t>(config.n_trials);
  const auto n_sigma = config.sigma_grid.size();
  const auto shells = config.shell_modes;
  const auto n_rand = static_cast<std::size_t>(config.n_probe_points);

  // Random noised probe points x - mu = (Lambda + sigma^2)^{1/2} g, one set per sigma^2.
  std::vector<Matrix> rand_points(n_sigma);
  {
    Rng rng(sub_seed(config.seed, detail::kProbeStream));
    std::normal_distribution<double> normal;
    Matrix g(d, n_rand);
    for (std::size_t p = 0; p < n_rand; ++p)
      for (std::size_t k = 0; k < d; ++k) g(k, p) = normal(rng);
    for (std::size_t s = 0; s < n_sigma; ++s)
      rand_points[s] = (lam.array() + config.sigma_grid[s]).sqrt().matrix().asDiagonal() * g;
  }

  // Column layout per sigma: d gains | shells x d values | shells x d squared diffs | (d + n_rand) point mses
  const std::size_t per_sigma = d + 2 * shells.size() * d + d + n_rand;
  detail::TrialBuffer buf(trials, n_sigma * per_sigma);

  parallel_for(trials, [&](std::size_t t) {
    Rng rng_a(sub_seed(config.seed, t));
    Rng rng_b(sub_seed(config.seed, t, 1));
    const auto eig_a = eigendecompose(draw_covariance_eigen(lam, config.n_samples, rng_a, config.sampler));
    const auto eig_b = eigendecompose(draw_covariance_eigen(lam, config.n_samples, rng_b, config.sampler));
    double* row = buf.row(t);
    for (std::size_t s = 0; s < n_sigma; ++s) {
      const double sigma = std::sqrt(config.sigma_grid[s]);
      const Matrix ga = detail::spectral_operator(eig_a, denoiser_shrink(eig_a, sigma));
      const Matrix gb = detail::spectral_operator(eig_b, denoiser_shrink(eig_b, sigma));
      const Matrix diff = ga - gb;
      double* out = row + s * per_sigma;
      for (std::size_t k = 0; k < d; ++k) out[k] = ga(k, k);
      out += d;
      for (std::size_t j : shells) {
        const double r = std::sqrt(config.sigma_grid[s] + lam[j]);
        for (std::size_t k = 0; k < d; ++k) out[k] = ga(k, j) * r;
        out += d;
      }
      for (std::size_t j : shells) {
        const double r = std::sqrt(config.sigma_grid[s] + lam[j]);
        for (std::size_t k = 0; k < d; ++k) out[k] = diff(k, j) * diff(k, j) * r * r;
        out += d;
      }
      for (std::size_t j = 0; j < d; ++j) {
        const double r2 = config.sigma_grid[s] + lam[j];
        out[j] = diff.col(j).squaredNorm() * r2 / static_cast<double>(d);
      }
      out += d;
      if (n_rand > 0) {
        const Matrix y = diff * rand_points[s];
        for (std::size_t p = 0; p < n_rand; ++p) out[p] = y.col(p).squaredNorm() / static_cast<double>(d);
      }
    }
  });

  ExperimentReport rep;
  const auto rows = detail::modes_or_all(config.probe_modes, d);
  nlohmann::ordered_json sigma_summary = nlohmann::ordered_json::array();
  bool any_out_of_regime = false;
  for (std::size_t s = 0; s < n_sigma; ++s) {
    const double s2 = config.sigma_grid[s];
    const double kappa = kappa_solve(spec, gamma, s2).kappa;
    const double margin = static_cast<double>(config.n_samples) - df2(spec, kappa);
    const bool in_regime = margin > 0.0;
    any_out_of_regime |= !in_regime;
    const double scaling = in_regime ? kappa * kappa / margin : std::numeric_limits<double>::quiet_NaN();
    const std::size_t base = s * per_sigma;
    const std::string tag = "s" + std::to_string(s + 1);

    auto& gain = rep.mode_tables["gain_" + tag];
    for (auto k : rows) {
      const auto m = buf.moments(base + k, trials);
      gain.push_back({static_cast<long long>(k + 1), lam[k], lam[k] / (lam[k] + kappa), m.mean(), m.mean_se(), config.n_trials});
    }
    for (std::size_t ji = 0; ji < shells.size(); ++ji) {
      const std::size_t j = shells[ji];
      const double inhom = (s2 + lam[j]) * chi(lam[j], kappa);
      const std::string xt = "_x" + std::to_string(j + 1);
      auto& var = rep.mode_tables["variance_" + tag + xt];
      auto& mse = rep.mode_tables["mse_" + tag + xt];
      for (auto k : rows) {
        const double theory = scaling * chi(lam[k], kappa) * inhom;
        const auto mv = buf.moments(base + d + ji * d + k, trials);
        var.push_back({static_cast<long long>(k + 1), lam[k], theory, mv.variance(), mv.variance_se(), config.n_trials});
        const auto ms = buf.moments(base + d + (shells.size() + ji) * d + k, trials);
        mse.push_back({static_cast<long long>(k + 1), lam[k], 2.0 * theory, ms.mean(), ms.mean_se(), config.n_trials});
      }
    }
    auto& pts = rep.point_tables["points_" + tag];
    std::vector<double> th_shell, mc_shell, th_rand, mc_rand;
    const std::size_t pbase = base + d + 2 * shells.size() * d;
    for (std::size_t j = 0; j < d; ++j) {
      const double th = (s2 + lam[j]) * chi(lam[j], kappa);
      const double mc = buf.moments(pbase + j, trials).mean();
      pts.push_back({static_cast<long long>(j + 1), th, mc});
      th_shell.push_back(th);
      mc_shell.push_back(mc);
    }
    for (std::size_t p = 0; p < n_rand; ++p) {
      ProbeCoefficients x{std::vector<double>(rand_points[s].col(p).data(), rand_points[s].col(p).data() + d),
                          ProbeKind::displacement_x};
      const double th = diamond(x, kappa, lam_list);
      const double mc = buf.moments(pbase + d + p, trials).mean();
      pts.push_back({static_cast<long long>(d + p + 1), th, mc});
      th_rand.push_back(th);
      mc_rand.push_back(mc);
    }
    nlohmann::ordered_json js;
    js["sigma2"] = s2;
    js["kappa"] = kappa;
    js["df2_margin"] = margin;
    js["in_regime"] = in_regime;
    js["spearman_shell_points"] = spearman(th_shell, mc_shell);
    if (n_rand >= 2) {
      js["spearman_random_points"] = spearman(th_rand, mc_rand);
      js["pearson_random_points"] = pearson(th_rand, mc_rand);
    }
    sigma_summary.push_back(js);
  }
  rep.summary["experiment"] = "denoiser_split";
  rep.summary["theory"] = {{"gain", "expected_denoiser_gain"}, {"variance", "denoiser_variance"},
                           {"mse", "2 x denoiser_variance"}, {"points", "diamond(x - mu, kappa)"}};
  rep.summary["dimension"] = d;
  rep.summary["n_samples"] = config.n_samples;
  rep.summary["n_trials"] = config.n_trials;
  rep.summary["gamma"] = gamma;
  rep.summary["seed"] = config.seed;
  rep.summary["shell_modes_1based"] = [&] {
    std::vector<std::size_t> v;
    for (auto j : shells) v.push_back(j + 1);
    return v;
  }();
  rep.summary["point_ids"] = {{"shell", "1.." + std::to_string(d)},
                              {"random_noised", n_rand ? std::to_string(d + 1) + ".." + std::to_string(d + n_rand) : ""}};
  rep.summary["mse_normalization"] = "per coordinate (divided by d)";
  rep.summary["out_of_regime"] = any_out_of_regime;
  rep.summary["per_sigma"] = sigma_summary;
  rep.summary["runtime_seconds"] = detail::elapsed_seconds(start);
  return rep;
}

/// Fixed xbar seeds shared by every trial of a sampling experiment.
inline Matrix xbar_seeds(std::size_t d, long long count, std::uint64_t master) {
  Rng rng(sub_seed(master, detail::kXbarStream));
  std::normal_distribution<double> normal;
  Matrix x(d, count);
  for (long long s = 0; s < count; ++s)
    for (std::size_t k = 0; k < d; ++k) x(k, s) = normal(rng);
  return x;
}

namespace detail {

/// Spectral function of the sampling operator, in xbar units.
inline Vector sampling_profile(const EigenDecomposition& eig, const ExperimentConfig& c) {
  if (c.sampling_operator == SamplingOperator::sqrt_map) return eig.eigenvalues.cwiseMax(0.0).cwiseSqrt();
  return c.sigma_T * wiener_scalings(eig, c.sigma_T, c.sigma_0);
}

/// Predicted Var[u_k^T Sigma_hat^{1/2} xbar] for every mode k at a fixed xbar.
inline std::vector<double> sampling_mode_variances(const SpectralMeasure& spec, long long n, const TensorGrid2D& grid,
                                                   const KappaGrid& ku, const KappaGrid& kv, std::span<const double> lam,
                                                   const std::vector<double>& xbar) {
  const ProbeCoefficients xb{xbar, ProbeKind::displacement_x};
  std::vector<CompensatedSum> acc(lam.size());
  for (std::size_t i = 0; i < ku.kappa.size(); ++i) {
    const double a = ku.kappa[i];
    for (std::size_t j = 0; j < kv.kappa.size(); ++j) {
      const double b = kv.kappa[j];
      const double margin = static_cast<double>(n) - df2_two(spec, a, b);
      if (!(margin > 0.0)) throw OutOfRegimeError("sampling_variance: n <= df2 on the grid", margin);
      const double c = grid.grid_u().weight(i) * grid.grid_v().weight(j) * a * b / margin * pentagon(xb, a, b, lam);
      for (std::size_t k = 0; k < lam.size(); ++k) acc[k] += c * lam[k] / ((lam[k] + a) * (lam[k] + b));
    }
  }
  std::vector<double> out(lam.size());
  for (std::size_t k = 0; k < lam.size(); ++k) out[k] = 4.0 / (std::numbers::pi * std::numbers::pi) * acc[k].value();
  return out;
}

}  // namespace detail

/// Sampling map experiment at fixed xbar seeds.
///
/// Tables:
///   gain              per-mode E[u_k^T M u_k] (M = Sigma_hat^{1/2}, or sigma_T W for the Wiener operator)
///   variance          per-mode Var[u_k^T M xbar], averaged over the xbar seeds
///   mse               per-mode cross-split E[(u_k^T (M_A - M_B) xbar)^2], averaged over seeds; theory 2 x variance
///   variance_cells    seed x mode cells (modes filtered by probe_modes)
///   points            per-seed cross-split MSE (/d) vs predicted MSE
inline ExperimentReport sampling_map_experiment(const ExperimentConfig& config) {
  validate_config(config);
  const auto start = std::chrono::steady_clock::now();
  const auto& pop = config.population;
  const auto d = static_cast<std::size_t>(pop.dimension());
  const Vector lam = pop.eigenvalues();
  const auto spec = detail::population_spectrum(pop);
  const auto lam_list = spec.expanded_eigenvalues();
  const double gamma = static_cast<double>(d) / static_cast<double>(config.n_samples);
  const auto trials = static_cast<std::size_t>(config.n_trials);
  const auto n_seeds = static_cast<std::size_t>(config.n_xbar_seeds);
  const Matrix xbar = xbar_seeds(d, config.n_xbar_seeds, config.seed);

  // Columns: d gains | seeds x d values | seeds x d squared diffs | seeds mses
  const std::size_t width = d + 2 * n_seeds * d + n_seeds;
  detail::TrialBuffer buf(trials, width);
  parallel_for(trials, [&](std::size_t t) {
    Rng rng_a(sub_seed(config.seed, t));
    Rng rng_b(sub_seed(config.seed, t, 1));
    const auto eig_a = eigendecompose(draw_covariance_eigen(lam, config.n_samples, rng_a, config.sampler));
    const auto eig_b = eigendecompose(draw_covariance_eigen(lam, config.n_samples, rng_b, config.sampler));
    const Matrix ma = detail::spectral_operator(eig_a, detail::sampling_profile(eig_a, config));
    const Matrix mb = detail::spectral_operator(eig_b, detail::sampling_profile(eig_b, config));
    const Matrix ya = ma * xbar;
    const Matrix dy = ya - mb * xbar;
    double* out = buf.row(t);
    for (std::size_t k = 0; k < d; ++k) out[k] = ma(k, k);
    out += d;
    for (std::size_t s = 0; s < n_seeds; ++s, out += d)
      for (std::size_t k = 0; k < d; ++k) out[k] = ya(k, s);
    for (std::size_t s = 0; s < n_seeds; ++s, out += d)
      for (std::size_t k = 0; k < d; ++k) out[k] = dy(k, s) * dy(k, s);
    for (std::size_t s = 0; s < n_seeds; ++s) out[s] = dy.col(s).squaredNorm() / static_cast<double>(d);
  });

  ExperimentReport rep;
  const auto grid1 = halfline_grid(config.nodes1d);
  const auto grid2 = halfline_grid_2d(config.nodes2d);
  const KappaGrid k1(spec, gamma, grid1);
  const KappaGrid k2(spec, gamma, grid2.grid_u());
  const bool wiener = config.sampling_operator == SamplingOperator::wiener;

  auto& gain = rep.mode_tables["gain"];
  for (std::size_t k = 0; k < d; ++k) {
    double th;
    if (wiener) {
      th = config.sigma_T * half_resolvent_expected_gain(spec, gamma, config.sigma_T * config.sigma_T, lam[k], grid2);
    } else {
      CompensatedSum acc;
      for (std::size_t i = 0; i < grid1.size(); ++i) acc += grid1.weight(i) * lam[k] / (lam[k] + k1.kappa[i]);
      th = 2.0 / std::numbers::pi * acc.value();
    }
    const auto m = buf.moments(k, trials);
    gain.push_back({static_cast<long long>(k + 1), lam[k], th, m.mean(), m.mean_se(), config.n_trials});
  }

  bool out_of_regime = false;
  std::vector<std::vector<double>> theory(n_seeds);
  for (std::size_t s = 0; s < n_seeds; ++s) {
    std::vector<double> xs(xbar.col(s).data(), xbar.col(s).data() + d);
    try {
      theory[s] = detail::sampling_mode_variances(spec, config.n_samples, grid2, k2, k2, lam_list, xs);
    } catch (const OutOfRegimeError&) {
      out_of_regime = true;
      theory[s].assign(d, std::numeric_limits<double>::quiet_NaN());
    }
  }

  auto& var = rep.mode_tables["variance"];
  auto& mse = rep.mode_tables["mse"];
  for (std::size_t k = 0; k < d; ++k) {
    double th = 0.0, mc_v = 0.0, se_v = 0.0, mc_m = 0.0, se_m = 0.0;
    for (std::size_t s = 0; s < n_seeds; ++s) {
      th += theory[s][k];
      const auto mv = buf.moments(d + s * d + k, trials);
      const auto mm = buf.moments(d + (n_seeds + s) * d + k, trials);
      mc_v += mv.variance();
      se_v += mv.variance_se() * mv.variance_se();
      mc_m += mm.mean();
      se_m += mm.mean_se() * mm.mean_se();
    }
    const double ns = static_cast<double>(n_seeds);
    var.push_back({static_cast<long long>(k + 1), lam[k], th / ns, mc_v / ns, std::sqrt(se_v) / ns, config.n_trials});
    mse.push_back({static_cast<long long>(k + 1), lam[k], 2.0 * th / ns, mc_m / ns, std::sqrt(se_m) / ns, config.n_trials});
  }

  Table cells{{"seed", "mode", "lambda", "theory", "mc", "mc_se", "n_trials"}, {}};
  for (std::size_t s = 0; s < n_seeds; ++s)
    for (auto k : detail::modes_or_all(config.probe_modes, d)) {
      const auto mv = buf.moments(d + s * d + k, trials);
      cells.rows.push_back({std::to_string(s + 1), std::to_string(k + 1), format_real(lam[k]), format_real(theory[s][k]),
                            format_real(mv.variance()), format_real(mv.variance_se()), std::to_string(config.n_trials)});
    }
  rep.tables["variance_cells"] = std::move(cells);

  auto& pts = rep.point_tables["points"];
  std::vector<double> th_p, mc_p;
  for (std::size_t s = 0; s < n_seeds; ++s) {
    double th = 0.0;
    for (double v : theory[s]) th += v;
    th *= 2.0 / static_cast<double>(d);
    const double mc = buf.moments(d + 2 * n_seeds * d + s, trials).mean();
    pts.push_back({static_cast<long long>(s + 1), th, mc});
    th_p.push_back(th);
    mc_p.push_back(mc);
  }

  rep.summary["experiment"] = "sampling_map";
  rep.summary["operator"] = wiener ? "wiener (sigma_T * W, xbar units)" : "sqrt (Sigma_hat^{1/2})";
  rep.summary["theory"] = {{"gain", wiener ? "sigma_T * half_resolvent_expected_gain(sigma_T^2)" : "sampling_gain_expected"},
                           {"variance", "sampling_variance (large sigma_T)"},
                           {"points", "2/d * sum_k sampling_variance(u_k, xbar)"}};
  rep.summary["dimension"] = d;
  rep.summary["n_samples"] = config.n_samples;
  rep.summary["n_trials"] = config.n_trials;
  rep.summary["gamma"] = gamma;
  rep.summary["seed"] = config.seed;
  rep.summary["sigma_T"] = config.sigma_T;
  rep.summary["sigma_0"] = wiener ? config.sigma_0 : 0.0;
  rep.summary["n_xbar_seeds"] = config.n_xbar_seeds;
  rep.summary["nodes1d"] = config.nodes1d;
  rep.summary["nodes2d"] = config.nodes2d;
  rep.summary["out_of_regime"] = out_of_regime;
  if (n_seeds >= 2 && !out_of_regime) rep.summary["spearman_points"] = spearman(th_p, mc_p);
  rep.summary["runtime_seconds"] = detail::elapsed_seconds(start);
  return rep;
}

struct BandResult {
  std::string band;
  long long n = 0;
  double mse = 0.0, mse_se = 0.0, theory = 0.0;
};

/// Cross-split sampling MSE per eigenband as a function of n. Each trial
/// uses a fresh xbar, so the theory is the xbar-averaged mode variance.
/// Bands are the top and bottom `fraction` of modes.
inline std::vector<BandResult> band_scaling_experiment(const ExperimentConfig& base, const std::vector<long long>& n_values,
                                                      double fraction = 0.25) {
  detail::require(!n_values.empty(), "band scaling: need at least one n");
  detail::require(fraction > 0.0 && fraction <= 0.5, "band scaling: fraction must be in (0, 0.5]");
  const auto d = static_cast<std::size_t>(base.population.dimension());
  const auto width = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(fraction * static_cast<double>(d))));
  const Vector lam = base.population.eigenvalues();
  const auto spec = detail::population_spectrum(base.population);
  std::vector<BandResult> out;
  for (long long n : n_values) {
    ExperimentConfig c = base;
    c.n_samples = n;
    validate_config(c);
    const auto trials = static_cast<std::size_t>(c.n_trials);
    detail::TrialBuffer buf(trials, 2);
    parallel_for(trials, [&](std::size_t t) {
      Rng rng_a(sub_seed(c.seed, t));
      Rng rng_b(sub_seed(c.seed, t, 1));
      Rng rng_x(sub_seed(c.seed, t, 2));
      const auto eig_a = eigendecompose(draw_covariance_eigen(lam, n, rng_a, c.sampler));
      const auto eig_b = eigendecompose(draw_covariance_eigen(lam, n, rng_b, c.sampler));
      std::normal_distribution<double> normal;
      Vector xb(static_cast<Eigen::Index>(d));
      for (std::size_t k = 0; k < d; ++k) xb[k] = normal(rng_x);
      const Matrix diff = detail::spectral_operator(eig_a, detail::sampling_profile(eig_a, c)) -
                          detail::spectral_operator(eig_b, detail::sampling_profile(eig_b, c));
      const Vector dy = diff * xb;
      double top = 0.0, bottom = 0.0;
      for (std::size_t k = 0; k < width; ++k) {
        top += dy[k] * dy[k];
        bottom += dy[d - 1 - k] * dy[d - 1 - k];
      }
      buf.row(t)[0] = top / static_cast<double>(width);
      buf.row(t)[1] = bottom / static_cast<double>(width);
    });
    double th_top = std::numeric_limits<double>::quiet_NaN(), th_bottom = th_top;
    try {
      const SamplingPredictor pred(spec, static_cast<double>(d) / static_cast<double>(n), n, halfline_grid(c.nodes1d),
                                   halfline_grid_2d(c.nodes2d));
      th_top = th_bottom = 0.0;
      for (std::size_t k = 0; k < width; ++k) {
        th_top += 2.0 * pred.mode_variance_marginal(lam[k]);
        th_bottom += 2.0 * pred.mode_variance_marginal(lam[d - 1 - k]);
      }
      th_top /= static_cast<double>(width);
      th_bottom /= static_cast<double>(width);
    } catch (const OutOfRegimeError&) {
    }
    const auto mt = buf.moments(0, trials), mb = buf.moments(1, trials);
    out.push_back({"top", n, mt.mean(), mt.mean_se(), th_top});
    out.push_back({"bottom", n, mb.mean(), mb.mean_se(), th_bottom});
  }
  return out;
}

enum class SplitMode { top, mid, bottom, top_plus_bottom, random_halves };

struct SplitResult {
  Matrix subset;
  Matrix reference;
  std::vector<std::size_t> subset_index;
  std::vector<std::size_t> reference_index;
};

/// Rank samples by their projection on u_pc and take a stratified subset,
/// plus a random reference subset of the same size disjoint from it.
inline SplitResult stratified_split(const Matrix& samples, const PopulationModel& population, std::size_t pc_index,
                                    SplitMode mode, std::size_t subset_size, std::uint64_t seed = 0) {
  const auto n = static_cast<std::size_t>(samples.rows());
  detail::require(samples.cols() == population.dimension(), "stratified_split: dimension mismatch");
  detail::require(pc_index < static_cast<std::size_t>(population.dimension()), "stratified_split: pc_index out of range");
  detail::require(subset_size >= 1 && 2 * subset_size <= n, "stratified_split: need 2 * subset_size <= n");

  const Vector proj = (samples.rowwise() - population.mean().transpose()) * population.mode(pc_index);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return proj[a] > proj[b]; });

  Rng rng(seed);
  std::vector<std::size_t> chosen;
  switch (mode) {
    case SplitMode::top:
      chosen.assign(order.begin(), order.begin() + subset_size);
      break;
    case SplitMode::bottom:
      chosen.assign(order.end() - subset_size, order.end());
      break;
    case SplitMode::mid: {
      const std::size_t first = (n - subset_size) / 2;
      chosen.assign(order.begin() + first, order.begin() + first + subset_size);
      break;
    }
    case SplitMode::top_plus_bottom: {
      const std::size_t hi = (subset_size + 1) / 2, lo = subset_size - hi;
      for (std::size_t i = 0; i < hi || i < lo; ++i) {
        if (i < hi) chosen.push_back(order[i]);
        if (i < lo) chosen.push_back(order[n - 1 - i]);
      }
      break;
    }
    case SplitMode::random_halves: {
      std::vector<std::size_t> perm(n);
      std::iota(perm.begin(), perm.end(), 0);
      std::shuffle(perm.begin(), perm.end(), rng);
      chosen.assign(perm.begin(), perm.begin() + subset_size);
      break;
    }
  }
  std::vector<char> used(n, 0);
  for (auto i : chosen) used[i] = 1;
  std::vector<std::size_t> rest;
  for (std::size_t i = 0; i < n; ++i)
    if (!used[i]) rest.push_back(i);
  std::shuffle(rest.begin(), rest.end(), rng);
  rest.resize(subset_size);

  SplitResult r;
  r.subset_index = chosen;
  r.reference_index = rest;
  r.subset.resize(static_cast<Eigen::Index>(subset_size), samples.cols());
  r.reference.resize(static_cast<Eigen::Index>(subset_size), samples.cols());
  for (std::size_t i = 0; i < subset_size; ++i) {
    r.subset.row(static_cast<Eigen::Index>(i)) = samples.row(static_cast<Eigen::Index>(chosen[i]));
    r.reference.row(static_cast<Eigen::Index>(i)) = samples.row(static_cast<Eigen::Index>(rest[i]));
  }
  return r;
}

/// Mean over pairs of ||a_i - b_i||^2 / d; vectors are the columns.
inline double mse_pairwise(const Matrix& a, const Matrix& b) {
  detail::require(a.rows() == b.rows() && a.cols() == b.cols() && a.size() > 0, "mse_pairwise: shape mismatch");
  return (a - b).colwise().squaredNorm().mean() / static_cast<double>(a.rows());
}

inline const std::vector<std::string>& counterfactual_labels() {
  static const std::vector<std::string> labels{"top", "mid", "bottom", "top_plus_bottom", "split1", "split2"};
  return labels;
}

struct CounterfactualOptions {
  long long subset_size = 0;  // 0: n / 4
  long long n_xbar = 64;
};

/// Linear sampling maps fitted on PC-stratified subsets and on two random
/// subsets (all of equal size, sample-mean centering), compared pairwise on
/// shared x_T = mu + sigma_T xbar.
///
/// Tables: matrix_seed<i> per master seed, and `matrix` averaged over seeds.
inline ExperimentReport counterfactual_experiment(const PopulationModel& population, long long n, std::size_t pc_index,
                                                  const std::vector<std::uint64_t>& seeds, double sigma_T, double sigma_0,
                                                  CounterfactualOptions opts = {}) {
  detail::require(!seeds.empty(), "counterfactual: need at least one seed");
  detail::require(n >= 8, "counterfactual: n must be >= 8");
  detail::require(std::isfinite(sigma_T) && sigma_T > 0.0, "counterfactual: sigma_T must be > 0");
  detail::require(std::isfinite(sigma_0) && sigma_0 >= 0.0 && sigma_0 <= sigma_T, "counterfactual: need 0 <= sigma_0 <= sigma_T");
  detail::require(opts.n_xbar >= 1, "counterfactual: need at least one xbar");
  const auto start = std::chrono::steady_clock::now();
  const auto d = static_cast<std::size_t>(population.dimension());
  const std::size_t m = opts.subset_size > 0 ? static_cast<std::size_t>(opts.subset_size) : static_cast<std::size_t>(n / 4);
  detail::require(m >= 1 && 2 * m <= static_cast<std::size_t>(n), "counterfactual: subset size too large for n");
  const auto& labels = counterfactual_labels();
  const std::size_t L = labels.size();

  ExperimentReport rep;
  std::vector<std::vector<double>> mean_matrix(L, std::vector<double>(L, 0.0));
  nlohmann::ordered_json per_seed = nlohmann::ordered_json::array();
  for (std::size_t si = 0; si < seeds.size(); ++si) {
    const std::uint64_t seed = seeds[si];
    const Matrix x = draw_dataset(population, n, sub_seed(seed, 0));
    std::vector<Matrix> subsets;
    subsets.push_back(stratified_split(x, population, pc_index, SplitMode::top, m, sub_seed(seed, 1)).subset);
    subsets.push_back(stratified_split(x, population, pc_index, SplitMode::mid, m, sub_seed(seed, 2)).subset);
    subsets.push_back(stratified_split(x, population, pc_index, SplitMode::bottom, m, sub_seed(seed, 3)).subset);
    subsets.push_back(stratified_split(x, population, pc_index, SplitMode::top_plus_bottom, m, sub_seed(seed, 4)).subset);
    auto halves = stratified_split(x, population, pc_index, SplitMode::random_halves, m, sub_seed(seed, 5));
    subsets.push_back(std::move(halves.subset));
    subsets.push_back(std::move(halves.reference));

    const Matrix xb = xbar_seeds(d, opts.n_xbar, seed);
    const Matrix x_T = (sigma_T * xb).colwise() + population.mean();
    std::vector<Matrix> outputs;
    for (const auto& sub : subsets) {
      const auto cov = empirical_covariance(sub, Centering::sample_mean);
      const auto eig = eigendecompose(cov);
      const Matrix w = wiener_matrix(eig, sigma_T, sigma_0);
      outputs.push_back((w * (x_T.colwise() - cov.center)).colwise() + cov.center);
    }
    Table t;
    t.header.push_back("label");
    for (const auto& l : labels) t.header.push_back(l);
    std::vector<std::vector<double>> mat(L, std::vector<double>(L, 0.0));
    for (std::size_t a = 0; a < L; ++a)
      for (std::size_t b = 0; b < L; ++b) mat[a][b] = a == b ? 0.0 : mse_pairwise(outputs[a], outputs[b]);
    std::size_t amax_a = 0, amax_b = 1, amin_a = 0, amin_b = 1;
    for (std::size_t a = 0; a < L; ++a) {
      std::vector<std::string> row{labels[a]};
      for (std::size_t b = 0; b < L; ++b) {
        row.push_back(format_real(mat[a][b]));
        mean_matrix[a][b] += mat[a][b] / static_cast<double>(seeds.size());
        if (a < b) {
          if (mat[a][b] > mat[amax_a][amax_b]) amax_a = a, amax_b = b;
          if (mat[a][b] < mat[amin_a][amin_b]) amin_a = a, amin_b = b;
        }
      }
      t.rows.push_back(std::move(row));
    }
    rep.tables["matrix_seed" + std::to_string(si + 1)] = std::move(t);
    per_seed.push_back({{"seed", seed},
                        {"max_pair", labels[amax_a] + "," + labels[amax_b]},
                        {"min_pair", labels[amin_a] + "," + labels[amin_b]}});
  }
  Table avg;
  avg.header.push_back("label");
  for (const auto& l : labels) avg.header.push_back(l);
  for (std::size_t a = 0; a < L; ++a) {
    std::vector<std::string> row{labels[a]};
    for (std::size_t b = 0; b < L; ++b) row.push_back(format_real(mean_matrix[a][b]));
    avg.rows.push_back(std::move(row));
  }
  rep.tables["matrix"] = std::move(avg);
  rep.summary["experiment"] = "counterfactual";
  rep.summary["dimension"] = d;
  rep.summary["n_samples"] = n;
  rep.summary["subset_size"] = m;
  rep.summary["pc_index_1based"] = pc_index + 1;
  rep.summary["sigma_T"] = sigma_T;
  rep.summary["sigma_0"] = sigma_0;
  rep.summary["n_xbar"] = opts.n_xbar;
  rep.summary["centering"] = "sample_mean";
  rep.summary["mse_normalization"] = "per coordinate (divided by d)";
  rep.summary["per_seed"] = per_seed;
  rep.summary["runtime_seconds"] = detail::elapsed_seconds(start);
  return rep;
}

/// (label_a, label_b) index pairs of the largest and smallest off-diagonal entries.
inline std::pair<std::pair<std::size_t, std::size_t>, std::pair<std::size_t, std::size_t>> matrix_extremes(const Table& t) {
  const std::size_t L = t.rows.size();
  std::pair<std::size_t, std::size_t> mx{0, 1}, mn{0, 1};
  auto val = [&](std::size_t a, std::size_t b) { return std::stod(t.rows[a][b + 1]); };
  for (std::size_t a = 0; a < L; ++a)
    for (std::size_t b = a + 1; b < L; ++b) {
      if (val(a, b) > val(mx.first, mx.second)) mx = {a, b};
      if (val(a, b) < val(mn.first, mn.second)) mn = {a, b};
    }
  return {mx, mn};
}

}  // namespace rmtdiff
