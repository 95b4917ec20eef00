#pragma once

// Subcommand implementations behind the rmtdiff CLI. Each takes a validated
// RunConfig, writes CSV (and optionally SVG) files into the output directory
// and returns the paths written.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "rmtdiff/detequiv.hpp"
#include "rmtdiff/errors.hpp"
#include "rmtdiff/kappa.hpp"
#include "rmtdiff/linalg.hpp"
#include "rmtdiff/montecarlo.hpp"
#include "rmtdiff/report.hpp"
#include "rmtdiff/spectrum.hpp"
#include "rmtdiff/svg.hpp"

namespace rmtdiff {

struct RunConfig {
  std::string command;

  // Spectrum source: a generator ("powerlaw", "isotropic") or a CSV file.
  std::string spectrum;  // empty: powerlaw unless spectrum_file is set
  std::string spectrum_file;
  long long dimension = 32;
  double exponent = 1.5;
  double scale = 1.0;
  std::optional<std::uint64_t> basis_seed;  // random population eigenbasis when set

  std::uint64_t seed = 0;
  std::filesystem::path out_dir = "out";
  bool plots = false;
  long long nodes = 200;
  long long nodes2d = 120;

  // kappa-curve
  std::vector<double> gammas{0.0, 0.25, 0.5, 1.0, 2.0, 3.0};
  double z_min = 1e-4;
  double z_max = 1e4;
  long long z_points = 81;

  // Monte-Carlo settings shared by denoiser/sampling
  std::optional<long long> n_samples;  // default 2d
  std::optional<long long> n_trials;   // default 5000 (denoiser) / 2000 (sampling)
  std::vector<double> sigma2{0.1, 1.0, 10.0};
  std::vector<long long> probe_modes;  // 1-based; empty = all modes
  long long shell_mode = 3;            // 1-based
  long long probe_points = 200;
  std::string sampler = "auto";

  // denoiser
  std::vector<long long> delta_n;  // default d * {1, 2, 4, 8, 16, 32, 64}

  // sampling
  double sigma_T = 80.0;
  double sigma_0 = 0.002;
  std::string sampling_operator = "wiener";
  long long xbar_seeds = 5;
  std::vector<long long> band_n;  // default d * {2, 8, 32}
  std::optional<long long> band_trials;

  // counterfactual
  std::optional<long long> cf_n;  // default 32d
  long long pc = 2;               // 1-based
  std::vector<std::uint64_t> cf_seeds{1, 2, 3};
  long long cf_xbar = 64;
  long long cf_subset = 0;  // 0: n / 4
};

inline SpectralMeasure resolve_spectrum(const RunConfig& c, std::vector<std::string>* warnings = nullptr) {
  if (!c.spectrum_file.empty()) return load_spectrum(c.spectrum_file, warnings);
  if (c.spectrum == "isotropic") return make_isotropic_spectrum(c.dimension, c.scale);
  return make_powerlaw_spectrum(c.dimension, c.exponent, c.scale);
}

inline long long default_n(const RunConfig& c, const SpectralMeasure& spec) {
  return c.n_samples.value_or(2 * static_cast<long long>(spec.dimension()));
}

inline Sampler parse_sampler(const std::string& s) {
  if (s == "auto") return Sampler::automatic;
  if (s == "direct") return Sampler::direct;
  if (s == "wishart") return Sampler::wishart;
  throw InvalidArgument("unknown sampler '" + s + "' (auto, direct, wishart)");
}

inline SamplingOperator parse_operator(const std::string& s) {
  if (s == "wiener") return SamplingOperator::wiener;
  if (s == "sqrt") return SamplingOperator::sqrt_map;
  throw InvalidArgument("unknown sampling operator '" + s + "' (wiener, sqrt)");
}

/// All argument checks, run before any computation.
inline void validate_run_config(const RunConfig& c) {
  using detail::require;
  static const std::vector<std::string> commands{"kappa-curve", "denoiser", "sampling", "counterfactual", "validate"};
  require(std::find(commands.begin(), commands.end(), c.command) != commands.end(), "unknown command '" + c.command + "'");
  require(c.spectrum.empty() || c.spectrum == "powerlaw" || c.spectrum == "isotropic" || c.spectrum == "file",
          "spectrum must be powerlaw, isotropic or file");
  require(!(c.spectrum == "file" && c.spectrum_file.empty()), "spectrum=file needs spectrum_file");
  require(c.spectrum_file.empty() || c.spectrum.empty() || c.spectrum == "file",
          "give exactly one spectrum source (generator or file)");
  require(c.dimension >= 1, "dimension must be >= 1");
  require(std::isfinite(c.exponent) && c.exponent > 0.0, "exponent must be > 0");
  require(std::isfinite(c.scale) && c.scale > 0.0, "scale must be > 0");
  require(c.nodes >= 1 && c.nodes2d >= 1, "node counts must be >= 1");
  require(!c.out_dir.empty(), "output directory must be set");

  if (c.command == "kappa-curve") {
    require(!c.gammas.empty(), "need at least one gamma");
    for (double g : c.gammas) require(std::isfinite(g) && g >= 0.0, "gamma values must be >= 0");
    require(std::isfinite(c.z_min) && std::isfinite(c.z_max) && c.z_min > 0.0 && c.z_max >= c.z_min, "need 0 < z_min <= z_max");
    require(c.z_points >= 1, "z_points must be >= 1");
  }
  if (c.command == "denoiser" || c.command == "sampling") {
    if (c.n_samples) require(*c.n_samples >= 1, "n must be >= 1");
    if (c.n_trials) require(*c.n_trials >= 2, "n_trials must be >= 2");
    for (long long m : c.probe_modes) require(m >= 1, "probe modes are 1-based");
    parse_sampler(c.sampler);
  }
  if (c.command == "denoiser") {
    require(!c.sigma2.empty(), "need at least one sigma2");
    for (double s : c.sigma2) require(std::isfinite(s) && s > 0.0, "sigma2 values must be > 0");
    require(c.shell_mode >= 1, "shell mode is 1-based");
    require(c.probe_points >= 0, "probe_points must be >= 0");
    for (long long n : c.delta_n) require(n >= 1, "delta_n values must be >= 1");
  }
  if (c.command == "sampling" || c.command == "counterfactual") {
    require(std::isfinite(c.sigma_T) && c.sigma_T > 0.0, "sigma_T must be > 0");
    require(std::isfinite(c.sigma_0) && c.sigma_0 >= 0.0 && c.sigma_0 <= c.sigma_T, "need 0 <= sigma_0 <= sigma_T");
  }
  if (c.command == "sampling") {
    parse_operator(c.sampling_operator);
    require(c.xbar_seeds >= 1, "xbar_seeds must be >= 1");
    for (long long n : c.band_n) require(n >= 1, "band_n values must be >= 1");
    if (c.band_trials) require(*c.band_trials >= 2, "band_trials must be >= 2");
  }
  if (c.command == "counterfactual") {
    if (c.cf_n) require(*c.cf_n >= 8, "counterfactual n must be >= 8");
    require(c.pc >= 1, "pc is 1-based");
    require(!c.cf_seeds.empty(), "need at least one counterfactual seed");
    require(c.cf_xbar >= 1, "cf_xbar must be >= 1");
    require(c.cf_subset >= 0, "cf_subset must be >= 0");
  }
}

/// Check the spectrum-dependent bounds and prepare the output directory.
inline SpectralMeasure prepare_run(const RunConfig& c, std::vector<std::string>* warnings = nullptr) {
  validate_run_config(c);
  auto spec = resolve_spectrum(c, warnings);
  const auto d = static_cast<long long>(spec.dimension());
  for (long long m : c.probe_modes) detail::require(m <= d, "probe mode exceeds the dimension");
  if (c.command == "denoiser") detail::require(c.shell_mode <= d, "shell mode exceeds the dimension");
  if (c.command == "counterfactual") detail::require(c.pc <= d, "pc exceeds the dimension");
  if (c.command != "kappa-curve") spec.expanded_eigenvalues();  // the simulator needs one eigenvalue per coordinate
  std::error_code ec;
  std::filesystem::create_directories(c.out_dir, ec);
  if (ec || !std::filesystem::is_directory(c.out_dir))
    throw InvalidArgument("cannot create output directory '" + c.out_dir.string() + "'");
  const auto probe = c.out_dir / ".write_test";
  {
    std::ofstream t(probe);
    if (!t) throw InvalidArgument("output directory '" + c.out_dir.string() + "' is not writable");
  }
  std::filesystem::remove(probe);
  return spec;
}

inline std::vector<double> log_grid(double lo, double hi, long long points) {
  std::vector<double> z(static_cast<std::size_t>(points));
  if (points == 1) {
    z[0] = lo;
    return z;
  }
  const double a = std::log10(lo), b = std::log10(hi);
  for (long long i = 0; i < points; ++i) z[static_cast<std::size_t>(i)] = std::pow(10.0, a + (b - a) * static_cast<double>(i) / static_cast<double>(points - 1));
  return z;
}

inline std::vector<std::filesystem::path> cmd_kappa_curve(const RunConfig& c) {
  const auto spec = prepare_run(c);
  const auto z = log_grid(c.z_min, c.z_max, c.z_points);
  const auto csv = c.out_dir / "kappa_curve.csv";
  std::vector<svg::Series> series;
  {
    std::ofstream out(csv, std::ios::binary | std::ios::trunc);
    if (!out) throw InvalidArgument("cannot write '" + csv.string() + "'");
    try {
      out << "gamma,z,kappa,kappa_over_z\n";
      for (double g : c.gammas) {
        const auto sols = kappa_path(spec, g, z);
        svg::Series s{"gamma=" + format_real(g), {}, {}, false};
        for (const auto& sol : sols) {
          out << format_real(g) << ',' << format_real(sol.z) << ',' << format_real(sol.kappa) << ','
              << format_real(sol.kappa / sol.z) << '\n';
          s.x.push_back(sol.z);
          s.y.push_back(sol.kappa);
        }
        series.push_back(std::move(s));
      }
    } catch (...) {
      out.close();
      std::filesystem::remove(csv);
      throw;
    }
  }
  std::vector<std::filesystem::path> files{csv};
  if (c.plots) {
    const auto p = c.out_dir / "kappa_curve.svg";
    svg::write_plot(p, {"renormalized noise", "z", "kappa(z)", true, true}, series);
    files.push_back(p);
  }
  return files;
}

inline ExperimentConfig experiment_config(const RunConfig& c, const SpectralMeasure& spec, long long default_trials) {
  ExperimentConfig e{.population = make_population(spec, c.basis_seed)};
  e.n_samples = default_n(c, spec);
  e.n_trials = c.n_trials.value_or(default_trials);
  e.sigma_grid = c.sigma2;
  e.sigma_T = c.sigma_T;
  e.sigma_0 = c.sigma_0;
  for (long long m : c.probe_modes) e.probe_modes.push_back(static_cast<std::size_t>(m - 1));
  e.seed = c.seed;
  e.shell_modes = {static_cast<std::size_t>(c.shell_mode - 1)};
  e.n_probe_points = c.probe_points;
  e.n_xbar_seeds = c.xbar_seeds;
  e.sampler = parse_sampler(c.sampler);
  e.sampling_operator = parse_operator(c.sampling_operator);
  e.nodes1d = c.nodes;
  e.nodes2d = c.nodes2d;
  return e;
}

inline std::vector<std::filesystem::path> cmd_denoiser(const RunConfig& c) {
  const auto spec = prepare_run(c);
  const auto e = experiment_config(c, spec, 5000);
  auto rep = denoiser_split_experiment(e);
  const auto d = static_cast<long long>(spec.dimension());

  Table grid{{"index", "sigma2"}, {}};
  for (std::size_t s = 0; s < c.sigma2.size(); ++s) grid.rows.push_back({std::to_string(s + 1), format_real(c.sigma2[s])});
  rep.tables["sigma_grid"] = std::move(grid);

  std::vector<long long> ns = c.delta_n;
  if (ns.empty())
    for (long long f : {1, 2, 4, 8, 16, 32, 64}) ns.push_back(f * d);
  Table delta{{"n", "sigma2", "delta"}, {}};
  nlohmann::ordered_json skipped = nlohmann::ordered_json::array();
  for (double s2 : c.sigma2) {
    for (long long n : ns) {
      try {
        const double v = denoiser_variance_marginal(spec, static_cast<double>(d) / static_cast<double>(n), n, s2);
        delta.rows.push_back({std::to_string(n), format_real(s2), format_real(v)});
      } catch (const OutOfRegimeError&) {
        skipped.push_back({{"n", n}, {"sigma2", s2}});
      }
    }
  }
  rep.tables["delta_vs_n"] = std::move(delta);
  rep.summary["delta_vs_n_out_of_regime"] = skipped;
  rep.summary["theory"]["delta_vs_n"] = "denoiser_variance_marginal with gamma = d / n";

  auto files = write_report(rep, c.out_dir, "denoiser_");
  if (c.plots) {
    std::vector<svg::Series> gain;
    for (std::size_t s = 0; s < c.sigma2.size(); ++s) {
      auto ser = svg::mode_table_series(rep.mode_tables.at("gain_s" + std::to_string(s + 1)), "sigma2=" + format_real(c.sigma2[s]));
      gain.insert(gain.end(), ser.begin(), ser.end());
    }
    const auto p1 = c.out_dir / "denoiser_gain.svg";
    svg::write_plot(p1, {"denoiser shrinkage along eigenmodes", "lambda_k", "gain", true, false}, gain);
    const auto xs = "_x" + std::to_string(c.shell_mode);
    const auto p2 = c.out_dir / "denoiser_variance.svg";
    svg::write_plot(p2, {"denoiser variance along eigenmodes", "lambda_k", "variance", true, true},
                    svg::mode_table_series(rep.mode_tables.at("variance_s1" + xs), "sigma2=" + format_real(c.sigma2[0])));
    files.push_back(p1);
    files.push_back(p2);
  }
  return files;
}

inline std::vector<std::filesystem::path> cmd_sampling(const RunConfig& c) {
  const auto spec = prepare_run(c);
  const auto e = experiment_config(c, spec, 2000);
  auto rep = sampling_map_experiment(e);
  const auto d = static_cast<long long>(spec.dimension());
  const bool wiener = e.sampling_operator == SamplingOperator::wiener;

  if (wiener) {
    // Same diagonal in raw map units, against the population Wiener gain.
    std::vector<ModeRow> raw;
    for (const auto& r : rep.mode_tables.at("gain")) {
      const double l = std::max(r.lambda, kEigenClip);
      const double pop = std::sqrt((l + c.sigma_0 * c.sigma_0) / (l + c.sigma_T * c.sigma_T));
      raw.push_back({r.mode, r.lambda, pop, r.mc / c.sigma_T, r.mc_se / c.sigma_T, r.n_trials});
    }
    rep.mode_tables["map_gain"] = std::move(raw);
  }

  std::vector<long long> ns = c.band_n;
  if (ns.empty()) ns = {2 * d, 8 * d, 32 * d};
  ExperimentConfig be = e;
  be.n_trials = c.band_trials.value_or(e.n_trials);
  const auto bands = band_scaling_experiment(be, ns);
  Table bt{{"band", "n", "mse", "mse_se", "theory"}, {}};
  for (const auto& b : bands)
    bt.rows.push_back({b.band, std::to_string(b.n), format_real(b.mse), format_real(b.mse_se), format_real(b.theory)});
  rep.tables["bands"] = std::move(bt);
  if (bands.size() >= 4) {
    const auto& first_top = bands[0];
    const auto& first_bottom = bands[1];
    const auto& last_top = bands[bands.size() - 2];
    const auto& last_bottom = bands[bands.size() - 1];
    rep.summary["band_decay"] = {{"from_n", first_top.n},
                                 {"to_n", last_top.n},
                                 {"top", first_top.mse / last_top.mse},
                                 {"bottom", first_bottom.mse / last_bottom.mse},
                                 {"top_theory", first_top.theory / last_top.theory},
                                 {"bottom_theory", first_bottom.theory / last_bottom.theory}};
  }
  rep.summary["band_trials"] = be.n_trials;
  rep.summary["band_fraction"] = 0.25;

  auto files = write_report(rep, c.out_dir, "sampling_");
  if (c.plots) {
    const auto p1 = c.out_dir / "sampling_gain.svg";
    svg::write_plot(p1, {"sampling map gain along eigenmodes", "lambda_k", "gain", true, true},
                    svg::mode_table_series(rep.mode_tables.at("gain"), "gain"));
    std::vector<svg::Series> bs;
    for (const char* band : {"top", "bottom"}) {
      svg::Series mc{std::string(band) + " MC", {}, {}, false}, th{std::string(band) + " theory", {}, {}, true};
      for (const auto& b : bands)
        if (b.band == band) {
          mc.x.push_back(static_cast<double>(b.n));
          mc.y.push_back(b.mse);
          th.x.push_back(static_cast<double>(b.n));
          th.y.push_back(b.theory);
        }
      bs.push_back(mc);
      bs.push_back(th);
    }
    const auto p2 = c.out_dir / "sampling_bands.svg";
    svg::write_plot(p2, {"cross-split MSE by eigenband", "n", "MSE", true, true}, bs);
    files.push_back(p1);
    files.push_back(p2);
  }
  return files;
}

inline std::vector<std::filesystem::path> cmd_counterfactual(const RunConfig& c) {
  const auto spec = prepare_run(c);
  const auto pop = make_population(spec, c.basis_seed);
  const long long n = c.cf_n.value_or(32 * static_cast<long long>(spec.dimension()));
  auto rep = counterfactual_experiment(pop, n, static_cast<std::size_t>(c.pc - 1), c.cf_seeds, c.sigma_T, c.sigma_0,
                                       {c.cf_subset, c.cf_xbar});
  return write_report(rep, c.out_dir, "counterfactual_");
}

}  // namespace rmtdiff
