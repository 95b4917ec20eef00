#pragma once

// The acceptance suite: twelve numbered checks of the solver, the quadrature
// oracles and every prediction against the simulator. Shared by the
// `validate` subcommand and the acceptance test binary.
//
// Each check writes its data as CSV into the output directory. CSVs carry no
// timings, so two runs with the same seed must produce identical bytes.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "rmtdiff/detequiv.hpp"
#include "rmtdiff/kappa.hpp"
#include "rmtdiff/linalg.hpp"
#include "rmtdiff/montecarlo.hpp"
#include "rmtdiff/quadrature.hpp"
#include "rmtdiff/report.hpp"
#include "rmtdiff/spectrum.hpp"

namespace rmtdiff {

struct CriterionResult {
  int id = 0;
  std::string title;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
};

struct ValidationOptions {
  std::uint64_t seed = 20240611;
  long long nodes = 200;
  long long nodes2d = 120;
};

namespace validation {

using Clock = std::chrono::steady_clock;

inline std::string fmt(double x, int digits = 4) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.*g", digits, x);
  return buf;
}

inline std::string frac(int a, int b) { return std::to_string(a) + "/" + std::to_string(b); }

inline bool within_se(double mc, double theory, double se, double k = 3.0) { return std::abs(mc - theory) <= k * se; }

/// Random SPD matrix with eigenvalues log-uniform in [scale / cond, scale].
inline Matrix random_spd(Eigen::Index d, double cond, Rng& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const Matrix q = random_orthogonal(d, rng);
  Vector ev(d);
  for (Eigen::Index k = 0; k < d; ++k) ev[k] = scale * std::pow(cond, -u(rng));
  ev[0] = scale;
  ev[d - 1] = scale / cond;
  Matrix a = q * ev.asDiagonal() * q.transpose();
  return 0.5 * (a + a.transpose());
}

inline double rel_frobenius(const Matrix& a, const Matrix& b) { return (a - b).norm() / b.norm(); }

// 1. kappa solver against closed forms and on random instances.
inline CriterionResult c01(const ValidationOptions& o, const std::filesystem::path& dir) {
  const auto t0 = Clock::now();
  CriterionResult r{1, "kappa solver: closed-form roots, residual on 1000 random instances, < 5 s"};
  const auto iso = make_isotropic_spectrum(8);
  const double k1 = kappa_solve(iso, 1.0, 1.0).kappa;
  const double k2 = kappa_solve(iso, 2.0, 0.5).kappa;
  // Isotropic: kappa - z = gamma kappa / (1 + kappa)  =>  kappa^2 + (1 - z - gamma) kappa - z = 0.
  auto root = [](double g, double z) {
    const double b = 1.0 - z - g;
    return 0.5 * (-b + std::sqrt(b * b + 4.0 * z));
  };
  const double e1 = std::abs(k1 - root(1.0, 1.0)), e2 = std::abs(k2 - root(2.0, 0.5));

  Rng rng(sub_seed(o.seed, 101));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Table t{{"instance", "d", "gamma", "z", "kappa", "residual", "bound"}, {}};
  int ok = 0;
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const long long d = 1 + static_cast<long long>(u(rng) * 64);
    std::vector<double> lam(static_cast<std::size_t>(d));
    for (auto& l : lam) l = u(rng) < 0.1 ? 0.0 : std::pow(10.0, -4.0 + 6.0 * u(rng));
    if (std::all_of(lam.begin(), lam.end(), [](double l) { return l == 0.0; })) lam[0] = 1.0;
    const auto spec = spectrum_from_eigenvalues(lam);
    const double gamma = u(rng) < 0.05 ? 0.0 : std::pow(10.0, -2.0 + 3.0 * u(rng));
    const double z = std::pow(10.0, -8.0 + 16.0 * u(rng));
    const auto sol = kappa_solve(spec, gamma, z);
    const double bound = 1e-12 * std::max(1.0, sol.kappa);
    ok += sol.residual <= bound && sol.kappa >= z;
    worst = std::max(worst, sol.residual / bound);
    t.rows.push_back({std::to_string(i + 1), std::to_string(d), format_real(gamma), format_real(z), format_real(sol.kappa),
                      format_real(sol.residual), format_real(bound)});
  }
  write_table(dir / "validate_c01_random_instances.csv", t);
  Table cf{{"gamma", "z", "kappa", "closed_form"}, {}};
  cf.rows.push_back({"1", "1", format_real(k1), format_real(root(1.0, 1.0))});
  cf.rows.push_back({"2", "0.5", format_real(k2), format_real(root(2.0, 0.5))});
  write_table(dir / "validate_c01_closed_form.csv", cf);
  r.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
  r.passed = e1 <= 1e-10 && e2 <= 1e-10 && ok == 1000 && r.seconds < 5.0;
  r.detail = "kappa(1,1)=" + fmt(k1, 12) + " err " + fmt(e1, 2) + "; kappa(2,0.5)=" + fmt(k2, 12) + " err " + fmt(e2, 2) +
             "; residual ok " + frac(ok, 1000) + " (worst residual/bound " + fmt(worst, 3) + "); " + fmt(r.seconds, 3) + " s";
  return r;
}

// 2. Qualitative properties of kappa(z).
inline CriterionResult c02(const ValidationOptions&, const std::filesystem::path& dir) {
  const auto t0 = Clock::now();
  CriterionResult r{2, "kappa properties: kappa > z, monotone in z and gamma, kappa(1e8)/1e8 -> 1, gamma = 0 identity"};
  const auto spec = make_powerlaw_spectrum(64, 1.5, 1.0);
  const auto z = std::vector<double>{1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1, 1, 10, 100, 1e3, 1e4, 1e5, 1e6};
  const std::vector<double> gammas{0.1, 0.25, 0.5, 1.0, 2.0, 4.0};
  Table t{{"gamma", "z", "kappa"}, {}};
  bool above = true, mono_z = true, mono_g = true, identity = true;
  std::vector<std::vector<double>> grid;
  for (double g : gammas) {
    const auto sols = kappa_path(spec, g, z);
    std::vector<double> row;
    for (std::size_t i = 0; i < sols.size(); ++i) {
      above &= sols[i].kappa > z[i];
      if (i > 0) mono_z &= sols[i].kappa > sols[i - 1].kappa;
      row.push_back(sols[i].kappa);
      t.rows.push_back({format_real(g), format_real(z[i]), format_real(sols[i].kappa)});
    }
    if (!grid.empty())
      for (std::size_t i = 0; i < row.size(); ++i) mono_g &= row[i] > grid.back()[i];
    grid.push_back(row);
  }
  for (double zi : z) identity &= kappa_solve(spec, 0.0, zi).kappa == zi;
  double worst_ratio = 0.0;
  bool large_z = true;
  for (double g : gammas) {
    const double ratio = kappa_solve(spec, g, 1e8).kappa / 1e8;
    large_z &= ratio >= 1.0 && ratio <= 1.0 + 1e-3;
    worst_ratio = std::max(worst_ratio, ratio - 1.0);
    t.rows.push_back({format_real(g), "100000000", format_real(ratio * 1e8)});
  }
  write_table(dir / "validate_c02_kappa_grid.csv", t);
  r.passed = above && mono_z && mono_g && identity && large_z;
  r.detail = std::string("kappa>z ") + (above ? "yes" : "NO") + ", monotone z " + (mono_z ? "yes" : "NO") + ", monotone gamma " +
             (mono_g ? "yes" : "NO") + ", gamma=0 exact " + (identity ? "yes" : "NO") + ", max kappa(1e8)/1e8 - 1 = " +
             fmt(worst_ratio, 3);
  r.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
  return r;
}

// 3. Quadrature matrix functions against eigendecomposition.
inline CriterionResult c03(const ValidationOptions& o, const std::filesystem::path& dir) {
  const auto t0 = Clock::now();
  CriterionResult r{3, "matrix sqrt / half-resolvent quadrature vs eigendecomposition, resolvent identity, < 30 s"};
  Rng rng(sub_seed(o.seed, 103));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const auto g400 = halfline_grid(400);
  const auto g200 = halfline_grid_2d(200);
  Table t{{"matrix", "d", "condition", "z", "sqrt_rel_err", "half_resolvent_rel_err", "resolvent_identity_rel_err"}, {}};
  double worst_sqrt = 0.0, worst_half = 0.0, worst_res = 0.0;
  for (int m = 0; m < 50; ++m) {
    const auto d = static_cast<Eigen::Index>(2 + u(rng) * 31);
    const double cond = std::pow(10.0, 4.0 * u(rng));
    const double scale = std::pow(10.0, -1.0 + 2.0 * u(rng));
    const Matrix a = random_spd(d, cond, rng, scale);
    const auto eig = eigendecompose(a);
    const double e_sqrt = rel_frobenius(matrix_sqrt_quadrature(a, g400), matrix_sqrt(eig));
    const double z = 0.05 + u(rng);
    const Matrix ref = eig.apply([z](double l) { return std::sqrt(l / (l + z)); });
    const double e_half = rel_frobenius(half_resolvent_quadrature(a, z, g200), ref);
    const double s = 0.1 + u(rng), uu = s + 0.05 + u(rng);
    const Matrix rs = resolvent(a, s), ru = resolvent(a, uu);
    const double e_res = (rs * ru - (ru - rs) / (s - uu)).norm() / (rs * ru).norm();
    worst_sqrt = std::max(worst_sqrt, e_sqrt);
    worst_half = std::max(worst_half, e_half);
    worst_res = std::max(worst_res, e_res);
    t.rows.push_back({std::to_string(m + 1), std::to_string(d), format_real(cond), format_real(z), format_real(e_sqrt),
                      format_real(e_half), format_real(e_res)});
  }
  write_table(dir / "validate_c03_quadrature_oracles.csv", t);
  r.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
  r.passed = worst_sqrt <= 1e-6 && worst_half <= 1e-5 && worst_res <= 1e-10 && r.seconds < 30.0;
  r.detail = "worst sqrt err " + fmt(worst_sqrt, 3) + ", half-resolvent " + fmt(worst_half, 3) + ", resolvent identity " +
             fmt(worst_res, 3) + "; " + fmt(r.seconds, 3) + " s";
  return r;
}

inline ExperimentConfig base_config(const ValidationOptions& o, long long d, long long n, std::uint64_t stream) {
  const auto spec = make_powerlaw_spectrum(d, 1.5, 1.0);
  ExperimentConfig c{.population = make_population(spec, sub_seed(o.seed, stream, 7))};
  c.n_samples = n;
  c.seed = sub_seed(o.seed, stream);
  c.nodes1d = o.nodes;
  c.nodes2d = o.nodes2d;
  return c;
}

// 4 and 5 share one denoiser run.
inline std::vector<CriterionResult> c04_c05(const ValidationOptions& o, const std::filesystem::path& dir) {
  const auto t0 = Clock::now();
  auto cfg = base_config(o, 32, 64, 104);
  cfg.n_trials = 5000;
  cfg.sigma_grid = {0.1, 1.0, 10.0};
  cfg.shell_modes = {2};
  const auto rep = denoiser_split_experiment(cfg);
  const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
  write_report(rep, dir, "validate_c04_");

  CriterionResult r4{4, "denoiser expectation: MC shrink within 3 SE for >= 90% of (mode, sigma2) cells, < 3 min"};
  int ok = 0, total = 0;
  std::string per;
  for (std::size_t s = 0; s < cfg.sigma_grid.size(); ++s) {
    int ok_s = 0, tot_s = 0;
    for (const auto& row : rep.mode_tables.at("gain_s" + std::to_string(s + 1))) {
      ok_s += within_se(row.mc, row.theory, row.mc_se);
      ++tot_s;
    }
    ok += ok_s;
    total += tot_s;
    per += (s ? ", " : "") + std::string("sigma2=") + fmt(cfg.sigma_grid[s]) + ": " + frac(ok_s, tot_s);
  }
  r4.seconds = secs;
  r4.passed = ok >= 0.9 * total && secs < 180.0;
  r4.detail = frac(ok, total) + " cells (" + per + "); " + fmt(secs, 3) + " s";

  CriterionResult r5{5, "denoiser variance: probes u1,u8,u24 at x-mu = sqrt(sigma2+lambda_3) u_3; variance and cross-split MSE within 3 SE"};
  const std::vector<long long> probes{1, 8, 24};
  int ok_v = 0, ok_m = 0, cells = 0;
  for (std::size_t s = 0; s < cfg.sigma_grid.size(); ++s) {
    const std::string tag = "s" + std::to_string(s + 1) + "_x3";
    const auto& var = rep.mode_tables.at("variance_" + tag);
    const auto& mse = rep.mode_tables.at("mse_" + tag);
    for (long long p : probes) {
      const auto& v = var[static_cast<std::size_t>(p - 1)];
      const auto& m = mse[static_cast<std::size_t>(p - 1)];
      ok_v += within_se(v.mc, v.theory, v.mc_se);
      ok_m += within_se(m.mc, m.theory, m.mc_se);
      ++cells;
    }
  }
  r5.seconds = secs;
  r5.passed = ok_v >= 0.9 * cells && ok_m >= 0.9 * cells;
  r5.detail = "variance " + frac(ok_v, cells) + ", cross-split MSE vs 2x theory " + frac(ok_m, cells) + " cells";
  return {r4, r5};
}

// 6. Structure of chi, xi and the overall variance Delta.
inline CriterionResult c06(const ValidationOptions&, const std::filesystem::path& dir) {
  const auto t0 = Clock::now();
  CriterionResult r{6, "chi argmax = kappa with max 1/(4 kappa); xi monotone and < 1; Delta reassembly and 1/n decay"};
  Table t{{"check", "a", "b", "value", "reference"}, {}};
  bool argmax_ok = true, xi_ok = true, delta_ok = true, decay_ok = true;
  double worst_arg = 0.0, worst_max = 0.0, worst_delta = 0.0, worst_decay = 0.0;
  for (double kappa : {0.05, 0.7, 1.0, 3.3}) {
    // Coarse log grid, then repeated local refinement down to 1e-6 relative spacing.
    double lo = kappa / 100.0, hi = kappa * 100.0, best = lo;
    for (int pass = 0; pass < 12; ++pass) {
      const int m = 200;
      double bv = -1.0;
      for (int i = 0; i <= m; ++i) {
        const double l = lo * std::pow(hi / lo, static_cast<double>(i) / m);
        if (chi(l, kappa) > bv) bv = chi(l, kappa), best = l;
      }
      const double step = std::pow(hi / lo, 1.0 / m);
      lo = best / step;
      hi = best * step;
      if (step - 1.0 < 1e-6) break;
    }
    const double resolution = (hi - lo) / 2.0;
    const double err_arg = std::abs(best - kappa);
    const double err_max = std::abs(chi(best, kappa) - 1.0 / (4.0 * kappa)) * 4.0 * kappa;
    argmax_ok &= err_arg <= std::max(resolution, 1e-6 * kappa) && err_max <= 1e-10;
    worst_arg = std::max(worst_arg, err_arg / kappa);
    worst_max = std::max(worst_max, err_max);
    t.rows.push_back({"chi_argmax", format_real(kappa), format_real(resolution), format_real(best), format_real(kappa)});
  }
  const auto spec = make_powerlaw_spectrum(32, 1.5, 1.0);
  for (double gamma : {0.25, 0.5, 2.0}) {
    for (double s2 : {0.01, 0.1, 1.0, 10.0}) {
      const double kappa = kappa_solve(spec, gamma, s2).kappa;
      double prev = -1.0;
      for (int i = 0; i <= 400; ++i) {
        const double l = 1e-6 * std::pow(1e12, i / 400.0);
        const double x = xi(l, s2, kappa);
        xi_ok &= x > prev && x < 1.0;
        prev = x;
      }
      t.rows.push_back({"xi_sup", format_real(gamma), format_real(s2), format_real(prev), "1"});
    }
  }
  const auto lam = spec.expanded_eigenvalues();
  const double d = static_cast<double>(lam.size());
  for (double s2 : {0.1, 1.0, 10.0}) {
    for (long long n : {32LL, 64LL, 256LL, 4096LL}) {
      const double gamma = d / static_cast<double>(n);
      const double kappa = kappa_solve(spec, gamma, s2).kappa;
      const double delta = denoiser_variance_marginal(spec, gamma, n, s2);
      double tr_chi = 0.0, tr_xi = 0.0, d2 = 0.0;
      for (double l : lam) {
        tr_chi += l / ((l + kappa) * (l + kappa));
        tr_xi += (s2 + l) * l / ((l + kappa) * (l + kappa));
        d2 += l * l / ((l + kappa) * (l + kappa));
      }
      const double ref = kappa * kappa / (static_cast<double>(n) - d2) * tr_chi * tr_xi;
      const double err = std::abs(delta - ref) / ref;
      delta_ok &= err <= 1e-10;
      worst_delta = std::max(worst_delta, err);
      t.rows.push_back({"delta_reassembly", format_real(s2), std::to_string(n), format_real(delta), format_real(ref)});
    }
    const long long n = 100000LL * static_cast<long long>(d);
    const double ratio = denoiser_variance_marginal(spec, d / (2.0 * n), 2 * n, s2) / denoiser_variance_marginal(spec, d / n, n, s2);
    decay_ok &= std::abs(ratio - 0.5) <= 0.01;
    worst_decay = std::max(worst_decay, std::abs(ratio - 0.5) / 0.5);
    t.rows.push_back({"delta_halving", format_real(s2), std::to_string(n), format_real(ratio), "0.5"});
  }
  write_table(dir / "validate_c06_structure.csv", t);
  r.passed = argmax_ok && xi_ok && delta_ok && decay_ok;
  r.detail = "chi argmax rel err " + fmt(worst_arg, 2) + ", max-value err " + fmt(worst_max, 2) + "; xi monotone<1 " +
             (xi_ok ? "yes" : "NO") + "; Delta reassembly err " + fmt(worst_delta, 2) + "; Delta(2n)/Delta(n) off 1/2 by " +
             fmt(100 * worst_decay, 3) + "%";
  r.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
  return r;
}

// 7 and 8 share one sampling-map run (large-sigma_T operator Sigma_hat^{1/2}).
inline std::vector<CriterionResult> c07_c08(const ValidationOptions& o, const std::filesystem::path& dir) {
  const auto t0 = Clock::now();
  auto cfg = base_config(o, 32, 64, 107);
  cfg.n_trials = 2000;
  cfg.n_xbar_seeds = 5;
  cfg.sampling_operator = SamplingOperator::sqrt_map;
  cfg.probe_modes = {0, 7, 23};
  const auto rep = sampling_map_experiment(cfg);
  const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
  write_report(rep, dir, "validate_c07_");

  const auto spec = make_powerlaw_spectrum(32, 1.5, 1.0);
  const auto grid = halfline_grid(o.nodes);
  CriterionResult r7{7, "sampling-map expectation: MC gain within 3 SE for >= 90% of modes; gamma=0 gives sqrt(lambda); overshrinkage; < 3 min"};
  int ok = 0, total = 0;
  bool overshrink = true;
  double worst_pop = 0.0;
  Table t{{"mode", "lambda", "gain_gamma0", "sqrt_lambda", "gain_gamma"}, {}};
  for (const auto& row : rep.mode_tables.at("gain")) {
    ok += within_se(row.mc, row.theory, row.mc_se);
    ++total;
    const double g0 = sampling_gain_expected(spec, 0.0, row.lambda, grid);
    worst_pop = std::max(worst_pop, std::abs(g0 - std::sqrt(row.lambda)));
    if (row.lambda > 0) overshrink &= row.theory < std::sqrt(row.lambda);
    t.rows.push_back({std::to_string(row.mode), format_real(row.lambda), format_real(g0), format_real(std::sqrt(row.lambda)),
                      format_real(row.theory)});
  }
  write_table(dir / "validate_c07_population_limit.csv", t);
  r7.seconds = secs;
  r7.passed = ok >= 0.9 * total && worst_pop <= 1e-6 && overshrink && secs < 180.0;
  r7.detail = "gain " + frac(ok, total) + " modes; gamma=0 max |gain - sqrt(lambda)| " + fmt(worst_pop, 2) +
              "; overshrinkage " + (overshrink ? "all modes" : "VIOLATED") + "; " + fmt(secs, 3) + " s";

  CriterionResult r8{8, "sampling-map variance: 3 probes x 5 xbar seeds within 3 SE in >= 85% of cells; v<->xbar symmetry; decay in n"};
  int ok_c = 0, cells = 0;
  for (const auto& row : rep.tables.at("variance_cells").rows) {
    ok_c += within_se(std::stod(row[4]), std::stod(row[3]), std::stod(row[5]));
    ++cells;
  }
  // Informational: the same cells scored with the second Wick pairing
  // (v^T Sigma G G' xbar)^2 added inside the double integral.
  int ok_paired = 0;
  {
    const auto g2p = halfline_grid_2d(o.nodes2d);
    const KappaGrid ku(spec, 0.5, g2p.grid_u()), kv(spec, 0.5, g2p.grid_v());
    const Matrix xbp = xbar_seeds(32, cfg.n_xbar_seeds, cfg.seed);
    const auto lam = spec.expanded_eigenvalues();
    for (const auto& row : rep.tables.at("variance_cells").rows) {
      const auto s = std::stoul(row[0]) - 1, k = std::stoul(row[1]) - 1;
      const double lk = lam[k], xk = xbp(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(s));
      CompensatedSum extra;
      for (std::size_t i = 0; i < ku.kappa.size(); ++i)
        for (std::size_t j = 0; j < kv.kappa.size(); ++j) {
          const double a = ku.kappa[i], b = kv.kappa[j];
          const double q = lk * xk / ((lk + a) * (lk + b));
          extra += g2p.grid_u().weight(i) * g2p.grid_v().weight(j) * a * b / (64.0 - df2_two(spec, a, b)) * q * q;
        }
      const double paired = std::stod(row[3]) + 4.0 / (std::numbers::pi * std::numbers::pi) * extra.value();
      ok_paired += within_se(std::stod(row[4]), paired, std::stod(row[5]));
    }
  }
  // Symmetry on random, non-aligned probes.
  const auto g2 = halfline_grid_2d(o.nodes2d);
  Rng rng(sub_seed(o.seed, 108));
  std::normal_distribution<double> normal;
  double worst_sym = 0.0;
  for (int i = 0; i < 3; ++i) {
    ProbeCoefficients a{std::vector<double>(32)}, b{std::vector<double>(32)};
    for (auto& x : a.coeffs) x = normal(rng);
    for (auto& x : b.coeffs) x = normal(rng);
    const double ab = sampling_variance(spec, 0.5, 64, a, b, g2), ba = sampling_variance(spec, 0.5, 64, b, a, g2);
    worst_sym = std::max(worst_sym, std::abs(ab - ba) / std::abs(ab));
  }
  // Decay over n in {2d, 8d, 32d}: cell averages of theory and Monte Carlo.
  Table dt{{"n", "theory_mean_cell", "mc_mean_cell", "mc_se"}, {}};
  bool decay = true;
  double prev_th = std::numeric_limits<double>::infinity(), prev_mc = prev_th;
  for (long long n : {64LL, 256LL, 1024LL}) {
    auto c = cfg;
    c.n_samples = n;
    const auto rn = n == 64 ? rep : sampling_map_experiment(c);
    double th = 0.0, mc = 0.0, se2 = 0.0;
    const auto& rows = rn.tables.at("variance_cells").rows;
    for (const auto& row : rows) {
      th += std::stod(row[3]);
      mc += std::stod(row[4]);
      se2 += std::stod(row[5]) * std::stod(row[5]);
    }
    const double cnt = static_cast<double>(rows.size());
    th /= cnt;
    mc /= cnt;
    decay &= th < prev_th && mc < prev_mc;
    prev_th = th;
    prev_mc = mc;
    dt.rows.push_back({std::to_string(n), format_real(th), format_real(mc), format_real(std::sqrt(se2) / cnt)});
  }
  write_table(dir / "validate_c08_decay.csv", dt);
  r8.seconds = std::chrono::duration<double>(Clock::now() - t0).count() - secs;
  r8.passed = ok_c >= 0.85 * cells && worst_sym <= 1e-12 && decay;
  r8.detail = "cells " + frac(ok_c, cells) + "; symmetry rel err " + fmt(worst_sym, 2) + "; strictly decreasing over n=64,256,1024 " +
              (decay ? "yes" : "NO") + "; [info] with the second pairing term " + frac(ok_paired, cells) + " cells";
  return {r7, r8};
}

// 9. Rank correlation of diamond(x - mu) with cross-split denoiser MSE.
inline CriterionResult c09(const ValidationOptions& o, const std::filesystem::path& dir) {
  const auto t0 = Clock::now();
  CriterionResult r{9, "inhomogeneity: Spearman(diamond(x-mu), cross-split MSE) >= 0.9 over 500 noised points (d=64, n=1000, sigma2=1)"};
  auto cfg = base_config(o, 64, 1000, 109);
  cfg.n_trials = 400;
  cfg.sigma_grid = {1.0};
  cfg.shell_modes = {};
  cfg.n_probe_points = 500;
  auto rep = denoiser_split_experiment(cfg);
  // Keep only the random noised points (ids 65..564) for the criterion.
  std::vector<double> th, mc;
  for (const auto& p : rep.point_tables.at("points_s1"))
    if (p.point_id > 64) {
      th.push_back(p.theory_factor);
      mc.push_back(p.mse);
    }
  write_report(rep, dir, "validate_c09_");
  const double rho = spearman(th, mc);
  r.passed = rho >= 0.9;
  r.detail = "Spearman " + fmt(rho, 4) + ", Pearson " + fmt(pearson(th, mc), 4) + " over " + std::to_string(th.size()) + " points";
  r.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
  return r;
}

// 10. Band-wise decay of cross-split sampling MSE from n = 2d to 32d.
inline CriterionResult c10(const ValidationOptions& o, const std::filesystem::path& dir) {
  const auto t0 = Clock::now();
  CriterionResult r{10, "band scaling: top-band MSE decays by a larger factor than bottom band from n=2d to 32d, 3-SE separated"};
  auto cfg = base_config(o, 32, 64, 110);
  cfg.n_trials = 4000;
  cfg.sampling_operator = SamplingOperator::sqrt_map;
  const auto bands = band_scaling_experiment(cfg, {64, 256, 1024});
  Table t{{"band", "n", "mse", "mse_se", "theory"}, {}};
  for (const auto& b : bands)
    t.rows.push_back({b.band, std::to_string(b.n), format_real(b.mse), format_real(b.mse_se), format_real(b.theory)});
  write_table(dir / "validate_c10_bands.csv", t);
  auto ratio = [](const BandResult& a, const BandResult& b) {
    const double q = a.mse / b.mse;
    return std::pair{q, q * std::hypot(a.mse_se / a.mse, b.mse_se / b.mse)};
  };
  const auto [rt, st] = ratio(bands[0], bands[4]);
  const auto [rb, sb] = ratio(bands[1], bands[5]);
  const double sep = (rt - rb) / std::hypot(st, sb);
  r.passed = rt > rb && sep >= 3.0;
  r.detail = "decay top " + fmt(rt, 4) + " +- " + fmt(st, 2) + " vs bottom " + fmt(rb, 4) + " +- " + fmt(sb, 2) + " (separation " +
             fmt(sep, 3) + " SE); theory top " + fmt(bands[0].theory / bands[4].theory, 4) + " vs bottom " +
             fmt(bands[1].theory / bands[5].theory, 4);

  // Informational: the same comparison with n below d (theory only), where the band effect appears.
  try {
    const auto spec = make_powerlaw_spectrum(32, 2.0, 1.0);
    auto band_theory = [&](long long n) {
      const SamplingPredictor p(spec, 32.0 / static_cast<double>(n), n, halfline_grid(o.nodes), halfline_grid_2d(o.nodes2d));
      double top = 0.0, bottom = 0.0;
      for (int k = 0; k < 8; ++k) {
        top += p.mode_variance_marginal(spec.eigenvalues()[k]);
        bottom += p.mode_variance_marginal(spec.eigenvalues()[31 - k]);
      }
      return std::pair{top, bottom};
    };
    const auto a = band_theory(4), b = band_theory(64);
    r.detail += "; [info] theory n=4->64 (exp 2): top " + fmt(a.first / b.first, 4) + " vs bottom " + fmt(a.second / b.second, 4);
  } catch (const NumericalError&) {
  }
  r.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
  return r;
}

// 11. Counterfactual split matrix on three master seeds.
inline CriterionResult c11(const ValidationOptions& o, const std::filesystem::path& dir) {
  const auto t0 = Clock::now();
  CriterionResult r{11, "counterfactual: (top,bottom) is the max and (split1,split2) the min off-diagonal MSE, 3 seeds"};
  const auto spec = make_powerlaw_spectrum(32, 1.5, 1.0);
  const auto pop = make_population(spec, sub_seed(o.seed, 111, 7));
  const std::vector<std::uint64_t> seeds{sub_seed(o.seed, 111, 1), sub_seed(o.seed, 111, 2), sub_seed(o.seed, 111, 3)};
  const auto rep = counterfactual_experiment(pop, 1024, 1, seeds, 80.0, 0.002);
  write_report(rep, dir, "validate_c11_");
  const auto& labels = counterfactual_labels();
  int ok = 0;
  std::string per;
  for (std::size_t s = 0; s < seeds.size(); ++s) {
    const auto [mx, mn] = matrix_extremes(rep.tables.at("matrix_seed" + std::to_string(s + 1)));
    const bool good = labels[mx.first] == "top" && labels[mx.second] == "bottom" && labels[mn.first] == "split1" &&
                      labels[mn.second] == "split2";
    ok += good;
    per += (s ? "; " : "") + std::string("max ") + labels[mx.first] + "/" + labels[mx.second] + ", min " + labels[mn.first] + "/" +
           labels[mn.second];
  }
  r.passed = ok == static_cast<int>(seeds.size());
  r.detail = frac(ok, static_cast<int>(seeds.size())) + " seeds (" + per + ")";
  r.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
  return r;
}

inline std::vector<CriterionResult> run_once(const ValidationOptions& o, const std::filesystem::path& dir,
                                             const std::function<void(const CriterionResult&)>& on_result) {
  std::filesystem::create_directories(dir);
  std::vector<CriterionResult> out;
  auto push = [&](CriterionResult r) {
    if (on_result) on_result(r);
    out.push_back(std::move(r));
  };
  push(c01(o, dir));
  push(c02(o, dir));
  push(c03(o, dir));
  for (auto& r : c04_c05(o, dir)) push(r);
  push(c06(o, dir));
  for (auto& r : c07_c08(o, dir)) push(r);
  push(c09(o, dir));
  push(c10(o, dir));
  push(c11(o, dir));
  return out;
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Compare every CSV in `a` with its namesake in `b`.
inline std::pair<int, std::vector<std::string>> compare_csv_dirs(const std::filesystem::path& a, const std::filesystem::path& b) {
  int n = 0;
  std::vector<std::string> mismatched;
  for (const auto& e : std::filesystem::directory_iterator(a)) {
    if (e.path().extension() != ".csv") continue;
    ++n;
    const auto other = b / e.path().filename();
    if (!std::filesystem::exists(other) || read_file(e.path()) != read_file(other))
      mismatched.push_back(e.path().filename().string());
  }
  return {n, mismatched};
}

}  // namespace validation

/// Full suite: criteria 1-11 into `dir`, then a second run into dir/rerun whose
/// CSVs must match byte for byte (criterion 12).
inline std::vector<CriterionResult> run_validation(const ValidationOptions& o, const std::filesystem::path& dir,
                                                   const std::function<void(const CriterionResult&)>& on_result = {}) {
  auto results = validation::run_once(o, dir, on_result);
  const auto t0 = validation::Clock::now();
  const auto rerun = dir / "rerun";
  std::filesystem::remove_all(rerun);
  validation::run_once(o, rerun, {});
  const auto [count, bad] = validation::compare_csv_dirs(dir, rerun);
  CriterionResult r{12, "reproducibility: a second run with the same seed gives byte-identical CSVs"};
  r.passed = count > 0 && bad.empty();
  r.detail = std::to_string(count - static_cast<int>(bad.size())) + "/" + std::to_string(count) + " CSV files identical";
  if (!bad.empty()) r.detail += " (first mismatch: " + bad.front() + ")";
  else std::filesystem::remove_all(rerun);
  r.seconds = std::chrono::duration<double>(validation::Clock::now() - t0).count();
  if (on_result) on_result(r);
  results.push_back(r);

  nlohmann::ordered_json js = nlohmann::ordered_json::array();
  for (const auto& c : results)
    js.push_back({{"criterion", c.id}, {"title", c.title}, {"passed", c.passed}, {"detail", c.detail}, {"seconds", c.seconds}});
  write_text_file(dir / "validate_summary.json", js.dump(2) + "\n");
  return results;
}

}  // namespace rmtdiff
