#pragma once

// Argument parsing for the rmtdiff tool. Kept in a header so tests can drive
// the full command line in-process.
//
// A --config file is INI: top-level keys set global options, and a section
// per subcommand ([denoiser], [sampling], ...) sets that subcommand's fields.
// Flags given on the command line override the file.

#include <CLI11.hpp>

#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include "rmtdiff/commands.hpp"
#include "rmtdiff/errors.hpp"
#include "rmtdiff/validation.hpp"

namespace rmtdiff {

enum ExitCode : int { exit_ok = 0, exit_criteria_failed = 1, exit_invalid = 2, exit_numerical = 3 };

namespace detail {

inline void add_spectrum_options(CLI::App* sub, RunConfig& c) {
  sub->add_option("--spectrum", c.spectrum, "powerlaw, isotropic or file")->check(CLI::IsMember({"powerlaw", "isotropic", "file"}));
  sub->add_option("--spectrum-file", c.spectrum_file, "CSV spectrum: rows 'eigenvalue[,weight]'");
  sub->add_option("--dimension,-d", c.dimension, "dimension for generated spectra");
  sub->add_option("--exponent", c.exponent, "power-law exponent: lambda_k = scale * k^-exponent");
  sub->add_option("--scale", c.scale, "spectrum scale (isotropic value)");
  sub->add_option("--basis-seed", c.basis_seed, "rotate the population eigenbasis with this seed");
}

inline void add_mc_options(CLI::App* sub, RunConfig& c) {
  sub->add_option("--n", c.n_samples, "samples per dataset (default 2d)");
  sub->add_option("--trials", c.n_trials, "dataset draws");
  sub->add_option("--probe-modes", c.probe_modes, "1-based modes to report (default all)")->delimiter(',');
  sub->add_option("--sampler", c.sampler, "auto, direct or wishart");
}

}  // namespace detail

/// Parse argv into `c`. Returns true when a subcommand should run; false for
/// --help (text already printed). CLI11 parse failures throw CLI::ParseError.
inline bool parse_command_line(int argc, const char* const* argv, RunConfig& c, std::ostream& out,
                               bool* seed_given = nullptr, bool* nodes_given = nullptr) {
  CLI::App app{"Random-matrix predictions for linear diffusion models, with Monte-Carlo checks", "rmtdiff"};
  app.require_subcommand(1);
  app.set_config("--config", "", "INI config file; flags override it");
  std::string out_dir = c.out_dir.string();
  app.add_option("--out,-o", out_dir, "output directory");
  auto* seed_opt = app.add_option("--seed", c.seed, "master seed");
  app.add_flag("--plots", c.plots, "also write SVG plots");
  auto* nodes_opt = app.add_option("--nodes", c.nodes, "1D quadrature nodes");
  app.add_option("--nodes2d", c.nodes2d, "2D quadrature nodes per axis");

  auto* kc = app.add_subcommand("kappa-curve", "kappa(z) on a log grid for several gammas")->fallthrough();
  detail::add_spectrum_options(kc, c);
  kc->add_option("--gammas", c.gammas, "comma-separated aspect ratios d/n")->delimiter(',');
  kc->add_option("--z-min", c.z_min);
  kc->add_option("--z-max", c.z_max);
  kc->add_option("--z-points", c.z_points);

  auto* dn = app.add_subcommand("denoiser", "denoiser gain, variance and inhomogeneity vs Monte Carlo")->fallthrough();
  detail::add_spectrum_options(dn, c);
  detail::add_mc_options(dn, c);
  dn->add_option("--sigma2", c.sigma2, "comma-separated noise variances")->delimiter(',');
  dn->add_option("--shell-mode", c.shell_mode, "1-based mode j of the probe point x - mu = sqrt(sigma2 + lambda_j) u_j");
  dn->add_option("--probe-points", c.probe_points, "random noised probe points");
  dn->add_option("--delta-n", c.delta_n, "n values for the overall-variance table")->delimiter(',');

  auto* sm = app.add_subcommand("sampling", "sampling-map gain, variance and band scaling vs Monte Carlo")->fallthrough();
  detail::add_spectrum_options(sm, c);
  detail::add_mc_options(sm, c);
  sm->add_option("--sigma-T", c.sigma_T, "initial noise scale");
  sm->add_option("--sigma-0", c.sigma_0, "final noise floor");
  sm->add_option("--operator", c.sampling_operator, "wiener or sqrt")->check(CLI::IsMember({"wiener", "sqrt"}));
  sm->add_option("--xbar-seeds", c.xbar_seeds, "fixed xbar probes");
  sm->add_option("--band-n", c.band_n, "n values for the band table")->delimiter(',');
  sm->add_option("--band-trials", c.band_trials, "draws per n in the band table");

  auto* cf = app.add_subcommand("counterfactual", "pairwise MSE between maps fit on PC-stratified splits")->fallthrough();
  detail::add_spectrum_options(cf, c);
  cf->add_option("--n", c.cf_n, "dataset size (default 32d)");
  cf->add_option("--pc", c.pc, "1-based principal component used for stratification");
  cf->add_option("--seeds", c.cf_seeds, "master seeds, one matrix each")->delimiter(',');
  cf->add_option("--xbar", c.cf_xbar, "shared x_T probes");
  cf->add_option("--subset", c.cf_subset, "subset size (default n/4)");
  cf->add_option("--sigma-T", c.sigma_T);
  cf->add_option("--sigma-0", c.sigma_0);

  app.add_subcommand("validate", "run the acceptance suite")->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return false;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return false;
  }
  c.out_dir = out_dir;
  if (seed_given) *seed_given = seed_opt->count() > 0;
  if (nodes_given) *nodes_given = nodes_opt->count() > 0;
  c.command = app.get_subcommands().front()->get_name();
  return true;
}

inline int run_validate(const RunConfig& c, bool seed_given, bool nodes_given, std::ostream& out) {
  ValidationOptions o;
  if (seed_given) o.seed = c.seed;
  if (nodes_given) o.nodes = c.nodes;
  std::filesystem::create_directories(c.out_dir);
  const auto results = run_validation(o, c.out_dir, [&out](const CriterionResult& r) {
    out << (r.passed ? "PASS" : "FAIL") << " criterion " << r.id << ": " << r.title << " | " << r.detail << std::endl;
  });
  bool all = true;
  for (const auto& r : results) all &= r.passed;
  return all ? exit_ok : exit_criteria_failed;
}

/// Full CLI: parse, dispatch, map errors onto exit codes.
inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  RunConfig c;
  try {
    bool seed_given = false, nodes_given = false;
    if (!parse_command_line(argc, argv, c, out, &seed_given, &nodes_given)) return exit_ok;
    std::vector<std::filesystem::path> files;
    if (c.command == "validate") return run_validate(c, seed_given, nodes_given, out);
    if (c.command == "kappa-curve") files = cmd_kappa_curve(c);
    else if (c.command == "denoiser") files = cmd_denoiser(c);
    else if (c.command == "sampling") files = cmd_sampling(c);
    else if (c.command == "counterfactual") files = cmd_counterfactual(c);
    for (const auto& f : files) out << f.string() << '\n';
    return exit_ok;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return exit_invalid;
  } catch (const InvalidArgument& e) {
    err << "error: " << e.what() << '\n';
    return exit_invalid;
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << '\n';
    return exit_numerical;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return exit_invalid;
  }
}

}  // namespace rmtdiff
