#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <regex>
#include <sstream>

#include "rmtdiff/cli.hpp"

using namespace rmtdiff;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const auto d = fs::temp_directory_path() / ("rmtdiff_cli_" + name);
  fs::remove_all(d);
  return d;
}

int run(std::vector<std::string> args, std::string* out_text = nullptr, std::string* err_text = nullptr) {
  args.insert(args.begin(), "rmtdiff");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  if (out_text) *out_text = out.str();
  if (err_text) *err_text = err.str();
  return code;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

double num(const std::string& s) { return std::stod(s); }

// Documented CSV schemas, keyed by file-name pattern.
const std::vector<std::pair<std::regex, std::vector<std::string>>>& schemas() {
  static const std::vector<std::pair<std::regex, std::vector<std::string>>> s{
      {std::regex("kappa_curve\\.csv"), {"gamma", "z", "kappa", "kappa_over_z"}},
      {std::regex("denoiser_(gain_s\\d+|variance_s\\d+_x\\d+|mse_s\\d+_x\\d+)\\.csv"), mode_table_header()},
      {std::regex("denoiser_points_s\\d+\\.csv"), point_table_header()},
      {std::regex("denoiser_sigma_grid\\.csv"), {"index", "sigma2"}},
      {std::regex("denoiser_delta_vs_n\\.csv"), {"n", "sigma2", "delta"}},
      {std::regex("sampling_(gain|map_gain|variance|mse)\\.csv"), mode_table_header()},
      {std::regex("sampling_points\\.csv"), point_table_header()},
      {std::regex("sampling_variance_cells\\.csv"), {"seed", "mode", "lambda", "theory", "mc", "mc_se", "n_trials"}},
      {std::regex("sampling_bands\\.csv"), {"band", "n", "mse", "mse_se", "theory"}},
      {std::regex("counterfactual_matrix(_seed\\d+)?\\.csv"),
       {"label", "top", "mid", "bottom", "top_plus_bottom", "split1", "split2"}},
  };
  return s;
}

// Every CSV in `dir` must match a schema, have rectangular rows and numeric
// cells (labels excepted) that parse completely.
void validate_csv_dir(const fs::path& dir) {
  int files = 0;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.path().extension() != ".csv") continue;
    ++files;
    const auto name = e.path().filename().string();
    const std::vector<std::string>* header = nullptr;
    for (const auto& [re, h] : schemas())
      if (std::regex_match(name, re)) header = &h;
    ASSERT_NE(header, nullptr) << "no schema for " << name;
    const auto t = read_csv(e.path());
    EXPECT_EQ(t.header, *header) << name;
    EXPECT_FALSE(t.rows.empty()) << name;
    for (const auto& row : t.rows) {
      ASSERT_EQ(row.size(), header->size()) << name;
      for (std::size_t c = 0; c < row.size(); ++c) {
        if ((*header)[c] == "label" || (*header)[c] == "band") continue;
        std::size_t used = 0;
        std::stod(row[c], &used);
        EXPECT_EQ(used, row[c].size()) << name << ": '" << row[c] << "'";
      }
    }
  }
  EXPECT_GT(files, 0);
}

}  // namespace

TEST(Cli, KappaCurveGoldenRatioAndOrdering) {
  const auto dir = fresh_dir("kc");
  ASSERT_EQ(run({"kappa-curve", "--spectrum", "isotropic", "-d", "8", "--gammas", "0,0.5,1,3", "--z-min", "0.01", "--z-max",
                 "100", "--z-points", "9", "--out", dir.string()}),
            0);
  const auto t = read_csv(dir / "kappa_curve.csv");
  ASSERT_EQ(t.rows.size(), 36u);
  std::map<std::pair<double, double>, double> k;
  bool saw_golden = false;
  for (const auto& r : t.rows) {
    k[{num(r[0]), num(r[1])}] = num(r[2]);
    if (num(r[0]) == 0.0) EXPECT_EQ(num(r[3]), 1.0);
    if (num(r[0]) == 1.0 && std::abs(num(r[1]) - 1.0) < 1e-12) {
      EXPECT_NEAR(num(r[2]), 1.6180339887, 1e-10);
      saw_golden = true;
    }
  }
  EXPECT_TRUE(saw_golden);
  for (const auto& [key, v] : k)
    if (key.first == 0.5) EXPECT_GT(k.at({3.0, key.second}), v);
  validate_csv_dir(dir);
  EXPECT_FALSE(fs::exists(dir / "kappa_curve.svg"));
}

TEST(Cli, KappaCurvePlotsAndFailureCleanup) {
  const auto dir = fresh_dir("kc_plot");
  ASSERT_EQ(run({"kappa-curve", "--plots", "--z-points", "5", "--out", dir.string()}), 0);
  EXPECT_NE(slurp(dir / "kappa_curve.svg").find("<svg"), std::string::npos);

  const auto bad = fresh_dir("kc_bad");
  std::string err;
  EXPECT_EQ(run({"kappa-curve", "--gammas", "1e300", "--z-min", "1e300", "--z-max", "1e300", "--z-points", "1", "--out",
                 bad.string()},
                nullptr, &err),
            3);
  EXPECT_NE(err.find("gamma="), std::string::npos);
  EXPECT_FALSE(fs::exists(bad / "kappa_curve.csv"));
}

TEST(Cli, ValidationErrorsExitTwoBeforeCompute) {
  const auto dir = fresh_dir("bad");
  EXPECT_EQ(run({"denoiser", "--trials", "0", "--out", dir.string()}), 2);
  EXPECT_FALSE(fs::exists(dir));
  EXPECT_EQ(run({"denoiser", "--sigma2", "-1", "--out", dir.string()}), 2);
  EXPECT_EQ(run({"denoiser", "--probe-modes", "99", "--out", dir.string()}), 2);
  EXPECT_EQ(run({"sampling", "--sigma-0", "100", "--out", dir.string()}), 2);
  EXPECT_EQ(run({"kappa-curve", "--z-min", "0", "--out", dir.string()}), 2);
  EXPECT_EQ(run({"kappa-curve", "--spectrum", "powerlaw", "--spectrum-file", "x.csv"}), 2);
  EXPECT_EQ(run({"kappa-curve", "--spectrum-file", "/nonexistent.csv", "--out", dir.string()}), 2);
  EXPECT_EQ(run({"kappa-curve", "--no-such-flag"}), 2);
  EXPECT_EQ(run({}), 2);
  EXPECT_EQ(run({"frobnicate"}), 2);
  std::string help;
  EXPECT_EQ(run({"--help"}, &help), 0);
  EXPECT_NE(help.find("kappa-curve"), std::string::npos);
}

TEST(Cli, DenoiserTables) {
  const auto dir = fresh_dir("dn");
  ASSERT_EQ(run({"denoiser", "-d", "16", "--trials", "200", "--sigma2", "0.1,1", "--probe-points", "20", "--out",
                 dir.string(), "--seed", "5"}),
            0);
  validate_csv_dir(dir);
  // Variance theory peaks at the mode whose eigenvalue is nearest kappa.
  const auto summary = nlohmann::json::parse(slurp(dir / "denoiser_summary.json"));
  for (int s = 1; s <= 2; ++s) {
    const double kappa = summary["per_sigma"][s - 1]["kappa"];
    const auto t = read_csv(dir / ("denoiser_variance_s" + std::to_string(s) + "_x3.csv"));
    std::size_t arg = 0, near = 0;
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
      if (num(t.rows[i][2]) > num(t.rows[arg][2])) arg = i;
      if (std::abs(num(t.rows[i][1]) - kappa) < std::abs(num(t.rows[near][1]) - kappa)) near = i;
    }
    EXPECT_EQ(arg, near);
  }
  const auto delta = read_csv(dir / "denoiser_delta_vs_n.csv");
  for (std::size_t i = 1; i < delta.rows.size(); ++i)
    if (delta.rows[i][1] == delta.rows[i - 1][1]) EXPECT_LT(num(delta.rows[i][2]), num(delta.rows[i - 1][2]));
}

TEST(Cli, SamplingIdentityAndOvershrinkage) {
  const auto id = fresh_dir("sm_id");
  ASSERT_EQ(run({"sampling", "-d", "8", "--trials", "20", "--band-trials", "20", "--sigma-T", "2", "--sigma-0", "2", "--out",
                 id.string()}),
            0);
  for (const auto& r : read_csv(id / "sampling_map_gain.csv").rows) EXPECT_NEAR(num(r[3]), 1.0, 1e-12);
  for (const auto& r : read_csv(id / "sampling_mse.csv").rows) EXPECT_LT(num(r[3]), 1e-20);

  const auto dir = fresh_dir("sm");
  ASSERT_EQ(run({"sampling", "-d", "16", "--trials", "400", "--band-trials", "100", "--operator", "sqrt", "--plots", "--out",
                 dir.string()}),
            0);
  validate_csv_dir(dir);
  for (const auto& r : read_csv(dir / "sampling_gain.csv").rows) {
    EXPECT_LT(num(r[2]), std::sqrt(num(r[1])));
    EXPECT_LT(num(r[3]), std::sqrt(num(r[1])));
  }
  EXPECT_TRUE(fs::exists(dir / "sampling_bands.svg"));
}

TEST(Cli, CounterfactualMatrix) {
  const auto dir = fresh_dir("cf");
  ASSERT_EQ(run({"counterfactual", "-d", "16", "--seeds", "1,2", "--out", dir.string()}), 0);
  validate_csv_dir(dir);
  const auto t = read_csv(dir / "counterfactual_matrix.csv");
  for (std::size_t a = 0; a < 6; ++a) EXPECT_EQ(num(t.rows[a][a + 1]), 0.0);
  const auto [mx, mn] = matrix_extremes(t);
  EXPECT_EQ(t.rows[mx.first][0] + "," + t.header[mx.second + 1], "top,bottom");
  EXPECT_EQ(t.rows[mn.first][0] + "," + t.header[mn.second + 1], "split1,split2");
}

TEST(Cli, ConfigFileWithFlagOverride) {
  const auto dir = fresh_dir("cfg");
  fs::create_directories(dir);
  const auto cfg = dir / "run.ini";
  {
    std::ofstream out(cfg);
    out << "out=" << (dir / "from_file").string() << "\n[kappa-curve]\nspectrum=isotropic\ngammas=1,2\nz-points=3\n";
  }
  ASSERT_EQ(run({"--config", cfg.string(), "kappa-curve"}), 0);
  auto t = read_csv(dir / "from_file" / "kappa_curve.csv");
  EXPECT_EQ(t.rows.size(), 6u);
  ASSERT_EQ(run({"--config", cfg.string(), "kappa-curve", "--z-points", "4", "--out", (dir / "flag").string()}), 0);
  t = read_csv(dir / "flag" / "kappa_curve.csv");
  EXPECT_EQ(t.rows.size(), 8u);
  EXPECT_EQ(t.rows[0][0], "1");
}

TEST(Cli, SpectrumFileSource) {
  const auto dir = fresh_dir("file");
  fs::create_directories(dir);
  {
    std::ofstream out(dir / "s.csv");
    out << "# dimension=4\n1.0,0.5\n0.25,0.5\n";
  }
  ASSERT_EQ(run({"kappa-curve", "--spectrum-file", (dir / "s.csv").string(), "--z-points", "2", "--out", dir.string()}), 0);
  ASSERT_EQ(run({"denoiser", "--spectrum-file", (dir / "s.csv").string(), "--trials", "10", "--out", (dir / "dn").string()}), 0);
  EXPECT_EQ(read_csv(dir / "dn" / "denoiser_gain_s1.csv").rows.size(), 4u);
}

TEST(Cli, ByteIdenticalRerun) {
  const auto a = fresh_dir("rep_a"), b = fresh_dir("rep_b");
  const std::vector<std::string> common{"denoiser", "-d", "8", "--trials", "50", "--probe-points", "5", "--seed", "9"};
  auto args = common;
  args.insert(args.end(), {"--out", a.string()});
  ASSERT_EQ(run(args), 0);
  args = common;
  args.insert(args.end(), {"--out", b.string()});
  ASSERT_EQ(run(args), 0);
  int n = 0;
  for (const auto& e : fs::directory_iterator(a))
    if (e.path().extension() == ".csv") {
      ++n;
      EXPECT_EQ(slurp(e.path()), slurp(b / e.path().filename())) << e.path().filename();
    }
  EXPECT_GT(n, 5);
}

TEST(Cli, BinaryExitCodes) {
  const std::string exe = RMTDIFF_CLI_PATH;
  const auto dir = fresh_dir("bin");
  auto status = [](const std::string& cmd) {
    const int s = std::system((cmd + " >/dev/null 2>&1").c_str());
    return WIFEXITED(s) ? WEXITSTATUS(s) : -1;
  };
  EXPECT_EQ(status(exe + " kappa-curve --z-points 3 --out " + dir.string()), 0);
  EXPECT_EQ(status(exe + " denoiser --trials 0 --out " + dir.string()), 2);
  EXPECT_EQ(status(exe + " kappa-curve --gammas 1e300 --z-min 1e300 --z-max 1e300 --z-points 1 --out " + dir.string()), 3);
}
