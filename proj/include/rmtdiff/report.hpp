#pragma once

// CSV and JSON serialization of experiment reports.

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "rmtdiff/errors.hpp"
#include "rmtdiff/montecarlo.hpp"

namespace rmtdiff {

inline const std::vector<std::string>& mode_table_header() {
  static const std::vector<std::string> h{"mode", "lambda", "theory", "mc", "mc_se", "n_trials"};
  return h;
}

inline const std::vector<std::string>& point_table_header() {
  static const std::vector<std::string> h{"point_id", "theory_factor", "mse"};
  return h;
}

inline Table to_table(const std::vector<ModeRow>& rows) {
  Table t{mode_table_header(), {}};
  for (const auto& r : rows)
    t.rows.push_back({std::to_string(r.mode), format_real(r.lambda), format_real(r.theory), format_real(r.mc),
                      format_real(r.mc_se), std::to_string(r.n_trials)});
  return t;
}

inline Table to_table(const std::vector<PointRow>& rows) {
  Table t{point_table_header(), {}};
  for (const auto& r : rows)
    t.rows.push_back({std::to_string(r.point_id), format_real(r.theory_factor), format_real(r.mse)});
  return t;
}

inline std::string to_csv(const Table& t) {
  std::ostringstream out;
  auto line = [&out](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) out << (i ? "," : "") << cells[i];
    out << '\n';
  };
  line(t.header);
  for (const auto& r : t.rows) line(r);
  return out.str();
}

/// Write through a temporary file and rename, so a failed run never leaves a
/// truncated CSV behind.
inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw InvalidArgument("cannot write '" + tmp + "'");
    out << text;
    if (!out) {
      std::filesystem::remove(tmp);
      throw NumericalError("write failed for '" + path.string() + "'");
    }
  }
  std::filesystem::rename(tmp, path);
}

inline void write_table(const std::filesystem::path& path, const Table& t) { write_text_file(path, to_csv(t)); }

/// One CSV per table (<prefix><name>.csv) plus <prefix>summary.json.
/// Returns the files written.
inline std::vector<std::filesystem::path> write_report(const ExperimentReport& rep, const std::filesystem::path& dir,
                                                       const std::string& prefix) {
  std::vector<std::filesystem::path> files;
  auto emit = [&](const std::string& name, const Table& t) {
    const auto p = dir / (prefix + name + ".csv");
    write_table(p, t);
    files.push_back(p);
  };
  for (const auto& [name, rows] : rep.mode_tables) emit(name, to_table(rows));
  for (const auto& [name, rows] : rep.point_tables) emit(name, to_table(rows));
  for (const auto& [name, t] : rep.tables) emit(name, t);
  const auto js = dir / (prefix + "summary.json");
  write_text_file(js, rep.summary.dump(2) + "\n");
  files.push_back(js);
  return files;
}

/// Minimal CSV reader for emitted files: header plus rows split on commas.
inline Table read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path.string() + "'");
  Table t;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (first) {
      t.header = std::move(cells);
      first = false;
    } else if (!line.empty()) {
      t.rows.push_back(std::move(cells));
    }
  }
  return t;
}

}  // namespace rmtdiff
