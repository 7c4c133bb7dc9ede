// Dataset files: CSV series, instance metadata and the directory layout
//   <root>/<system>/<scheme>/<split>/rep<NNNN>/{train.csv, truth.csv, meta.json}
#pragma once

#include "chaoscast/core.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace chaoscast::io {

namespace fs = std::filesystem;

inline constexpr const char* kDataRootEnv = "CHAOSCAST_DATA";
inline constexpr int kFractionDigits = 8;

/// Fixed-point decimal with 8 fractional digits; "-0.00000000" is written
/// as "0.00000000".
inline std::string fixed(double v) {
  if (!std::isfinite(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.8f", v);
  std::string s(buf);
  if (s == "-0.00000000") s.erase(0, 1);
  return s;
}

/// Same rounding as the CSV files, as a number.
inline double round_fixed(double v) { return std::strtod(fixed(v).c_str(), nullptr); }

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline double parse_number(const std::string& s, const std::string& where) {
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size()) throw DomainError(where + ": not a number: '" + s + "'");
  return v;
}

// ---------------------------------------------------------------------------
// Series CSV

inline std::string series_header(Eigen::Index dim) {
  std::string h = "time";
  for (Eigen::Index k = 1; k <= dim; ++k) h += ",u" + std::to_string(k);
  return h;
}

inline void write_series_csv(std::ostream& os, const TimeSeries& s) {
  os << series_header(s.dim()) << '\n';
  for (std::size_t i = 0; i < s.size(); ++i) {
    os << fixed(s.times[i]);
    for (Eigen::Index k = 0; k < s.dim(); ++k) os << ',' << fixed(s.states(static_cast<Eigen::Index>(i), k));
    os << '\n';
  }
}

inline void write_series_csv(const fs::path& path, const TimeSeries& s) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot write " + path.string());
  write_series_csv(os, s);
  if (!os) throw Error("write failed for " + path.string());
}

inline TimeSeries read_series_csv(std::istream& is, const std::string& where) {
  std::string line;
  if (!std::getline(is, line)) throw DomainError(where + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto head = split_csv_line(line);
  if (head.size() < 2 || head[0] != "time") throw DomainError(where + ": header must start with 'time'");
  const auto dim = static_cast<Eigen::Index>(head.size() - 1);
  if (line != series_header(dim)) throw DomainError(where + ": unexpected header '" + line + "'");
  std::vector<double> times;
  std::vector<double> values;
  std::size_t row = 1;
  while (std::getline(is, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (static_cast<Eigen::Index>(cells.size()) != dim + 1)
      throw DomainError(where + ": row " + std::to_string(row) + " has " + std::to_string(cells.size()) + " fields");
    const std::string at = where + ":" + std::to_string(row);
    times.push_back(parse_number(cells[0], at));
    for (Eigen::Index k = 1; k <= dim; ++k) values.push_back(parse_number(cells[static_cast<std::size_t>(k)], at));
  }
  Mat states(static_cast<Eigen::Index>(times.size()), dim);
  for (Eigen::Index i = 0; i < states.rows(); ++i)
    for (Eigen::Index k = 0; k < dim; ++k) states(i, k) = values[static_cast<std::size_t>(i * dim + k)];
  return TimeSeries(std::move(times), std::move(states));
}

inline TimeSeries read_series_csv(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot read " + path.string());
  return read_series_csv(is, path.string());
}

// ---------------------------------------------------------------------------
// Instances

/// One repetition as stored on disk. `u_T` and `T` come from meta.json;
/// u_T carries the same 8-digit rounding as the CSV files.
struct StoredInstance {
  TimeSeries train;
  TimeSeries truth;
  double T = 0.0;
  Vec u_T;
  nlohmann::json meta;
};

inline std::string rep_dirname(std::size_t rep) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "rep%04zu", rep);
  return buf;
}

inline fs::path instance_dir(const fs::path& root, const std::string& system, const std::string& scheme,
                             const std::string& split, std::size_t rep) {
  return root / system / scheme / split / rep_dirname(rep);
}

inline void write_instance(const fs::path& dir, const StoredInstance& inst) {
  fs::create_directories(dir);
  write_series_csv(dir / "train.csv", inst.train);
  write_series_csv(dir / "truth.csv", inst.truth);
  nlohmann::json meta = inst.meta;
  meta["T"] = inst.T;
  std::vector<double> u;
  for (Eigen::Index k = 0; k < inst.u_T.size(); ++k) u.push_back(round_fixed(inst.u_T(k)));
  meta["u_T"] = u;
  std::ofstream os(dir / "meta.json", std::ios::binary);
  if (!os) throw Error("cannot write " + (dir / "meta.json").string());
  os << meta.dump(2) << '\n';
}

inline StoredInstance read_instance(const fs::path& dir) {
  StoredInstance inst;
  inst.train = read_series_csv(dir / "train.csv");
  inst.truth = read_series_csv(dir / "truth.csv");
  std::ifstream is(dir / "meta.json", std::ios::binary);
  if (!is) throw Error("cannot read " + (dir / "meta.json").string());
  try {
    inst.meta = nlohmann::json::parse(is);
    inst.T = inst.meta.at("T").get<double>();
    const auto u = inst.meta.at("u_T").get<std::vector<double>>();
    inst.u_T = Eigen::Map<const Vec>(u.data(), static_cast<Eigen::Index>(u.size()));
  } catch (const nlohmann::json::exception& e) {
    throw DomainError((dir / "meta.json").string() + ": " + e.what());
  }
  if (inst.u_T.size() != inst.train.dim() || inst.truth.dim() != inst.train.dim())
    throw DimensionError(dir.string() + ": dimension mismatch between files");
  return inst;
}

/// Repetition directories of one split in index order.
inline std::vector<fs::path> list_reps(const fs::path& split_dir) {
  std::vector<fs::path> out;
  if (!fs::is_directory(split_dir)) return out;
  for (const auto& e : fs::directory_iterator(split_dir))
    if (e.is_directory() && e.path().filename().string().rfind("rep", 0) == 0) out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

/// Explicit path, else $CHAOSCAST_DATA, else ./data.
inline fs::path data_root(const std::string& explicit_root = {}) {
  if (!explicit_root.empty()) return explicit_root;
  if (const char* env = std::getenv(kDataRootEnv); env && *env) return env;
  return "data";
}

inline nlohmann::json read_json(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot read " + path.string());
  try {
    return nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw DomainError(path.string() + ": " + e.what());
  }
}

inline void write_json(const fs::path& path, const nlohmann::json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot write " + path.string());
  os << j.dump(2) << '\n';
}

}  // namespace chaoscast::io
