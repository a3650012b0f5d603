#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "sdual/common.hpp"
#include "sdual/version.hpp"

namespace sdual {
namespace io {

/// Shortest round-trip decimal form; used for every numeric cell so that
/// identical runs produce identical bytes.
inline std::string format_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return std::string(buf);
}

/// Writes text to `path` via a sibling temp file plus rename, so readers
/// never observe a partial file.
inline void atomic_write_text(const std::filesystem::path& path, const std::string& text) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open for writing: " + tmp.string());
    out << text;
    if (!out) throw Error("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

namespace detail {

inline std::vector<double> parse_csv_row(const std::string& line,
                                         const std::filesystem::path& path) {
  std::vector<double> row;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    try {
      std::size_t pos = 0;
      double v = std::stod(cell, &pos);
      if (pos != cell.size() && cell.find_first_not_of(" \t\r", pos) != std::string::npos)
        throw Error("trailing garbage");
      row.push_back(v);
    } catch (const std::exception&) {
      throw Error("non-numeric cell '" + cell + "' in " + path.string());
    }
  }
  return row;
}

}  // namespace detail

/// Matrix CSV: a "rows,cols" dimension line, then one row per line with
/// comma-separated cells.
inline void save_matrix_csv(const std::filesystem::path& path, const Mat& m) {
  std::string text = std::to_string(m.rows()) + ',' + std::to_string(m.cols()) + '\n';
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) {
      if (j) text += ',';
      text += format_g17(m(i, j));
    }
    text += '\n';
  }
  atomic_write_text(path, text);
}

/// Vector CSV: one value per line, no dimension header.
inline void save_vector_csv(const std::filesystem::path& path, const Vec& v) {
  std::string text;
  for (Index i = 0; i < v.size(); ++i) text += format_g17(v(i)) + '\n';
  atomic_write_text(path, text);
}

inline Mat load_matrix_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open: " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw Error("empty matrix file: " + path.string());
  std::vector<double> dims = detail::parse_csv_row(line, path);
  if (dims.size() != 2 || dims[0] != std::floor(dims[0]) || dims[1] != std::floor(dims[1]) ||
      dims[0] < 1 || dims[1] < 1)
    throw Error("expected a rows,cols dimension line in " + path.string());
  const Index nr = static_cast<Index>(dims[0]), nc = static_cast<Index>(dims[1]);
  Mat m(nr, nc);
  Index r = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row = detail::parse_csv_row(line, path);
    if (row.empty()) continue;
    if (static_cast<Index>(row.size()) != nc)
      throw Error("row " + std::to_string(r) + " has " + std::to_string(row.size()) +
                  " cells, expected " + std::to_string(nc) + " in " + path.string());
    if (r >= nr) throw Error("more rows than declared in " + path.string());
    for (Index j = 0; j < nc; ++j) m(r, j) = row[static_cast<std::size_t>(j)];
    ++r;
  }
  if (r != nr)
    throw Error("declared " + std::to_string(nr) + " rows but found " +
                std::to_string(r) + " in " + path.string());
  return m;
}

/// Vector CSV: one value per line.
inline Vec load_vector_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open: " + path.string());
  std::vector<double> vals;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row = detail::parse_csv_row(line, path);
    if (row.empty()) continue;
    if (row.size() != 1)
      throw Error("expected a single-column vector file: " + path.string());
    vals.push_back(row[0]);
  }
  if (vals.empty()) throw Error("empty vector file: " + path.string());
  return Eigen::Map<const Vec>(vals.data(), static_cast<Index>(vals.size()));
}

/// Hash of the canonical serialization.  nlohmann objects keep keys sorted,
/// so the hash is invariant to key order in the source file.
inline std::string config_hash_of(const nlohmann::json& j) {
  std::uint64_t h = fnv1a(j.dump());
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

inline nlohmann::json load_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open: " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const std::exception& e) {
    throw Error("invalid JSON in " + path.string() + ": " + e.what());
  }
}

/// Record of one CLI run: enough to reproduce outputs bit-exactly
/// (config hash + seed + version) plus timings and the files written.
struct RunManifest {
  std::string config_hash;
  std::uint64_t seed = 0;
  std::string version = kVersion;
  std::vector<std::pair<std::string, double>> timings_sec;
  std::vector<std::string> outputs;

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["config_hash"] = config_hash;
    j["seed"] = seed;
    j["version"] = version;
    nlohmann::json t = nlohmann::json::object();
    for (const auto& [name, sec] : timings_sec) t[name] = sec;
    j["timings_sec"] = t;
    j["outputs"] = outputs;
    return j;
  }
};

inline void write_manifest(const std::filesystem::path& dir, const RunManifest& man) {
  atomic_write_text(dir / "manifest.json", man.to_json().dump(2) + "\n");
}

}  // namespace io
}  // namespace sdual
