#pragma once

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "terl/evalharness.hpp"

namespace terl::report {

/// Malformed CSV input (maps to exit code 1).
struct CsvError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CsvTable {
  std::string source;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw CsvError("cannot open " + path.string());
  CsvTable t;
  t.source = path.string();
  std::string line;
  while (std::getline(f, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    auto cells = split_csv_line(line);
    if (t.header.empty()) {
      t.header = std::move(cells);
      continue;
    }
    if (cells.size() != t.header.size()) {
      throw CsvError(t.source + ": data row " + std::to_string(t.rows.size() + 1) + " has " + std::to_string(cells.size()) +
                     " fields, header has " + std::to_string(t.header.size()));
    }
    t.rows.push_back(std::move(cells));
  }
  if (t.header.empty()) throw CsvError(t.source + ": missing header row");
  return t;
}

inline std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

/// Columns that identify a group; every other column except `seed` is a numeric metric.
inline const std::set<std::string>& key_columns() {
  static const std::set<std::string> k = {"method", "axis", "level", "env", "task"};
  return k;
}

struct SummaryRow {
  std::vector<std::string> keys;  // values of `key_names`, in order
  std::string metric;
  harness::MeanCi stats;
};

struct Summary {
  std::vector<std::string> key_names;
  std::vector<SummaryRow> rows;
};

/// Groups rows of all tables by their key columns and reports mean +- 90% CI for each metric over seeds.
inline Summary summarize(const std::vector<CsvTable>& tables) {
  Summary s;
  for (const auto& t : tables)
    for (const auto& h : t.header)
      if (key_columns().count(h) &&
          std::find(s.key_names.begin(), s.key_names.end(), h) == s.key_names.end())
        s.key_names.push_back(h);

  std::map<std::pair<std::vector<std::string>, std::string>, std::vector<double>> groups;
  std::vector<std::pair<std::vector<std::string>, std::string>> order;
  for (const auto& t : tables) {
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
      const auto& row = t.rows[r];
      std::vector<std::string> keys;
      for (const auto& k : s.key_names) {
        auto it = std::find(t.header.begin(), t.header.end(), k);
        keys.push_back(it == t.header.end() ? std::string() : row[static_cast<std::size_t>(it - t.header.begin())]);
      }
      for (std::size_t c = 0; c < t.header.size(); ++c) {
        const auto& name = t.header[c];
        if (name == "seed" || key_columns().count(name)) continue;
        const std::string& cell = row[c];
        if (cell.empty()) continue;
        char* end = nullptr;
        const double v = std::strtod(cell.c_str(), &end);
        if (end == cell.c_str() || *end != '\0') {
          throw CsvError(t.source + ": data row " + std::to_string(r + 1) + ", column '" + name +
                         "' is not numeric: '" + cell + "'");
        }
        auto key = std::make_pair(keys, name);
        if (!groups.count(key)) order.push_back(key);
        groups[key].push_back(v);
      }
    }
  }
  for (const auto& key : order) s.rows.push_back({key.first, key.second, harness::mean_ci90(groups[key])});
  return s;
}

inline std::string note_for(const SummaryRow& r) { return r.stats.n == 1 ? "n=1" : ""; }

inline std::string to_csv(const Summary& s) {
  std::ostringstream os;
  for (const auto& k : s.key_names) os << k << ',';
  os << "metric,n,mean,ci90,note\n";
  for (const auto& r : s.rows) {
    for (const auto& k : r.keys) os << k << ',';
    os << r.metric << ',' << r.stats.n << ',' << fmt(r.stats.mean) << ',' << fmt(r.stats.ci90) << ',' << note_for(r)
       << '\n';
  }
  return os.str();
}

/// Aligned plain-text rendering: one line per (group, metric) as "mean +- ci".
inline std::string to_text(const Summary& s) {
  std::vector<std::vector<std::string>> cells;
  std::vector<std::string> head = s.key_names;
  head.insert(head.end(), {"metric", "n", "mean +- ci90", "note"});
  cells.push_back(head);
  for (const auto& r : s.rows) {
    std::vector<std::string> line = r.keys;
    line.push_back(r.metric);
    line.push_back(std::to_string(r.stats.n));
    line.push_back(fmt(r.stats.mean) + " +- " + fmt(r.stats.ci90));
    line.push_back(note_for(r));
    cells.push_back(line);
  }
  std::vector<std::size_t> width(head.size(), 0);
  for (const auto& line : cells)
    for (std::size_t i = 0; i < line.size(); ++i) width[i] = std::max(width[i], line[i].size());
  std::ostringstream os;
  for (const auto& line : cells) {
    for (std::size_t i = 0; i < line.size(); ++i) {
      os << std::left << std::setw(static_cast<int>(width[i])) << line[i];
      if (i + 1 < line.size()) os << "  ";
    }
    os << '\n';
  }
  return os.str();
}

/// Long-format robustness CSV: method, seed, axis, level, raw, normalized, drop_pct.
inline std::string robustness_csv(const harness::RobustnessReport& rep) {
  std::ostringstream os;
  os << "method,seed,axis,level,raw,normalized,drop_pct\n";
  auto opt = [](const std::optional<double>& v) { return v ? fmt(*v) : std::string(); };
  for (const auto& c : rep.cells) {
    os << c.method << ',' << c.seed << ',' << harness::axis_name(rep.axis) << ',' << fmt(c.level) << ',' << fmt(c.raw)
       << ',' << opt(c.normalized) << ',' << opt(c.drop_pct) << '\n';
  }
  return os.str();
}

/// Aggregate curves per (method, level), one panel per axis.
inline std::string robustness_plot_csv(const harness::RobustnessReport& rep) {
  std::ostringstream os;
  os << "method,axis,level,n,normalized_mean,normalized_ci90,drop_pct_mean,drop_pct_ci90\n";
  for (const auto& a : rep.aggregate) {
    os << a.method << ',' << harness::axis_name(rep.axis) << ',' << fmt(a.level) << ',' << a.normalized.n << ','
       << fmt(a.normalized.mean) << ',' << fmt(a.normalized.ci90) << ',' << fmt(a.drop_pct.mean) << ','
       << fmt(a.drop_pct.ci90) << '\n';
  }
  return os.str();
}

inline std::string compression_csv(const compress::CompressionReport& rep) {
  std::ostringstream os;
  os << "method,seed,raw_bytes,compressed_bytes,normalized\n";
  for (const auto& r : rep.rows) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", r.normalized);
    os << r.method << ',' << r.seed << ',' << r.raw_bytes << ',' << r.compressed_bytes << ',' << buf << '\n';
  }
  return os.str();
}

inline std::string compression_summary_csv(const compress::CompressionReport& rep) {
  std::ostringstream os;
  os << "method,mean_compressed_bytes,normalized_bytes,compressor\n";
  for (const auto& [m, mean] : rep.mean_compressed) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", rep.normalized.at(m));
    os << m << ',' << fmt(mean) << ',' << buf << ',' << rep.compressor << '\n';
  }
  return os.str();
}

}  // namespace terl::report
