#pragma once

#include <charconv>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "spgee/dataset.hpp"
#include "spgee/error.hpp"

namespace spgee {

/// Column names for the long-format (one row per observation) CSV layout.
struct CsvSchema {
  std::string subject_col = "subject";
  std::string time_col = "time";
  std::string y_col = "y";
  std::vector<std::string> z_cols;  // e.g. {"z1","z2"}
  std::vector<std::string> x_cols;  // e.g. {"x1","x2","x3"}
};

inline CsvSchema default_schema(int d, int p) {
  CsvSchema s;
  for (int k = 1; k <= d; ++k) s.z_cols.push_back("z" + std::to_string(k));
  for (int k = 1; k <= p; ++k) s.x_cols.push_back("x" + std::to_string(k));
  return s;
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  fields.push_back(cur);
  return fields;
}

inline double parse_cell(const std::string& cell, std::size_t row, const std::string& col) {
  const char* begin = cell.data();
  const char* end = begin + cell.size();
  while (begin < end && (*begin == ' ' || *begin == '\t')) ++begin;
  while (end > begin && (*(end - 1) == ' ' || *(end - 1) == '\t')) --end;
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end || begin == end) {
    throw ParseError("row " + std::to_string(row) + ", column '" + col +
                     "': cannot parse '" + cell + "' as a number");
  }
  return value;
}

}  // namespace detail

/// Read a long-format CSV into a dataset. Rows are grouped by subject id in
/// order of first appearance and sorted by time within each subject.
inline LongitudinalDataset load_csv(const std::string& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path + "' for reading");

  std::string line;
  if (!std::getline(in, line)) throw EmptyDatasetError("'" + path + "' is empty");
  const auto header = detail::split_csv_line(line);
  std::map<std::string, std::size_t> col_index;
  for (std::size_t k = 0; k < header.size(); ++k) col_index[header[k]] = k;

  auto require = [&](const std::string& name) -> std::size_t {
    auto it = col_index.find(name);
    if (it == col_index.end())
      throw SchemaError("missing column '" + name + "' in '" + path + "'");
    return it->second;
  };
  const std::size_t ci_subject = require(schema.subject_col);
  const std::size_t ci_time = require(schema.time_col);
  const std::size_t ci_y = require(schema.y_col);
  std::vector<std::size_t> ci_z, ci_x;
  for (const auto& c : schema.z_cols) ci_z.push_back(require(c));
  for (const auto& c : schema.x_cols) ci_x.push_back(require(c));

  struct Raw {
    std::vector<double> times, y;
    std::vector<std::vector<double>> z, x;
  };
  std::vector<std::string> ids;
  std::map<std::string, std::size_t> id_slot;
  std::vector<Raw> raw;

  std::size_t row = 1;  // header was row 1
  while (std::getline(in, line)) {
    ++row;
    if (line.empty() || line == "\r") continue;
    const auto fields = detail::split_csv_line(line);
    if (fields.size() < header.size())
      throw ParseError("row " + std::to_string(row) + ": expected " +
                       std::to_string(header.size()) + " fields, got " +
                       std::to_string(fields.size()));
    const std::string& id = fields[ci_subject];
    auto it = id_slot.find(id);
    std::size_t slot;
    if (it == id_slot.end()) {
      slot = raw.size();
      id_slot[id] = slot;
      ids.push_back(id);
      raw.emplace_back();
    } else {
      slot = it->second;
    }
    Raw& r = raw[slot];
    r.times.push_back(detail::parse_cell(fields[ci_time], row, schema.time_col));
    r.y.push_back(detail::parse_cell(fields[ci_y], row, schema.y_col));
    std::vector<double> zrow, xrow;
    for (std::size_t k = 0; k < ci_z.size(); ++k)
      zrow.push_back(detail::parse_cell(fields[ci_z[k]], row, schema.z_cols[k]));
    for (std::size_t k = 0; k < ci_x.size(); ++k)
      xrow.push_back(detail::parse_cell(fields[ci_x[k]], row, schema.x_cols[k]));
    r.z.push_back(std::move(zrow));
    r.x.push_back(std::move(xrow));
  }
  if (raw.empty()) throw EmptyDatasetError("'" + path + "' has a header but no data rows");

  const int d = static_cast<int>(schema.z_cols.size());
  const int p = static_cast<int>(schema.x_cols.size());
  std::vector<SubjectBlock> subjects;
  subjects.reserve(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const Raw& r = raw[i];
    SubjectBlock s;
    s.id = ids[i];
    const Eigen::Index m = static_cast<Eigen::Index>(r.times.size());
    s.times = Eigen::Map<const VectorXd>(r.times.data(), m);
    s.y = Eigen::Map<const VectorXd>(r.y.data(), m);
    s.z.resize(m, d);
    s.x.resize(m, p);
    for (Eigen::Index j = 0; j < m; ++j) {
      for (int k = 0; k < d; ++k) s.z(j, k) = r.z[static_cast<std::size_t>(j)][static_cast<std::size_t>(k)];
      for (int k = 0; k < p; ++k) s.x(j, k) = r.x[static_cast<std::size_t>(j)][static_cast<std::size_t>(k)];
    }
    subjects.push_back(std::move(s));
  }
  return LongitudinalDataset(std::move(subjects), d, p, /*sort_times=*/true);
}

/// Loads a CSV whose header follows the default naming convention,
/// inferring the covariate counts from the z1..zd and x1..xp columns.
inline LongitudinalDataset load_csv_auto(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path + "' for reading");
  std::string line;
  if (!std::getline(in, line)) throw EmptyDatasetError("'" + path + "' is empty");
  in.close();
  const auto header = detail::split_csv_line(line);
  const auto count_prefixed = [&header](const std::string& prefix) {
    int k = 0;
    while (true) {
      const std::string name = prefix + std::to_string(k + 1);
      bool found = false;
      for (const auto& h : header)
        if (h == name) {
          found = true;
          break;
        }
      if (!found) break;
      ++k;
    }
    return k;
  };
  const int d = count_prefixed("z");
  const int p = count_prefixed("x");
  if (d == 0 || p == 0)
    throw SchemaError("'" + path +
                      "': header must contain z1..zd and x1..xp columns");
  return load_csv(path, default_schema(d, p));
}

/// Write a dataset back to the long CSV format (inverse of load_csv).
inline void save_csv(const std::string& path, const LongitudinalDataset& ds,
                     const CsvSchema& schema) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  out.precision(17);
  out << schema.subject_col << ',' << schema.time_col << ',' << schema.y_col;
  for (const auto& c : schema.z_cols) out << ',' << c;
  for (const auto& c : schema.x_cols) out << ',' << c;
  out << '\n';
  for (const auto& s : ds.subjects()) {
    for (Eigen::Index j = 0; j < s.size(); ++j) {
      out << s.id << ',' << s.times[j] << ',' << s.y[j];
      for (int k = 0; k < ds.d(); ++k) out << ',' << s.z(j, k);
      for (int k = 0; k < ds.p(); ++k) out << ',' << s.x(j, k);
      out << '\n';
    }
  }
}

}  // namespace spgee
