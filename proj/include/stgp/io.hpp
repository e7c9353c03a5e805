#pragma once

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include <Eigen/Dense>

#include "stgp/errors.hpp"
#include "stgp/model.hpp"
#include "stgp/spatial.hpp"

namespace stgp::io {

/// Shortest decimal that round-trips to the same double.
inline std::string format_double(double v) {
  if (std::isnan(v)) return "NaN";
  if (std::isinf(v)) return v > 0 ? "Inf" : "-Inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline bool parse_double(std::string_view s, double &out) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r' || s.back() == '\n')) s.remove_suffix(1);
  if (s == "NaN" || s == "nan" || s == "NA") {
    out = std::nan("");
    return true;
  }
  if (s == "Inf" || s == "inf") { out = INFINITY; return true; }
  if (s == "-Inf" || s == "-inf") { out = -INFINITY; return true; }
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return res.ec == std::errc() && res.ptr == s.data() + s.size() && !s.empty();
}

inline std::vector<std::string> split_csv_line(const std::string &line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

struct CsvTable {
  std::vector<std::string> header; // empty when the file had none
  Eigen::MatrixXd values;
};

/// Numeric CSV. A first row that does not parse as numbers is the header.
inline CsvTable read_csv(const std::filesystem::path &path, bool require_header = false) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::vector<double>> rows;
  CsvTable table;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    std::vector<double> row(fields.size());
    bool numeric = true;
    for (std::size_t k = 0; k < fields.size() && numeric; ++k) numeric = parse_double(fields[k], row[k]);
    if (!numeric) {
      if (rows.empty() && table.header.empty()) {
        table.header = fields;
        for (auto &h : table.header) {
          while (!h.empty() && (h.back() == ' ' || h.back() == '\r')) h.pop_back();
          while (!h.empty() && h.front() == ' ') h.erase(h.begin());
        }
        continue;
      }
      throw IoError(path.string() + ":" + std::to_string(line_no) + ": non-numeric field");
    }
    if (!rows.empty() && row.size() != rows.front().size())
      throw IoError(path.string() + ":" + std::to_string(line_no) + ": expected " +
                    std::to_string(rows.front().size()) + " fields, found " + std::to_string(row.size()));
    rows.push_back(std::move(row));
  }
  if (require_header && table.header.empty()) throw IoError(path.string() + ": missing header row");
  const auto cols = rows.empty() ? table.header.size() : rows.front().size();
  if (!table.header.empty() && table.header.size() != cols)
    throw IoError(path.string() + ": header has " + std::to_string(table.header.size()) + " names for " +
                  std::to_string(cols) + " columns");
  table.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t k = 0; k < cols; ++k)
      table.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = rows[i][k];
  return table;
}

/// Write columns under a header; creates parent directories.
inline void write_csv(const std::filesystem::path &path, const std::vector<std::string> &header,
                      const Eigen::MatrixXd &values) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  for (std::size_t k = 0; k < header.size(); ++k) out << (k ? "," : "") << header[k];
  out << '\n';
  for (Eigen::Index i = 0; i < values.rows(); ++i) {
    for (Eigen::Index k = 0; k < values.cols(); ++k) out << (k ? "," : "") << format_double(values(i, k));
    out << '\n';
  }
  if (!out) throw IoError("failed while writing " + path.string());
}

inline void write_text(const std::filesystem::path &path, const std::string &text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("failed while writing " + path.string());
}

inline std::string read_text(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline SpatialDomain read_locations(const std::filesystem::path &path) {
  auto table = read_csv(path);
  if (table.values.rows() == 0) throw IoError(path.string() + ": no locations");
  return SpatialDomain(std::move(table.values));
}

inline void write_locations(const std::filesystem::path &path, const Eigen::MatrixXd &S) {
  std::vector<std::string> header;
  for (Eigen::Index k = 0; k < S.cols(); ++k) header.push_back("s_" + std::to_string(k + 1));
  write_csv(path, header, S);
}

/// Dataset CSV: header y, w_1..w_q, x_1..x_p.
inline Dataset read_dataset(const std::filesystem::path &path, std::shared_ptr<const SpatialDomain> domain) {
  const auto table = read_csv(path, /*require_header=*/true);
  std::vector<Eigen::Index> ycol, wcols, xcols;
  for (std::size_t k = 0; k < table.header.size(); ++k) {
    const auto &h = table.header[k];
    const auto idx = static_cast<Eigen::Index>(k);
    if (h == "y") ycol.push_back(idx);
    else if (h.rfind("w_", 0) == 0) wcols.push_back(idx);
    else if (h.rfind("x_", 0) == 0) xcols.push_back(idx);
    else throw IoError(path.string() + ": unexpected column '" + h + "'");
  }
  if (ycol.size() != 1) throw IoError(path.string() + ": expected exactly one 'y' column");
  if (domain && static_cast<Eigen::Index>(xcols.size()) != domain->size())
    throw ConfigError(path.string() + " has " + std::to_string(xcols.size()) +
                      " image columns but the locations file has " + std::to_string(domain->size()) + " rows");
  Dataset d;
  const Eigen::Index n = table.values.rows();
  d.y = table.values.col(ycol.front());
  d.W.resize(n, static_cast<Eigen::Index>(wcols.size()));
  for (std::size_t k = 0; k < wcols.size(); ++k) d.W.col(static_cast<Eigen::Index>(k)) = table.values.col(wcols[k]);
  d.X.resize(n, static_cast<Eigen::Index>(xcols.size()));
  for (std::size_t k = 0; k < xcols.size(); ++k) d.X.col(static_cast<Eigen::Index>(k)) = table.values.col(xcols[k]);
  d.domain = std::move(domain);
  d.normalization = NormalizationRecord::identity(d.q(), d.p());
  return d;
}

inline void write_dataset(const std::filesystem::path &path, const Eigen::VectorXd &y, const Eigen::MatrixXd &W,
                          const Eigen::MatrixXd &X) {
  std::vector<std::string> header{"y"};
  for (Eigen::Index k = 0; k < W.cols(); ++k) header.push_back("w_" + std::to_string(k + 1));
  for (Eigen::Index j = 0; j < X.cols(); ++j) header.push_back("x_" + std::to_string(j + 1));
  Eigen::MatrixXd all(y.size(), 1 + W.cols() + X.cols());
  all.col(0) = y;
  if (W.cols() > 0) all.middleCols(1, W.cols()) = W;
  all.rightCols(X.cols()) = X;
  write_csv(path, header, all);
}

} // namespace stgp::io
