#pragma once

// Plain-text formats: the dataset CSV (header `x1,...,xd,y`) and headerless
// numeric matrix CSV used for LP instances.

#include <charconv>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "relusparse/core.hpp"
#include "relusparse/error.hpp"

namespace relusparse {

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      out.push_back(trim(line.substr(start)));
      break;
    }
    out.push_back(trim(line.substr(start, pos - start)));
    start = pos + 1;
  }
  return out;
}

inline double parse_real(std::string_view field, std::size_t row, std::size_t col) {
  double value = 0.0;
  const char* first = field.data();
  const char* last = field.data() + field.size();
  if (!field.empty() && *first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, value);
  if (field.empty() || ec != std::errc() || ptr != last || !std::isfinite(value)) {
    throw Error(ErrorCode::parse_error, "row " + std::to_string(row) + ", column " + std::to_string(col) +
                                            ": cannot parse '" + std::string(field) + "' as a real number");
  }
  return value;
}

inline std::string format_real(double v) {
  std::ostringstream os;
  os << std::setprecision(std::numeric_limits<double>::max_digits10) << v;
  return os.str();
}

}  // namespace detail

/// Reads a dataset CSV. Rows and columns in error messages are 1-based and
/// count the header as row 1.
inline Dataset read_dataset_csv(std::istream& in) {
  std::string line;
  std::size_t row = 0;
  std::vector<std::string_view> header;
  std::string header_line;
  while (std::getline(in, line)) {
    ++row;
    if (!detail::trim(line).empty()) {
      header_line = line;
      header = detail::split_commas(header_line);
      break;
    }
  }
  require(!header.empty(), ErrorCode::parse_error, "missing header row");
  require(header.size() >= 2, ErrorCode::parse_error, "header needs at least one feature column and 'y'");
  for (std::size_t k = 0; k + 1 < header.size(); ++k) {
    require(header[k] == "x" + std::to_string(k + 1), ErrorCode::parse_error,
            "row " + std::to_string(row) + ", column " + std::to_string(k + 1) + ": expected header 'x" +
                std::to_string(k + 1) + "', found '" + std::string(header[k]) + "'");
  }
  require(header.back() == "y", ErrorCode::parse_error,
          "row " + std::to_string(row) + ", column " + std::to_string(header.size()) + ": expected header 'y'");
  const std::size_t d = header.size() - 1;

  std::vector<std::vector<double>> points;
  std::vector<double> targets;
  while (std::getline(in, line)) {
    ++row;
    if (detail::trim(line).empty()) continue;
    const auto fields = detail::split_commas(line);
    require(fields.size() == d + 1, ErrorCode::parse_error,
            "row " + std::to_string(row) + ": expected " + std::to_string(d + 1) + " columns, found " +
                std::to_string(fields.size()));
    std::vector<double> x(d);
    for (std::size_t k = 0; k < d; ++k) x[k] = detail::parse_real(fields[k], row, k + 1);
    points.push_back(std::move(x));
    targets.push_back(detail::parse_real(fields[d], row, d + 1));
  }
  require(!points.empty(), ErrorCode::parse_error, "dataset has no data rows");
  return Dataset::from_rows(points, targets);
}

inline Dataset read_dataset_csv(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::parse_error, "cannot open dataset file '" + path + "'");
  return read_dataset_csv(in);
}

inline void write_dataset_csv(std::ostream& out, const Dataset& data) {
  for (std::size_t k = 0; k < data.dim(); ++k) out << 'x' << (k + 1) << ',';
  out << "y\n";
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (std::size_t k = 0; k < data.dim(); ++k) out << detail::format_real(data.points()(Index(i), Index(k))) << ',';
    out << detail::format_real(data.target(i)) << '\n';
  }
}

/// Headerless numeric CSV, one matrix row per line.
inline Matrix read_matrix_csv(std::istream& in) {
  std::string line;
  std::size_t row = 0;
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    ++row;
    if (detail::trim(line).empty()) continue;
    const auto fields = detail::split_commas(line);
    std::vector<double> values(fields.size());
    for (std::size_t k = 0; k < fields.size(); ++k) values[k] = detail::parse_real(fields[k], row, k + 1);
    if (!rows.empty()) {
      require(values.size() == rows.front().size(), ErrorCode::parse_error,
              "row " + std::to_string(row) + ": expected " + std::to_string(rows.front().size()) + " columns");
    }
    rows.push_back(std::move(values));
  }
  require(!rows.empty(), ErrorCode::parse_error, "matrix file has no rows");
  Matrix m(static_cast<Index>(rows.size()), static_cast<Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t k = 0; k < rows[i].size(); ++k) m(Index(i), Index(k)) = rows[i][k];
  return m;
}

inline void write_matrix_csv(std::ostream& out, const Matrix& m) {
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index k = 0; k < m.cols(); ++k) {
      if (k) out << ',';
      out << detail::format_real(m(i, k));
    }
    out << '\n';
  }
}

}  // namespace relusparse
