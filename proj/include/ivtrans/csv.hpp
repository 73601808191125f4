#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "ivtrans/dataset.hpp"
#include "ivtrans/errors.hpp"

namespace ivtrans {

struct ColumnMapping {
  std::string time_col;
  std::string status_col;
  std::vector<std::string> z_cols;
  std::vector<std::string> w_cols;

  void validate() const {
    if (time_col.empty() || status_col.empty())
      throw validation_error("column mapping: time and status columns are required");
    if (z_cols.empty()) throw validation_error("column mapping: at least one covariate column required");
    if (w_cols.size() < z_cols.size())
      throw validation_error("q >= p required: fewer instrument columns than covariate columns");
    std::vector<std::string> all{time_col, status_col};
    all.insert(all.end(), z_cols.begin(), z_cols.end());
    all.insert(all.end(), w_cols.begin(), w_cols.end());
    std::sort(all.begin(), all.end());
    if (std::adjacent_find(all.begin(), all.end()) != all.end())
      throw validation_error("column mapping: mapped columns must be disjoint");
  }
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream stream(line);
  while (std::getline(stream, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

// Locale-independent numeric parse of a full cell; decimal points and
// exponent notation only.
inline double parse_cell(std::string_view raw, long row, const std::string& column) {
  const std::string_view cell = trim(raw);
  if (cell.empty()) {
    std::ostringstream msg;
    msg << "row " << row << ": missing value in column '" << column << "'";
    throw parse_error(msg.str());
  }
  double value = 0.0;
  const char* begin = cell.data();
  const char* end = cell.data() + cell.size();
  const auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc{} || ptr != end || !std::isfinite(value)) {
    std::ostringstream msg;
    msg << "row " << row << ", column '" << column << "': non-numeric value '" << std::string(cell)
        << "'";
    throw parse_error(msg.str());
  }
  return value;
}

inline std::size_t column_index(const std::vector<std::string>& header, const std::string& name) {
  for (std::size_t j = 0; j < header.size(); ++j)
    if (std::string(trim(header[j])) == name) return j;
  throw parse_error("missing column '" + name + "' in header");
}

}  // namespace detail

// Reads a comma-separated file with a header row into a validated dataset.
// Every defect is reported with the 1-based data-row number it occurred on.
inline SurvivalDataset read_dataset(const std::string& path, const ColumnMapping& mapping) {
  mapping.validate();
  std::ifstream input(path);
  if (!input) throw io_error("cannot open input file '" + path + "'");

  std::string line;
  if (!std::getline(input, line)) throw parse_error("empty file: missing header row");
  const std::vector<std::string> header = detail::split_csv_line(line);

  const std::size_t time_idx = detail::column_index(header, mapping.time_col);
  const std::size_t status_idx = detail::column_index(header, mapping.status_col);
  std::vector<std::size_t> z_idx, w_idx;
  for (const auto& name : mapping.z_cols) z_idx.push_back(detail::column_index(header, name));
  for (const auto& name : mapping.w_cols) w_idx.push_back(detail::column_index(header, name));

  std::vector<double> times_v;
  std::vector<int> status_v;
  std::vector<double> z_v, w_v;
  long row = 0;
  while (std::getline(input, line)) {
    if (detail::trim(line).empty()) continue;
    ++row;
    const std::vector<std::string> cells = detail::split_csv_line(line);
    auto cell_at = [&](std::size_t idx, const std::string& column) -> std::string_view {
      if (idx >= cells.size()) {
        std::ostringstream msg;
        msg << "row " << row << ": missing value in column '" << column << "'";
        throw parse_error(msg.str());
      }
      return cells[idx];
    };

    const double time = detail::parse_cell(cell_at(time_idx, mapping.time_col), row, mapping.time_col);
    if (!(time > 0.0)) {
      std::ostringstream msg;
      msg << "row " << row << ": nonpositive follow-up time " << time;
      throw parse_error(msg.str());
    }
    const double status_raw =
        detail::parse_cell(cell_at(status_idx, mapping.status_col), row, mapping.status_col);
    if (status_raw != 0.0 && status_raw != 1.0) {
      std::ostringstream msg;
      msg << "row " << row << ": status must be 0 or 1, got " << status_raw;
      throw parse_error(msg.str());
    }
    times_v.push_back(time);
    status_v.push_back(static_cast<int>(status_raw));
    for (std::size_t j = 0; j < z_idx.size(); ++j)
      z_v.push_back(detail::parse_cell(cell_at(z_idx[j], mapping.z_cols[j]), row, mapping.z_cols[j]));
    for (std::size_t j = 0; j < w_idx.size(); ++j)
      w_v.push_back(detail::parse_cell(cell_at(w_idx[j], mapping.w_cols[j]), row, mapping.w_cols[j]));
  }

  const auto n = static_cast<Eigen::Index>(times_v.size());
  if (n == 0) throw parse_error("no data rows in '" + path + "'");
  const auto p = static_cast<Eigen::Index>(z_idx.size());
  const auto q = static_cast<Eigen::Index>(w_idx.size());
  Eigen::VectorXd times(n);
  Eigen::VectorXi status(n);
  Eigen::MatrixXd Z(n, p), W(n, q);
  for (Eigen::Index i = 0; i < n; ++i) {
    times(i) = times_v[static_cast<std::size_t>(i)];
    status(i) = status_v[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < p; ++j) Z(i, j) = z_v[static_cast<std::size_t>(i * p + j)];
    for (Eigen::Index j = 0; j < q; ++j) W(i, j) = w_v[static_cast<std::size_t>(i * q + j)];
  }
  return SurvivalDataset(std::move(times), std::move(status), std::move(Z), std::move(W));
}

}  // namespace ivtrans
