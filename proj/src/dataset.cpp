#include "pulse/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "pulse/errors.hpp"

namespace pulse {

namespace {

std::vector<std::string> default_names(const std::string& prefix, Eigen::Index count) {
  std::vector<std::string> names;
  for (Eigen::Index j = 0; j < count; ++j) names.push_back(prefix + std::to_string(j + 1));
  return names;
}

void check_finite(const Matrix& m, const char* what) {
  if (!m.allFinite()) {
    throw Error(ErrorCode::DataError, std::string("non-finite value in ") + what);
  }
}

std::string trim(std::string_view s) {
  auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string_view::npos) return {};
  auto end = s.find_last_not_of(" \t\r");
  return std::string(s.substr(begin, end - begin + 1));
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) cells.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

}  // namespace

Dataset::Dataset(Vector y, Matrix x, Matrix a, std::string target_name,
                 std::vector<std::string> endogenous_names,
                 std::vector<std::string> exogenous_names)
    : y_(std::move(y)),
      x_(std::move(x)),
      a_(std::move(a)),
      target_name_(std::move(target_name)),
      endogenous_names_(std::move(endogenous_names)),
      exogenous_names_(std::move(exogenous_names)) {
  const auto n = y_.size();
  if (n < 1) throw Error(ErrorCode::DataError, "dataset has no rows");
  if (x_.rows() != n || a_.rows() != n) {
    throw Error(ErrorCode::DimensionMismatch, "y, x and a must have the same number of rows");
  }
  if (n < std::max(x_.cols(), a_.cols())) {
    throw Error(ErrorCode::DataError,
                "n = " + std::to_string(n) + " is smaller than max(d, q) = " +
                    std::to_string(std::max(x_.cols(), a_.cols())));
  }
  check_finite(y_, "y");
  check_finite(x_, "x");
  check_finite(a_, "a");
  if (target_name_.empty()) target_name_ = "y";
  if (endogenous_names_.empty()) endogenous_names_ = default_names("x", x_.cols());
  if (exogenous_names_.empty()) exogenous_names_ = default_names("a", a_.cols());
  if (static_cast<Eigen::Index>(endogenous_names_.size()) != x_.cols() ||
      static_cast<Eigen::Index>(exogenous_names_.size()) != a_.cols()) {
    throw Error(ErrorCode::DimensionMismatch, "column name count does not match matrix width");
  }
}

Dataset Dataset::select_rows(const std::vector<bool>& keep) const {
  if (static_cast<Eigen::Index>(keep.size()) != n()) {
    throw Error(ErrorCode::DimensionMismatch, "row mask length differs from n");
  }
  std::vector<Eigen::Index> idx;
  for (Eigen::Index i = 0; i < n(); ++i)
    if (keep[static_cast<std::size_t>(i)]) idx.push_back(i);
  const auto m = static_cast<Eigen::Index>(idx.size());
  Vector y(m);
  Matrix x(m, d()), a(m, q());
  for (Eigen::Index r = 0; r < m; ++r) {
    y(r) = y_(idx[r]);
    x.row(r) = x_.row(idx[r]);
    a.row(r) = a_.row(idx[r]);
  }
  return Dataset(std::move(y), std::move(x), std::move(a), target_name_, endogenous_names_,
                 exogenous_names_);
}

std::size_t CsvTable::column_index(const std::string& name) const {
  auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) throw Error(ErrorCode::DataError, "missing column '" + name + "'");
  return static_cast<std::size_t>(it - header.begin());
}

Vector CsvTable::column(const std::string& name) const {
  const auto j = column_index(name);
  Vector v(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) v(static_cast<Eigen::Index>(i)) = rows[i][j];
  return v;
}

CsvTable read_csv_table(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::DataError, "cannot open '" + path.string() + "'");
  CsvTable table;
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::DataError, "empty file '" + path.string() + "'");
  if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line.erase(0, 3);  // BOM
  table.header = split_line(line);
  std::size_t row_number = 0;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    ++row_number;
    auto cells = split_line(line);
    if (cells.size() != table.header.size()) {
      throw Error(ErrorCode::DataError, "row " + std::to_string(row_number) + " has " +
                                            std::to_string(cells.size()) + " cells, expected " +
                                            std::to_string(table.header.size()));
    }
    std::vector<double> values(cells.size());
    for (std::size_t j = 0; j < cells.size(); ++j) {
      const auto& cell = cells[j];
      const char* first = cell.data();
      const char* last = first + cell.size();
      if (!cell.empty() && *first == '+') ++first;
      auto [ptr, ec] = std::from_chars(first, last, values[j]);
      if (cell.empty() || ec != std::errc() || ptr != last || !std::isfinite(values[j])) {
        throw Error(ErrorCode::DataError, "non-numeric cell '" + cell + "' at row " +
                                              std::to_string(row_number) + ", column '" +
                                              table.header[j] + "'");
      }
    }
    table.rows.push_back(std::move(values));
  }
  return table;
}

void write_csv_table(const std::filesystem::path& path, const std::vector<std::string>& header,
                     const Matrix& values) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::DataError, "cannot write '" + path.string() + "'");
  for (std::size_t j = 0; j < header.size(); ++j) out << (j ? "," : "") << header[j];
  out << '\n';
  char buf[64];
  for (Eigen::Index i = 0; i < values.rows(); ++i) {
    for (Eigen::Index j = 0; j < values.cols(); ++j) {
      auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), values(i, j));
      (void)ec;
      if (j) out << ',';
      out.write(buf, ptr - buf);
    }
    out << '\n';
  }
}

Dataset load_csv(const std::filesystem::path& path, const ColumnSchema& schema) {
  const auto table = read_csv_table(path);
  const auto n = static_cast<Eigen::Index>(table.rows.size());
  Vector y = table.column(schema.target);
  Matrix x(n, static_cast<Eigen::Index>(schema.endogenous.size()));
  Matrix a(n, static_cast<Eigen::Index>(schema.exogenous.size()));
  for (std::size_t j = 0; j < schema.endogenous.size(); ++j)
    x.col(static_cast<Eigen::Index>(j)) = table.column(schema.endogenous[j]);
  for (std::size_t j = 0; j < schema.exogenous.size(); ++j)
    a.col(static_cast<Eigen::Index>(j)) = table.column(schema.exogenous[j]);
  return Dataset(std::move(y), std::move(x), std::move(a), schema.target, schema.endogenous,
                 schema.exogenous);
}

Dataset center(const Dataset& ds, CenterRoles roles) {
  if (ds.n() < 2) throw Error(ErrorCode::InvalidArgument, "centering requires n >= 2");
  Vector y = ds.y();
  Matrix x = ds.x();
  Matrix a = ds.a();
  // Second pass removes the rounding residue of the first.
  for (int pass = 0; pass < 2; ++pass) {
    if (roles.target) y.array() -= y.mean();
    if (roles.endogenous) x.rowwise() -= x.colwise().mean();
    if (roles.exogenous) a.rowwise() -= a.colwise().mean();
  }
  return Dataset(std::move(y), std::move(x), std::move(a), ds.target_name(),
                 ds.endogenous_names(), ds.exogenous_names());
}

}  // namespace pulse
