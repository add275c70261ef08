#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace pulse {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Observed sample: response y, endogenous regressors x (n x d) and
/// exogenous variables a (n x q). Rows are observations.
class Dataset {
 public:
  Dataset() = default;

  /// Validates shapes, finiteness and n >= max(d, q). Empty name lists are
  /// filled with generated names (y, x1.., a1..).
  Dataset(Vector y, Matrix x, Matrix a, std::string target_name = {},
          std::vector<std::string> endogenous_names = {},
          std::vector<std::string> exogenous_names = {});

  const Vector& y() const { return y_; }
  const Matrix& x() const { return x_; }
  const Matrix& a() const { return a_; }
  Eigen::Index n() const { return y_.size(); }
  Eigen::Index d() const { return x_.cols(); }
  Eigen::Index q() const { return a_.cols(); }

  const std::string& target_name() const { return target_name_; }
  const std::vector<std::string>& endogenous_names() const { return endogenous_names_; }
  const std::vector<std::string>& exogenous_names() const { return exogenous_names_; }

  /// Rows for which keep[i] is true, in order.
  Dataset select_rows(const std::vector<bool>& keep) const;

 private:
  Vector y_;
  Matrix x_;
  Matrix a_;
  std::string target_name_;
  std::vector<std::string> endogenous_names_;
  std::vector<std::string> exogenous_names_;
};

/// Column-role map used when reading a CSV file.
struct ColumnSchema {
  std::string target;
  std::vector<std::string> endogenous;
  std::vector<std::string> exogenous;
};

/// Raw numeric table: header plus row-major cells. Missing or non-numeric
/// cells are rejected with the offending row (1-based data row) and column.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  std::size_t column_index(const std::string& name) const;
  Vector column(const std::string& name) const;
};

CsvTable read_csv_table(const std::filesystem::path& path);

/// Writes with shortest round-trip formatting so that re-reading gives
/// bit-identical doubles.
void write_csv_table(const std::filesystem::path& path,
                     const std::vector<std::string>& header,
                     const Matrix& values);

Dataset load_csv(const std::filesystem::path& path, const ColumnSchema& schema);

struct CenterRoles {
  bool target = true;
  bool endogenous = true;
  bool exogenous = true;
};

/// Subtracts column means of the selected roles. Requires n >= 2.
Dataset center(const Dataset& ds, CenterRoles roles = {});

}  // namespace pulse
