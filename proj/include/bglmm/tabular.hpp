#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace bglmm {

class DataError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// A typed column. Numeric cells are doubles with NaN marking missing;
/// categorical cells are indices into `levels` with -1 marking missing.
struct Column {
  enum class Type { Numeric, Categorical };

  std::string name;
  Type type = Type::Numeric;
  std::vector<double> numeric;
  std::vector<int> codes;
  std::vector<std::string> levels;  // sorted distinct observed values

  std::size_t size() const { return type == Type::Numeric ? numeric.size() : codes.size(); }
  bool is_numeric() const { return type == Type::Numeric; }
  bool missing(std::size_t row) const;
  /// Cell rendered as text; numerics use the shortest round-trip form.
  std::string label(std::size_t row) const;
};

class DataTable {
public:
  DataTable() = default;

  void add_column(Column column);
  static Column numeric_column(std::string name, std::vector<double> values);
  /// Levels are derived from the values (sorted, distinct); empty strings are missing.
  static Column categorical_column(std::string name, const std::vector<std::string>& values);

  std::size_t n_rows() const { return n_rows_; }
  std::size_t n_cols() const { return columns_.size(); }
  bool has(std::string_view name) const;
  const Column& column(std::string_view name) const;
  const std::vector<Column>& columns() const { return columns_; }

  /// Rows in `rows` order, levels recomputed from the kept rows.
  DataTable select_rows(const std::vector<std::size_t>& rows) const;
  DataTable select_columns(const std::vector<std::string>& names) const;

private:
  std::vector<Column> columns_;
  std::size_t n_rows_ = 0;
};

struct ColumnStats {
  double mean = 0.0;
  double sd = 0.0;   // n - 1 denominator
  double var = 0.0;
};

DataTable read_csv(const std::filesystem::path& path);
DataTable parse_csv(std::string_view text);
/// Numerics printed with 17 significant digits so a read reproduces them exactly.
void write_csv(const DataTable& table, const std::filesystem::path& path);
std::string to_csv(const DataTable& table);

struct DropResult {
  DataTable table;
  std::size_t dropped = 0;
};

DropResult drop_incomplete(const DataTable& table, const std::vector<std::string>& vars);

ColumnStats column_stats(const Eigen::Ref<const Eigen::VectorXd>& values);
ColumnStats column_stats(const Column& column);

/// Shortest decimal text that parses back to the same double.
std::string format_double(double v);
std::string format_fixed(double v, int decimals);
/// Quotes a CSV field when it contains a separator, quote or newline.
std::string csv_escape(std::string_view field);

}  // namespace bglmm
