#include "bglmm/tabular.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

namespace bglmm {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::vector<std::vector<std::string>> split_records(std::string_view text) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool in_quotes = false;
  bool field_started = false;
  std::size_t i = 0;
  if (text.substr(0, 3) == "\xEF\xBB\xBF") i = 3;
  const auto end_row = [&] {
    row.push_back(std::move(field));
    field.clear();
    field_started = false;
    // Skip lines that are entirely empty.
    if (!(row.size() == 1 && row.front().empty())) rows.push_back(std::move(row));
    row.clear();
  };
  for (; i < text.size(); ++i) {
    const char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        field += c;
      }
      continue;
    }
    if (c == '"' && !field_started) {
      in_quotes = true;
      field_started = true;
    } else if (c == ',') {
      row.push_back(std::move(field));
      field.clear();
      field_started = false;
    } else if (c == '\n' || c == '\r') {
      if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
      end_row();
    } else {
      field += c;
      field_started = true;
    }
  }
  if (in_quotes) throw DataError("unterminated quoted field in CSV");
  if (field_started || !row.empty()) end_row();
  return rows;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  return s;
}

bool is_missing_token(std::string_view s) {
  s = trim(s);
  return s.empty() || s == "NA";
}

bool parse_number(std::string_view s, double& out) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

}  // namespace

bool Column::missing(std::size_t row) const {
  return type == Type::Numeric ? std::isnan(numeric[row]) : codes[row] < 0;
}

std::string Column::label(std::size_t row) const {
  if (missing(row)) return {};
  return type == Type::Numeric ? format_double(numeric[row]) : levels[static_cast<std::size_t>(codes[row])];
}

void DataTable::add_column(Column column) {
  if (has(column.name)) throw DataError("duplicate column '" + column.name + "'");
  if (!columns_.empty() && column.size() != n_rows_)
    throw DataError("column '" + column.name + "' has " + std::to_string(column.size()) + " rows, expected " +
                    std::to_string(n_rows_));
  n_rows_ = column.size();
  columns_.push_back(std::move(column));
}

Column DataTable::numeric_column(std::string name, std::vector<double> values) {
  Column c;
  c.name = std::move(name);
  c.type = Column::Type::Numeric;
  c.numeric = std::move(values);
  return c;
}

Column DataTable::categorical_column(std::string name, const std::vector<std::string>& values) {
  Column c;
  c.name = std::move(name);
  c.type = Column::Type::Categorical;
  std::vector<std::string> distinct;
  for (const auto& v : values)
    if (!v.empty()) distinct.push_back(v);
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  c.levels = distinct;
  c.codes.reserve(values.size());
  for (const auto& v : values) {
    if (v.empty()) {
      c.codes.push_back(-1);
    } else {
      const auto it = std::lower_bound(distinct.begin(), distinct.end(), v);
      c.codes.push_back(static_cast<int>(it - distinct.begin()));
    }
  }
  return c;
}

bool DataTable::has(std::string_view name) const {
  return std::any_of(columns_.begin(), columns_.end(), [&](const Column& c) { return c.name == name; });
}

const Column& DataTable::column(std::string_view name) const {
  for (const auto& c : columns_)
    if (c.name == name) return c;
  throw DataError("variable '" + std::string(name) + "' not found in data");
}

DataTable DataTable::select_rows(const std::vector<std::size_t>& rows) const {
  DataTable out;
  for (const auto& c : columns_) {
    if (c.is_numeric()) {
      std::vector<double> v;
      v.reserve(rows.size());
      for (auto r : rows) v.push_back(c.numeric[r]);
      out.add_column(numeric_column(c.name, std::move(v)));
    } else {
      std::vector<std::string> v;
      v.reserve(rows.size());
      for (auto r : rows) v.push_back(c.label(r));
      out.add_column(categorical_column(c.name, v));
    }
  }
  out.n_rows_ = rows.size();
  return out;
}

DataTable DataTable::select_columns(const std::vector<std::string>& names) const {
  DataTable out;
  for (const auto& n : names) out.add_column(column(n));
  out.n_rows_ = n_rows_;
  return out;
}

DataTable parse_csv(std::string_view text) {
  auto records = split_records(text);
  if (records.empty()) throw DataError("empty CSV file");
  const auto& header = records.front();
  const std::size_t n_cols = header.size();
  for (std::size_t r = 1; r < records.size(); ++r) {
    if (records[r].size() != n_cols)
      throw DataError("ragged CSV: row " + std::to_string(r + 1) + " has " + std::to_string(records[r].size()) +
                      " fields, header has " + std::to_string(n_cols));
  }
  DataTable table;
  const std::size_t n_rows = records.size() - 1;
  for (std::size_t c = 0; c < n_cols; ++c) {
    std::string name(trim(header[c]));
    bool numeric = true;
    std::vector<double> values(n_rows, kNaN);
    for (std::size_t r = 0; r < n_rows && numeric; ++r) {
      const auto& cell = records[r + 1][c];
      if (is_missing_token(cell)) continue;
      numeric = parse_number(cell, values[r]);
    }
    if (numeric) {
      table.add_column(DataTable::numeric_column(std::move(name), std::move(values)));
    } else {
      std::vector<std::string> cells(n_rows);
      for (std::size_t r = 0; r < n_rows; ++r) {
        const auto& cell = records[r + 1][c];
        if (!is_missing_token(cell)) cells[r] = cell;
      }
      table.add_column(DataTable::categorical_column(std::move(name), cells));
    }
  }
  return table;
}

DataTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw DataError("error reading '" + path.string() + "'");
  return parse_csv(ss.str());
}

std::string csv_escape(std::string_view field) {
  if (field.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

std::string to_csv(const DataTable& table) {
  std::string out;
  const auto& cols = table.columns();
  for (std::size_t c = 0; c < cols.size(); ++c) {
    if (c) out += ',';
    out += csv_escape(cols[c].name);
  }
  out += '\n';
  char buf[64];
  for (std::size_t r = 0; r < table.n_rows(); ++r) {
    for (std::size_t c = 0; c < cols.size(); ++c) {
      if (c) out += ',';
      const auto& col = cols[c];
      if (col.missing(r)) {
        out += "NA";
      } else if (col.is_numeric()) {
        const auto res = std::to_chars(buf, buf + sizeof buf, col.numeric[r], std::chars_format::general, 17);
        out.append(buf, res.ptr);
      } else {
        out += csv_escape(col.label(r));
      }
    }
    out += '\n';
  }
  return out;
}

void write_csv(const DataTable& table, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << to_csv(table);
}

DropResult drop_incomplete(const DataTable& table, const std::vector<std::string>& vars) {
  std::vector<const Column*> cols;
  for (const auto& v : vars) cols.push_back(&table.column(v));
  std::vector<std::size_t> keep;
  for (std::size_t r = 0; r < table.n_rows(); ++r) {
    if (std::none_of(cols.begin(), cols.end(), [&](const Column* c) { return c->missing(r); })) keep.push_back(r);
  }
  if (keep.empty() && table.n_rows() > 0) throw DataError("empty dataset after dropna");
  DropResult res;
  res.dropped = table.n_rows() - keep.size();
  res.table = res.dropped == 0 ? table : table.select_rows(keep);
  return res;
}

ColumnStats column_stats(const Eigen::Ref<const Eigen::VectorXd>& values) {
  const auto n = values.size();
  if (n < 2) throw DataError("standard deviation needs at least two values");
  ColumnStats s;
  s.mean = values.mean();
  s.var = (values.array() - s.mean).square().sum() / static_cast<double>(n - 1);
  s.sd = std::sqrt(s.var);
  s.var = s.sd * s.sd;
  return s;
}

ColumnStats column_stats(const Column& column) {
  if (!column.is_numeric()) throw DataError("column '" + column.name + "' is not numeric");
  for (std::size_t r = 0; r < column.size(); ++r)
    if (column.missing(r)) throw DataError("column '" + column.name + "' has missing values");
  return column_stats(Eigen::Map<const Eigen::VectorXd>(column.numeric.data(), static_cast<Eigen::Index>(column.size())));
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string format_fixed(double v, int decimals) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::fixed, decimals);
  std::string s(buf, res.ptr);
  if (s == "-0" || (s.size() > 1 && s.rfind("-0.", 0) == 0 && s.find_first_not_of("-0.") == std::string::npos))
    s.erase(0, 1);
  return s;
}

}  // namespace bglmm
