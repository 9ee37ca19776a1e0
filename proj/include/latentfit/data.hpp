#pragma once

// Column-oriented numeric table plus RFC-4180-style CSV reading and writing.

#include <iosfwd>
#include <string>
#include <vector>

namespace latentfit {

class DataTable {
 public:
  DataTable() = default;

  int rows() const { return rows_; }
  int cols() const { return static_cast<int>(names_.size()); }
  const std::vector<std::string>& names() const { return names_; }
  bool has(const std::string& name) const;

  /// Throws UnknownColumn.
  const std::vector<double>& column(const std::string& name) const;

  /// Adds or replaces a column. The first column fixes the row count.
  void set(const std::string& name, std::vector<double> values);

 private:
  int rows_ = 0;
  std::vector<std::string> names_;
  std::vector<std::vector<double>> columns_;
};

/// Parses CSV with a mandatory header row. Fields may be quoted ("a,b",
/// doubled quotes escape a quote); every data field must parse as a number
/// ("NA"/empty cells are rejected with the line number).
DataTable read_csv(std::istream& in);
DataTable read_csv_file(const std::string& path);

/// Writes numbers with round-trip precision.
void write_csv(std::ostream& out, const DataTable& table);
void write_csv_file(const std::string& path, const DataTable& table);

/// Splits one CSV record; exposed for the string-valued outputs.
std::vector<std::string> split_csv_record(const std::string& line, int line_number);
std::string csv_escape(const std::string& field);

/// Shortest text that parses back to exactly `value`.
std::string format_number(double value);

}  // namespace latentfit
