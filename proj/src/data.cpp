#include "latentfit/data.hpp"

#include "latentfit/error.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>

namespace latentfit {

bool DataTable::has(const std::string& name) const {
  return std::find(names_.begin(), names_.end(), name) != names_.end();
}

const std::vector<double>& DataTable::column(const std::string& name) const {
  auto it = std::find(names_.begin(), names_.end(), name);
  if (it == names_.end()) throw UnknownColumn("unknown column '" + name + "'");
  return columns_[it - names_.begin()];
}

void DataTable::set(const std::string& name, std::vector<double> values) {
  if (names_.empty()) rows_ = static_cast<int>(values.size());
  if (static_cast<int>(values.size()) != rows_)
    throw DimensionMismatch("column '" + name + "' has " + std::to_string(values.size()) +
                            " rows, table has " + std::to_string(rows_));
  auto it = std::find(names_.begin(), names_.end(), name);
  if (it != names_.end()) {
    columns_[it - names_.begin()] = std::move(values);
  } else {
    names_.push_back(name);
    columns_.push_back(std::move(values));
  }
}

std::vector<std::string> split_csv_record(const std::string& line, int line_number) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  bool was_quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(ch);
      }
    } else if (ch == '"') {
      if (!cur.empty() || was_quoted)
        throw Error("csv line " + std::to_string(line_number) + ": stray quote");
      quoted = was_quoted = true;
    } else if (ch == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
      was_quoted = false;
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  if (quoted) throw Error("csv line " + std::to_string(line_number) + ": unterminated quote");
  fields.push_back(std::move(cur));
  return fields;
}

std::string csv_escape(const std::string& field) {
  if (field.find_first_of(",\"\n") == std::string::npos) return field;
  std::string out = "\"";
  for (char ch : field) {
    if (ch == '"') out.push_back('"');
    out.push_back(ch);
  }
  out.push_back('"');
  return out;
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

double parse_number(const std::string& raw, int line, const std::string& column) {
  const std::string s = trim(raw);
  double v = 0.0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (!s.empty() && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (s.empty() || ec != std::errc() || ptr != last)
    throw Error("csv line " + std::to_string(line) + ", column '" + column + "': '" + s +
                "' is not a number");
  return v;
}

}  // namespace

DataTable read_csv(std::istream& in) {
  std::string line;
  int line_number = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++line_number;
    if (!trim(line).empty()) {
      header = split_csv_record(line, line_number);
      break;
    }
  }
  if (header.empty()) throw Error("csv: missing header row");
  for (auto& h : header) h = trim(h);
  std::vector<std::vector<double>> cols(header.size());
  while (std::getline(in, line)) {
    ++line_number;
    if (trim(line).empty()) continue;
    auto fields = split_csv_record(line, line_number);
    if (fields.size() != header.size())
      throw Error("csv line " + std::to_string(line_number) + ": expected " +
                  std::to_string(header.size()) + " fields, found " + std::to_string(fields.size()));
    for (std::size_t c = 0; c < fields.size(); ++c)
      cols[c].push_back(parse_number(fields[c], line_number, header[c]));
  }
  DataTable t;
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (t.has(header[c])) throw Error("csv: duplicate column '" + header[c] + "'");
    t.set(header[c], std::move(cols[c]));
  }
  return t;
}

DataTable read_csv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path + "'");
  return read_csv(in);
}

std::string format_number(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, ptr);
}

void write_csv(std::ostream& out, const DataTable& table) {
  const auto& names = table.names();
  for (std::size_t c = 0; c < names.size(); ++c) out << (c ? "," : "") << csv_escape(names[c]);
  out << '\n';
  std::vector<const std::vector<double>*> cols;
  for (const auto& n : names) cols.push_back(&table.column(n));
  for (int r = 0; r < table.rows(); ++r) {
    for (std::size_t c = 0; c < cols.size(); ++c) out << (c ? "," : "") << format_number((*cols[c])[r]);
    out << '\n';
  }
}

void write_csv_file(const std::string& path, const DataTable& table) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path + "'");
  write_csv(out, table);
}

}  // namespace latentfit
