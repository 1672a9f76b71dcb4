#include "excess/csv.hpp"

#include <charconv>
#include <cstdio>
#include <sstream>

namespace excess {

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace

CsvTable CsvTable::read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open file: " + path);
  std::string text(std::istreambuf_iterator<char>(in), {});
  return from_string(text, path);
}

CsvTable CsvTable::from_string(const std::string& text, const std::string& name) {
  CsvTable t;
  t.source_ = name;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    auto fields = split_line(line);
    if (!have_header) {
      t.header_ = std::move(fields);
      t.first_data_line_ = line_no + 1;
      have_header = true;
      continue;
    }
    if (fields.size() != t.header_.size()) {
      throw ParseError(name, line_no,
                       "expected " + std::to_string(t.header_.size()) + " fields, got " +
                           std::to_string(fields.size()));
    }
    t.rows_.push_back(std::move(fields));
  }
  if (!have_header) throw ParseError(name, 1, "missing header row");
  return t;
}

std::size_t CsvTable::col(const std::string& name) const {
  for (std::size_t i = 0; i < header_.size(); ++i) {
    if (header_[i] == name) return i;
  }
  throw ParseError(source_, 1, "missing required column '" + name + "'");
}

long long CsvTable::int_field(std::size_t row, std::size_t col) const {
  const std::string& s = rows_[row][col];
  long long v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) {
    throw ParseError(source_, line_of(row), "expected integer in column '" + header_[col] + "', got '" + s + "'");
  }
  return v;
}

double CsvTable::double_field(std::size_t row, std::size_t col) const {
  const std::string& s = rows_[row][col];
  try {
    std::size_t pos = 0;
    double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("");
    return v;
  } catch (const std::exception&) {
    throw ParseError(source_, line_of(row), "expected number in column '" + header_[col] + "', got '" + s + "'");
  }
}

CsvWriter::CsvWriter(const std::string& path) : out_(path), path_(path) {
  if (!out_) throw ValidationError("cannot open file for writing: " + path);
}

void CsvWriter::write_header(const std::vector<std::string>& names) {
  n_cols_ = names.size();
  write_row(names);
}

void CsvWriter::write_row(const std::vector<std::string>& fields) {
  if (n_cols_ != 0 && fields.size() != n_cols_) {
    throw ValidationError("csv writer: row width mismatch in " + path_);
  }
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out_ << ',';
    out_ << fields[i];
  }
  out_ << '\n';
}

std::string CsvWriter::format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

void CsvWriter::close() { out_.close(); }

}  // namespace excess
