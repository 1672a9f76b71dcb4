#pragma once

#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "excess/errors.hpp"

namespace excess {

/// Minimal CSV support for the pipeline's fixed schemas: UTF-8, header row
/// required, comma separators, empty field = missing. No quoting (none of
/// the schemas need it).
class CsvTable {
 public:
  static CsvTable read_file(const std::string& path);
  static CsvTable from_string(const std::string& text, const std::string& name = "<string>");

  const std::vector<std::string>& header() const { return header_; }
  std::size_t n_rows() const { return rows_.size(); }
  const std::vector<std::string>& row(std::size_t i) const { return rows_[i]; }
  /// 1-based data line number in the source file (for error messages).
  std::size_t line_of(std::size_t i) const { return first_data_line_ + i; }
  const std::string& source() const { return source_; }

  /// Column index for a required header name; throws ParseError if absent.
  std::size_t col(const std::string& name) const;

  const std::string& field(std::size_t row, std::size_t col) const { return rows_[row][col]; }
  bool empty_field(std::size_t row, std::size_t col) const { return rows_[row][col].empty(); }

  long long int_field(std::size_t row, std::size_t col) const;
  double double_field(std::size_t row, std::size_t col) const;

 private:
  std::string source_;
  std::size_t first_data_line_ = 2;
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

/// Streaming CSV writer with a fixed floating-point format so identical
/// runs produce byte-identical files.
class CsvWriter {
 public:
  explicit CsvWriter(const std::string& path);
  void write_header(const std::vector<std::string>& names);
  void write_row(const std::vector<std::string>& fields);
  static std::string format_double(double v);
  void close();

 private:
  std::ofstream out_;
  std::string path_;
  std::size_t n_cols_ = 0;
};

}  // namespace excess
