#pragma once

#include <stdexcept>
#include <string>

namespace excess {

/// Bad or inconsistent input data (malformed CSV, negative counts, schema
/// violations). Maps to CLI exit code 2.
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

/// Parse failure with file/line context. Subclass of ValidationError so CLI
/// error mapping stays uniform.
class ParseError : public ValidationError {
 public:
  ParseError(const std::string& file, std::size_t line, const std::string& what)
      : ValidationError(file + ":" + std::to_string(line) + ": " + what),
        line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// An optimizer failed to converge; carries the last iterate diagnostics.
class ConvergenceError : public std::runtime_error {
 public:
  ConvergenceError(const std::string& what, double grad_norm)
      : std::runtime_error(what + " (gradient norm " + std::to_string(grad_norm) + ")"),
        grad_norm_(grad_norm) {}
  double grad_norm() const { return grad_norm_; }

 private:
  double grad_norm_;
};

/// MCMC convergence diagnostics failed. Carries the diagnostics table as
/// preformatted text. Maps to CLI exit code 3.
class DiagnosticsError : public std::runtime_error {
 public:
  DiagnosticsError(const std::string& what, std::string table)
      : std::runtime_error(what), table_(std::move(table)) {}
  const std::string& table() const { return table_; }

 private:
  std::string table_;
};

}  // namespace excess
