#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace excess {

/// Columnar draw container: magic "XSD1", then named little-endian f64
/// arrays with a dimension header. Layout:
///   "XSD1" | u64 n_arrays | per array:
///   u32 name_len | name bytes | u32 ndim | u64 dims[ndim] | f64 data[]
/// Matrices are stored row-major.
class DrawsFile {
 public:
  struct Array {
    std::vector<std::uint64_t> dims;
    std::vector<double> data;
  };

  void put_matrix(const std::string& name, const Eigen::MatrixXd& m);
  void put_vector(const std::string& name, const Eigen::VectorXd& v);
  void put_scalar(const std::string& name, double v);

  bool has(const std::string& name) const { return arrays_.count(name) != 0; }
  Eigen::MatrixXd matrix(const std::string& name) const;
  Eigen::VectorXd vector(const std::string& name) const;
  double scalar(const std::string& name) const;
  std::vector<std::string> names() const;

  void write(const std::string& path) const;
  static DrawsFile read(const std::string& path);

  /// One CSV per array under `dir` (draws in rows).
  void export_csv(const std::string& dir) const;

 private:
  std::map<std::string, Array> arrays_;
};

}  // namespace excess
