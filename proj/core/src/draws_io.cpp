#include "excess/draws_io.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>

#include "excess/csv.hpp"
#include "excess/errors.hpp"

namespace excess {

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_f64(std::string& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  put_u64(out, bits);
}

struct Reader {
  const std::string& buf;
  std::size_t pos = 0;
  std::uint32_t u32() {
    require(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[pos++])) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    require(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[pos++])) << (8 * i);
    return v;
  }
  double f64() {
    std::uint64_t bits = u64();
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
  }
  std::string bytes(std::size_t n) {
    require(n);
    std::string s = buf.substr(pos, n);
    pos += n;
    return s;
  }
  void require(std::size_t n) {
    if (pos + n > buf.size()) throw ValidationError("draws file truncated");
  }
};

}  // namespace

void DrawsFile::put_matrix(const std::string& name, const Eigen::MatrixXd& m) {
  Array a;
  a.dims = {static_cast<std::uint64_t>(m.rows()), static_cast<std::uint64_t>(m.cols())};
  a.data.resize(static_cast<std::size_t>(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      a.data[static_cast<std::size_t>(r * m.cols() + c)] = m(r, c);
    }
  }
  arrays_[name] = std::move(a);
}

void DrawsFile::put_vector(const std::string& name, const Eigen::VectorXd& v) {
  Array a;
  a.dims = {static_cast<std::uint64_t>(v.size())};
  a.data.assign(v.data(), v.data() + v.size());
  arrays_[name] = std::move(a);
}

void DrawsFile::put_scalar(const std::string& name, double v) {
  Array a;
  a.dims = {1};
  a.data = {v};
  arrays_[name] = std::move(a);
}

Eigen::MatrixXd DrawsFile::matrix(const std::string& name) const {
  auto it = arrays_.find(name);
  if (it == arrays_.end()) throw ValidationError("draws file: missing array " + name);
  if (it->second.dims.size() != 2) throw ValidationError("draws file: " + name + " is not a matrix");
  Eigen::Index rows = static_cast<Eigen::Index>(it->second.dims[0]);
  Eigen::Index cols = static_cast<Eigen::Index>(it->second.dims[1]);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      m(r, c) = it->second.data[static_cast<std::size_t>(r * cols + c)];
    }
  }
  return m;
}

Eigen::VectorXd DrawsFile::vector(const std::string& name) const {
  auto it = arrays_.find(name);
  if (it == arrays_.end()) throw ValidationError("draws file: missing array " + name);
  if (it->second.dims.size() != 1) throw ValidationError("draws file: " + name + " is not a vector");
  return Eigen::Map<const Eigen::VectorXd>(it->second.data.data(),
                                           static_cast<Eigen::Index>(it->second.data.size()));
}

double DrawsFile::scalar(const std::string& name) const {
  Eigen::VectorXd v = vector(name);
  if (v.size() != 1) throw ValidationError("draws file: " + name + " is not a scalar");
  return v(0);
}

std::vector<std::string> DrawsFile::names() const {
  std::vector<std::string> out;
  for (const auto& [name, a] : arrays_) out.push_back(name);
  return out;
}

void DrawsFile::write(const std::string& path) const {
  std::string out;
  out += "XSD1";
  put_u64(out, arrays_.size());
  for (const auto& [name, a] : arrays_) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put_u32(out, static_cast<std::uint32_t>(a.dims.size()));
    std::uint64_t total = 1;
    for (std::uint64_t d : a.dims) {
      put_u64(out, d);
      total *= d;
    }
    if (total != a.data.size()) throw ValidationError("draws file: dimension mismatch in " + name);
    for (double v : a.data) put_f64(out, v);
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ValidationError("cannot write " + path);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
}

DrawsFile DrawsFile::read(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ValidationError("cannot open " + path);
  std::string buf((std::istreambuf_iterator<char>(f)), {});
  Reader r{buf};
  if (r.bytes(4) != "XSD1") throw ValidationError(path + ": bad magic, expected XSD1");
  DrawsFile out;
  std::uint64_t n = r.u64();
  for (std::uint64_t i = 0; i < n; ++i) {
    std::uint32_t name_len = r.u32();
    std::string name = r.bytes(name_len);
    std::uint32_t ndim = r.u32();
    Array a;
    std::uint64_t total = 1;
    for (std::uint32_t d = 0; d < ndim; ++d) {
      a.dims.push_back(r.u64());
      total *= a.dims.back();
    }
    a.data.resize(total);
    for (std::uint64_t k = 0; k < total; ++k) a.data[k] = r.f64();
    out.arrays_[name] = std::move(a);
  }
  return out;
}

void DrawsFile::export_csv(const std::string& dir) const {
  std::filesystem::create_directories(dir);
  for (const auto& [name, a] : arrays_) {
    std::string safe = name;
    for (auto& c : safe) {
      if (c == '/' || c == ':') c = '_';
    }
    CsvWriter w(dir + "/" + safe + ".csv");
    std::size_t cols = a.dims.size() == 2 ? a.dims[1] : 1;
    std::size_t rows = a.data.size() / cols;
    std::vector<std::string> header;
    for (std::size_t c = 0; c < cols; ++c) header.push_back("c" + std::to_string(c));
    w.write_header(header);
    std::vector<std::string> row(cols);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) {
        row[c] = CsvWriter::format_double(a.data[r * cols + c]);
      }
      w.write_row(row);
    }
  }
}

}  // namespace excess
