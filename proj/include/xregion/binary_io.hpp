#pragma once

#include <cstdint>
#include <cstring>
#include <string>
#include <string_view>
#include <vector>

#include "xregion/error.hpp"
#include "xregion/linalg.hpp"

namespace xregion {

// Host byte order; every supported platform is little-endian.
class BinaryWriter {
 public:
  void raw(const void* data, std::size_t n) {
    const auto* p = static_cast<const char*>(data);
    buf_.insert(buf_.end(), p, p + n);
  }
  void u32(std::uint32_t v) { raw(&v, sizeof v); }
  void u64(std::uint64_t v) { raw(&v, sizeof v); }
  void f64(double v) { raw(&v, sizeof v); }
  void str(std::string_view s) {
    u64(s.size());
    raw(s.data(), s.size());
  }
  void matrix(const Matrix& m) {
    u64(static_cast<std::uint64_t>(m.rows()));
    u64(static_cast<std::uint64_t>(m.cols()));
    // Row-major on disk.
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) f64(m(i, j));
  }
  const std::vector<char>& bytes() const { return buf_; }
  void save(const std::string& path) const;

 private:
  std::vector<char> buf_;
};

class BinaryReader {
 public:
  explicit BinaryReader(std::vector<char> bytes, std::string what) : buf_(std::move(bytes)), what_(std::move(what)) {}
  static BinaryReader load(const std::string& path);

  void raw(void* out, std::size_t n) {
    require(pos_ + n <= buf_.size(), ErrorKind::DataQuality, "corrupt or truncated file: " + what_);
    std::memcpy(out, buf_.data() + pos_, n);
    pos_ += n;
  }
  std::uint32_t u32() { std::uint32_t v; raw(&v, sizeof v); return v; }
  std::uint64_t u64() { std::uint64_t v; raw(&v, sizeof v); return v; }
  double f64() { double v; raw(&v, sizeof v); return v; }
  std::string str() {
    const std::uint64_t n = u64();
    require(n <= remaining(), ErrorKind::DataQuality, "corrupt or truncated file: " + what_);
    std::string s(n, '\0');
    raw(s.data(), n);
    return s;
  }
  Matrix matrix() {
    const std::uint64_t rows = u64(), cols = u64();
    require(cols == 0 || rows <= remaining() / 8 / cols, ErrorKind::DataQuality, "corrupt or truncated file: " + what_);
    Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = f64();
    return m;
  }
  std::size_t remaining() const { return buf_.size() - pos_; }
  const std::string& what() const { return what_; }

 private:
  std::vector<char> buf_;
  std::size_t pos_ = 0;
  std::string what_;
};

}  // namespace xregion
