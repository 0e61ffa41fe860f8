#pragma once

#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <system_error>
#include <vector>

#include <Eigen/Core>

static_assert(std::endian::native == std::endian::little,
              "graphalign binary formats are little-endian; big-endian hosts are unsupported");

namespace graphalign {

/// Row-major dynamic matrix; feature tables are accessed row-by-row.
using RowMatrixXd = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class ErrorKind {
  invalid_input,  // caller data violates a precondition or invariant
  io,             // filesystem failure
  format,         // malformed file contents
  config,         // bad run configuration
  numeric,        // non-finite value where a finite one is required
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

inline void require(bool ok, ErrorKind kind, const std::string& what) {
  if (!ok) fail(kind, what);
}

/// Dense tensor indexed (point, slot, channel), row-major.
struct Tensor3 {
  int n = 0, k = 0, c = 0;
  std::vector<double> v;

  Tensor3() = default;
  Tensor3(int n_, int k_, int c_) : n(n_), k(k_), c(c_), v(std::size_t(n_) * k_ * c_, 0.0) {}

  double& operator()(int i, int j, int ch) { return v[(std::size_t(i) * k + j) * c + ch]; }
  double operator()(int i, int j, int ch) const { return v[(std::size_t(i) * k + j) * c + ch]; }
  double* slot(int i, int j) { return v.data() + (std::size_t(i) * k + j) * c; }
  const double* slot(int i, int j) const { return v.data() + (std::size_t(i) * k + j) * c; }

  bool same_shape(const Tensor3& o) const { return n == o.n && k == o.k && c == o.c; }
};

/// Dense tensor indexed (point, head, row, col), row-major.
struct Tensor4 {
  int d0 = 0, d1 = 0, d2 = 0, d3 = 0;
  std::vector<double> v;

  Tensor4() = default;
  Tensor4(int a, int b, int c, int d)
      : d0(a), d1(b), d2(c), d3(d), v(std::size_t(a) * b * c * d, 0.0) {}

  double& operator()(int i, int h, int a, int b) {
    return v[((std::size_t(i) * d1 + h) * d2 + a) * d3 + b];
  }
  double operator()(int i, int h, int a, int b) const {
    return v[((std::size_t(i) * d1 + h) * d2 + a) * d3 + b];
  }
};

struct BoolMask {
  int rows = 0, cols = 0;
  std::vector<std::uint8_t> v;

  BoolMask() = default;
  BoolMask(int r, int c, bool init = false)
      : rows(r), cols(c), v(std::size_t(r) * c, init ? 1 : 0) {}

  std::uint8_t& operator()(int i, int j) { return v[std::size_t(i) * cols + j]; }
  bool operator()(int i, int j) const { return v[std::size_t(i) * cols + j] != 0; }
};

struct IndexMatrix {
  int rows = 0, cols = 0;
  std::vector<std::int32_t> v;

  IndexMatrix() = default;
  IndexMatrix(int r, int c) : rows(r), cols(c), v(std::size_t(r) * c, 0) {}

  std::int32_t& operator()(int i, int j) { return v[std::size_t(i) * cols + j]; }
  std::int32_t operator()(int i, int j) const { return v[std::size_t(i) * cols + j]; }
};

/// Shortest decimal string that parses back to exactly the same double.
inline std::string format_double(double x) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s) {
  double x = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), x);
  require(res.ec == std::errc() && res.ptr == s.data() + s.size(), ErrorKind::format,
          "bad numeric field: '" + std::string(s) + "'");
  return x;
}

inline bool all_finite(const RowMatrixXd& m) { return m.allFinite(); }

}  // namespace graphalign
