// idevc/matrix.hpp
//
// Dense row-major matrix of doubles and the artifact-wide text format:
//
//   <rows> <cols>
//   v v v ...        (rows lines, cols values each, 17 significant digits)
//
// The format round-trips bit-exactly through read_matrix/write_matrix.

#ifndef IDEVC_MATRIX_HPP
#define IDEVC_MATRIX_HPP

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <istream>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "idevc/errors.hpp"

namespace idevc {

class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
      throw DimensionError("matrix data length " + std::to_string(data_.size()) +
                           " does not match " + std::to_string(rows_) + "x" +
                           std::to_string(cols_));
    }
  }

  /// Builds a matrix from nested row lists: Matrix::from_rows({{1, 2}, {3, 4}}).
  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r == 0 ? 0 : rows.begin()->size();
    Matrix m(r, c);
    std::size_t i = 0;
    for (const auto& row : rows) {
      if (row.size() != c) throw DimensionError("ragged row list");
      std::copy(row.begin(), row.end(), m.data_.begin() + static_cast<std::ptrdiff_t>(i * c));
      ++i;
    }
    return m;
  }

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  static Matrix row_vector(std::span<const double> v) {
    return Matrix(1, v.size(), std::vector<double>(v.begin(), v.end()));
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const noexcept { return {data_.data() + r * cols_, cols_}; }

  bool same_shape(const Matrix& o) const noexcept { return rows_ == o.rows_ && cols_ == o.cols_; }
  bool all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
  }
  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  std::string shape_string() const { return std::to_string(rows_) + "x" + std::to_string(cols_); }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// Selects the given rows, in order.
inline Matrix select_rows(const Matrix& m, std::span<const std::size_t> idx) {
  Matrix out(idx.size(), m.cols());
  for (std::size_t r = 0; r < idx.size(); ++r) {
    auto src = m.row(idx[r]);
    std::copy(src.begin(), src.end(), out.row(r).begin());
  }
  return out;
}

/// Stacks matrices with equal column counts on top of each other.
inline Matrix vstack(std::span<const Matrix> parts) {
  if (parts.empty()) return {};
  std::size_t rows = 0;
  const std::size_t cols = parts.front().cols();
  for (const auto& p : parts) {
    if (p.cols() != cols) throw DimensionError("vstack: column mismatch");
    rows += p.rows();
  }
  Matrix out(rows, cols);
  std::size_t r0 = 0;
  for (const auto& p : parts) {
    std::copy(p.data().begin(), p.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(r0 * cols));
    r0 += p.rows();
  }
  return out;
}

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double d = a[k] - b[k];
    acc += d * d;
  }
  return acc;
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) acc += a[k] * b[k];
  return acc;
}

/// Column means as a 1 x cols row.
inline Matrix column_mean(const Matrix& m) {
  Matrix out(1, m.cols());
  if (m.rows() == 0) return out;
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t c = 0; c < m.cols(); ++c) out(0, c) += m(r, c);
  for (auto& v : out.data()) v /= static_cast<double>(m.rows());
  return out;
}

inline std::string format_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline void write_matrix(std::ostream& os, const Matrix& m) {
  os << m.rows() << ' ' << m.cols() << '\n';
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) {
      if (c) os << ' ';
      os << format_real(m(r, c));
    }
    os << '\n';
  }
}

inline Matrix read_matrix(std::istream& is) {
  std::string header;
  if (!std::getline(is, header)) throw IoError("matrix: missing header line");
  std::istringstream hs(header);
  long long rows = -1, cols = -1;
  if (!(hs >> rows >> cols) || rows < 0 || cols < 0) throw IoError("matrix: malformed header '" + header + "'");
  Matrix m(static_cast<std::size_t>(rows), static_cast<std::size_t>(cols));
  std::string line;
  for (std::size_t r = 0; r < m.rows(); ++r) {
    if (!std::getline(is, line)) throw IoError("matrix: expected " + std::to_string(rows) + " rows");
    const char* p = line.c_str();
    for (std::size_t c = 0; c < m.cols(); ++c) {
      char* end = nullptr;
      const double v = std::strtod(p, &end);
      if (end == p) throw IoError("matrix: row " + std::to_string(r) + " has fewer than " + std::to_string(cols) + " values");
      m(r, c) = v;
      p = end;
    }
  }
  return m;
}

inline void save_matrix(const std::filesystem::path& path, const Matrix& m) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  write_matrix(os, m);
  if (!os) throw IoError("write failed: " + path.string());
}

inline Matrix load_matrix(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  try {
    return read_matrix(is);
  } catch (const IoError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

}  // namespace idevc

#endif  // IDEVC_MATRIX_HPP
