#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace zsd {

// Dense row-major matrix of doubles. Covers exactly what the projection model
// needs: matrix-vector products, the transposed product, and rank-1 updates.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double value = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, value) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<const double> row(std::size_t r) const {
    return std::span<const double>(data_.data() + r * cols_, cols_);
  }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  // y = M x
  std::vector<double> multiply(std::span<const double> x) const {
    if (x.size() != cols_) throw std::invalid_argument("Matrix::multiply: dimension mismatch");
    std::vector<double> y(rows_, 0.0);
    for (std::size_t r = 0; r < rows_; ++r) {
      const double* m = data_.data() + r * cols_;
      double acc = 0.0;
      for (std::size_t c = 0; c < cols_; ++c) acc += m[c] * x[c];
      y[r] = acc;
    }
    return y;
  }

  // y = M^T x
  std::vector<double> multiply_transposed(std::span<const double> x) const {
    if (x.size() != rows_) {
      throw std::invalid_argument("Matrix::multiply_transposed: dimension mismatch");
    }
    std::vector<double> y(cols_, 0.0);
    for (std::size_t r = 0; r < rows_; ++r) {
      const double* m = data_.data() + r * cols_;
      const double xr = x[r];
      for (std::size_t c = 0; c < cols_; ++c) y[c] += m[c] * xr;
    }
    return y;
  }

  // M += scale * u v^T
  void add_outer(std::span<const double> u, std::span<const double> v, double scale) {
    if (u.size() != rows_ || v.size() != cols_) {
      throw std::invalid_argument("Matrix::add_outer: dimension mismatch");
    }
    for (std::size_t r = 0; r < rows_; ++r) {
      double* m = data_.data() + r * cols_;
      const double su = scale * u[r];
      for (std::size_t c = 0; c < cols_; ++c) m[c] += su * v[c];
    }
  }

  void add_scaled(const Matrix& other, double scale) {
    if (other.rows_ != rows_ || other.cols_ != cols_) {
      throw std::invalid_argument("Matrix::add_scaled: shape mismatch");
    }
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += scale * other.data_[i];
  }

  void scale(double s) {
    for (double& v : data_) v *= s;
  }

  void fill(double value) {
    for (double& v : data_) v = value;
  }

  bool all_finite() const {
    for (double v : data_) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  bool operator==(const Matrix& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_ && data_ == other.data_;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

inline double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("dot: dimension mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

inline double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

}  // namespace zsd
