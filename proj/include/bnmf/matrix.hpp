#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "bnmf/errors.hpp"

namespace bnmf {

// Dense row-major matrix of doubles. Deliberately minimal: the Gibbs sweeps
// are scalar-at-a-time and index directly.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), v_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool empty() const { return v_.empty(); }

  double& operator()(std::size_t i, std::size_t j) { return v_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return v_[i * cols_ + j]; }

  double* data() { return v_.data(); }
  const double* data() const { return v_.data(); }
  std::size_t size() const { return v_.size(); }

  bool same_shape(const Matrix& o) const {
    return rows_ == o.rows_ && cols_ == o.cols_;
  }

  friend bool operator==(const Matrix& a, const Matrix& b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.v_ == b.v_;
  }

 private:
  std::size_t rows_ = 0, cols_ = 0;
  std::vector<double> v_;
};

class Mask {
 public:
  Mask() = default;
  Mask(std::size_t rows, std::size_t cols, bool fill = false)
      : rows_(rows), cols_(cols), v_(rows * cols, fill ? 1 : 0) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

  void set(std::size_t i, std::size_t j, bool on) { v_[i * cols_ + j] = on ? 1 : 0; }
  bool operator()(std::size_t i, std::size_t j) const { return v_[i * cols_ + j] != 0; }

  std::size_t count() const {
    std::size_t n = 0;
    for (auto b : v_) n += b;
    return n;
  }

  friend bool operator==(const Mask& a, const Mask& b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.v_ == b.v_;
  }

 private:
  std::size_t rows_ = 0, cols_ = 0;
  std::vector<std::uint8_t> v_;
};

}  // namespace bnmf
