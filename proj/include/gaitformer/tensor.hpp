// Copyright (c) 2026 the gaitformer authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "gaitformer/errors.hpp"

namespace gaitformer {

using Shape = std::vector<std::size_t>;

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << "x";
    os << s[i];
  }
  os << "]";
  return os.str();
}

inline std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t e : s) n *= e;
  return n;
}

/// Dense row-major tensor of doubles. Value-semantic: copies own their data,
/// so tensors can move freely between threads.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape shape, double fill = 0.0) : shape_(std::move(shape)) {
    validate_shape();
    data_.assign(shape_numel(shape_), fill);
  }

  Tensor(Shape shape, std::vector<double> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    validate_shape();
    if (data_.size() != shape_numel(shape_)) {
      throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                       " does not match shape " + shape_str(shape_));
    }
  }

  static Tensor row(std::initializer_list<double> v) {
    return Tensor({v.size()}, std::vector<double>(v));
  }

  static Tensor matrix(std::initializer_list<std::initializer_list<double>> m) {
    const std::size_t r = m.size();
    const std::size_t c = r ? m.begin()->size() : 0;
    std::vector<double> data;
    data.reserve(r * c);
    for (const auto& rowv : m) {
      if (rowv.size() != c) throw ShapeError("ragged matrix initializer");
      data.insert(data.end(), rowv.begin(), rowv.end());
    }
    return Tensor({r, c}, std::move(data));
  }

  std::size_t size() const { return data_.size(); }
  std::size_t rank() const { return shape_.size(); }
  const Shape& shape() const { return shape_; }
  std::size_t extent(std::size_t i) const { return shape_[i]; }
  bool defined() const { return !shape_.empty(); }

  /// Rank-2 helpers.
  std::size_t rows() const { return shape_[0]; }
  std::size_t cols() const { return shape_[1]; }

  double& operator()(std::size_t i) {
    assert(i < data_.size());
    return data_[i];
  }
  double operator()(std::size_t i) const {
    assert(i < data_.size());
    return data_[i];
  }
  double& operator()(std::size_t i, std::size_t j) {
    assert(rank() == 2 && i < shape_[0] && j < shape_[1]);
    return data_[i * shape_[1] + j];
  }
  double operator()(std::size_t i, std::size_t j) const {
    assert(rank() == 2 && i < shape_[0] && j < shape_[1]);
    return data_[i * shape_[1] + j];
  }
  double& operator()(std::size_t i, std::size_t j, std::size_t k) {
    assert(rank() == 3);
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }
  double operator()(std::size_t i, std::size_t j, std::size_t k) const {
    assert(rank() == 3);
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& vec() { return data_; }
  const std::vector<double>& vec() const { return data_; }

  Tensor reshaped(Shape s) const {
    if (shape_numel(s) != size()) {
      throw ShapeError("cannot reshape " + shape_str(shape_) + " to " +
                       shape_str(s));
    }
    return Tensor(std::move(s), data_);
  }

  Tensor transposed() const {
    if (rank() != 2) throw ShapeError("transpose requires a rank-2 tensor");
    Tensor out({shape_[1], shape_[0]});
    for (std::size_t i = 0; i < shape_[0]; ++i)
      for (std::size_t j = 0; j < shape_[1]; ++j) out(j, i) = (*this)(i, j);
    return out;
  }

  bool all_finite() const {
    for (double v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  double max_abs() const {
    double m = 0.0;
    for (double v : data_) m = std::max(m, std::fabs(v));
    return m;
  }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

 private:
  void validate_shape() const {
    for (std::size_t e : shape_) {
      if (e == 0) throw ShapeError("zero extent in shape " + shape_str(shape_));
    }
  }

  Shape shape_;
  std::vector<double> data_;
};

/// C = A * B for rank-2 tensors. ikj loop order keeps the inner loop
/// contiguous in both B and C.
inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows()) {
    throw ShapeError("matmul shape mismatch: " + shape_str(a.shape()) + " * " +
                     shape_str(b.shape()));
  }
  const std::size_t n = a.rows(), m = a.cols(), p = b.cols();
  Tensor c({n, p});
  const double* ad = a.data();
  const double* bd = b.data();
  double* cd = c.data();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < m; ++k) {
      const double aik = ad[i * m + k];
      if (aik == 0.0) continue;
      const double* brow = bd + k * p;
      double* crow = cd + i * p;
      for (std::size_t j = 0; j < p; ++j) crow[j] += aik * brow[j];
    }
  }
  return c;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("max_abs_diff shape mismatch: " + shape_str(a.shape()) +
                     " vs " + shape_str(b.shape()));
  }
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::fabs(a(i) - b(i)));
  return m;
}

}  // namespace gaitformer
