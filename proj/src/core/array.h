// Copyright 2026 The streamkd Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef STREAMKD_CORE_ARRAY_H_
#define STREAMKD_CORE_ARRAY_H_

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace streamkd {

// Dense row-major array of doubles.
class Array {
 public:
  Array() = default;
  explicit Array(std::vector<size_t> shape, double fill = 0.0);
  Array(std::vector<size_t> shape, std::vector<double> data);

  static Array Matrix(size_t rows, size_t cols, double fill = 0.0) {
    return Array({rows, cols}, fill);
  }
  static Array Vector(size_t n, double fill = 0.0) { return Array({n}, fill); }

  const std::vector<size_t>& shape() const { return shape_; }
  size_t rank() const { return shape_.size(); }
  size_t dim(size_t i) const { return shape_.at(i); }
  size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  size_t rows() const { return shape_.at(0); }
  size_t cols() const { return shape_.at(1); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  std::vector<double>& storage() { return data_; }
  const std::vector<double>& storage() const { return data_; }

  double& operator[](size_t i) { return data_[i]; }
  double operator[](size_t i) const { return data_[i]; }

  // Rank-2 access.
  double& operator()(size_t r, size_t c) { return data_[r * shape_[1] + c]; }
  double operator()(size_t r, size_t c) const {
    return data_[r * shape_[1] + c];
  }
  // Rank-3 access.
  double& operator()(size_t i, size_t j, size_t k) {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }
  double operator()(size_t i, size_t j, size_t k) const {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }

  std::span<double> row(size_t r) {
    return {data_.data() + r * shape_[1], shape_[1]};
  }
  std::span<const double> row(size_t r) const {
    return {data_.data() + r * shape_[1], shape_[1]};
  }

  void Fill(double v);
  bool SameShape(const Array& other) const { return shape_ == other.shape_; }
  // Throws kNumeric naming `what` if any entry is NaN or infinite.
  void CheckFinite(const std::string& what) const;

  bool operator==(const Array& other) const = default;

 private:
  std::vector<size_t> shape_;
  std::vector<double> data_;
};

std::string ShapeString(const std::vector<size_t>& shape);

}  // namespace streamkd

#endif  // STREAMKD_CORE_ARRAY_H_
