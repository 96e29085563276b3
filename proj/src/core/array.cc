// Copyright 2026 The streamkd Authors
// SPDX-License-Identifier: Apache-2.0

#include "core/array.h"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "core/error.h"

namespace streamkd {

namespace {

size_t Volume(const std::vector<size_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), size_t{1},
                         std::multiplies<>());
}

}  // namespace

Array::Array(std::vector<size_t> shape, double fill)
    : shape_(std::move(shape)), data_(Volume(shape_), fill) {}

Array::Array(std::vector<size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != Volume(shape_)) {
    Fail(ErrorCode::kInvalidArgument,
         "array data length " + std::to_string(data_.size()) +
             " does not match shape " + ShapeString(shape_));
  }
}

void Array::Fill(double v) { std::fill(data_.begin(), data_.end(), v); }

void Array::CheckFinite(const std::string& what) const {
  for (double v : data_) {
    if (!std::isfinite(v)) Fail(ErrorCode::kNumeric, "non-finite value in " + what);
  }
}

std::string ShapeString(const std::vector<size_t>& shape) {
  std::string s = "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

}  // namespace streamkd
