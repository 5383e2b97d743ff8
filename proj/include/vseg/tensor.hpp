// Copyright 2026 The vseg Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "vseg/error.hpp"

namespace vseg {

/// Shape of a rank-5 tensor (batch, channel, depth, height, width).
struct Shape5 {
  std::size_t n = 1;
  std::size_t c = 1;
  std::size_t d = 1;
  std::size_t h = 1;
  std::size_t w = 1;

  std::size_t voxels() const noexcept { return d * h * w; }
  std::size_t size() const noexcept { return n * c * d * h * w; }
  bool same_spatial(const Shape5& o) const noexcept { return d == o.d && h == o.h && w == o.w; }
  bool operator==(const Shape5&) const = default;

  std::string str() const {
    return std::to_string(n) + "x" + std::to_string(c) + "x" + std::to_string(d) + "x" + std::to_string(h) + "x" +
           std::to_string(w);
  }
};

/// Dense rank-5 array. Layout is batch-major, then channel, then depth, with
/// each depth slice stored row-major (height rows of width elements):
///   index(n, c, z, y, x) = (((n * C + c) * D + z) * H + y) * W + x
template <class T>
class Tensor5 {
 public:
  using value_type = T;

  Tensor5() : Tensor5(Shape5{}) {}

  explicit Tensor5(Shape5 shape, T fill = T{}) : shape_(shape) {
    check_shape(shape_);
    data_.assign(shape_.size(), fill);
  }

  Tensor5(Shape5 shape, std::vector<T> values) : shape_(shape), data_(std::move(values)) {
    check_shape(shape_);
    if (data_.size() != shape_.size())
      throw ContractError("tensor of shape " + shape_.str() + " needs " + std::to_string(shape_.size()) +
                          " values, got " + std::to_string(data_.size()));
  }

  static Tensor5 scalar(T value) { return Tensor5(Shape5{}, value); }

  const Shape5& shape() const noexcept { return shape_; }
  std::size_t size() const noexcept { return data_.size(); }

  std::span<T> values() noexcept { return data_; }
  std::span<const T> values() const noexcept { return data_; }
  T* data() noexcept { return data_.data(); }
  const T* data() const noexcept { return data_.data(); }

  T& operator[](std::size_t i) noexcept { return data_[i]; }
  const T& operator[](std::size_t i) const noexcept { return data_[i]; }

  std::size_t index(std::size_t n, std::size_t c, std::size_t z, std::size_t y, std::size_t x) const noexcept {
    return (((n * shape_.c + c) * shape_.d + z) * shape_.h + y) * shape_.w + x;
  }
  T& at(std::size_t n, std::size_t c, std::size_t z, std::size_t y, std::size_t x) noexcept {
    return data_[index(n, c, z, y, x)];
  }
  const T& at(std::size_t n, std::size_t c, std::size_t z, std::size_t y, std::size_t x) const noexcept {
    return data_[index(n, c, z, y, x)];
  }

  /// Contiguous voxels of one (sample, channel) pair.
  std::span<T> channel(std::size_t n, std::size_t c) noexcept {
    return {data_.data() + (n * shape_.c + c) * shape_.voxels(), shape_.voxels()};
  }
  std::span<const T> channel(std::size_t n, std::size_t c) const noexcept {
    return {data_.data() + (n * shape_.c + c) * shape_.voxels(), shape_.voxels()};
  }

  /// Contiguous block of one batch entry.
  std::span<const T> sample(std::size_t n) const noexcept {
    const std::size_t stride = shape_.c * shape_.voxels();
    return {data_.data() + n * stride, stride};
  }

  void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

  template <class U>
  Tensor5<U> cast() const {
    Tensor5<U> out(shape_);
    std::transform(data_.begin(), data_.end(), out.data(), [](T v) { return static_cast<U>(v); });
    return out;
  }

  bool operator==(const Tensor5&) const = default;

 private:
  static void check_shape(const Shape5& s) {
    if (s.n == 0 || s.c == 0 || s.d == 0 || s.h == 0 || s.w == 0)
      throw ContractError("tensor dimensions must be >= 1, got " + s.str());
  }

  Shape5 shape_;
  std::vector<T> data_;
};

/// A named trainable tensor with its gradient accumulator.
template <class T>
struct Parameter {
  std::string name;
  Tensor5<T> value;
  Tensor5<T> grad;
  bool has_grad = false;

  Parameter() = default;
  Parameter(std::string name_, Tensor5<T> value_)
      : name(std::move(name_)), value(std::move(value_)), grad(value.shape()) {}

  void zero_grad() {
    grad.fill(T{});
    has_grad = false;
  }

  /// grad += contribution, element by element in index order.
  void accumulate(std::span<const T> contribution) {
    T* g = grad.data();
    for (std::size_t i = 0; i < contribution.size(); ++i) g[i] += contribution[i];
    has_grad = true;
  }
};

}  // namespace vseg
