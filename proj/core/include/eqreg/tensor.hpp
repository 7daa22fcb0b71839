// Copyright 2026 The eqreg Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "eqreg/error.hpp"

namespace eqreg {

/// Dimensions of an NCHW tensor.
struct Shape4 {
  std::size_t batch = 0;
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;

  [[nodiscard]] std::size_t size() const { return batch * channels * height * width; }
  [[nodiscard]] std::size_t plane() const { return height * width; }
  [[nodiscard]] std::size_t sample() const { return channels * height * width; }

  friend bool operator==(const Shape4&, const Shape4&) = default;
};

inline std::string to_string(const Shape4& s) {
  return "(" + std::to_string(s.batch) + "," + std::to_string(s.channels) + "," +
         std::to_string(s.height) + "," + std::to_string(s.width) + ")";
}

/// Dense rank-4 real array, row-major with width fastest.
template <typename T>
class Tensor4 {
 public:
  using value_type = T;

  Tensor4() = default;
  explicit Tensor4(Shape4 shape, T fill = T(0)) : shape_(shape), data_(shape.size(), fill) {}
  Tensor4(std::size_t b, std::size_t c, std::size_t h, std::size_t w, T fill = T(0))
      : Tensor4(Shape4{b, c, h, w}, fill) {}
  Tensor4(Shape4 shape, std::vector<T> data) : shape_(shape), data_(std::move(data)) {
    if (data_.size() != shape_.size()) {
      throw ShapeError("Tensor4: data length " + std::to_string(data_.size()) +
                       " does not match shape " + to_string(shape_));
    }
  }

  [[nodiscard]] const Shape4& shape() const { return shape_; }
  [[nodiscard]] std::size_t batch() const { return shape_.batch; }
  [[nodiscard]] std::size_t channels() const { return shape_.channels; }
  [[nodiscard]] std::size_t height() const { return shape_.height; }
  [[nodiscard]] std::size_t width() const { return shape_.width; }
  [[nodiscard]] std::size_t size() const { return data_.size(); }
  [[nodiscard]] bool empty() const { return data_.empty(); }

  [[nodiscard]] std::size_t offset(std::size_t b, std::size_t c, std::size_t h,
                                   std::size_t w) const {
    return ((b * shape_.channels + c) * shape_.height + h) * shape_.width + w;
  }

  T& operator()(std::size_t b, std::size_t c, std::size_t h, std::size_t w) {
    return data_[offset(b, c, h, w)];
  }
  const T& operator()(std::size_t b, std::size_t c, std::size_t h, std::size_t w) const {
    return data_[offset(b, c, h, w)];
  }
  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  [[nodiscard]] std::span<T> data() { return data_; }
  [[nodiscard]] std::span<const T> data() const { return data_; }
  [[nodiscard]] const std::vector<T>& vector() const { return data_; }

  /// One H×W channel plane.
  [[nodiscard]] std::span<T> plane(std::size_t b, std::size_t c) {
    return std::span<T>(data_).subspan(offset(b, c, 0, 0), shape_.plane());
  }
  [[nodiscard]] std::span<const T> plane(std::size_t b, std::size_t c) const {
    return std::span<const T>(data_).subspan(offset(b, c, 0, 0), shape_.plane());
  }

  void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

  friend bool operator==(const Tensor4&, const Tensor4&) = default;

 private:
  Shape4 shape_;
  std::vector<T> data_;
};

inline void require_same_shape(const Shape4& a, const Shape4& b, const char* what) {
  if (!(a == b)) {
    throw ShapeError(std::string(what) + ": shape mismatch " + to_string(a) + " vs " +
                     to_string(b));
  }
}

template <typename T>
Tensor4<T> add(const Tensor4<T>& a, const Tensor4<T>& b) {
  require_same_shape(a.shape(), b.shape(), "add");
  Tensor4<T> out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  return out;
}

template <typename T>
Tensor4<T> sub(const Tensor4<T>& a, const Tensor4<T>& b) {
  require_same_shape(a.shape(), b.shape(), "sub");
  Tensor4<T> out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
  return out;
}

template <typename T>
Tensor4<T> scale(const Tensor4<T>& a, T factor) {
  Tensor4<T> out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * factor;
  return out;
}

/// a += factor * b
template <typename T>
void axpy(Tensor4<T>& a, T factor, const Tensor4<T>& b) {
  require_same_shape(a.shape(), b.shape(), "axpy");
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += factor * b[i];
}

/// Sum of squared entries, accumulated in double in index order.
template <typename T>
double frobenius_sq(const Tensor4<T>& a) {
  double acc = 0.0;
  for (T v : a.data()) acc += static_cast<double>(v) * static_cast<double>(v);
  return acc;
}

template <typename T>
double dot(const Tensor4<T>& a, const Tensor4<T>& b) {
  require_same_shape(a.shape(), b.shape(), "dot");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    acc += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  return acc;
}

template <typename T>
bool all_finite(const Tensor4<T>& a) {
  for (T v : a.data())
    if (!std::isfinite(v)) return false;
  return true;
}

template <typename U, typename T>
Tensor4<U> cast(const Tensor4<T>& a) {
  Tensor4<U> out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = static_cast<U>(a[i]);
  return out;
}

/// Channels [first, first + count) of every sample.
template <typename T>
Tensor4<T> slice_channels(const Tensor4<T>& a, std::size_t first, std::size_t count) {
  if (first + count > a.channels()) {
    throw ShapeError("slice_channels: range exceeds " + std::to_string(a.channels()) +
                     " channels");
  }
  Tensor4<T> out(a.batch(), count, a.height(), a.width());
  for (std::size_t b = 0; b < a.batch(); ++b)
    for (std::size_t c = 0; c < count; ++c) {
      auto src = a.plane(b, first + c);
      std::copy(src.begin(), src.end(), out.plane(b, c).begin());
    }
  return out;
}

/// Stacks two tensors along the channel axis.
template <typename T>
Tensor4<T> concat_channels(const Tensor4<T>& a, const Tensor4<T>& b) {
  if (a.batch() != b.batch() || a.height() != b.height() || a.width() != b.width()) {
    throw ShapeError("concat_channels: incompatible " + to_string(a.shape()) + " and " +
                     to_string(b.shape()));
  }
  Tensor4<T> out(a.batch(), a.channels() + b.channels(), a.height(), a.width());
  for (std::size_t n = 0; n < a.batch(); ++n) {
    for (std::size_t c = 0; c < a.channels(); ++c) {
      auto src = a.plane(n, c);
      std::copy(src.begin(), src.end(), out.plane(n, c).begin());
    }
    for (std::size_t c = 0; c < b.channels(); ++c) {
      auto src = b.plane(n, c);
      std::copy(src.begin(), src.end(), out.plane(n, a.channels() + c).begin());
    }
  }
  return out;
}

/// Samples `indices` of `a`, in order.
template <typename T>
Tensor4<T> gather_batch(const Tensor4<T>& a, std::span<const std::size_t> indices) {
  const std::size_t per = a.shape().sample();
  Tensor4<T> out(indices.size(), a.channels(), a.height(), a.width());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= a.batch()) throw ShapeError("gather_batch: index out of range");
    std::copy_n(a.data().begin() + static_cast<std::ptrdiff_t>(indices[i] * per), per,
                out.data().begin() + static_cast<std::ptrdiff_t>(i * per));
  }
  return out;
}

template <typename T>
Tensor4<T> relu_forward(const Tensor4<T>& x) {
  Tensor4<T> out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] > T(0) ? x[i] : T(0);
  return out;
}

/// Passes grad where x > 0; the subgradient at 0 is 0.
template <typename T>
Tensor4<T> relu_backward(const Tensor4<T>& x, const Tensor4<T>& grad_out) {
  require_same_shape(x.shape(), grad_out.shape(), "relu_backward");
  Tensor4<T> out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] > T(0) ? grad_out[i] : T(0);
  return out;
}

}  // namespace eqreg
