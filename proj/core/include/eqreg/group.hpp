// Copyright 2026 The eqreg Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>

#include "eqreg/tensor.hpp"

namespace eqreg {

/// The cyclic rotation group C_t: element k rotates by 2πk/t, counterclockwise.
///
/// Elements whose angle is a multiple of 90° act by pure index permutation; the rest
/// use bilinear resampling about ((H-1)/2, (W-1)/2) with zero fill.
class RotationGroup {
 public:
  explicit RotationGroup(int order = 4);

  [[nodiscard]] int order() const { return order_; }
  /// k mod t, in [0, t).
  [[nodiscard]] int reduce(int k) const;
  /// True when every element is a permutation (t ∈ {2, 4}).
  [[nodiscard]] bool exact() const { return 4 % order_ == 0; }
  /// True when element k is a multiple of a quarter turn.
  [[nodiscard]] bool is_exact(int k) const { return (4 * reduce(k)) % order_ == 0; }
  [[nodiscard]] double angle(int k) const;

  /// Throws ShapeError unless 0 <= k < t.
  void check_element(int k) const;

  friend bool operator==(const RotationGroup&, const RotationGroup&) = default;

 private:
  int order_;
};

/// A feature map whose channel axis is t outer group blocks of n features each:
/// flat channel c = g * n + j.
template <typename T>
struct GroupFeature {
  Tensor4<T> tensor;
  std::size_t t = 1;

  GroupFeature() = default;
  /// Throws ShapeError unless the channel count is divisible by t.
  GroupFeature(Tensor4<T> tensor, std::size_t t);

  [[nodiscard]] std::size_t n() const { return tensor.channels() / t; }
  /// Group block g as its own n-channel tensor.
  [[nodiscard]] Tensor4<T> block(std::size_t g) const;

  friend bool operator==(const GroupFeature&, const GroupFeature&) = default;
};

/// Rotates every channel of a square image by element k.
template <typename T>
Tensor4<T> rotate_image(const Tensor4<T>& x, int k, const RotationGroup& group);

/// Transpose of rotate_image (the inverse rotation on the permutation path).
template <typename T>
Tensor4<T> rotate_image_adjoint(const Tensor4<T>& x, int k, const RotationGroup& group);

/// Output block g is input block (g - m) mod t; spatial content is untouched.
template <typename T>
GroupFeature<T> cyclic_shift(const GroupFeature<T>& f, int m);

/// Spatial rotation by k of every channel composed with a cyclic shift by k:
/// output block g holds rotate(input block (g - k) mod t).
template <typename T>
GroupFeature<T> feature_transform(const GroupFeature<T>& f, int k, const RotationGroup& group);

template <typename T>
GroupFeature<T> feature_transform_adjoint(const GroupFeature<T>& f, int k,
                                          const RotationGroup& group);

// Flat-tensor conveniences; the group order comes from `group`.
template <typename T>
Tensor4<T> feature_transform(const Tensor4<T>& f, int k, const RotationGroup& group);
template <typename T>
Tensor4<T> feature_transform_adjoint(const Tensor4<T>& f, int k, const RotationGroup& group);

}  // namespace eqreg
