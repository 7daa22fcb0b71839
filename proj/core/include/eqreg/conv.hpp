// Copyright 2026 The eqreg Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <vector>

#include "eqreg/tensor.hpp"

namespace eqreg {

/// Stride-1 convolution with "same" zero padding of (p-1)/2.
/// weight is (C_out, C_in, p, p) with p odd; bias has C_out entries.
template <typename T>
struct ConvParams {
  Tensor4<T> weight;
  std::vector<T> bias;

  ConvParams() = default;
  ConvParams(std::size_t out_channels, std::size_t in_channels, std::size_t kernel)
      : weight(out_channels, in_channels, kernel, kernel), bias(out_channels, T(0)) {}
  ConvParams(Tensor4<T> w, std::vector<T> b);

  [[nodiscard]] std::size_t out_channels() const { return weight.batch(); }
  [[nodiscard]] std::size_t in_channels() const { return weight.channels(); }
  [[nodiscard]] std::size_t kernel() const { return weight.height(); }

  /// Throws ShapeError if the kernel is not odd and square or bias is the wrong length.
  void validate() const;

  friend bool operator==(const ConvParams&, const ConvParams&) = default;
};

template <typename T>
struct ConvGrads {
  Tensor4<T> grad_x;  // empty when not requested
  Tensor4<T> grad_weight;
  std::vector<T> grad_bias;
};

template <typename T>
Tensor4<T> conv2d_forward(const Tensor4<T>& x, const ConvParams<T>& params);

/// Adjoints of conv2d_forward. Weight and bias gradients are accumulated per sample and
/// summed in batch order, so the result is independent of the thread count.
template <typename T>
ConvGrads<T> conv2d_backward(const Tensor4<T>& x, const ConvParams<T>& params,
                             const Tensor4<T>& grad_out, bool need_grad_x = true);

}  // namespace eqreg
