// Copyright 2026 The eqreg Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "eqreg/conv.hpp"
#include "eqreg/group.hpp"
#include "eqreg/tensor.hpp"

namespace eqreg {

enum class LayerKind { Conv, ReLU };

template <typename T>
struct Layer {
  LayerKind kind = LayerKind::ReLU;
  ConvParams<T> conv;  // meaningful only when kind == Conv

  friend bool operator==(const Layer&, const Layer&) = default;
};

/// Shape of a plain residual CNN: (hidden conv, ReLU) × hidden_layers, then an output conv.
struct Architecture {
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  std::size_t hidden_layers = 2;
  std::size_t n_hidden = 8;  // features per group element; hidden width is n_hidden * t
  std::size_t kernel = 3;
  int group_order = 4;
  bool residual = true;

  friend bool operator==(const Architecture&, const Architecture&) = default;
};

/// Conv/ReLU stack that starts and ends with a conv. Hidden conv outputs carry
/// n_hidden * t channels in group-block layout; the output conv does not.
///
/// With `residual`, the output is input channels [0, out_channels) plus the last conv.
template <typename T>
struct Network {
  std::vector<Layer<T>> layers;
  RotationGroup group{4};
  std::size_t n_hidden = 0;
  bool residual = false;

  [[nodiscard]] std::size_t in_channels() const;
  [[nodiscard]] std::size_t out_channels() const;
  [[nodiscard]] std::size_t num_convs() const;
  /// Indices of layers whose outputs are regularization points (ReLUs after hidden convs).
  [[nodiscard]] std::vector<std::size_t> regularization_points() const;
  [[nodiscard]] Architecture architecture() const;
  /// Throws ShapeError when the layer sequence or channel counts are inconsistent.
  void validate() const;

  friend bool operator==(const Network&, const Network&) = default;
};

/// Network with all-zero weights and biases.
template <typename T>
Network<T> make_network(const Architecture& arch);

/// Fan-in uniform init: weights i.i.d. U[-a, a], a = sqrt(1 / (C_in p^2)); zero bias.
template <typename T>
void init_weights(Network<T>& net, std::uint64_t seed);

/// Activations at each regularization point, in layer order.
template <typename T>
struct Tape {
  std::vector<Tensor4<T>> activations;
  [[nodiscard]] std::size_t size() const { return activations.size(); }
};

/// Every intermediate value of one forward pass, as needed for backpropagation.
template <typename T>
struct Trace {
  Tensor4<T> input;
  std::vector<Tensor4<T>> layer_outputs;  // layer_outputs[i] is the output of layers[i]
  Tensor4<T> output;                      // after the residual add

  [[nodiscard]] const Tensor4<T>& layer_input(std::size_t i) const {
    return i == 0 ? input : layer_outputs[i - 1];
  }
};

template <typename T>
struct ForwardResult {
  Tensor4<T> output;
  Tape<T> tape;
};

template <typename T>
Trace<T> forward_trace(const Network<T>& net, const Tensor4<T>& x);

template <typename T>
Tape<T> tape_of(const Network<T>& net, const Trace<T>& trace);

template <typename T>
ForwardResult<T> forward_with_tape(const Network<T>& net, const Tensor4<T>& x);

template <typename T>
Tensor4<T> forward(const Network<T>& net, const Tensor4<T>& x);

/// Runs layers [first, layers.size()) on `activation` and applies the residual with `x`.
template <typename T>
Tensor4<T> forward_from(const Network<T>& net, std::size_t first, const Tensor4<T>& activation,
                        const Tensor4<T>& x);

template <typename T>
struct NetworkGrads {
  std::vector<ConvGrads<T>> convs;  // one per conv layer, in layer order; grad_x unused
};

/// Reverse pass. `grad_output` is d(loss)/d(output) or empty; `injected[r]` is an extra
/// gradient at regularization point r (may be empty).
template <typename T>
NetworkGrads<T> backward(const Network<T>& net, const Trace<T>& trace, const Tensor4<T>& grad_output,
                         const std::vector<Tensor4<T>>& injected);

template <typename T>
NetworkGrads<T> zero_grads(const Network<T>& net);

/// a += factor * b
template <typename T>
void accumulate(NetworkGrads<T>& a, const NetworkGrads<T>& b, T factor = T(1));

/// Number of trainable scalars.
template <typename T>
std::size_t parameter_count(const Network<T>& net);

/// Flat views over every weight and bias, in layer order (weights before bias).
template <typename T>
std::vector<T*> parameter_pointers(Network<T>& net);
template <typename T>
std::vector<T*> gradient_pointers(NetworkGrads<T>& grads);

/// One rotation-equivariant lifting layer: block k convolves with rotate(base, k).
template <typename T>
struct LiftingConvOracle {
  Tensor4<T> base;  // (n, n0, p, p)
  RotationGroup group{4};

  /// Stacked (n t, n0, p, p) kernel with zero bias, usable as an ordinary conv layer.
  [[nodiscard]] ConvParams<T> as_conv() const;
};

template <typename T>
LiftingConvOracle<T> random_lifting_oracle(std::size_t n, std::size_t n0, std::size_t kernel,
                                           const RotationGroup& group, std::uint64_t seed);

template <typename T>
GroupFeature<T> lifting_forward(const LiftingConvOracle<T>& oracle, const Tensor4<T>& x);

/// Network with weight sharing that makes every layer exactly equivariant for
/// permutation groups: lifting first conv, group convs in between, group-pooling output.
template <typename T>
Network<T> make_equivariant_network(const Architecture& arch, std::uint64_t seed);

// Checkpoints: u32 LE length + ASCII architecture descriptor, then every weight
// (rank 4) and bias (rank 1) as EQT1 records in layer order.

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const Network<T>& net);

/// Rebuilds the network from the stored descriptor.
template <typename T>
Network<T> load_checkpoint(const std::filesystem::path& path);

/// Loads into a network of known architecture; throws IoError on mismatch.
template <typename T>
Network<T> load_checkpoint(const std::filesystem::path& path, const Architecture& expected);

std::string describe(const Architecture& arch);
Architecture parse_architecture(const std::string& descriptor);

}  // namespace eqreg
