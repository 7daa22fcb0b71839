// Copyright 2026 The eqreg Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "eqreg/group.hpp"
#include "eqreg/model.hpp"
#include "eqreg/tensor.hpp"

namespace eqreg {

enum class Reduction { Sum, Mean };
enum class SampleK { ExcludeIdentity, IncludeIdentity };

struct EqRegConfig {
  double lambda = 0.1;
  Reduction reduction = Reduction::Mean;
  SampleK sample_k = SampleK::ExcludeIdentity;
  bool output_consistency = false;
  double output_consistency_weight = 1.0;

  /// Throws ShapeError on negative weights.
  void validate() const;
};

std::string to_string(Reduction r);
Reduction parse_reduction(const std::string& s);

/// ||feature_transform(f_plain, k) - f_rotated||_F^2, divided by the element count
/// under Reduction::Mean.
template <typename T>
double layer_loss(const GroupFeature<T>& f_plain, const GroupFeature<T>& f_rotated, int k,
                  const RotationGroup& group, const EqRegConfig& cfg);

/// Sum of layer_loss over every regularization point.
template <typename T>
double equi_loss(const Tape<T>& tape_plain, const Tape<T>& tape_rot, int k,
                 const RotationGroup& group, const EqRegConfig& cfg);

/// ||rotate_image(y_plain, k) - y_rot||_F^2 with spatial rotation only.
template <typename T>
double output_consistency_loss(const Tensor4<T>& y_plain, const Tensor4<T>& y_rot, int k,
                               const RotationGroup& group, Reduction reduction);

/// task + lambda * equi (+ output_consistency_weight * output_term when enabled).
double total_loss(double task_loss, double equi, const EqRegConfig& cfg, double output_term = 0.0);

/// Gradients of the regularizer with respect to the two branches' tapes and outputs.
template <typename T>
struct EquiTapeGrads {
  std::vector<Tensor4<T>> plain;  // d/d tape_plain[l]
  std::vector<Tensor4<T>> rot;    // d/d tape_rot[l]
};

template <typename T>
EquiTapeGrads<T> equi_loss_tape_grads(const Tape<T>& tape_plain, const Tape<T>& tape_rot, int k,
                                      const RotationGroup& group, const EqRegConfig& cfg);

/// d/dy_plain and d/dy_rot of output_consistency_loss.
template <typename T>
std::pair<Tensor4<T>, Tensor4<T>> output_consistency_grads(const Tensor4<T>& y_plain,
                                                           const Tensor4<T>& y_rot, int k,
                                                           const RotationGroup& group,
                                                           Reduction reduction);

/// Exact gradient of equi_loss with respect to all network weights. Both branches
/// share the weights, so both traces contribute.
template <typename T>
NetworkGrads<T> equi_loss_backward(const Network<T>& net, const Trace<T>& trace_plain,
                                   const Trace<T>& trace_rot, int k, const EqRegConfig& cfg);

}  // namespace eqreg
