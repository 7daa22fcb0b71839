// Copyright 2026 The eqreg Authors
// SPDX-License-Identifier: Apache-2.0

#include "eqreg/eqreg.hpp"

namespace eqreg {
namespace {

double reduction_factor(std::size_t elements, Reduction reduction) {
  if (reduction == Reduction::Sum || elements == 0) return 1.0;
  return 1.0 / static_cast<double>(elements);
}

template <typename T>
void check_tapes(const Tape<T>& a, const Tape<T>& b) {
  if (a.size() != b.size()) {
    throw ShapeError("equi_loss: tape lengths differ (" + std::to_string(a.size()) + " vs " +
                     std::to_string(b.size()) + ")");
  }
}

}  // namespace

void EqRegConfig::validate() const {
  if (!(lambda >= 0.0)) throw ShapeError("lambda must be non-negative");
  if (!(output_consistency_weight >= 0.0)) throw ShapeError("output consistency weight must be non-negative");
}

std::string to_string(Reduction r) { return r == Reduction::Sum ? "sum" : "mean"; }

Reduction parse_reduction(const std::string& s) {
  if (s == "sum") return Reduction::Sum;
  if (s == "mean") return Reduction::Mean;
  throw ShapeError("unknown reduction '" + s + "'");
}

template <typename T>
double layer_loss(const GroupFeature<T>& f_plain, const GroupFeature<T>& f_rotated, int k,
                  const RotationGroup& group, const EqRegConfig& cfg) {
  require_same_shape(f_plain.tensor.shape(), f_rotated.tensor.shape(), "layer_loss");
  const Tensor4<T> moved = feature_transform(f_plain, k, group).tensor;
  double acc = 0.0;
  for (std::size_t i = 0; i < moved.size(); ++i) {
    const double d = static_cast<double>(moved[i]) - static_cast<double>(f_rotated.tensor[i]);
    acc += d * d;
  }
  return acc * reduction_factor(moved.size(), cfg.reduction);
}

template <typename T>
double equi_loss(const Tape<T>& tape_plain, const Tape<T>& tape_rot, int k,
                 const RotationGroup& group, const EqRegConfig& cfg) {
  check_tapes(tape_plain, tape_rot);
  const auto t = static_cast<std::size_t>(group.order());
  double total = 0.0;
  for (std::size_t l = 0; l < tape_plain.size(); ++l) {
    total += layer_loss(GroupFeature<T>(tape_plain.activations[l], t),
                        GroupFeature<T>(tape_rot.activations[l], t), k, group, cfg);
  }
  return total;
}

template <typename T>
double output_consistency_loss(const Tensor4<T>& y_plain, const Tensor4<T>& y_rot, int k,
                               const RotationGroup& group, Reduction reduction) {
  require_same_shape(y_plain.shape(), y_rot.shape(), "output_consistency_loss");
  const Tensor4<T> moved = rotate_image(y_plain, k, group);
  double acc = 0.0;
  for (std::size_t i = 0; i < moved.size(); ++i) {
    const double d = static_cast<double>(moved[i]) - static_cast<double>(y_rot[i]);
    acc += d * d;
  }
  return acc * reduction_factor(moved.size(), reduction);
}

double total_loss(double task_loss, double equi, const EqRegConfig& cfg, double output_term) {
  double total = task_loss + cfg.lambda * equi;
  if (cfg.output_consistency) total += cfg.output_consistency_weight * output_term;
  return total;
}

template <typename T>
EquiTapeGrads<T> equi_loss_tape_grads(const Tape<T>& tape_plain, const Tape<T>& tape_rot, int k,
                                      const RotationGroup& group, const EqRegConfig& cfg) {
  check_tapes(tape_plain, tape_rot);
  EquiTapeGrads<T> grads;
  for (std::size_t l = 0; l < tape_plain.size(); ++l) {
    const auto& plain = tape_plain.activations[l];
    const auto& rot = tape_rot.activations[l];
    require_same_shape(plain.shape(), rot.shape(), "equi_loss");
    const T s = static_cast<T>(2.0 * reduction_factor(plain.size(), cfg.reduction));
    Tensor4<T> diff = sub(feature_transform(plain, k, group), rot);
    grads.plain.push_back(scale(feature_transform_adjoint(diff, k, group), s));
    grads.rot.push_back(scale(diff, -s));
  }
  return grads;
}

template <typename T>
std::pair<Tensor4<T>, Tensor4<T>> output_consistency_grads(const Tensor4<T>& y_plain,
                                                           const Tensor4<T>& y_rot, int k,
                                                           const RotationGroup& group,
                                                           Reduction reduction) {
  require_same_shape(y_plain.shape(), y_rot.shape(), "output_consistency_loss");
  const T s = static_cast<T>(2.0 * reduction_factor(y_plain.size(), reduction));
  Tensor4<T> diff = sub(rotate_image(y_plain, k, group), y_rot);
  return {scale(rotate_image_adjoint(diff, k, group), s), scale(diff, -s)};
}

template <typename T>
NetworkGrads<T> equi_loss_backward(const Network<T>& net, const Trace<T>& trace_plain,
                                   const Trace<T>& trace_rot, int k, const EqRegConfig& cfg) {
  const Tape<T> tp = tape_of(net, trace_plain);
  const Tape<T> tr = tape_of(net, trace_rot);
  EquiTapeGrads<T> g = equi_loss_tape_grads(tp, tr, k, net.group, cfg);
  NetworkGrads<T> grads = backward(net, trace_plain, Tensor4<T>(), g.plain);
  accumulate(grads, backward(net, trace_rot, Tensor4<T>(), g.rot));
  return grads;
}

#define EQREG_INSTANTIATE_LOSS(T)                                                                 \
  template double layer_loss(const GroupFeature<T>&, const GroupFeature<T>&, int,                 \
                             const RotationGroup&, const EqRegConfig&);                           \
  template double equi_loss(const Tape<T>&, const Tape<T>&, int, const RotationGroup&,            \
                            const EqRegConfig&);                                                  \
  template double output_consistency_loss(const Tensor4<T>&, const Tensor4<T>&, int,              \
                                          const RotationGroup&, Reduction);                       \
  template EquiTapeGrads<T> equi_loss_tape_grads(const Tape<T>&, const Tape<T>&, int,             \
                                                 const RotationGroup&, const EqRegConfig&);       \
  template std::pair<Tensor4<T>, Tensor4<T>> output_consistency_grads(                            \
      const Tensor4<T>&, const Tensor4<T>&, int, const RotationGroup&, Reduction);                \
  template NetworkGrads<T> equi_loss_backward(const Network<T>&, const Trace<T>&,                 \
                                              const Trace<T>&, int, const EqRegConfig&);

EQREG_INSTANTIATE_LOSS(float)
EQREG_INSTANTIATE_LOSS(double)

}  // namespace eqreg
