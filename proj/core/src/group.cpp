// Copyright 2026 The eqreg Authors
// SPDX-License-Identifier: Apache-2.0

#include "eqreg/group.hpp"

#include <array>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

namespace eqreg {
namespace {

void require_square(const Shape4& s, const char* what) {
  if (s.height != s.width) {
    throw ShapeError(std::string(what) + ": spatial dims must be square, got " + to_string(s));
  }
}

// out[i][j] = in[src(i, j)] for m counterclockwise quarter turns.
template <typename T>
void rot90_plane(std::span<const T> in, std::span<T> out, std::size_t size, int m) {
  const std::size_t last = size - 1;
  for (std::size_t i = 0; i < size; ++i)
    for (std::size_t j = 0; j < size; ++j) {
      std::size_t si = i, sj = j;
      switch (m) {
        case 1: si = j; sj = last - i; break;
        case 2: si = last - i; sj = last - j; break;
        case 3: si = last - j; sj = i; break;
        default: break;
      }
      out[i * size + j] = in[si * size + sj];
    }
}

struct Tap {
  std::array<std::size_t, 4> index{};
  std::array<double, 4> weight{};
  int count = 0;
};

// Bilinear sampling taps for every output pixel of a size × size plane rotated by theta.
std::vector<Tap> bilinear_taps(std::size_t size, double theta) {
  const double c = (static_cast<double>(size) - 1.0) / 2.0;
  const double cs = std::cos(theta), sn = std::sin(theta);
  const auto n = static_cast<long>(size);
  std::vector<Tap> taps(size * size);
  for (std::size_t i = 0; i < size; ++i)
    for (std::size_t j = 0; j < size; ++j) {
      const double di = static_cast<double>(i) - c, dj = static_cast<double>(j) - c;
      const double ys = c + cs * di + sn * dj;
      const double xs = c - sn * di + cs * dj;
      const double y0 = std::floor(ys), x0 = std::floor(xs);
      const double fy = ys - y0, fx = xs - x0;
      Tap& tap = taps[i * size + j];
      const std::array<long, 2> ry = {static_cast<long>(y0), static_cast<long>(y0) + 1};
      const std::array<long, 2> rx = {static_cast<long>(x0), static_cast<long>(x0) + 1};
      const std::array<double, 2> wy = {1.0 - fy, fy};
      const std::array<double, 2> wx = {1.0 - fx, fx};
      for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b) {
          const double w = wy[a] * wx[b];
          if (ry[a] < 0 || ry[a] >= n || rx[b] < 0 || rx[b] >= n || w == 0.0) continue;
          tap.index[tap.count] = static_cast<std::size_t>(ry[a] * n + rx[b]);
          tap.weight[tap.count] = w;
          ++tap.count;
        }
    }
  return taps;
}

template <typename T>
Tensor4<T> rotate_impl(const Tensor4<T>& x, int k, const RotationGroup& group, bool adjoint) {
  require_square(x.shape(), "rotate_image");
  group.check_element(k);
  if (k == 0) return x;
  const std::size_t size = x.height();
  Tensor4<T> out(x.shape());
  if (group.is_exact(k)) {
    int m = 4 * k / group.order();
    if (adjoint) m = (4 - m) % 4;
    for (std::size_t b = 0; b < x.batch(); ++b)
      for (std::size_t c = 0; c < x.channels(); ++c) rot90_plane(x.plane(b, c), out.plane(b, c), size, m);
    return out;
  }
  const std::vector<Tap> taps = bilinear_taps(size, group.angle(k));
  for (std::size_t b = 0; b < x.batch(); ++b)
    for (std::size_t c = 0; c < x.channels(); ++c) {
      auto in = x.plane(b, c);
      auto dst = out.plane(b, c);
      if (!adjoint) {
        for (std::size_t p = 0; p < taps.size(); ++p) {
          double acc = 0.0;
          for (int q = 0; q < taps[p].count; ++q) acc += taps[p].weight[q] * in[taps[p].index[q]];
          dst[p] = static_cast<T>(acc);
        }
      } else {
        std::vector<double> acc(taps.size(), 0.0);
        for (std::size_t p = 0; p < taps.size(); ++p)
          for (int q = 0; q < taps[p].count; ++q) acc[taps[p].index[q]] += taps[p].weight[q] * in[p];
        for (std::size_t p = 0; p < taps.size(); ++p) dst[p] = static_cast<T>(acc[p]);
      }
    }
  return out;
}

template <typename T>
void copy_block(const Tensor4<T>& src, std::size_t src_block, Tensor4<T>& dst,
                std::size_t dst_block, std::size_t n) {
  for (std::size_t b = 0; b < src.batch(); ++b)
    for (std::size_t j = 0; j < n; ++j) {
      auto from = src.plane(b, src_block * n + j);
      std::copy(from.begin(), from.end(), dst.plane(b, dst_block * n + j).begin());
    }
}

template <typename T>
Tensor4<T> shift_blocks(const Tensor4<T>& x, std::size_t t, int m) {
  const std::size_t n = x.channels() / t;
  Tensor4<T> out(x.shape());
  for (std::size_t g = 0; g < t; ++g) {
    const std::size_t from = (g + t - static_cast<std::size_t>(m)) % t;
    copy_block(x, from, out, g, n);
  }
  return out;
}

void require_divisible(std::size_t channels, std::size_t t) {
  if (t == 0 || channels % t != 0) {
    throw ShapeError("group feature: " + std::to_string(channels) +
                     " channels not divisible by group order " + std::to_string(t));
  }
}

}  // namespace

RotationGroup::RotationGroup(int order) : order_(order) {
  if (order < 2) throw ShapeError("RotationGroup: order must be >= 2, got " + std::to_string(order));
}

int RotationGroup::reduce(int k) const { return ((k % order_) + order_) % order_; }

double RotationGroup::angle(int k) const {
  return 2.0 * std::numbers::pi * static_cast<double>(reduce(k)) / static_cast<double>(order_);
}

void RotationGroup::check_element(int k) const {
  if (k < 0 || k >= order_) {
    throw ShapeError("group element " + std::to_string(k) + " out of range [0, " +
                     std::to_string(order_) + ")");
  }
}

template <typename T>
GroupFeature<T>::GroupFeature(Tensor4<T> tensor_in, std::size_t order)
    : tensor(std::move(tensor_in)), t(order) {
  require_divisible(tensor.channels(), t);
}

template <typename T>
Tensor4<T> GroupFeature<T>::block(std::size_t g) const {
  return slice_channels(tensor, g * n(), n());
}

template <typename T>
Tensor4<T> rotate_image(const Tensor4<T>& x, int k, const RotationGroup& group) {
  return rotate_impl(x, k, group, false);
}

template <typename T>
Tensor4<T> rotate_image_adjoint(const Tensor4<T>& x, int k, const RotationGroup& group) {
  return rotate_impl(x, k, group, true);
}

template <typename T>
GroupFeature<T> cyclic_shift(const GroupFeature<T>& f, int m) {
  require_divisible(f.tensor.channels(), f.t);
  if (m < 0 || static_cast<std::size_t>(m) >= f.t) {
    throw ShapeError("cyclic_shift: shift " + std::to_string(m) + " out of range");
  }
  return GroupFeature<T>(shift_blocks(f.tensor, f.t, m), f.t);
}

template <typename T>
Tensor4<T> feature_transform(const Tensor4<T>& f, int k, const RotationGroup& group) {
  const auto t = static_cast<std::size_t>(group.order());
  require_divisible(f.channels(), t);
  group.check_element(k);
  return rotate_image(shift_blocks(f, t, k), k, group);
}

template <typename T>
Tensor4<T> feature_transform_adjoint(const Tensor4<T>& f, int k, const RotationGroup& group) {
  const auto t = static_cast<std::size_t>(group.order());
  require_divisible(f.channels(), t);
  group.check_element(k);
  return shift_blocks(rotate_image_adjoint(f, k, group), t, group.reduce(-k));
}

template <typename T>
GroupFeature<T> feature_transform(const GroupFeature<T>& f, int k, const RotationGroup& group) {
  if (f.t != static_cast<std::size_t>(group.order())) throw ShapeError("feature_transform: group order mismatch");
  return GroupFeature<T>(feature_transform(f.tensor, k, group), f.t);
}

template <typename T>
GroupFeature<T> feature_transform_adjoint(const GroupFeature<T>& f, int k,
                                          const RotationGroup& group) {
  if (f.t != static_cast<std::size_t>(group.order())) throw ShapeError("feature_transform_adjoint: group order mismatch");
  return GroupFeature<T>(feature_transform_adjoint(f.tensor, k, group), f.t);
}

#define EQREG_INSTANTIATE_GROUP(T)                                                              \
  template struct GroupFeature<T>;                                                              \
  template Tensor4<T> rotate_image(const Tensor4<T>&, int, const RotationGroup&);               \
  template Tensor4<T> rotate_image_adjoint(const Tensor4<T>&, int, const RotationGroup&);       \
  template GroupFeature<T> cyclic_shift(const GroupFeature<T>&, int);                           \
  template Tensor4<T> feature_transform(const Tensor4<T>&, int, const RotationGroup&);          \
  template Tensor4<T> feature_transform_adjoint(const Tensor4<T>&, int, const RotationGroup&);  \
  template GroupFeature<T> feature_transform(const GroupFeature<T>&, int, const RotationGroup&); \
  template GroupFeature<T> feature_transform_adjoint(const GroupFeature<T>&, int,               \
                                                     const RotationGroup&);

EQREG_INSTANTIATE_GROUP(float)
EQREG_INSTANTIATE_GROUP(double)

}  // namespace eqreg
