// Copyright 2026 The eqreg Authors
// SPDX-License-Identifier: Apache-2.0

#include "eqreg/conv.hpp"

#include <string>

#include "eqreg/parallel.hpp"

namespace eqreg {
namespace {

struct Geometry {
  std::size_t in_c, out_c, h, w, p, pad, hp, wp;
};

template <typename T>
Geometry check_geometry(const Tensor4<T>& x, const ConvParams<T>& params) {
  params.validate();
  if (x.channels() != params.in_channels()) {
    throw ShapeError("conv2d: input has " + std::to_string(x.channels()) +
                     " channels, kernel expects " + std::to_string(params.in_channels()));
  }
  const std::size_t p = params.kernel();
  const std::size_t pad = (p - 1) / 2;
  return {params.in_channels(), params.out_channels(), x.height(), x.width(),
          p,                    pad,                    x.height() + 2 * pad, x.width() + 2 * pad};
}

// Zero-padded copy of sample b: in_c planes of hp × wp.
template <typename T>
std::vector<T> pad_sample(const Tensor4<T>& x, std::size_t b, const Geometry& g) {
  std::vector<T> out(g.in_c * g.hp * g.wp, T(0));
  for (std::size_t c = 0; c < g.in_c; ++c) {
    auto src = x.plane(b, c);
    T* dst = out.data() + c * g.hp * g.wp;
    for (std::size_t i = 0; i < g.h; ++i)
      std::copy_n(src.data() + i * g.w, g.w, dst + (i + g.pad) * g.wp + g.pad);
  }
  return out;
}

}  // namespace

template <typename T>
ConvParams<T>::ConvParams(Tensor4<T> w, std::vector<T> b) : weight(std::move(w)), bias(std::move(b)) {
  validate();
}

template <typename T>
void ConvParams<T>::validate() const {
  if (weight.height() != weight.width() || weight.height() % 2 == 0) {
    throw ShapeError("conv2d: kernel must be square with odd size, got " +
                     to_string(weight.shape()));
  }
  if (bias.size() != weight.batch()) {
    throw ShapeError("conv2d: bias has " + std::to_string(bias.size()) + " entries for " +
                     std::to_string(weight.batch()) + " output channels");
  }
}

template <typename T>
Tensor4<T> conv2d_forward(const Tensor4<T>& x, const ConvParams<T>& params) {
  const Geometry g = check_geometry(x, params);
  Tensor4<T> out(x.batch(), g.out_c, g.h, g.w);
  for_each_sample(x.batch(), [&](std::size_t b) {
    const std::vector<T> xp = pad_sample(x, b, g);
    for (std::size_t o = 0; o < g.out_c; ++o) {
      auto dst_plane = out.plane(b, o);
      std::fill(dst_plane.begin(), dst_plane.end(), params.bias[o]);
      for (std::size_t c = 0; c < g.in_c; ++c) {
        const T* src_plane = xp.data() + c * g.hp * g.wp;
        for (std::size_t u = 0; u < g.p; ++u)
          for (std::size_t v = 0; v < g.p; ++v) {
            const T wv = params.weight(o, c, u, v);
            for (std::size_t i = 0; i < g.h; ++i) {
              const T* src = src_plane + (i + u) * g.wp + v;
              T* dst = dst_plane.data() + i * g.w;
              for (std::size_t j = 0; j < g.w; ++j) dst[j] += wv * src[j];
            }
          }
      }
    }
  });
  return out;
}

template <typename T>
ConvGrads<T> conv2d_backward(const Tensor4<T>& x, const ConvParams<T>& params,
                             const Tensor4<T>& grad_out, bool need_grad_x) {
  const Geometry g = check_geometry(x, params);
  require_same_shape(grad_out.shape(), Shape4{x.batch(), g.out_c, g.h, g.w}, "conv2d_backward");

  const std::size_t batch = x.batch();
  const std::size_t kk = g.p * g.p;
  ConvGrads<T> grads;
  if (need_grad_x) grads.grad_x = Tensor4<T>(x.shape());
  std::vector<Tensor4<T>> weight_parts(batch, Tensor4<T>(params.weight.shape()));
  std::vector<std::vector<T>> bias_parts(batch, std::vector<T>(g.out_c, T(0)));

  for_each_sample(batch, [&](std::size_t b) {
    const std::vector<T> xp = pad_sample(x, b, g);
    std::vector<T> acc(kk * g.w);
    for (std::size_t o = 0; o < g.out_c; ++o) {
      auto go = grad_out.plane(b, o);
      T bsum = T(0);
      for (T v : go) bsum += v;
      bias_parts[b][o] = bsum;
      for (std::size_t c = 0; c < g.in_c; ++c) {
        const T* src_plane = xp.data() + c * g.hp * g.wp;
        std::fill(acc.begin(), acc.end(), T(0));
        for (std::size_t i = 0; i < g.h; ++i) {
          const T* gr = go.data() + i * g.w;
          for (std::size_t u = 0; u < g.p; ++u)
            for (std::size_t v = 0; v < g.p; ++v) {
              const T* row = src_plane + (i + u) * g.wp + v;
              T* a = acc.data() + (u * g.p + v) * g.w;
              for (std::size_t j = 0; j < g.w; ++j) a[j] += gr[j] * row[j];
            }
        }
        for (std::size_t uv = 0; uv < kk; ++uv) {
          T s = T(0);
          for (std::size_t j = 0; j < g.w; ++j) s += acc[uv * g.w + j];
          weight_parts[b](o, c, uv / g.p, uv % g.p) = s;
        }
      }
    }

    if (!need_grad_x) return;
    std::vector<T> gxp(g.in_c * g.hp * g.wp, T(0));
    for (std::size_t o = 0; o < g.out_c; ++o) {
      auto go = grad_out.plane(b, o);
      for (std::size_t c = 0; c < g.in_c; ++c) {
        T* dst_plane = gxp.data() + c * g.hp * g.wp;
        for (std::size_t u = 0; u < g.p; ++u)
          for (std::size_t v = 0; v < g.p; ++v) {
            const T wv = params.weight(o, c, u, v);
            for (std::size_t i = 0; i < g.h; ++i) {
              const T* src = go.data() + i * g.w;
              T* dst = dst_plane + (i + u) * g.wp + v;
              for (std::size_t j = 0; j < g.w; ++j) dst[j] += wv * src[j];
            }
          }
      }
    }
    for (std::size_t c = 0; c < g.in_c; ++c) {
      auto dst = grads.grad_x.plane(b, c);
      const T* src = gxp.data() + c * g.hp * g.wp;
      for (std::size_t i = 0; i < g.h; ++i)
        std::copy_n(src + (i + g.pad) * g.wp + g.pad, g.w, dst.data() + i * g.w);
    }
  });

  grads.grad_weight = Tensor4<T>(params.weight.shape());
  grads.grad_bias.assign(g.out_c, T(0));
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t i = 0; i < grads.grad_weight.size(); ++i)
      grads.grad_weight[i] += weight_parts[b][i];
    for (std::size_t o = 0; o < g.out_c; ++o) grads.grad_bias[o] += bias_parts[b][o];
  }
  return grads;
}

#define EQREG_INSTANTIATE_CONV(T)                                                      \
  template struct ConvParams<T>;                                                       \
  template Tensor4<T> conv2d_forward(const Tensor4<T>&, const ConvParams<T>&);         \
  template ConvGrads<T> conv2d_backward(const Tensor4<T>&, const ConvParams<T>&,       \
                                        const Tensor4<T>&, bool);

EQREG_INSTANTIATE_CONV(float)
EQREG_INSTANTIATE_CONV(double)

}  // namespace eqreg
