// Copyright 2026 The eqreg Authors
// SPDX-License-Identifier: Apache-2.0

#include "eqreg/model.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include "eqreg/eqt_io.hpp"

namespace eqreg {
namespace {

std::size_t hidden_width(const Architecture& arch) {
  return arch.n_hidden * static_cast<std::size_t>(arch.group_order);
}

// Integer channel chain: in -> w -> ... -> w -> out.
std::vector<std::pair<std::size_t, std::size_t>> conv_channels(const Architecture& arch) {
  std::vector<std::pair<std::size_t, std::size_t>> chain;
  std::size_t in = arch.in_channels;
  for (std::size_t l = 0; l < arch.hidden_layers; ++l) {
    chain.emplace_back(in, hidden_width(arch));
    in = hidden_width(arch);
  }
  chain.emplace_back(in, arch.out_channels);
  return chain;
}

std::string layer_list(const Architecture& arch) {
  std::string s;
  for (const auto& [in, out] : conv_channels(arch)) {
    if (!s.empty()) s += ",relu,";
    s += "conv:" + std::to_string(in) + ":" + std::to_string(out);
  }
  return s;
}

template <typename T>
Tensor4<T> rotate_kernel(const Tensor4<T>& k, int g, const RotationGroup& group) {
  return rotate_image(k, group.reduce(g), group);
}

template <typename T>
void put_kernel(ConvParams<T>& conv, std::size_t o, std::size_t c, const Tensor4<T>& k) {
  for (std::size_t u = 0; u < k.height(); ++u)
    for (std::size_t v = 0; v < k.width(); ++v) conv.weight(o, c, u, v) = k(0, 0, u, v);
}

template <typename T>
Tensor4<T> random_kernel(std::size_t p, double a, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-a, a);
  Tensor4<T> k(1, 1, p, p);
  for (auto& v : k.data()) v = static_cast<T>(dist(rng));
  return k;
}

}  // namespace

template <typename T>
std::size_t Network<T>::in_channels() const {
  return layers.empty() ? 0 : layers.front().conv.in_channels();
}

template <typename T>
std::size_t Network<T>::out_channels() const {
  return layers.empty() ? 0 : layers.back().conv.out_channels();
}

template <typename T>
std::size_t Network<T>::num_convs() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.kind == LayerKind::Conv ? 1 : 0;
  return n;
}

template <typename T>
std::vector<std::size_t> Network<T>::regularization_points() const {
  std::vector<std::size_t> points;
  for (std::size_t i = 0; i < layers.size(); ++i)
    if (layers[i].kind == LayerKind::ReLU) points.push_back(i);
  return points;
}

template <typename T>
Architecture Network<T>::architecture() const {
  validate();
  Architecture arch;
  arch.in_channels = in_channels();
  arch.out_channels = out_channels();
  arch.hidden_layers = num_convs() - 1;
  arch.n_hidden = n_hidden;
  arch.kernel = layers.front().conv.kernel();
  arch.group_order = group.order();
  arch.residual = residual;
  return arch;
}

template <typename T>
void Network<T>::validate() const {
  if (layers.empty() || layers.front().kind != LayerKind::Conv || layers.back().kind != LayerKind::Conv) {
    throw ShapeError("network must start and end with a conv layer");
  }
  const std::size_t width = n_hidden * static_cast<std::size_t>(group.order());
  std::size_t channels = in_channels();
  const std::size_t kernel = layers.front().conv.kernel();
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& layer = layers[i];
    const bool expect_conv = i % 2 == 0;
    if ((layer.kind == LayerKind::Conv) != expect_conv) {
      throw ShapeError("network layers must alternate conv and relu");
    }
    if (layer.kind != LayerKind::Conv) continue;
    layer.conv.validate();
    if (layer.conv.in_channels() != channels) {
      throw ShapeError("layer " + std::to_string(i) + " expects " +
                       std::to_string(layer.conv.in_channels()) + " channels, receives " +
                       std::to_string(channels));
    }
    if (layer.conv.kernel() != kernel) throw ShapeError("all convs must share one kernel size");
    const bool hidden = i + 1 < layers.size();
    if (hidden && layer.conv.out_channels() != width) {
      throw ShapeError("hidden conv " + std::to_string(i) + " must output n_hidden * t = " +
                       std::to_string(width) + " channels");
    }
    channels = layer.conv.out_channels();
  }
  if (residual && out_channels() > in_channels()) {
    throw ShapeError("residual network cannot output more channels than it consumes");
  }
}

template <typename T>
Network<T> make_network(const Architecture& arch) {
  if (arch.kernel % 2 == 0) throw ShapeError("kernel size must be odd");
  if (arch.in_channels == 0 || arch.out_channels == 0 || arch.n_hidden == 0) {
    throw ShapeError("architecture channel counts must be positive");
  }
  Network<T> net;
  net.group = RotationGroup(arch.group_order);
  net.n_hidden = arch.n_hidden;
  net.residual = arch.residual;
  bool first = true;
  for (const auto& [in, out] : conv_channels(arch)) {
    if (!first) net.layers.push_back({LayerKind::ReLU, {}});
    net.layers.push_back({LayerKind::Conv, ConvParams<T>(out, in, arch.kernel)});
    first = false;
  }
  net.validate();
  return net;
}

template <typename T>
void init_weights(Network<T>& net, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (auto& layer : net.layers) {
    if (layer.kind != LayerKind::Conv) continue;
    auto& conv = layer.conv;
    const double fan_in = static_cast<double>(conv.in_channels() * conv.kernel() * conv.kernel());
    std::uniform_real_distribution<double> dist(-std::sqrt(1.0 / fan_in), std::sqrt(1.0 / fan_in));
    for (auto& w : conv.weight.data()) w = static_cast<T>(dist(rng));
    std::fill(conv.bias.begin(), conv.bias.end(), T(0));
  }
}

template <typename T>
Trace<T> forward_trace(const Network<T>& net, const Tensor4<T>& x) {
  if (x.channels() != net.in_channels()) {
    throw ShapeError("network expects " + std::to_string(net.in_channels()) +
                     " input channels, got " + std::to_string(x.channels()));
  }
  Trace<T> trace;
  trace.input = x;
  trace.layer_outputs.reserve(net.layers.size());
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const auto& in = trace.layer_input(i);
    const auto& layer = net.layers[i];
    trace.layer_outputs.push_back(layer.kind == LayerKind::Conv ? conv2d_forward(in, layer.conv)
                                                                : relu_forward(in));
  }
  trace.output = trace.layer_outputs.back();
  if (net.residual) {
    for (std::size_t b = 0; b < x.batch(); ++b)
      for (std::size_t c = 0; c < trace.output.channels(); ++c) {
        auto dst = trace.output.plane(b, c);
        auto src = x.plane(b, c);
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
      }
  }
  return trace;
}

template <typename T>
Tape<T> tape_of(const Network<T>& net, const Trace<T>& trace) {
  Tape<T> tape;
  for (std::size_t i : net.regularization_points()) tape.activations.push_back(trace.layer_outputs[i]);
  return tape;
}

template <typename T>
ForwardResult<T> forward_with_tape(const Network<T>& net, const Tensor4<T>& x) {
  Trace<T> trace = forward_trace(net, x);
  Tape<T> tape = tape_of(net, trace);
  return {std::move(trace.output), std::move(tape)};
}

template <typename T>
Tensor4<T> forward(const Network<T>& net, const Tensor4<T>& x) {
  return forward_trace(net, x).output;
}

template <typename T>
Tensor4<T> forward_from(const Network<T>& net, std::size_t first, const Tensor4<T>& activation,
                        const Tensor4<T>& x) {
  Tensor4<T> value = activation;
  for (std::size_t i = first; i < net.layers.size(); ++i) {
    const auto& layer = net.layers[i];
    value = layer.kind == LayerKind::Conv ? conv2d_forward(value, layer.conv) : relu_forward(value);
  }
  if (net.residual) {
    for (std::size_t b = 0; b < x.batch(); ++b)
      for (std::size_t c = 0; c < value.channels(); ++c) {
        auto dst = value.plane(b, c);
        auto src = x.plane(b, c);
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
      }
  }
  return value;
}

template <typename T>
NetworkGrads<T> backward(const Network<T>& net, const Trace<T>& trace, const Tensor4<T>& grad_output,
                         const std::vector<Tensor4<T>>& injected) {
  const auto points = net.regularization_points();
  if (!injected.empty() && injected.size() != points.size()) {
    throw ShapeError("backward: expected " + std::to_string(points.size()) + " injected gradients");
  }
  Tensor4<T> grad = grad_output.empty() ? Tensor4<T>(trace.output.shape()) : grad_output;
  require_same_shape(grad.shape(), trace.output.shape(), "backward");

  NetworkGrads<T> grads;
  grads.convs.resize(net.num_convs());
  std::size_t conv_index = grads.convs.size();
  std::size_t point_index = points.size();
  for (std::size_t i = net.layers.size(); i-- > 0;) {
    if (point_index > 0 && points[point_index - 1] == i) {
      --point_index;
      if (!injected.empty() && !injected[point_index].empty()) axpy(grad, T(1), injected[point_index]);
    }
    const auto& layer = net.layers[i];
    if (layer.kind == LayerKind::ReLU) {
      grad = relu_backward(trace.layer_input(i), grad);
      continue;
    }
    ConvGrads<T> g = conv2d_backward(trace.layer_input(i), layer.conv, grad, i > 0);
    grad = std::move(g.grad_x);
    g.grad_x = Tensor4<T>();
    grads.convs[--conv_index] = std::move(g);
  }
  return grads;
}

template <typename T>
NetworkGrads<T> zero_grads(const Network<T>& net) {
  NetworkGrads<T> grads;
  for (const auto& layer : net.layers) {
    if (layer.kind != LayerKind::Conv) continue;
    ConvGrads<T> g;
    g.grad_weight = Tensor4<T>(layer.conv.weight.shape());
    g.grad_bias.assign(layer.conv.bias.size(), T(0));
    grads.convs.push_back(std::move(g));
  }
  return grads;
}

template <typename T>
void accumulate(NetworkGrads<T>& a, const NetworkGrads<T>& b, T factor) {
  if (a.convs.size() != b.convs.size()) throw ShapeError("accumulate: gradient layout mismatch");
  for (std::size_t i = 0; i < a.convs.size(); ++i) {
    axpy(a.convs[i].grad_weight, factor, b.convs[i].grad_weight);
    for (std::size_t o = 0; o < a.convs[i].grad_bias.size(); ++o)
      a.convs[i].grad_bias[o] += factor * b.convs[i].grad_bias[o];
  }
}

template <typename T>
std::size_t parameter_count(const Network<T>& net) {
  std::size_t n = 0;
  for (const auto& layer : net.layers)
    if (layer.kind == LayerKind::Conv) n += layer.conv.weight.size() + layer.conv.bias.size();
  return n;
}

template <typename T>
std::vector<T*> parameter_pointers(Network<T>& net) {
  std::vector<T*> ptrs;
  for (auto& layer : net.layers) {
    if (layer.kind != LayerKind::Conv) continue;
    for (auto& w : layer.conv.weight.data()) ptrs.push_back(&w);
    for (auto& b : layer.conv.bias) ptrs.push_back(&b);
  }
  return ptrs;
}

template <typename T>
std::vector<T*> gradient_pointers(NetworkGrads<T>& grads) {
  std::vector<T*> ptrs;
  for (auto& g : grads.convs) {
    for (auto& w : g.grad_weight.data()) ptrs.push_back(&w);
    for (auto& b : g.grad_bias) ptrs.push_back(&b);
  }
  return ptrs;
}

template <typename T>
ConvParams<T> LiftingConvOracle<T>::as_conv() const {
  const std::size_t n = base.batch(), n0 = base.channels(), p = base.height();
  const auto t = static_cast<std::size_t>(group.order());
  ConvParams<T> conv(n * t, n0, p);
  for (std::size_t g = 0; g < t; ++g) {
    const Tensor4<T> rotated = rotate_image(base, static_cast<int>(g), group);
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t c = 0; c < n0; ++c)
        for (std::size_t u = 0; u < p; ++u)
          for (std::size_t v = 0; v < p; ++v) conv.weight(g * n + j, c, u, v) = rotated(j, c, u, v);
  }
  return conv;
}

template <typename T>
LiftingConvOracle<T> random_lifting_oracle(std::size_t n, std::size_t n0, std::size_t kernel,
                                           const RotationGroup& group, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  LiftingConvOracle<T> oracle{Tensor4<T>(n, n0, kernel, kernel), group};
  for (auto& v : oracle.base.data()) v = static_cast<T>(dist(rng));
  return oracle;
}

template <typename T>
GroupFeature<T> lifting_forward(const LiftingConvOracle<T>& oracle, const Tensor4<T>& x) {
  return GroupFeature<T>(conv2d_forward(x, oracle.as_conv()),
                         static_cast<std::size_t>(oracle.group.order()));
}

template <typename T>
Network<T> make_equivariant_network(const Architecture& arch, std::uint64_t seed) {
  Network<T> net = make_network<T>(arch);
  std::mt19937_64 rng(seed);
  const RotationGroup& group = net.group;
  const auto t = static_cast<std::size_t>(group.order());
  const std::size_t n = arch.n_hidden, p = arch.kernel;
  std::uniform_real_distribution<double> bias_dist(-0.1, 0.1);

  auto convs = conv_channels(arch);
  std::size_t conv_index = 0;
  for (auto& layer : net.layers) {
    if (layer.kind != LayerKind::Conv) continue;
    auto& conv = layer.conv;
    const bool first = conv_index == 0;
    const bool last = conv_index + 1 == convs.size();
    const double a = std::sqrt(1.0 / static_cast<double>(conv.in_channels() * p * p));

    if (first && last) {
      // Plain -> plain: an isotropic kernel family keeps the map equivariant.
      for (std::size_t o = 0; o < conv.out_channels(); ++o)
        for (std::size_t c = 0; c < conv.in_channels(); ++c) {
          Tensor4<T> sum(1, 1, p, p);
          const Tensor4<T> base = random_kernel<T>(p, a / static_cast<double>(t), rng);
          for (std::size_t g = 0; g < t; ++g) axpy(sum, T(1), rotate_kernel(base, static_cast<int>(g), group));
          put_kernel(conv, o, c, sum);
        }
    } else if (first) {
      // Lifting: out block g convolves with rotate(V_j, g).
      for (std::size_t j = 0; j < n; ++j) {
        const T b = static_cast<T>(bias_dist(rng));
        for (std::size_t c = 0; c < conv.in_channels(); ++c) {
          const Tensor4<T> base = random_kernel<T>(p, a, rng);
          for (std::size_t g = 0; g < t; ++g)
            put_kernel(conv, g * n + j, c, rotate_kernel(base, static_cast<int>(g), group));
        }
        for (std::size_t g = 0; g < t; ++g) conv.bias[g * n + j] = b;
      }
    } else if (last) {
      // Group pooling: out_o = sum_h corr(F_h, rotate(V_{o,i}, h)).
      for (std::size_t o = 0; o < conv.out_channels(); ++o) {
        conv.bias[o] = static_cast<T>(bias_dist(rng));
        for (std::size_t i = 0; i < n; ++i) {
          const Tensor4<T> base = random_kernel<T>(p, a, rng);
          for (std::size_t h = 0; h < t; ++h)
            put_kernel(conv, o, h * n + i, rotate_kernel(base, static_cast<int>(h), group));
        }
      }
    } else {
      // Group conv: out block g reads input block h through rotate(V_{j,i,(h-g) mod t}, g).
      for (std::size_t j = 0; j < n; ++j) {
        const T b = static_cast<T>(bias_dist(rng));
        for (std::size_t g = 0; g < t; ++g) conv.bias[g * n + j] = b;
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t d = 0; d < t; ++d) {
            const Tensor4<T> base = random_kernel<T>(p, a, rng);
            for (std::size_t g = 0; g < t; ++g) {
              const std::size_t h = (g + d) % t;
              put_kernel(conv, g * n + j, h * n + i, rotate_kernel(base, static_cast<int>(g), group));
            }
          }
      }
    }
    ++conv_index;
  }
  return net;
}

std::string describe(const Architecture& arch) {
  std::ostringstream out;
  out << "eqreg-net v1 in=" << arch.in_channels << " out=" << arch.out_channels
      << " hidden=" << arch.hidden_layers << " n=" << arch.n_hidden << " t=" << arch.group_order
      << " kernel=" << arch.kernel << " residual=" << (arch.residual ? 1 : 0)
      << " layers=" << layer_list(arch);
  return out.str();
}

Architecture parse_architecture(const std::string& descriptor) {
  std::istringstream in(descriptor);
  std::string magic, version;
  in >> magic >> version;
  if (magic != "eqreg-net" || version != "v1") throw IoError("checkpoint: unrecognized descriptor");
  std::map<std::string, std::string> fields;
  for (std::string token; in >> token;) {
    const auto eq = token.find('=');
    if (eq == std::string::npos) throw IoError("checkpoint: malformed descriptor token '" + token + "'");
    fields[token.substr(0, eq)] = token.substr(eq + 1);
  }
  auto number = [&](const char* key) -> long {
    auto it = fields.find(key);
    if (it == fields.end()) throw IoError(std::string("checkpoint: descriptor lacks ") + key);
    try {
      return std::stol(it->second);
    } catch (const std::exception&) {
      throw IoError(std::string("checkpoint: bad value for ") + key);
    }
  };
  Architecture arch;
  arch.in_channels = static_cast<std::size_t>(number("in"));
  arch.out_channels = static_cast<std::size_t>(number("out"));
  arch.hidden_layers = static_cast<std::size_t>(number("hidden"));
  arch.n_hidden = static_cast<std::size_t>(number("n"));
  arch.group_order = static_cast<int>(number("t"));
  arch.kernel = static_cast<std::size_t>(number("kernel"));
  arch.residual = number("residual") != 0;
  if (fields["layers"] != layer_list(arch)) throw IoError("checkpoint: layer list inconsistent with descriptor");
  return arch;
}

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const Network<T>& net) {
  const std::string desc = describe(net.architecture());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  const auto len = static_cast<std::uint32_t>(desc.size());
  for (int i = 0; i < 4; ++i) out.put(static_cast<char>((len >> (8 * i)) & 0xFFu));
  out.write(desc.data(), static_cast<std::streamsize>(desc.size()));
  for (const auto& layer : net.layers) {
    if (layer.kind != LayerKind::Conv) continue;
    write_tensor(out, layer.conv.weight);
    const std::uint32_t dim = static_cast<std::uint32_t>(layer.conv.bias.size());
    write_eqt<T>(out, std::span<const std::uint32_t>(&dim, 1), layer.conv.bias);
  }
  if (!out) throw IoError("failed writing " + path.string());
}

template <typename T>
Network<T> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  unsigned char len_bytes[4];
  in.read(reinterpret_cast<char*>(len_bytes), 4);
  if (!in) throw IoError("checkpoint: truncated header");
  std::uint32_t len = 0;
  for (int i = 0; i < 4; ++i) len |= static_cast<std::uint32_t>(len_bytes[i]) << (8 * i);
  if (len > 4096) throw IoError("checkpoint: descriptor too long");
  std::string desc(len, '\0');
  in.read(desc.data(), len);
  if (!in) throw IoError("checkpoint: truncated descriptor");

  Network<T> net = make_network<T>(parse_architecture(desc));
  for (auto& layer : net.layers) {
    if (layer.kind != LayerKind::Conv) continue;
    Tensor4<T> weight = read_tensor<T>(in);
    std::vector<T> bias = read_vector<T>(in);
    if (!(weight.shape() == layer.conv.weight.shape()) || bias.size() != layer.conv.bias.size()) {
      throw IoError("checkpoint: parameter shape does not match descriptor");
    }
    layer.conv.weight = std::move(weight);
    layer.conv.bias = std::move(bias);
  }
  return net;
}

template <typename T>
Network<T> load_checkpoint(const std::filesystem::path& path, const Architecture& expected) {
  Network<T> net = load_checkpoint<T>(path);
  if (!(net.architecture() == expected)) {
    throw IoError("checkpoint architecture '" + describe(net.architecture()) +
                  "' does not match expected '" + describe(expected) + "'");
  }
  return net;
}

#define EQREG_INSTANTIATE_MODEL(T)                                                                \
  template struct Network<T>;                                                                     \
  template struct LiftingConvOracle<T>;                                                           \
  template Network<T> make_network<T>(const Architecture&);                                       \
  template void init_weights(Network<T>&, std::uint64_t);                                         \
  template Trace<T> forward_trace(const Network<T>&, const Tensor4<T>&);                          \
  template Tape<T> tape_of(const Network<T>&, const Trace<T>&);                                   \
  template ForwardResult<T> forward_with_tape(const Network<T>&, const Tensor4<T>&);             \
  template Tensor4<T> forward(const Network<T>&, const Tensor4<T>&);                              \
  template Tensor4<T> forward_from(const Network<T>&, std::size_t, const Tensor4<T>&,             \
                                   const Tensor4<T>&);                                            \
  template NetworkGrads<T> backward(const Network<T>&, const Trace<T>&, const Tensor4<T>&,        \
                                    const std::vector<Tensor4<T>>&);                              \
  template NetworkGrads<T> zero_grads(const Network<T>&);                                         \
  template void accumulate(NetworkGrads<T>&, const NetworkGrads<T>&, T);                          \
  template std::size_t parameter_count(const Network<T>&);                                        \
  template std::vector<T*> parameter_pointers(Network<T>&);                                       \
  template std::vector<T*> gradient_pointers(NetworkGrads<T>&);                                   \
  template LiftingConvOracle<T> random_lifting_oracle<T>(std::size_t, std::size_t, std::size_t,   \
                                                         const RotationGroup&, std::uint64_t);    \
  template GroupFeature<T> lifting_forward(const LiftingConvOracle<T>&, const Tensor4<T>&);       \
  template Network<T> make_equivariant_network<T>(const Architecture&, std::uint64_t);            \
  template void save_checkpoint(const std::filesystem::path&, const Network<T>&);                 \
  template Network<T> load_checkpoint<T>(const std::filesystem::path&);                           \
  template Network<T> load_checkpoint<T>(const std::filesystem::path&, const Architecture&);

EQREG_INSTANTIATE_MODEL(float)
EQREG_INSTANTIATE_MODEL(double)

}  // namespace eqreg
