// Copyright 2026 The eqreg Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "eqreg/model.hpp"
#include "oracles.hpp"

namespace eqreg {
namespace {

namespace fs = std::filesystem;

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("eqreg_model_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

TEST(Network, DefaultStructure) {
  const auto net = make_network<double>(Architecture{});
  EXPECT_EQ(net.layers.size(), 5u);
  EXPECT_EQ(net.num_convs(), 3u);
  EXPECT_EQ(net.layers[0].conv.out_channels(), 32u);
  EXPECT_EQ(net.layers[2].conv.in_channels(), 32u);
  EXPECT_EQ(net.out_channels(), 1u);
  EXPECT_EQ(net.regularization_points(), (std::vector<std::size_t>{1, 3}));
  EXPECT_EQ(net.architecture(), Architecture{});
}

TEST(Network, RejectsInconsistentLayers) {
  auto net = make_network<double>(Architecture{});
  net.layers[2].conv = ConvParams<double>(32, 16, 3);
  EXPECT_THROW(net.validate(), ShapeError);
  Architecture bad;
  bad.kernel = 4;
  EXPECT_THROW(make_network<double>(bad), ShapeError);
  Architecture wide;
  wide.out_channels = 2;
  EXPECT_THROW(make_network<double>(wide), ShapeError);
}

TEST(Network, ZeroWeightsWithResidualIsIdentity) {
  std::mt19937_64 rng(1);
  const auto net = make_network<double>(Architecture{});
  const auto x = oracle::random_tensor<double>({2, 1, 8, 8}, rng);
  const auto r = forward_with_tape(net, x);
  EXPECT_EQ(r.output, x);
  for (const auto& a : r.tape.activations) EXPECT_EQ(frobenius_sq(a), 0.0);
}

TEST(Network, SingleIdentityConvWithoutResidual) {
  Architecture arch;
  arch.hidden_layers = 0;
  arch.kernel = 1;
  arch.residual = false;
  auto net = make_network<double>(arch);
  net.layers[0].conv.weight[0] = 1.0;
  std::mt19937_64 rng(2);
  const auto x = oracle::random_tensor<double>({3, 1, 5, 5}, rng);
  EXPECT_EQ(forward(net, x), x);
  EXPECT_EQ(forward_with_tape(net, x).tape.size(), 0u);
}

TEST(Network, ForwardMatchesOracleComposition) {
  std::mt19937_64 rng(3);
  auto net = make_network<double>(Architecture{});
  init_weights(net, 4);
  for (auto& l : net.layers)
    for (auto& b : l.conv.bias) b = 0.05;
  const auto x = oracle::random_tensor<double>({2, 1, 8, 8}, rng);
  auto h = x;
  std::vector<Tensor4<double>> taps;
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const auto& l = net.layers[i];
    h = l.kind == LayerKind::Conv ? oracle::conv(h, l.conv.weight, l.conv.bias) : oracle::relu(h);
    if (l.kind == LayerKind::ReLU) taps.push_back(h);
  }
  h = add(h, x);
  const auto r = forward_with_tape(net, x);
  ASSERT_EQ(r.tape.size(), 2u);
  for (std::size_t i = 0; i < h.size(); ++i) EXPECT_NEAR(r.output[i], h[i], 1e-12);
  for (std::size_t l = 0; l < 2; ++l)
    for (std::size_t i = 0; i < taps[l].size(); ++i)
      EXPECT_NEAR(r.tape.activations[l][i], taps[l][i], 1e-12);
}

TEST(Network, TapeConsistentWithForwardFrom) {
  std::mt19937_64 rng(5);
  Architecture arch;
  arch.hidden_layers = 3;
  auto net = make_network<double>(arch);
  init_weights(net, 6);
  const auto x = oracle::random_tensor<double>({2, 1, 8, 8}, rng);
  const auto r = forward_with_tape(net, x);
  const auto points = net.regularization_points();
  ASSERT_EQ(r.tape.size(), 3u);
  for (std::size_t l = 0; l < points.size(); ++l)
    EXPECT_EQ(forward_from(net, points[l] + 1, r.tape.activations[l], x), r.output);
}

TEST(Network, RejectsWrongInputChannels) {
  const auto net = make_network<double>(Architecture{});
  EXPECT_THROW(forward(net, Tensor4<double>(1, 2, 4, 4)), ShapeError);
}

TEST(Init, DeterministicPerSeed) {
  auto a = make_network<float>(Architecture{});
  auto b = make_network<float>(Architecture{});
  auto c = make_network<float>(Architecture{});
  init_weights(a, 9);
  init_weights(b, 9);
  init_weights(c, 10);
  EXPECT_EQ(a, b);
  EXPECT_NE(a, c);
}

TEST(Init, UniformVarianceMatchesBound) {
  Architecture arch;
  arch.in_channels = 40;
  arch.out_channels = 40;
  arch.hidden_layers = 0;
  arch.kernel = 9;
  arch.residual = false;
  auto net = make_network<double>(arch);
  init_weights(net, 11);
  const auto& w = net.layers[0].conv.weight;
  ASSERT_GE(w.size(), 100000u);
  const double a_sq = 1.0 / (40.0 * 81.0);
  double mean = 0.0, max_abs = 0.0;
  for (double v : w.data()) {
    mean += v;
    max_abs = std::max(max_abs, std::abs(v));
  }
  mean /= static_cast<double>(w.size());
  double var = 0.0;
  for (double v : w.data()) var += (v - mean) * (v - mean);
  var /= static_cast<double>(w.size() - 1);
  EXPECT_NEAR(var / (a_sq / 3.0), 1.0, 0.1);
  EXPECT_LE(max_abs, std::sqrt(a_sq));
  for (double b : net.layers[0].conv.bias) EXPECT_EQ(b, 0.0);
}

TEST(Backward, MatchesFiniteDifferences) {
  std::mt19937_64 rng(12);
  Architecture arch;
  arch.n_hidden = 2;
  auto net = make_network<double>(arch);
  init_weights(net, 13);
  for (auto& l : net.layers)
    for (auto& b : l.conv.bias) b = 0.1;
  const auto x = oracle::random_tensor<double>({2, 1, 6, 6}, rng);
  const auto r = oracle::random_tensor<double>({2, 1, 6, 6}, rng);
  std::vector<Tensor4<double>> inj;
  for (std::size_t i = 0; i < 2; ++i) inj.push_back(oracle::random_tensor<double>({2, 8, 6, 6}, rng));
  const auto loss = [&] {
    const auto fr = forward_with_tape(net, x);
    return dot(fr.output, r) + dot(fr.tape.activations[0], inj[0]) + dot(fr.tape.activations[1], inj[1]);
  };
  auto grads = backward(net, forward_trace(net, x), r, inj);
  auto params = parameter_pointers(net);
  auto gptrs = gradient_pointers(grads);
  ASSERT_EQ(params.size(), parameter_count(net));
  ASSERT_EQ(params.size(), gptrs.size());
  for (std::size_t i = 0; i < params.size(); i += 3)
    EXPECT_LT(oracle::rel_err(*gptrs[i], oracle::central_difference(loss, params[i])), 1e-5) << i;
}

TEST(Lifting, EquivariantUpToRounding) {
  const RotationGroup g(4);
  std::mt19937_64 rng(14);
  for (int trial = 0; trial < 10; ++trial) {
    const auto lift = random_lifting_oracle<double>(3, 1, 3, g, 100 + trial);
    const auto x = oracle::random_tensor<double>({1, 1, 8, 8}, rng);
    for (int k = 0; k < 4; ++k) {
      const auto lhs = feature_transform(lifting_forward(lift, x), k, g);
      const auto rhs = lifting_forward(lift, rotate_image(x, k, g));
      for (std::size_t i = 0; i < lhs.tensor.size(); ++i)
        EXPECT_NEAR(lhs.tensor[i], rhs.tensor[i], 1e-12);
    }
  }
}

TEST(Lifting, ZeroInputGivesZeroOutput) {
  const RotationGroup g(4);
  const auto lift = random_lifting_oracle<double>(2, 1, 3, g, 7);
  EXPECT_EQ(frobenius_sq(lifting_forward(lift, Tensor4<double>(1, 1, 6, 6)).tensor), 0.0);
}

TEST(Lifting, IsotropicKernelGivesIdenticalBlocks) {
  const RotationGroup g(4);
  LiftingConvOracle<double> lift{Tensor4<double>(Shape4{1, 1, 3, 3}, {0, 1, 0, 1, 2, 1, 0, 1, 0}), g};
  std::mt19937_64 rng(15);
  const auto y = lifting_forward(lift, oracle::random_tensor<double>({1, 1, 7, 7}, rng));
  for (std::size_t b = 1; b < 4; ++b) EXPECT_EQ(y.block(b), y.block(0));
}

TEST(EquivariantNetwork, ExactForPermutationGroups) {
  std::mt19937_64 rng(16);
  for (int t : {2, 4}) {
    Architecture arch;
    arch.group_order = t;
    arch.n_hidden = 3;
    const auto net = make_equivariant_network<double>(arch, 17);
    const RotationGroup& g = net.group;
    const auto x = oracle::random_tensor<double>({1, 1, 9, 9}, rng);
    const auto plain = forward_with_tape(net, x);
    for (int k = 1; k < t; ++k) {
      const auto rot = forward_with_tape(net, rotate_image(x, k, g));
      const auto want = rotate_image(plain.output, k, g);
      for (std::size_t i = 0; i < want.size(); ++i) EXPECT_NEAR(rot.output[i], want[i], 1e-12);
      for (std::size_t l = 0; l < plain.tape.size(); ++l) {
        const auto ft = feature_transform(plain.tape.activations[l], k, g);
        for (std::size_t i = 0; i < ft.size(); ++i)
          EXPECT_NEAR(rot.tape.activations[l][i], ft[i], 1e-12);
      }
    }
  }
}

TEST(Checkpoint, RoundTripIsBitExact) {
  const auto dir = scratch_dir("roundtrip");
  Architecture arch;
  arch.in_channels = 2;
  arch.group_order = 8;
  arch.n_hidden = 2;
  auto net = make_network<float>(arch);
  init_weights(net, 18);
  net.layers[2].conv.bias[3] = 0.25f;
  save_checkpoint(dir / "a.ckpt", net);
  const auto loaded = load_checkpoint<float>(dir / "a.ckpt");
  EXPECT_EQ(loaded, net);
  EXPECT_EQ(load_checkpoint<float>(dir / "a.ckpt", arch), net);
  save_checkpoint(dir / "b.ckpt", loaded);
  std::ifstream a(dir / "a.ckpt", std::ios::binary), b(dir / "b.ckpt", std::ios::binary);
  EXPECT_EQ(std::string(std::istreambuf_iterator<char>(a), {}),
            std::string(std::istreambuf_iterator<char>(b), {}));
}

TEST(Checkpoint, RejectsMismatchAndCorruption) {
  const auto dir = scratch_dir("mismatch");
  auto net = make_network<float>(Architecture{});
  save_checkpoint(dir / "n.ckpt", net);
  Architecture other;
  other.n_hidden = 4;
  EXPECT_THROW(load_checkpoint<float>(dir / "n.ckpt", other), IoError);
  EXPECT_THROW(load_checkpoint<float>(dir / "missing.ckpt"), IoError);
  std::ifstream in(dir / "n.ckpt", std::ios::binary);
  std::string bytes(std::istreambuf_iterator<char>(in), {});
  std::ofstream(dir / "cut.ckpt", std::ios::binary) << bytes.substr(0, bytes.size() / 2);
  EXPECT_THROW(load_checkpoint<float>(dir / "cut.ckpt"), IoError);
}

TEST(Checkpoint, DescriptorRoundTrip) {
  Architecture arch;
  arch.hidden_layers = 3;
  arch.group_order = 3;
  arch.n_hidden = 11;
  arch.residual = false;
  EXPECT_EQ(parse_architecture(describe(arch)), arch);
  EXPECT_THROW(parse_architecture("eqreg-net v2 in=1"), IoError);
}

}  // namespace
}  // namespace eqreg
