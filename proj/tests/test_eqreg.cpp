// Copyright 2026 The eqreg Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <random>

#include "eqreg/eqreg.hpp"
#include "oracles.hpp"

namespace eqreg {
namespace {

Network<double> random_net(std::size_t hidden_layers, std::size_t n_hidden, int t, std::uint64_t seed) {
  Architecture arch;
  arch.hidden_layers = hidden_layers;
  arch.n_hidden = n_hidden;
  arch.group_order = t;
  auto net = make_network<double>(arch);
  init_weights(net, seed);
  std::mt19937_64 rng(seed + 1);
  std::uniform_real_distribution<double> bias(-0.1, 0.1);
  for (auto& l : net.layers)
    for (auto& b : l.conv.bias) b = bias(rng);
  return net;
}

double equi_of(const Network<double>& net, const Tensor4<double>& x, int k, const EqRegConfig& cfg) {
  const auto plain = forward_with_tape(net, x);
  const auto rot = forward_with_tape(net, rotate_image(x, k, net.group));
  return equi_loss(plain.tape, rot.tape, k, net.group, cfg);
}

TEST(Config, ValidatesAndParses) {
  EqRegConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.lambda = -1.0;
  EXPECT_THROW(cfg.validate(), ShapeError);
  EXPECT_EQ(parse_reduction("sum"), Reduction::Sum);
  EXPECT_EQ(to_string(parse_reduction("mean")), "mean");
  EXPECT_THROW(parse_reduction("max"), ShapeError);
}

TEST(LayerLoss, IdentityElementGivesZero) {
  std::mt19937_64 rng(1);
  const auto net = random_net(2, 4, 4, 2);
  const auto x = oracle::random_tensor<double>({2, 1, 8, 8}, rng);
  EXPECT_EQ(equi_of(net, x, 0, {}), 0.0);
}

TEST(LayerLoss, DefinitionalZero) {
  std::mt19937_64 rng(3);
  const RotationGroup g(4);
  const GroupFeature<double> f(oracle::random_tensor<double>({2, 8, 6, 6}, rng), 4);
  for (int k = 0; k < 4; ++k) EXPECT_EQ(layer_loss(f, feature_transform(f, k, g), k, g, {}), 0.0);
}

TEST(LayerLoss, SumAndMeanDifferByElementCount) {
  std::mt19937_64 rng(4);
  const RotationGroup g(4);
  const GroupFeature<double> a(oracle::random_tensor<double>({2, 8, 5, 5}, rng), 4);
  const GroupFeature<double> b(oracle::random_tensor<double>({2, 8, 5, 5}, rng), 4);
  EqRegConfig sum, mean;
  sum.reduction = Reduction::Sum;
  const double s = layer_loss(a, b, 1, g, sum);
  EXPECT_NEAR(layer_loss(a, b, 1, g, mean), s / 400.0, 1e-14);
  EXPECT_NEAR(s, oracle::sq_dist(oracle::group_transform(a.tensor, 1, 4), b.tensor), 1e-12);
}

TEST(LayerLoss, EquivariantLiftingGivesZero) {
  const RotationGroup g(4);
  std::mt19937_64 rng(5);
  const auto lift = random_lifting_oracle<double>(4, 1, 3, g, 6);
  const auto x = oracle::random_tensor<double>({1, 1, 10, 10}, rng);
  const auto plain = lifting_forward(lift, x);
  for (int k = 0; k < 4; ++k)
    EXPECT_LT(layer_loss(plain, lifting_forward(lift, rotate_image(x, k, g)), k, g, {}), 1e-18);
}

TEST(EquiLoss, SingleHiddenLayerEqualsLayerLoss) {
  std::mt19937_64 rng(7);
  const auto net = random_net(1, 3, 4, 8);
  const auto x = oracle::random_tensor<double>({1, 1, 8, 8}, rng);
  const auto plain = forward_with_tape(net, x);
  const auto rot = forward_with_tape(net, rotate_image(x, 1, net.group));
  ASSERT_EQ(plain.tape.size(), 1u);
  EXPECT_EQ(equi_loss(plain.tape, rot.tape, 1, net.group, {}),
            layer_loss(GroupFeature<double>(plain.tape.activations[0], 4),
                       GroupFeature<double>(rot.tape.activations[0], 4), 1, net.group, {}));
}

TEST(EquiLoss, ZeroWeightNetwork) {
  std::mt19937_64 rng(9);
  const auto net = make_network<double>(Architecture{});
  const auto x = oracle::random_tensor<double>({2, 1, 8, 8}, rng);
  EXPECT_EQ(equi_of(net, x, 1, {}), 0.0);
}

TEST(EquiLoss, MatchesIndependentRecomputation) {
  std::mt19937_64 rng(10);
  const auto net = random_net(2, 4, 4, 11);
  const auto x = oracle::random_tensor<double>({2, 1, 8, 8}, rng);
  const auto run = [&](const Tensor4<double>& in) {
    std::vector<Tensor4<double>> taps;
    Tensor4<double> h = in;
    for (const auto& l : net.layers) {
      h = l.kind == LayerKind::Conv ? oracle::conv(h, l.conv.weight, l.conv.bias) : oracle::relu(h);
      if (l.kind == LayerKind::ReLU) taps.push_back(h);
    }
    return taps;
  };
  const auto plain = run(x);
  const auto rotated = run(oracle::rot90(x, 1));
  double want = 0.0;
  for (std::size_t l = 0; l < plain.size(); ++l)
    want += oracle::sq_dist(oracle::group_transform(plain[l], 1, 4), rotated[l]);
  EqRegConfig sum;
  sum.reduction = Reduction::Sum;
  const double got = equi_of(net, x, 1, sum);
  EXPECT_GT(want, 0.0);
  EXPECT_NEAR(got, want, 1e-10 * want);
}

TEST(OutputConsistency, Examples) {
  std::mt19937_64 rng(12);
  const RotationGroup g(4);
  const auto y = oracle::random_tensor<double>({2, 1, 6, 6}, rng);
  const auto z = oracle::random_tensor<double>({2, 1, 6, 6}, rng);
  EXPECT_EQ(output_consistency_loss(y, y, 0, g, Reduction::Mean), 0.0);
  EXPECT_EQ(output_consistency_loss(y, rotate_image(y, 3, g), 3, g, Reduction::Sum), 0.0);
  EXPECT_NEAR(output_consistency_loss(Tensor4<double>(1, 1, 5, 5, 0.7), Tensor4<double>(1, 1, 5, 5, 0.2),
                                      1, g, Reduction::Mean),
              0.25, 1e-15);
  const auto [gp, gr] = output_consistency_grads(y, z, 1, g, Reduction::Sum);
  const auto diff = sub(oracle::rot90(y, 1), z);
  for (std::size_t i = 0; i < diff.size(); ++i) EXPECT_NEAR(gr[i], -2.0 * diff[i], 1e-14);
  EXPECT_NEAR(dot(gp, y), -dot(gr, oracle::rot90(y, 1)), 1e-12);
}

TEST(TotalLoss, Arithmetic) {
  EqRegConfig cfg;
  cfg.lambda = 0.0;
  EXPECT_EQ(total_loss(1.5, 7.0, cfg), 1.5);
  cfg.lambda = 0.5;
  EXPECT_EQ(total_loss(1.0, 2.0, cfg), 2.0);
  EXPECT_GT(total_loss(1.0, 2.5, cfg), total_loss(1.0, 2.0, cfg));
  cfg.output_consistency = true;
  cfg.output_consistency_weight = 2.0;
  EXPECT_EQ(total_loss(1.0, 2.0, cfg, 0.25), 2.5);
}

TEST(EquiGradient, MatchesFiniteDifferences) {
  std::mt19937_64 rng(13);
  auto net = random_net(1, 3, 4, 14);
  const auto x = oracle::random_tensor<double>({2, 1, 8, 8}, rng);
  for (auto reduction : {Reduction::Mean, Reduction::Sum}) {
    EqRegConfig cfg;
    cfg.reduction = reduction;
    for (int k = 1; k < 4; ++k) {
      const auto grads = [&] {
        const auto tp = forward_trace(net, x);
        const auto tr = forward_trace(net, rotate_image(x, k, net.group));
        return equi_loss_backward(net, tp, tr, k, cfg);
      }();
      auto g = grads;
      auto params = parameter_pointers(net);
      auto gptrs = gradient_pointers(g);
      const auto loss = [&] { return equi_of(net, x, k, cfg); };
      std::size_t checked = 0;
      for (std::size_t i = 0; i < params.size(); i += 2, ++checked)
        EXPECT_LT(oracle::rel_err(*gptrs[i], oracle::central_difference(loss, params[i])), 1e-4)
            << "k=" << k << " i=" << i;
      EXPECT_GE(checked, 100u);
    }
  }
}

TEST(EquiGradient, ZeroAtEquivariantNetwork) {
  std::mt19937_64 rng(15);
  Architecture arch;
  arch.n_hidden = 2;
  const auto net = make_equivariant_network<double>(arch, 16);
  const auto x = oracle::random_tensor<double>({1, 1, 8, 8}, rng);
  for (int k = 1; k < 4; ++k) {
    auto g = equi_loss_backward(net, forward_trace(net, x), forward_trace(net, rotate_image(x, k, net.group)),
                                k, EqRegConfig{});
    for (double* p : gradient_pointers(g)) EXPECT_NEAR(*p, 0.0, 1e-12);
  }
}

TEST(EquiGradient, TapeGradientsMatchClosedForm) {
  std::mt19937_64 rng(17);
  const RotationGroup g(4);
  Tape<double> a, b;
  a.activations.push_back(oracle::random_tensor<double>({1, 4, 4, 4}, rng));
  b.activations.push_back(oracle::random_tensor<double>({1, 4, 4, 4}, rng));
  EqRegConfig cfg;
  cfg.reduction = Reduction::Sum;
  const auto tg = equi_loss_tape_grads(a, b, 2, g, cfg);
  const auto diff = sub(oracle::group_transform(a.activations[0], 2, 4), b.activations[0]);
  for (std::size_t i = 0; i < diff.size(); ++i) EXPECT_NEAR(tg.rot[0][i], -2.0 * diff[i], 1e-14);
  // d/d plain is 2 T^T diff; for k = 2 on C4, T is an involution.
  const auto back = oracle::group_transform(diff, 2, 4);
  for (std::size_t i = 0; i < diff.size(); ++i) EXPECT_NEAR(tg.plain[0][i], 2.0 * back[i], 1e-14);
}

}  // namespace
}  // namespace eqreg
