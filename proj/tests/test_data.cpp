// Copyright 2026 The eqreg Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <boost/math/distributions/chi_squared.hpp>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>

#include "eqreg/data.hpp"
#include "oracles.hpp"

namespace eqreg {
namespace {

namespace fs = std::filesystem;

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("eqreg_data_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

TEST(Scenes, DeterministicAndBounded) {
  const SceneSpec spec;
  const auto a = generate_clean(spec, 5, 20);
  const auto b = generate_clean(spec, 5, 20);
  const auto c = generate_clean(spec, 6, 20);
  EXPECT_EQ(a, b);
  EXPECT_NE(a, c);
  EXPECT_EQ(a.shape(), (Shape4{20, 1, 32, 32}));
  for (float v : a.data()) {
    EXPECT_GE(v, 0.0f);
    EXPECT_LE(v, 1.0f);
  }
}

TEST(Scenes, IndexAddressable) {
  const SceneSpec spec;
  const auto all = generate_clean(spec, 3, 10);
  const auto single = render_scene(sample_scene(spec, 3, 7), spec.size);
  for (std::size_t i = 0; i < single.size(); ++i) EXPECT_EQ(all.plane(7, 0)[i], single[i]);
}

TEST(Scenes, MeanShapeCount) {
  const SceneSpec spec;
  double total = 0.0;
  const std::size_t n = 10000;
  for (std::size_t i = 0; i < n; ++i) total += static_cast<double>(sample_scene(spec, 1, i).size());
  EXPECT_NEAR(total / static_cast<double>(n), 4.5, 0.05 * 4.5);
}

TEST(Scenes, ShapeParametersWithinRanges) {
  const SceneSpec spec;
  for (std::size_t i = 0; i < 500; ++i)
    for (const auto& s : sample_scene(spec, 2, i)) {
      EXPECT_GE(s.intensity, spec.intensity.lo);
      EXPECT_LE(s.intensity, spec.intensity.hi);
      if (s.kind == ShapeKind::Disc) {
        EXPECT_GE(s.radius, spec.disc_radius.lo);
        EXPECT_LE(s.radius, spec.disc_radius.hi);
      } else {
        EXPECT_GE(s.length, spec.bar_length.lo);
        EXPECT_LE(s.width, spec.bar_width.hi);
      }
    }
}

TEST(Scenes, BarOrientationsUniform) {
  const SceneSpec spec;
  constexpr std::size_t kBins = 16;
  std::vector<double> counts(kBins, 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < 4000; ++i)
    for (const auto& s : sample_scene(spec, 4, i)) {
      if (s.kind != ShapeKind::Bar) continue;
      const auto bin = static_cast<std::size_t>(s.angle / (2.0 * std::numbers::pi) * kBins);
      counts[std::min(bin, kBins - 1)] += 1.0;
      total += 1.0;
    }
  const double expected = total / kBins;
  double stat = 0.0;
  for (double c : counts) stat += (c - expected) * (c - expected) / expected;
  const boost::math::chi_squared dist(kBins - 1);
  EXPECT_GT(boost::math::cdf(boost::math::complement(dist, stat)), 0.01);
}

TEST(Scenes, QuarterTurnOfSceneMatchesImageRotation) {
  const SceneSpec spec;
  const RotationGroup g(4);
  std::size_t differing = 0, total = 0;
  for (std::size_t i = 0; i < 50; ++i) {
    const auto shapes = sample_scene(spec, 8, i);
    for (int k = 1; k < 4; ++k) {
      const auto direct = render_scene(rotate_scene(shapes, k, g, spec.size), spec.size);
      const auto rotated = rotate_image(render_scene(shapes, spec.size), k, g);
      for (std::size_t p = 0; p < direct.size(); ++p) differing += direct[p] != rotated[p] ? 1 : 0;
      total += direct.size();
    }
  }
  EXPECT_LT(static_cast<double>(differing) / static_cast<double>(total), 0.01);
}

TEST(Degrade, ZeroSigmaIsIdentity) {
  const auto x = generate_clean(SceneSpec{}, 1, 4);
  const auto d = degrade(x, GaussianNoise{0.0}, 2);
  EXPECT_EQ(d.y, x);
  EXPECT_FALSE(d.mask.has_value());
}

TEST(Degrade, NoiseVariance) {
  const Tensor4<float> x(1000, 1, 32, 32, 0.5f);
  const double sigma = 0.1;
  const auto d = degrade(x, GaussianNoise{sigma}, 3);
  double mean = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) mean += d.y[i] - 0.5;
  mean /= static_cast<double>(x.size());
  double var = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) var += std::pow(d.y[i] - 0.5 - mean, 2);
  var /= static_cast<double>(x.size() - 1);
  EXPECT_NEAR(var / (sigma * sigma), 1.0, 0.05);
}

TEST(Degrade, MaskFraction) {
  const Tensor4<float> x(1000, 1, 32, 32, 0.5f);
  const auto d = degrade(x, MaskInpaint{0.3, 0.0}, 4);
  ASSERT_TRUE(d.mask.has_value());
  double removed = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    removed += (*d.mask)[i] == 0.0f ? 1.0 : 0.0;
    EXPECT_EQ(d.y[i], (*d.mask)[i] * 0.5f);
  }
  EXPECT_NEAR(removed / static_cast<double>(x.size()), 0.3, 0.01 * 0.3);
}

TEST(Degrade, RejectsInvalidParameters) {
  const Tensor4<float> x(1, 1, 4, 4);
  EXPECT_THROW(degrade(x, MaskInpaint{1.0, 0.05}, 1), ShapeError);
  EXPECT_THROW(degrade(x, GaussianNoise{-0.1}, 1), ShapeError);
}

TEST(Dataset, InpaintInputStacksMask) {
  DatasetInfo info;
  info.task = Task::Inpaint;
  info.count = 3;
  info.seed = 9;
  const auto ds = make_dataset(info);
  EXPECT_EQ(ds.input_channels(), 2u);
  const auto in = ds.network_input();
  EXPECT_EQ(in.channels(), 2u);
  EXPECT_EQ(slice_channels(in, 1, 1), ds.mask);
  EXPECT_EQ(parse_task(to_string(Task::Inpaint)), Task::Inpaint);
  EXPECT_THROW(parse_task("deblur"), ShapeError);
}

TEST(Dataset, SaveLoadRoundTrip) {
  const auto dir = scratch_dir("roundtrip");
  for (Task task : {Task::Denoise, Task::Inpaint}) {
    DatasetInfo info;
    info.task = task;
    info.count = 5;
    info.seed = 12;
    const auto ds = make_dataset(info);
    save_dataset(dir, ds, info);
    DatasetInfo back;
    const auto loaded = load_dataset(dir, &back);
    EXPECT_EQ(loaded.degraded, ds.degraded);
    EXPECT_EQ(loaded.clean, ds.clean);
    EXPECT_EQ(loaded.mask, ds.mask);
    EXPECT_EQ(back.count, 5u);
    EXPECT_EQ(back.task, task);
    const std::string first = slurp(dir / "shard-0000.eqt");
    save_dataset(dir, make_dataset(info), info);
    EXPECT_EQ(slurp(dir / "shard-0000.eqt"), first);
  }
  EXPECT_THROW(load_dataset(dir / "absent"), IoError);
}

TEST(Netpbm, HandWrittenHeaderParses) {
  const std::string bytes = std::string("P5\n2 2\n255\n") + std::string("\x00\xff\x80\x33", 4);
  const std::vector<unsigned char> raw(bytes.begin(), bytes.end());
  const auto img = decode_netpbm(raw);
  EXPECT_EQ(img.shape(), (Shape4{1, 1, 2, 2}));
  EXPECT_EQ(img[0], 0.0f);
  EXPECT_EQ(img[1], 1.0f);
  EXPECT_FLOAT_EQ(img[2], 128.0f / 255.0f);
  const std::string commented = std::string("P5 # note\n2 # w\n2\n255\n") + std::string(4, '\x10');
  EXPECT_NO_THROW(decode_netpbm(std::vector<unsigned char>(commented.begin(), commented.end())));
}

TEST(Netpbm, RejectsMalformed) {
  const auto bytes = [](const std::string& s) { return std::vector<unsigned char>(s.begin(), s.end()); };
  EXPECT_THROW(decode_netpbm(bytes("P4\n2 2\n255\n....")), IoError);
  EXPECT_THROW(decode_netpbm(bytes("P5\n2 2\n65535\n........")), IoError);
  EXPECT_THROW(decode_netpbm(bytes("P5\n2 2\n255\n..")), IoError);
  EXPECT_THROW(decode_netpbm(bytes("P5\n2\n")), IoError);
}

TEST(Netpbm, QuantizationBound) {
  const auto dir = scratch_dir("pgm");
  std::mt19937_64 rng(13);
  for (std::size_t c : {1u, 3u}) {
    const auto x = oracle::random_tensor<float>({1, c, 9, 7}, rng, 0.0, 1.0);
    save_image(x, dir / "img.pnm");
    const auto y = load_image(dir / "img.pnm");
    ASSERT_EQ(y.shape(), x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) EXPECT_LE(std::abs(x[i] - y[i]), 1.0f / 510.0f + 1e-7f);
  }
}

}  // namespace
}  // namespace eqreg
