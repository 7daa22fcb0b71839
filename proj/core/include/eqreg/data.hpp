// Copyright 2026 The eqreg Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "eqreg/group.hpp"
#include "eqreg/tensor.hpp"

namespace eqreg {

struct Range {
  double lo = 0.0;
  double hi = 0.0;
  friend bool operator==(const Range&, const Range&) = default;
};

/// Synthetic scenes: discs and oriented bars of random intensity on a black background.
struct SceneSpec {
  std::size_t size = 32;
  int min_shapes = 3;
  int max_shapes = 6;
  Range disc_radius{2.0, 6.0};
  Range bar_length{6.0, 16.0};
  Range bar_width{1.0, 3.0};
  Range intensity{0.2, 1.0};

  friend bool operator==(const SceneSpec&, const SceneSpec&) = default;
};

enum class ShapeKind { Disc, Bar };

struct SceneShape {
  ShapeKind kind = ShapeKind::Disc;
  double row = 0.0;  // center, pixel coordinates
  double col = 0.0;
  double radius = 0.0;  // disc
  double length = 0.0;  // bar
  double width = 0.0;   // bar
  double angle = 0.0;   // bar, counterclockwise from the +col axis, in [0, 2π)
  double intensity = 0.0;
};

/// Shapes of image `index`; a pure function of (spec, seed, index).
std::vector<SceneShape> sample_scene(const SceneSpec& spec, std::uint64_t seed, std::size_t index);

/// Additive rendering, clamped to [0, 1]. Returns 1×1×size×size.
Tensor4<float> render_scene(std::span<const SceneShape> shapes, std::size_t size);

/// The same scene after rotating the canvas by group element k.
std::vector<SceneShape> rotate_scene(std::span<const SceneShape> shapes, int k,
                                     const RotationGroup& group, std::size_t size);

/// count×1×s×s clean images.
Tensor4<float> generate_clean(const SceneSpec& spec, std::uint64_t seed, std::size_t count);

struct GaussianNoise {
  double sigma = 0.1;
};
struct MaskInpaint {
  double rate = 0.3;  // fraction of pixels removed
  double noise_sigma = 0.05;
};
using Degradation = std::variant<GaussianNoise, MaskInpaint>;

struct Degraded {
  Tensor4<float> y;
  std::optional<Tensor4<float>> mask;  // 1 = observed
};

/// Sample b draws from its own stream seeded by (seed, b). Values are not clamped.
Degraded degrade(const Tensor4<float>& x, const Degradation& deg, std::uint64_t seed);

enum class Task { Denoise, Inpaint };
std::string to_string(Task task);
Task parse_task(const std::string& s);

struct Dataset {
  Task task = Task::Denoise;
  Tensor4<float> degraded;
  Tensor4<float> clean;
  Tensor4<float> mask;  // empty for denoise

  [[nodiscard]] std::size_t size() const { return clean.batch(); }
  /// degraded, with the mask appended as a second channel for inpainting.
  [[nodiscard]] Tensor4<float> network_input() const;
  [[nodiscard]] Dataset subset(std::span<const std::size_t> indices) const;
  /// Network input channel count for this task.
  [[nodiscard]] std::size_t input_channels() const;
};

struct DatasetInfo {
  SceneSpec spec;
  std::uint64_t seed = 0;
  Task task = Task::Denoise;
  double sigma = 0.1;
  double mask_rate = 0.3;
  std::size_t count = 0;
};

/// Clean images from (spec, seed); degradations from a stream derived from seed.
Dataset make_dataset(const DatasetInfo& info);

/// Writes shard-0000.eqt (degraded, clean[, mask] as EQT1) and dataset.json.
void save_dataset(const std::filesystem::path& dir, const Dataset& data, const DatasetInfo& info);
Dataset load_dataset(const std::filesystem::path& dir, DatasetInfo* info = nullptr);

// Netpbm images: P5 (1 channel) and P6 (3 channels), 8-bit, maxval 255.

Tensor4<float> load_image(const std::filesystem::path& path);
/// x must be 1×{1,3}×H×W. Values are clamped to [0, 1] and rounded half away from zero.
void save_image(const Tensor4<float>& x, const std::filesystem::path& path);

Tensor4<float> decode_netpbm(std::span<const unsigned char> bytes);
std::vector<unsigned char> encode_netpbm(const Tensor4<float>& x);

}  // namespace eqreg
