// Copyright 2026 The eqreg Authors
// SPDX-License-Identifier: Apache-2.0

#include "eqreg/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

#include "json.hpp"

#include "eqreg/eqt_io.hpp"

namespace eqreg {
namespace {

constexpr const char* kShardName = "shard-0000.eqt";
constexpr const char* kSidecarName = "dataset.json";

// Independent stream per (seed, index, purpose).
std::mt19937_64 stream(std::uint64_t seed, std::uint64_t index, std::uint64_t purpose) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32),
                    static_cast<std::uint32_t>(purpose)};
  return std::mt19937_64(seq);
}

double uniform(std::mt19937_64& rng, const Range& r) {
  return std::uniform_real_distribution<double>(r.lo, r.hi)(rng);
}

nlohmann::json range_json(const Range& r) { return nlohmann::json::array({r.lo, r.hi}); }

Range range_from(const nlohmann::json& j) { return {j.at(0).get<double>(), j.at(1).get<double>()}; }

}  // namespace

std::vector<SceneShape> sample_scene(const SceneSpec& spec, std::uint64_t seed, std::size_t index) {
  auto rng = stream(seed, index, 1);
  const int count = std::uniform_int_distribution<int>(spec.min_shapes, spec.max_shapes)(rng);
  const double extent = static_cast<double>(spec.size);
  std::vector<SceneShape> shapes;
  shapes.reserve(static_cast<std::size_t>(count));
  for (int s = 0; s < count; ++s) {
    SceneShape shape;
    shape.kind = std::bernoulli_distribution(0.5)(rng) ? ShapeKind::Bar : ShapeKind::Disc;
    shape.row = uniform(rng, {0.0, extent});
    shape.col = uniform(rng, {0.0, extent});
    shape.intensity = uniform(rng, spec.intensity);
    if (shape.kind == ShapeKind::Disc) {
      shape.radius = uniform(rng, spec.disc_radius);
    } else {
      shape.length = uniform(rng, spec.bar_length);
      shape.width = uniform(rng, spec.bar_width);
      shape.angle = uniform(rng, {0.0, 2.0 * std::numbers::pi});
    }
    shapes.push_back(shape);
  }
  return shapes;
}

Tensor4<float> render_scene(std::span<const SceneShape> shapes, std::size_t size) {
  std::vector<double> canvas(size * size, 0.0);
  for (const auto& s : shapes) {
    const double dr = -std::sin(s.angle), dc = std::cos(s.angle);
    for (std::size_t i = 0; i < size; ++i)
      for (std::size_t j = 0; j < size; ++j) {
        const double y = static_cast<double>(i) - s.row;
        const double x = static_cast<double>(j) - s.col;
        bool inside = false;
        if (s.kind == ShapeKind::Disc) {
          inside = y * y + x * x <= s.radius * s.radius;
        } else {
          const double along = y * dr + x * dc;
          const double across = -y * dc + x * dr;
          inside = std::abs(along) <= s.length / 2.0 && std::abs(across) <= s.width / 2.0;
        }
        if (inside) canvas[i * size + j] += s.intensity;
      }
  }
  Tensor4<float> out(1, 1, size, size);
  for (std::size_t p = 0; p < canvas.size(); ++p)
    out[p] = static_cast<float>(std::clamp(canvas[p], 0.0, 1.0));
  return out;
}

std::vector<SceneShape> rotate_scene(std::span<const SceneShape> shapes, int k,
                                     const RotationGroup& group, std::size_t size) {
  const double c = (static_cast<double>(size) - 1.0) / 2.0;
  const double theta = group.angle(k);
  const double cs = std::cos(theta), sn = std::sin(theta);
  std::vector<SceneShape> out(shapes.begin(), shapes.end());
  for (auto& s : out) {
    const double y = s.row - c, x = s.col - c;
    // inverse of the sampling map used by rotate_image
    s.row = c + cs * y - sn * x;
    s.col = c + sn * y + cs * x;
    if (s.kind == ShapeKind::Bar) s.angle = std::fmod(s.angle + theta, 2.0 * std::numbers::pi);
  }
  return out;
}

Tensor4<float> generate_clean(const SceneSpec& spec, std::uint64_t seed, std::size_t count) {
  if (spec.size == 0 || spec.min_shapes < 0 || spec.max_shapes < spec.min_shapes) {
    throw ShapeError("invalid scene spec");
  }
  Tensor4<float> out(count, 1, spec.size, spec.size);
  for (std::size_t n = 0; n < count; ++n) {
    const Tensor4<float> img = render_scene(sample_scene(spec, seed, n), spec.size);
    std::copy(img.data().begin(), img.data().end(), out.plane(n, 0).begin());
  }
  return out;
}

Degraded degrade(const Tensor4<float>& x, const Degradation& deg, std::uint64_t seed) {
  Degraded result{x, std::nullopt};
  const std::size_t per = x.shape().sample();
  auto add_noise = [&](double sigma, std::size_t b, std::mt19937_64& rng) {
    if (sigma < 0.0) throw ShapeError("noise sigma must be non-negative");
    if (sigma == 0.0) return;
    std::normal_distribution<double> noise(0.0, sigma);
    for (std::size_t i = 0; i < per; ++i) {
      float& v = result.y[b * per + i];
      v = static_cast<float>(static_cast<double>(v) + noise(rng));
    }
  };
  if (const auto* g = std::get_if<GaussianNoise>(&deg)) {
    for (std::size_t b = 0; b < x.batch(); ++b) {
      auto rng = stream(seed, b, 2);
      add_noise(g->sigma, b, rng);
    }
    return result;
  }
  const auto& m = std::get<MaskInpaint>(deg);
  if (!(m.rate >= 0.0 && m.rate < 1.0)) throw ShapeError("mask rate must lie in [0, 1)");
  Tensor4<float> mask(x.shape(), 1.0f);
  for (std::size_t b = 0; b < x.batch(); ++b) {
    auto rng = stream(seed, b, 3);
    std::bernoulli_distribution keep(1.0 - m.rate);
    for (std::size_t i = 0; i < per; ++i) {
      const bool kept = keep(rng);
      mask[b * per + i] = kept ? 1.0f : 0.0f;
      if (!kept) result.y[b * per + i] = 0.0f;
    }
    add_noise(m.noise_sigma, b, rng);
  }
  result.mask = std::move(mask);
  return result;
}

std::string to_string(Task task) { return task == Task::Denoise ? "denoise" : "inpaint"; }

Task parse_task(const std::string& s) {
  if (s == "denoise") return Task::Denoise;
  if (s == "inpaint") return Task::Inpaint;
  throw ShapeError("unknown task '" + s + "'");
}

Tensor4<float> Dataset::network_input() const {
  return task == Task::Inpaint ? concat_channels(degraded, mask) : degraded;
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  Dataset out;
  out.task = task;
  out.degraded = gather_batch(degraded, indices);
  out.clean = gather_batch(clean, indices);
  if (task == Task::Inpaint) out.mask = gather_batch(mask, indices);
  return out;
}

std::size_t Dataset::input_channels() const {
  return clean.channels() + (task == Task::Inpaint ? 1 : 0);
}

Dataset make_dataset(const DatasetInfo& info) {
  Dataset data;
  data.task = info.task;
  data.clean = generate_clean(info.spec, info.seed, info.count);
  Degradation deg = GaussianNoise{info.sigma};
  if (info.task == Task::Inpaint) deg = MaskInpaint{info.mask_rate, info.sigma};
  Degraded d = degrade(data.clean, deg, info.seed ^ 0x9E3779B97F4A7C15ull);
  data.degraded = std::move(d.y);
  if (d.mask) data.mask = std::move(*d.mask);
  return data;
}

void save_dataset(const std::filesystem::path& dir, const Dataset& data, const DatasetInfo& info) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / kShardName, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + (dir / kShardName).string());
    write_tensor(out, data.degraded);
    write_tensor(out, data.clean);
    if (data.task == Task::Inpaint) write_tensor(out, data.mask);
  }
  nlohmann::ordered_json j;
  j["format"] = "eqreg-dataset-v1";
  j["count"] = data.size();
  j["task"] = to_string(info.task);
  j["seed"] = info.seed;
  j["sigma"] = info.sigma;
  j["mask_rate"] = info.mask_rate;
  j["shards"] = {kShardName};
  j["tensors"] = data.task == Task::Inpaint ? nlohmann::json{"degraded", "clean", "mask"}
                                            : nlohmann::json{"degraded", "clean"};
  j["spec"] = {{"size", info.spec.size},
               {"min_shapes", info.spec.min_shapes},
               {"max_shapes", info.spec.max_shapes},
               {"disc_radius", range_json(info.spec.disc_radius)},
               {"bar_length", range_json(info.spec.bar_length)},
               {"bar_width", range_json(info.spec.bar_width)},
               {"intensity", range_json(info.spec.intensity)}};
  std::ofstream side(dir / kSidecarName, std::ios::trunc);
  if (!side) throw IoError("cannot write " + (dir / kSidecarName).string());
  side << j.dump(2) << "\n";
}

Dataset load_dataset(const std::filesystem::path& dir, DatasetInfo* info) {
  std::ifstream side(dir / kSidecarName);
  if (!side) throw IoError("no dataset sidecar at " + (dir / kSidecarName).string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(side);
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed dataset sidecar: " + std::string(e.what()));
  }
  Dataset data;
  DatasetInfo meta;
  try {
    meta.task = parse_task(j.at("task").get<std::string>());
    meta.count = j.at("count").get<std::size_t>();
    meta.seed = j.at("seed").get<std::uint64_t>();
    meta.sigma = j.at("sigma").get<double>();
    meta.mask_rate = j.at("mask_rate").get<double>();
    const auto& s = j.at("spec");
    meta.spec.size = s.at("size").get<std::size_t>();
    meta.spec.min_shapes = s.at("min_shapes").get<int>();
    meta.spec.max_shapes = s.at("max_shapes").get<int>();
    meta.spec.disc_radius = range_from(s.at("disc_radius"));
    meta.spec.bar_length = range_from(s.at("bar_length"));
    meta.spec.bar_width = range_from(s.at("bar_width"));
    meta.spec.intensity = range_from(s.at("intensity"));
  } catch (const nlohmann::json::exception& e) {
    throw IoError("incomplete dataset sidecar: " + std::string(e.what()));
  } catch (const ShapeError& e) {
    throw IoError(std::string("dataset sidecar: ") + e.what());
  }
  data.task = meta.task;
  std::ifstream in(dir / kShardName, std::ios::binary);
  if (!in) throw IoError("missing dataset shard " + (dir / kShardName).string());
  data.degraded = read_tensor<float>(in);
  data.clean = read_tensor<float>(in);
  if (data.task == Task::Inpaint) data.mask = read_tensor<float>(in);
  if (!(data.degraded.shape() == data.clean.shape()) || data.size() != meta.count ||
      (data.task == Task::Inpaint && !(data.mask.shape() == data.clean.shape()))) {
    throw IoError("dataset shard does not match its sidecar");
  }
  if (info != nullptr) *info = meta;
  return data;
}

}  // namespace eqreg
