// Copyright 2026 The eqreg Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "eqreg/data.hpp"
#include "eqreg/eqreg.hpp"
#include "eqreg/model.hpp"

namespace eqreg {

/// Adam with bias correction. Moments are kept in double.
template <typename T>
class Adam {
 public:
  Adam(double lr = 1e-3, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

  void step(const std::vector<T*>& params, const std::vector<T*>& grads);
  [[nodiscard]] std::size_t steps_taken() const { return t_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  std::size_t t_ = 0;
  std::vector<double> m_, v_;
};

struct TrainConfig {
  std::size_t steps = 2000;
  std::size_t batch = 8;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t seed = 0;
  EqRegConfig eqreg;
  std::size_t hidden_layers = 2;
  std::size_t n_hidden = 8;
  int group_order = 4;
  std::size_t eval_every = 500;
  std::filesystem::path out_dir;  // empty: write nothing
  std::string data_dir;           // echoed into config.json only
  std::string eval_dir;

  /// Throws ShapeError on non-positive sizes or rates.
  void validate() const;
};

/// Loss breakdown of one objective evaluation.
struct Losses {
  double task = 0.0;
  double equi = 0.0;
  double output = 0.0;
  double total = 0.0;
  int k = 0;
};

/// Draws the group element for one step according to cfg.sample_k.
int sample_element(const RotationGroup& group, const EqRegConfig& cfg, std::mt19937_64& rng);

/// MSE(N(input), target) + lambda * equi_loss at element k (+ output term).
template <typename T>
Losses objective(const Network<T>& net, const Tensor4<T>& input, const Tensor4<T>& target, int k,
                 const EqRegConfig& cfg);

/// objective() and its exact gradient. The rotated branch is differentiated only when
/// lambda > 0 or the output term is on; the regularizer is always reported.
template <typename T>
Losses objective_gradients(const Network<T>& net, const Tensor4<T>& input, const Tensor4<T>& target,
                           int k, const EqRegConfig& cfg, NetworkGrads<T>& grads);

/// One Adam update on a batch with a freshly sampled k. Throws NumericError on NaN/Inf.
template <typename T>
Losses train_step(Network<T>& net, Adam<T>& opt, const Tensor4<T>& input, const Tensor4<T>& target,
                  const EqRegConfig& cfg, std::mt19937_64& rng);

/// 10 log10(1 / MSE) for signals in [0, 1]; 99.0 when the images are identical.
template <typename T>
double psnr(const Tensor4<T>& x, const Tensor4<T>& ref);

/// Relative equivariance errors for k = 1..t-1, averaged over the dataset.
struct EquivReport {
  std::size_t step = 0;
  std::vector<double> e_out;                 // e_out[k-1]
  std::vector<std::vector<double>> e_feat;   // e_feat[layer][k-1]
  double e_out_mean = 0.0;
  double e_feat_mean = 0.0;
  double psnr = 0.0;
};

/// inputs: network inputs, N×C×S×S. Output error compares N(rot I) with rot N(I);
/// feature error compares tape entries with feature_transform. Each term is
/// ||difference||_F / ||plain||_F per image (the absolute difference if the plain norm is 0).
template <typename T>
EquivReport measure_equivariance(const Network<T>& net, const Tensor4<T>& inputs);

struct EvalResult {
  double mean_psnr = 0.0;
  std::vector<double> per_image;
};

template <typename T>
EvalResult evaluate(const Network<T>& net, const Dataset& data);

/// Network outputs for the whole dataset, in chunks.
template <typename T>
Tensor4<T> predict(const Network<T>& net, const Tensor4<T>& inputs);

template <typename T>
struct TrainResult {
  Network<T> net;
  Losses last;
  std::vector<EquivReport> reports;
};

/// Full run: init, train, evaluate every eval_every steps and at the end. With an
/// out_dir, writes report.csv, config.json, ckpt-step-NNNNNN.ckpt and final.ckpt.
template <typename T>
TrainResult<T> run_training(const TrainConfig& cfg, const Dataset& train,
                            const std::optional<Dataset>& eval);

/// CSV header for group order t.
std::string report_header(int group_order);
std::string report_row(const Losses& losses, const EquivReport& report);

}  // namespace eqreg
