// Copyright 2026 The eqreg Authors
// SPDX-License-Identifier: Apache-2.0

// eqreg command-line frontend.
//
// Exit codes: 0 success, 1 usage, 2 I/O, 3 numeric failure.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <fmt/format.h>

#include "CLI11.hpp"
#include "eqreg/data.hpp"
#include "eqreg/eqt_io.hpp"
#include "eqreg/model.hpp"
#include "eqreg/parallel.hpp"
#include "eqreg/trainer.hpp"

namespace fs = std::filesystem;

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kIo = 2, kNumeric = 3 };

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct GenDataArgs {
  std::string out;
  std::size_t count = 100;
  std::size_t size = 32;
  std::uint64_t seed = 0;
  std::string task = "denoise";
  double sigma = 0.1;
  double mask_rate = 0.3;
};

struct TrainArgs {
  std::string data, eval_data, out;
  double lambda = 0.1;
  int group_order = 4;
  std::size_t steps = 2000;
  double lr = 1e-3;
  std::size_t batch = 8;
  std::uint64_t seed = 0;
  bool output_consistency = false;
  double output_consistency_weight = 1.0;
  std::string reduction = "mean";
  bool include_identity = false;
  std::size_t eval_every = 500;
  std::size_t n_hidden = 0;  // 0: round(32 / t)
  std::size_t hidden_layers = 2;
};

struct CkptArgs {
  std::string ckpt, data, image, mask, out;
};

int run_gen_data(const GenDataArgs& a) {
  if (!(a.mask_rate > 0.0 && a.mask_rate < 1.0)) throw UsageError("--mask-rate must lie in (0, 1)");
  if (!(a.sigma >= 0.0)) throw UsageError("--sigma must be non-negative");
  if (a.size == 0) throw UsageError("--size must be positive");
  eqreg::DatasetInfo info;
  try {
    info.task = eqreg::parse_task(a.task);
  } catch (const eqreg::ShapeError& e) {
    throw UsageError(e.what());
  }
  info.spec.size = a.size;
  info.seed = a.seed;
  info.sigma = a.sigma;
  info.mask_rate = a.mask_rate;
  info.count = a.count;
  const eqreg::Dataset data = eqreg::make_dataset(info);
  eqreg::save_dataset(a.out, data, info);
  fmt::print("wrote {} {} pairs to {}\n", data.size(), a.task, a.out);
  return kOk;
}

int run_train(const TrainArgs& a) {
  if (a.group_order < 2) throw UsageError("--group-order must be >= 2");
  if (a.lambda < 0.0) throw UsageError("--lambda must be non-negative");
  eqreg::TrainConfig cfg;
  cfg.steps = a.steps;
  cfg.batch = a.batch;
  cfg.lr = a.lr;
  cfg.seed = a.seed;
  cfg.group_order = a.group_order;
  cfg.eval_every = a.eval_every;
  cfg.hidden_layers = a.hidden_layers;
  cfg.n_hidden = a.n_hidden != 0
                     ? a.n_hidden
                     : std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(32.0 / a.group_order)));
  cfg.eqreg.lambda = a.lambda;
  cfg.eqreg.output_consistency = a.output_consistency;
  cfg.eqreg.output_consistency_weight = a.output_consistency_weight;
  cfg.eqreg.reduction = eqreg::parse_reduction(a.reduction);
  cfg.eqreg.sample_k = a.include_identity ? eqreg::SampleK::IncludeIdentity : eqreg::SampleK::ExcludeIdentity;
  cfg.out_dir = a.out;
  cfg.data_dir = a.data;
  cfg.eval_dir = a.eval_data;
  try {
    cfg.validate();
  } catch (const eqreg::ShapeError& e) {
    throw UsageError(e.what());
  }
  if (!eqreg::RotationGroup(a.group_order).exact()) {
    fmt::print(stderr,
               "warning: group order {} is not a divisor of 4; rotations use bilinear "
               "interpolation and the regularizer is no longer exact\n",
               a.group_order);
  }

  const eqreg::Dataset train = eqreg::load_dataset(a.data);
  std::optional<eqreg::Dataset> eval;
  if (!a.eval_data.empty()) eval = eqreg::load_dataset(a.eval_data);
  const auto result = eqreg::run_training<float>(cfg, train, eval);
  const auto& last = result.reports.back();
  fmt::print("step {}: task={:.6g} equi={:.6g} total={:.6g} psnr={:.3f} e_out={:.4g} e_feat={:.4g}\n",
             last.step, result.last.task, result.last.equi, result.last.total, last.psnr,
             last.e_out_mean, last.e_feat_mean);
  return kOk;
}

eqreg::Dataset require_dataset(const std::string& dir) {
  eqreg::Dataset data = eqreg::load_dataset(dir);
  if (data.size() == 0) throw eqreg::IoError("dataset at " + dir + " is empty");
  return data;
}

int run_eval(const CkptArgs& a) {
  const auto net = eqreg::load_checkpoint<float>(a.ckpt);
  const eqreg::Dataset data = require_dataset(a.data);
  const auto result = eqreg::evaluate(net, data);
  fmt::print("mean PSNR: {:.4f} dB over {} images\n", result.mean_psnr, result.per_image.size());
  return kOk;
}

int run_measure(const CkptArgs& a) {
  const auto net = eqreg::load_checkpoint<float>(a.ckpt);
  const eqreg::Dataset data = require_dataset(a.data);
  const auto report = eqreg::measure_equivariance(net, data.network_input());
  const fs::path out = a.out.empty() ? fs::path("equiv_report.csv") : fs::path(a.out);
  std::ofstream csv(out, std::ios::trunc);
  if (!csv) throw eqreg::IoError("cannot write " + out.string());
  csv << "k,e_out";
  for (std::size_t l = 0; l < report.e_feat.size(); ++l) csv << ",e_feat_l" << (l + 1);
  csv << "\n";
  for (std::size_t ki = 0; ki < report.e_out.size(); ++ki) {
    csv << (ki + 1) << "," << fmt::format("{}", report.e_out[ki]);
    for (const auto& row : report.e_feat) csv << "," << fmt::format("{}", row[ki]);
    csv << "\n";
  }
  csv << "mean," << fmt::format("{}", report.e_out_mean) << "," << fmt::format("{}", report.e_feat_mean)
      << "\n";
  fmt::print("e_out_mean={} e_feat_mean={} (written to {})\n", report.e_out_mean, report.e_feat_mean,
             out.string());
  return kOk;
}

// Per-channel min-max normalization to [0, 1]; constant channels render black.
eqreg::Tensor4<float> normalized_channel(const eqreg::Tensor4<float>& t, std::size_t c) {
  eqreg::Tensor4<float> out(1, 1, t.height(), t.width());
  auto plane = t.plane(0, c);
  const auto [lo, hi] = std::minmax_element(plane.begin(), plane.end());
  const float range = *hi - *lo;
  for (std::size_t i = 0; i < plane.size(); ++i) out[i] = range > 0.0f ? (plane[i] - *lo) / range : 0.0f;
  return out;
}

int run_dump(const CkptArgs& a) {
  const auto net = eqreg::load_checkpoint<float>(a.ckpt);
  eqreg::Tensor4<float> input = eqreg::load_image(a.image);
  if (net.in_channels() == input.channels() + 1) {
    const auto mask = a.mask.empty() ? eqreg::Tensor4<float>(1, 1, input.height(), input.width(), 1.0f)
                                     : eqreg::load_image(a.mask);
    input = eqreg::concat_channels(input, mask);
  }
  const auto result = eqreg::forward_with_tape(net, input);
  fs::create_directories(a.out);
  for (std::size_t l = 0; l < result.tape.size(); ++l) {
    const auto& act = result.tape.activations[l];
    eqreg::save_tensor(fs::path(a.out) / fmt::format("tape_{:02d}.eqt", l + 1), act);
    for (std::size_t c = 0; c < act.channels(); ++c) {
      eqreg::save_image(normalized_channel(act, c),
                        fs::path(a.out) / fmt::format("tape_{:02d}_c{:03d}.pgm", l + 1, c));
    }
  }
  eqreg::save_tensor(fs::path(a.out) / "output.eqt", result.output);
  fmt::print("wrote {} hidden tapes to {}\n", result.tape.size(), a.out);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  eqreg::configure_threads_from_env();

  CLI::App app{"Rotation-equivariance regularization for CNN image restoration"};
  app.require_subcommand(1);

  GenDataArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate a synthetic restoration dataset");
  gen_cmd->add_option("--out", gen.out, "Output directory")->required();
  gen_cmd->add_option("--count", gen.count, "Number of image pairs");
  gen_cmd->add_option("--size", gen.size, "Square image size");
  gen_cmd->add_option("--seed", gen.seed, "Generator seed");
  gen_cmd->add_option("--task", gen.task, "denoise or inpaint")->check(CLI::IsMember({"denoise", "inpaint"}));
  gen_cmd->add_option("--sigma", gen.sigma, "Gaussian noise standard deviation");
  gen_cmd->add_option("--mask-rate", gen.mask_rate, "Fraction of pixels removed (inpaint)");

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "Train a restoration CNN");
  train_cmd->add_option("--data", tr.data, "Training dataset directory")->required();
  train_cmd->add_option("--out", tr.out, "Run output directory")->required();
  train_cmd->add_option("--eval-data", tr.eval_data, "Evaluation dataset directory");
  train_cmd->add_option("--lambda", tr.lambda, "Regularizer weight");
  train_cmd->add_option("--group-order", tr.group_order, "Rotation group order t");
  train_cmd->add_option("--steps", tr.steps, "Optimizer steps");
  train_cmd->add_option("--lr", tr.lr, "Adam learning rate");
  train_cmd->add_option("--batch", tr.batch, "Batch size");
  train_cmd->add_option("--seed", tr.seed, "Run seed");
  train_cmd->add_flag("--output-consistency", tr.output_consistency, "Add the output rotation-consistency term");
  train_cmd->add_option("--output-consistency-weight", tr.output_consistency_weight, "Weight of the output term");
  train_cmd->add_option("--reduction", tr.reduction, "mean or sum")->check(CLI::IsMember({"mean", "sum"}));
  train_cmd->add_flag("--include-identity", tr.include_identity, "Sample k = 0 as well");
  train_cmd->add_option("--eval-every", tr.eval_every, "Steps between evaluations/checkpoints");
  train_cmd->add_option("--n-hidden", tr.n_hidden, "Features per group element (default round(32/t))");
  train_cmd->add_option("--hidden-layers", tr.hidden_layers, "Number of hidden conv layers");

  CkptArgs ev, me, dump;
  auto* eval_cmd = app.add_subcommand("eval", "Report mean PSNR of a checkpoint");
  eval_cmd->add_option("--ckpt", ev.ckpt, "Checkpoint file")->required();
  eval_cmd->add_option("--data", ev.data, "Dataset directory")->required();
  auto* measure_cmd = app.add_subcommand("measure-equiv", "Measure rotation-equivariance errors");
  measure_cmd->add_option("--ckpt", me.ckpt, "Checkpoint file")->required();
  measure_cmd->add_option("--data", me.data, "Dataset directory")->required();
  measure_cmd->add_option("--out", me.out, "CSV report path (default equiv_report.csv)");
  auto* dump_cmd = app.add_subcommand("dump-features", "Write hidden activations for one image");
  dump_cmd->add_option("--ckpt", dump.ckpt, "Checkpoint file")->required();
  dump_cmd->add_option("--image", dump.image, "Input PGM/PPM image")->required();
  dump_cmd->add_option("--mask", dump.mask, "Mask PGM for inpainting networks (default all ones)");
  dump_cmd->add_option("--out", dump.out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*gen_cmd) return run_gen_data(gen);
    if (*train_cmd) return run_train(tr);
    if (*eval_cmd) return run_eval(ev);
    if (*measure_cmd) return run_measure(me);
    if (*dump_cmd) return run_dump(dump);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const eqreg::NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kNumeric;
  } catch (const eqreg::IoError& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return kIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kIo;
  }
  return kUsage;
}
