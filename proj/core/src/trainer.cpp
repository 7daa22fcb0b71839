// Copyright 2026 The eqreg Authors
// SPDX-License-Identifier: Apache-2.0

#include "eqreg/trainer.hpp"

#include <cmath>
#include <fstream>
#include <numeric>

#include <fmt/format.h>
#include "json.hpp"

namespace eqreg {
namespace {

constexpr std::size_t kChunk = 16;

template <typename T>
double mse(const Tensor4<T>& a, const Tensor4<T>& b) {
  require_same_shape(a.shape(), b.shape(), "mse");
  if (a.size() == 0) return 0.0;
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    acc += d * d;
  }
  return acc / static_cast<double>(a.size());
}

bool wants_rotated_grad(const EqRegConfig& cfg) {
  return cfg.lambda > 0.0 || cfg.output_consistency;
}

bool is_square(const Shape4& s) { return s.height == s.width; }

// ||moved - other|| and ||plain|| for sample b, accumulated in double.
template <typename T>
std::pair<double, double> sample_norms(const Tensor4<T>& moved, const Tensor4<T>& other,
                                       const Tensor4<T>& plain, std::size_t b) {
  const std::size_t per = moved.shape().sample();
  double diff = 0.0, ref = 0.0;
  for (std::size_t i = b * per; i < (b + 1) * per; ++i) {
    const double d = static_cast<double>(moved[i]) - static_cast<double>(other[i]);
    diff += d * d;
    ref += static_cast<double>(plain[i]) * static_cast<double>(plain[i]);
  }
  return {std::sqrt(diff), std::sqrt(ref)};
}

double relative(std::pair<double, double> norms) {
  const auto [diff, ref] = norms;
  return ref > 0.0 ? diff / ref : diff;
}

std::string number(double v) { return fmt::format("{}", v); }

template <typename T>
Tensor4<T> chunk_of(const Tensor4<T>& all, std::size_t first, std::size_t count) {
  std::vector<std::size_t> idx(count);
  std::iota(idx.begin(), idx.end(), first);
  return gather_batch(all, idx);
}

nlohmann::ordered_json config_json(const TrainConfig& cfg) {
  nlohmann::ordered_json j;
  j["steps"] = cfg.steps;
  j["batch"] = cfg.batch;
  j["lr"] = cfg.lr;
  j["beta1"] = cfg.beta1;
  j["beta2"] = cfg.beta2;
  j["eps"] = cfg.eps;
  j["seed"] = cfg.seed;
  j["lambda"] = cfg.eqreg.lambda;
  j["reduction"] = to_string(cfg.eqreg.reduction);
  j["sample_k"] = cfg.eqreg.sample_k == SampleK::ExcludeIdentity ? "exclude_identity" : "include_identity";
  j["output_consistency"] = cfg.eqreg.output_consistency;
  j["output_consistency_weight"] = cfg.eqreg.output_consistency_weight;
  j["hidden_layers"] = cfg.hidden_layers;
  j["n_hidden"] = cfg.n_hidden;
  j["group_order"] = cfg.group_order;
  j["eval_every"] = cfg.eval_every;
  j["data"] = cfg.data_dir;
  j["eval_data"] = cfg.eval_dir;
  return j;
}

}  // namespace

template <typename T>
Adam<T>::Adam(double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

template <typename T>
void Adam<T>::step(const std::vector<T*>& params, const std::vector<T*>& grads) {
  if (params.size() != grads.size()) throw ShapeError("Adam: parameter/gradient count mismatch");
  if (m_.empty()) {
    m_.assign(params.size(), 0.0);
    v_.assign(params.size(), 0.0);
  }
  if (m_.size() != params.size()) throw ShapeError("Adam: parameter count changed");
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = static_cast<double>(*grads[i]);
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * g;
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * g * g;
    const double update = lr_ * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + eps_);
    *params[i] = static_cast<T>(static_cast<double>(*params[i]) - update);
  }
}

void TrainConfig::validate() const {
  if (steps == 0) throw ShapeError("steps must be positive");
  if (batch == 0) throw ShapeError("batch must be positive");
  if (!(lr >= 0.0)) throw ShapeError("learning rate must be non-negative");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) throw ShapeError("Adam betas must lie in [0, 1)");
  if (!(eps > 0.0)) throw ShapeError("Adam eps must be positive");
  if (n_hidden == 0) throw ShapeError("n_hidden must be positive");
  if (eval_every == 0) throw ShapeError("eval period must be positive");
  RotationGroup{group_order};
  eqreg.validate();
}

int sample_element(const RotationGroup& group, const EqRegConfig& cfg, std::mt19937_64& rng) {
  const int lo = cfg.sample_k == SampleK::ExcludeIdentity ? 1 : 0;
  return std::uniform_int_distribution<int>(lo, group.order() - 1)(rng);
}

template <typename T>
Losses objective(const Network<T>& net, const Tensor4<T>& input, const Tensor4<T>& target, int k,
                 const EqRegConfig& cfg) {
  const RotationGroup& group = net.group;
  Losses losses;
  losses.k = k;
  const ForwardResult<T> plain = forward_with_tape(net, input);
  losses.task = mse(plain.output, target);
  if (!is_square(input.shape())) {
    if (wants_rotated_grad(cfg)) throw ShapeError("equivariance regularization requires square inputs");
  } else {
    const ForwardResult<T> rot = forward_with_tape(net, rotate_image(input, k, group));
    losses.equi = equi_loss(plain.tape, rot.tape, k, group, cfg);
    if (cfg.output_consistency)
      losses.output = output_consistency_loss(plain.output, rot.output, k, group, cfg.reduction);
  }
  losses.total = total_loss(losses.task, losses.equi, cfg, losses.output);
  return losses;
}

template <typename T>
Losses objective_gradients(const Network<T>& net, const Tensor4<T>& input, const Tensor4<T>& target,
                           int k, const EqRegConfig& cfg, NetworkGrads<T>& grads) {
  const RotationGroup& group = net.group;
  Losses losses;
  losses.k = k;
  const Trace<T> plain = forward_trace(net, input);
  losses.task = mse(plain.output, target);
  Tensor4<T> grad_out = sub(plain.output, target);
  grad_out = scale(grad_out, static_cast<T>(2.0 / static_cast<double>(std::max<std::size_t>(1, grad_out.size()))));

  if (!is_square(input.shape())) {
    if (wants_rotated_grad(cfg)) throw ShapeError("equivariance regularization requires square inputs");
    grads = backward(net, plain, grad_out, {});
    losses.total = total_loss(losses.task, 0.0, cfg);
    return losses;
  }

  const Trace<T> rot = forward_trace(net, rotate_image(input, k, group));
  const Tape<T> tape_plain = tape_of(net, plain);
  const Tape<T> tape_rot = tape_of(net, rot);
  losses.equi = equi_loss(tape_plain, tape_rot, k, group, cfg);
  if (cfg.output_consistency)
    losses.output = output_consistency_loss(plain.output, rot.output, k, group, cfg.reduction);
  losses.total = total_loss(losses.task, losses.equi, cfg, losses.output);

  if (!wants_rotated_grad(cfg)) {
    grads = backward(net, plain, grad_out, {});
    return losses;
  }

  std::vector<Tensor4<T>> inject_plain, inject_rot;
  if (cfg.lambda > 0.0) {
    EquiTapeGrads<T> tg = equi_loss_tape_grads(tape_plain, tape_rot, k, group, cfg);
    const T lambda = static_cast<T>(cfg.lambda);
    for (auto& g : tg.plain) inject_plain.push_back(scale(g, lambda));
    for (auto& g : tg.rot) inject_rot.push_back(scale(g, lambda));
  }
  Tensor4<T> grad_rot_out;
  if (cfg.output_consistency) {
    auto [gp, gr] = output_consistency_grads(plain.output, rot.output, k, group, cfg.reduction);
    const T w = static_cast<T>(cfg.output_consistency_weight);
    axpy(grad_out, w, gp);
    grad_rot_out = scale(gr, w);
  }
  grads = backward(net, plain, grad_out, inject_plain);
  accumulate(grads, backward(net, rot, grad_rot_out, inject_rot));
  return losses;
}

template <typename T>
Losses train_step(Network<T>& net, Adam<T>& opt, const Tensor4<T>& input, const Tensor4<T>& target,
                  const EqRegConfig& cfg, std::mt19937_64& rng) {
  const int k = sample_element(net.group, cfg, rng);
  NetworkGrads<T> grads;
  Losses losses = objective_gradients(net, input, target, k, cfg, grads);
  if (!std::isfinite(losses.task) || !std::isfinite(losses.equi) || !std::isfinite(losses.output) ||
      !std::isfinite(losses.total)) {
    throw NumericError(fmt::format("non-finite loss (task={}, equi={}, total={})", losses.task,
                                   losses.equi, losses.total));
  }
  opt.step(parameter_pointers(net), gradient_pointers(grads));
  return losses;
}

template <typename T>
double psnr(const Tensor4<T>& x, const Tensor4<T>& ref) {
  const double err = mse(x, ref);
  if (err == 0.0) return 99.0;
  return 10.0 * std::log10(1.0 / err);
}

template <typename T>
EquivReport measure_equivariance(const Network<T>& net, const Tensor4<T>& inputs) {
  if (inputs.batch() == 0) throw ShapeError("measure_equivariance: empty dataset");
  const RotationGroup& group = net.group;
  const auto ks = static_cast<std::size_t>(group.order() - 1);
  const std::size_t layers = net.regularization_points().size();
  EquivReport report;
  report.e_out.assign(ks, 0.0);
  report.e_feat.assign(layers, std::vector<double>(ks, 0.0));

  for (std::size_t first = 0; first < inputs.batch(); first += kChunk) {
    const std::size_t count = std::min(kChunk, inputs.batch() - first);
    const Tensor4<T> x = chunk_of(inputs, first, count);
    const ForwardResult<T> plain = forward_with_tape(net, x);
    for (std::size_t ki = 0; ki < ks; ++ki) {
      const int k = static_cast<int>(ki) + 1;
      const ForwardResult<T> rot = forward_with_tape(net, rotate_image(x, k, group));
      const Tensor4<T> moved_out = rotate_image(plain.output, k, group);
      for (std::size_t li = 0; li < layers; ++li) {
        const Tensor4<T> moved = feature_transform(plain.tape.activations[li], k, group);
        for (std::size_t b = 0; b < count; ++b)
          report.e_feat[li][ki] +=
              relative(sample_norms(moved, rot.tape.activations[li], plain.tape.activations[li], b));
      }
      for (std::size_t b = 0; b < count; ++b)
        report.e_out[ki] += relative(sample_norms(moved_out, rot.output, plain.output, b));
    }
  }
  const auto n = static_cast<double>(inputs.batch());
  for (auto& v : report.e_out) v /= n;
  for (auto& row : report.e_feat)
    for (auto& v : row) v /= n;
  report.e_out_mean = std::accumulate(report.e_out.begin(), report.e_out.end(), 0.0) /
                      static_cast<double>(std::max<std::size_t>(1, ks));
  double feat = 0.0;
  for (const auto& row : report.e_feat) feat += std::accumulate(row.begin(), row.end(), 0.0);
  report.e_feat_mean = layers == 0 ? 0.0 : feat / static_cast<double>(layers * ks);
  return report;
}

template <typename T>
Tensor4<T> predict(const Network<T>& net, const Tensor4<T>& inputs) {
  Tensor4<T> out(inputs.batch(), net.out_channels(), inputs.height(), inputs.width());
  const std::size_t per = out.shape().sample();
  for (std::size_t first = 0; first < inputs.batch(); first += kChunk) {
    const std::size_t count = std::min(kChunk, inputs.batch() - first);
    const Tensor4<T> y = forward(net, chunk_of(inputs, first, count));
    std::copy(y.data().begin(), y.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(first * per));
  }
  return out;
}

template <typename T>
EvalResult evaluate(const Network<T>& net, const Dataset& data) {
  if (data.size() == 0) throw ShapeError("evaluate: empty dataset");
  const Tensor4<T> out = predict(net, cast<T>(data.network_input()));
  const Tensor4<T> clean = cast<T>(data.clean);
  EvalResult result;
  for (std::size_t b = 0; b < data.size(); ++b) {
    const std::size_t idx[] = {b};
    result.per_image.push_back(psnr(gather_batch(out, idx), gather_batch(clean, idx)));
  }
  result.mean_psnr = std::accumulate(result.per_image.begin(), result.per_image.end(), 0.0) /
                     static_cast<double>(result.per_image.size());
  return result;
}

std::string report_header(int group_order) {
  std::string h = "step,task_loss,equi_loss,total_loss,psnr,e_out_mean,e_feat_mean";
  for (int k = 1; k < group_order; ++k) h += ",e_out_k" + std::to_string(k);
  return h;
}

std::string report_row(const Losses& losses, const EquivReport& report) {
  std::string row = std::to_string(report.step) + "," + number(losses.task) + "," + number(losses.equi) +
                    "," + number(losses.total) + "," + number(report.psnr) + "," +
                    number(report.e_out_mean) + "," + number(report.e_feat_mean);
  for (double e : report.e_out) row += "," + number(e);
  return row;
}

template <typename T>
TrainResult<T> run_training(const TrainConfig& cfg, const Dataset& train,
                            const std::optional<Dataset>& eval) {
  cfg.validate();
  if (train.size() == 0) throw ShapeError("training set is empty");
  if (train.clean.height() != train.clean.width()) throw ShapeError("training images must be square");

  Architecture arch;
  arch.in_channels = train.input_channels();
  arch.out_channels = train.clean.channels();
  arch.hidden_layers = cfg.hidden_layers;
  arch.n_hidden = cfg.n_hidden;
  arch.group_order = cfg.group_order;
  arch.residual = true;

  TrainResult<T> result{make_network<T>(arch), {}, {}};
  Network<T>& net = result.net;
  init_weights(net, cfg.seed);
  Adam<T> opt(cfg.lr, cfg.beta1, cfg.beta2, cfg.eps);
  std::mt19937_64 rng(cfg.seed ^ 0xD1B54A32D192ED03ull);

  const Dataset& eval_set = eval && eval->size() > 0 ? *eval : train;
  const Tensor4<T> eval_inputs = cast<T>(eval_set.network_input());
  const Tensor4<T> inputs = cast<T>(train.network_input());
  const Tensor4<T> targets = cast<T>(train.clean);

  std::ofstream csv;
  if (!cfg.out_dir.empty()) {
    std::filesystem::create_directories(cfg.out_dir);
    csv.open(cfg.out_dir / "report.csv", std::ios::trunc);
    if (!csv) throw IoError("cannot write " + (cfg.out_dir / "report.csv").string());
    csv << report_header(cfg.group_order) << "\n";
    std::ofstream(cfg.out_dir / "config.json", std::ios::trunc) << config_json(cfg).dump(2) << "\n";
  }

  std::vector<std::size_t> indices(cfg.batch);
  std::uniform_int_distribution<std::size_t> pick(0, train.size() - 1);
  for (std::size_t step = 1; step <= cfg.steps; ++step) {
    for (auto& i : indices) i = pick(rng);
    result.last = train_step(net, opt, gather_batch(inputs, indices), gather_batch(targets, indices),
                             cfg.eqreg, rng);
    if (step % cfg.eval_every != 0 && step != cfg.steps) continue;

    EquivReport report = measure_equivariance(net, eval_inputs);
    report.step = step;
    report.psnr = evaluate(net, eval_set).mean_psnr;
    if (csv.is_open()) {
      csv << report_row(result.last, report) << "\n" << std::flush;
      save_checkpoint(cfg.out_dir / fmt::format("ckpt-step-{:06d}.ckpt", step), net);
    }
    result.reports.push_back(std::move(report));
  }
  if (!cfg.out_dir.empty()) save_checkpoint(cfg.out_dir / "final.ckpt", net);
  return result;
}

#define EQREG_INSTANTIATE_TRAINER(T)                                                             \
  template class Adam<T>;                                                                        \
  template Losses objective(const Network<T>&, const Tensor4<T>&, const Tensor4<T>&, int,        \
                            const EqRegConfig&);                                                 \
  template Losses objective_gradients(const Network<T>&, const Tensor4<T>&, const Tensor4<T>&,   \
                                      int, const EqRegConfig&, NetworkGrads<T>&);                \
  template Losses train_step(Network<T>&, Adam<T>&, const Tensor4<T>&, const Tensor4<T>&,        \
                             const EqRegConfig&, std::mt19937_64&);                              \
  template double psnr(const Tensor4<T>&, const Tensor4<T>&);                                    \
  template EquivReport measure_equivariance(const Network<T>&, const Tensor4<T>&);               \
  template EvalResult evaluate<T>(const Network<T>&, const Dataset&);                            \
  template Tensor4<T> predict(const Network<T>&, const Tensor4<T>&);                             \
  template TrainResult<T> run_training<T>(const TrainConfig&, const Dataset&,                    \
                                          const std::optional<Dataset>&);

EQREG_INSTANTIATE_TRAINER(float)
EQREG_INSTANTIATE_TRAINER(double)

}  // namespace eqreg
