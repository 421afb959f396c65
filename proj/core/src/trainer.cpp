// Copyright 2026 The SaLoRA Toolkit Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "salora/trainer.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <string>

#include "salora/error.hpp"
#include "salora/random.hpp"

namespace salora {

std::string_view loss_kind_name(LossKind kind) {
  return kind == LossKind::kMse ? "mse" : "cross_entropy";
}

LossKind parse_loss_kind(std::string_view name) {
  if (name == "mse") return LossKind::kMse;
  if (name == "cross_entropy") return LossKind::kCrossEntropy;
  throw ConfigError("unknown loss '" + std::string(name) + "'");
}

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("learning_rate must be finite and non-negative");
  }
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (epochs == 0) throw ConfigError("epochs must be positive");
  if (!(adamw.beta1 > 0.0 && adamw.beta1 < 1.0)) throw ConfigError("beta1 must lie in (0, 1)");
  if (!(adamw.beta2 > 0.0 && adamw.beta2 < 1.0)) throw ConfigError("beta2 must lie in (0, 1)");
  if (!(adamw.eps > 0.0)) throw ConfigError("eps must be positive");
  if (!(adamw.weight_decay >= 0.0)) throw ConfigError("weight_decay must be non-negative");
}

LossValue evaluate_loss(LossKind kind, const Matrix& output, const Matrix& target) {
  if (!same_shape(output, target)) {
    throw ShapeError("loss: output " + output.shape_string() + " vs target " +
                     target.shape_string());
  }
  LossValue r;
  r.output_grad = Matrix(output.rows(), output.cols());
  if (output.empty()) return r;

  if (kind == LossKind::kMse) {
    const double n = static_cast<double>(output.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < output.size(); ++i) {
      const double diff = output.data()[i] - target.data()[i];
      sum += diff * diff;
      r.output_grad.data()[i] = 2.0 * diff / n;
    }
    r.loss = sum / n;
    return r;
  }

  const double n = static_cast<double>(output.cols());
  double total = 0.0;
  std::vector<double> p(output.rows());
  for (std::size_t j = 0; j < output.cols(); ++j) {
    double peak = output(0, j);
    for (std::size_t i = 1; i < output.rows(); ++i) peak = std::max(peak, output(i, j));
    double z = 0.0;
    for (std::size_t i = 0; i < output.rows(); ++i) {
      p[i] = std::exp(output(i, j) - peak);
      z += p[i];
    }
    const double log_z = std::log(z) + peak;
    double tsum = 0.0;
    for (std::size_t i = 0; i < output.rows(); ++i) {
      total -= target(i, j) * (output(i, j) - log_z);
      tsum += target(i, j);
    }
    // d/do_i of -sum_k t_k log softmax_k = softmax_i * sum(t) - t_i
    for (std::size_t i = 0; i < output.rows(); ++i)
      r.output_grad(i, j) = (p[i] / z * tsum - target(i, j)) / n;
  }
  r.loss = total / n;
  return r;
}

LossAndGrad loss_and_grad(const ToyModel& model, const Matrix& inputs, const Matrix& targets,
                          LossKind kind) {
  const ForwardResult fwd = forward(model, inputs);
  LossValue lv = evaluate_loss(kind, fwd.output, targets);
  LossAndGrad r;
  r.loss = lv.loss;
  r.grads = backward(model, inputs, lv.output_grad).adapters;
  return r;
}

GradientAudit audit_gradients(const ToyModel& model, const Matrix& inputs, const Matrix& targets,
                              LossKind kind, double h) {
  const LossAndGrad lg = loss_and_grad(model, inputs, targets, kind);
  ToyModel probe = model;
  GradientAudit audit;
  auto loss_at = [&] { return evaluate_loss(kind, forward(probe, inputs).output, targets).loss; };
  for (std::size_t l = 0; l < probe.layers.size(); ++l) {
    if (!probe.layers[l].adapter) continue;
    for (int which = 0; which < 2; ++which) {
      Matrix& param = which == 0 ? probe.layers[l].adapter->a : probe.layers[l].adapter->b;
      const Matrix& grad = which == 0 ? lg.grads[l]->a : lg.grads[l]->b;
      for (std::size_t i = 0; i < param.size(); ++i) {
        const double keep = param.data()[i];
        param.data()[i] = keep + h;
        const double up = loss_at();
        param.data()[i] = keep - h;
        const double down = loss_at();
        param.data()[i] = keep;
        const double fd = (up - down) / (2.0 * h);
        audit.max_rel_error =
            std::max(audit.max_rel_error, std::abs(grad.data()[i] - fd) / (1e-8 + std::abs(fd)));
        ++audit.entries;
      }
    }
  }
  return audit;
}

void adamw_step(std::span<Matrix* const> params, std::span<const Matrix* const> grads,
                OptimizerState& state, double learning_rate, const AdamWParams& hp) {
  if (params.size() != grads.size()) {
    throw ShapeError("adamw_step: " + std::to_string(params.size()) + " parameters but " +
                     std::to_string(grads.size()) + " gradients");
  }
  if (state.m.empty()) {
    for (const Matrix* p : params) {
      state.m.emplace_back(p->rows(), p->cols());
      state.v.emplace_back(p->rows(), p->cols());
    }
  }
  if (state.m.size() != params.size()) throw ShapeError("adamw_step: optimizer state size changed");
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (!same_shape(*params[k], *grads[k]) || !same_shape(*params[k], state.m[k])) {
      throw ShapeError("adamw_step: parameter " + std::to_string(k) + " is " +
                       params[k]->shape_string() + ", gradient is " + grads[k]->shape_string());
    }
  }

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(hp.beta1, t);
  const double bc2 = 1.0 - std::pow(hp.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto p = params[k]->data();
    auto g = grads[k]->data();
    auto m = state.m[k].data();
    auto v = state.v[k].data();
    for (std::size_t i = 0; i < p.size(); ++i) {
      p[i] -= learning_rate * hp.weight_decay * p[i];
      m[i] = hp.beta1 * m[i] + (1.0 - hp.beta1) * g[i];
      v[i] = hp.beta2 * v[i] + (1.0 - hp.beta2) * g[i] * g[i];
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      p[i] -= learning_rate * m_hat / (std::sqrt(v_hat) + hp.eps);
    }
  }
}

std::string_view method_name(Method m) {
  switch (m) {
    case Method::kLoRA:
      return "lora";
    case Method::kPiSSA:
      return "pissa";
    case Method::kSaLoRA:
      return "salora";
    case Method::kSaLoRANoTaskInit:
      return "salora_no_init";
  }
  return "unknown";
}

Method parse_method(std::string_view name) {
  if (name == "lora") return Method::kLoRA;
  if (name == "pissa") return Method::kPiSSA;
  if (name == "salora") return Method::kSaLoRA;
  if (name == "salora_no_init") return Method::kSaLoRANoTaskInit;
  throw ConfigError("unknown method '" + std::string(name) + "'");
}

AdapterKind method_kind(Method m) {
  switch (m) {
    case Method::kLoRA:
      return AdapterKind::kLoRA;
    case Method::kPiSSA:
      return AdapterKind::kPiSSA;
    case Method::kSaLoRA:
    case Method::kSaLoRANoTaskInit:
      return AdapterKind::kSaLoRA;
  }
  return AdapterKind::kLoRA;
}

LayerContexts capture_contexts(const ToyModel& pretrained, const Matrix& protected_inputs,
                               const Matrix& task_inputs, std::size_t r_s, std::size_t r_t) {
  const ForwardResult h = forward(pretrained, protected_inputs, /*capture=*/true);
  const ForwardResult t = forward(pretrained, task_inputs, /*capture=*/true);
  LayerContexts ctx;
  for (std::size_t i = 0; i < pretrained.layers.size(); ++i) {
    ctx.safety.push_back({h.trace->inputs[i], r_s});
    ctx.task.push_back({t.trace->inputs[i], r_t});
  }
  return ctx;
}

ToyModel attach_adapters(const ToyModel& pretrained, const AdapterPlan& plan,
                         const LayerContexts* contexts) {
  pretrained.validate();
  ToyModel model = pretrained;
  std::vector<std::size_t> layers = plan.layers;
  if (layers.empty()) {
    for (std::size_t i = 0; i < model.layers.size(); ++i) layers.push_back(i);
  }
  const bool needs_safety = method_kind(plan.method) == AdapterKind::kSaLoRA;
  for (std::size_t idx : layers) {
    if (idx >= model.layers.size()) {
      throw ConfigError("adapter layer " + std::to_string(idx) + " out of range");
    }
    LinearLayer& layer = model.layers[idx];
    const std::uint64_t seed = derive_seed(plan.init_seed, "init/layer" + std::to_string(idx));
    if (needs_safety && (contexts == nullptr || idx >= contexts->safety.size())) {
      throw ConfigError(std::string(method_name(plan.method)) +
                        " needs a safety context for layer " + std::to_string(idx));
    }
    switch (plan.method) {
      case Method::kLoRA:
        layer.adapter = init_lora(layer.out_dim(), layer.in_dim(), plan.rank, seed);
        break;
      case Method::kPiSSA:
        layer.adapter = init_pissa(layer.weight, plan.rank);
        break;
      case Method::kSaLoRA:
        if (idx >= contexts->task.size()) {
          throw ConfigError("salora needs a task context for layer " + std::to_string(idx));
        }
        layer.adapter =
            assemble_salora(layer.weight, contexts->safety[idx], contexts->task[idx], plan.rank);
        break;
      case Method::kSaLoRANoTaskInit:
        layer.adapter =
            assemble_salora_lora_init(layer.weight, contexts->safety[idx], plan.rank, seed);
        break;
    }
  }
  return model;
}

namespace {

double dataset_loss(const ToyModel& model, const Dataset& data, LossKind kind) {
  if (data.inputs.cols() == 0) return 0.0;
  return evaluate_loss(kind, forward(model, data.inputs).output, data.targets).loss;
}

}  // namespace

TrainResult train_adapters(ToyModel model, const Dataset& data, const TrainConfig& config,
                           const StepObserver& observer) {
  config.validate();
  if (!model.has_adapters()) throw ConfigError("train_adapters: model has no adapters");
  if (data.inputs.cols() != data.targets.cols()) {
    throw ShapeError("dataset inputs " + data.inputs.shape_string() + " vs targets " +
                     data.targets.shape_string());
  }
  if (data.inputs.cols() == 0) throw ConfigError("train_adapters: empty dataset");

  std::vector<Matrix*> params;
  for (auto& layer : model.layers) {
    if (!layer.adapter) continue;
    params.push_back(&layer.adapter->a);
    params.push_back(&layer.adapter->b);
  }

  TrainResult result;
  result.initial_loss = dataset_loss(model, data, config.loss);
  if (observer) observer(0, model);

  Rng shuffle(derive_seed(config.seed, "shuffle"));
  OptimizerState state;
  const std::size_t n = data.inputs.cols();
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const std::vector<std::size_t> order = shuffle.permutation(n);
    for (std::size_t begin = 0; begin < n; begin += config.batch_size) {
      const std::size_t count = std::min(config.batch_size, n - begin);
      const std::span<const std::size_t> idx(order.data() + begin, count);
      const Matrix xb = gather_columns(data.inputs, idx);
      const Matrix yb = gather_columns(data.targets, idx);
      LossAndGrad lg = loss_and_grad(model, xb, yb, config.loss);

      std::vector<const Matrix*> grads;
      for (auto& g : lg.grads) {
        if (!g) continue;
        grads.push_back(&g->a);
        grads.push_back(&g->b);
      }
      adamw_step(params, grads, state, config.learning_rate, config.adamw);
      ++step;
      result.curve.push_back({step, epoch, lg.loss});
      if (observer) observer(step, model);
    }
  }
  result.final_loss = dataset_loss(model, data, config.loss);
  result.model = std::move(model);
  return result;
}

TrainResult fine_tune(const ToyModel& pretrained, const Dataset& data, const AdapterPlan& plan,
                      const TrainConfig& config, const LayerContexts* contexts,
                      const StepObserver& observer) {
  return train_adapters(attach_adapters(pretrained, plan, contexts), data, config, observer);
}

namespace {

struct Fnv1a {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  void add(const Matrix& m) {
    add_word(m.rows());
    add_word(m.cols());
    for (double v : m.data()) add_word(std::bit_cast<std::uint64_t>(v));
  }
  void add(const std::optional<Matrix>& m) {
    add_word(m ? 1 : 0);
    if (m) add(*m);
  }
  void add_word(std::uint64_t w) {
    for (int i = 0; i < 8; ++i) {
      h ^= (w >> (8 * i)) & 0xff;
      h *= 0x100000001b3ULL;
    }
  }
};

}  // namespace

std::uint64_t frozen_digest(const ToyModel& model) {
  Fnv1a f;
  for (const auto& layer : model.layers) {
    f.add(layer.weight);
    if (!layer.adapter) continue;
    const AdapterSlot& s = *layer.adapter;
    f.add(s.c);
    f.add(s.safety_basis);
    f.add(s.a0);
    f.add(s.b0);
    f.add(s.residual_w);
  }
  return f.h;
}

std::uint64_t trainable_digest(const ToyModel& model) {
  Fnv1a f;
  for (const auto& layer : model.layers) {
    if (!layer.adapter) continue;
    f.add(layer.adapter->a);
    f.add(layer.adapter->b);
  }
  return f.h;
}

void write_loss_csv(std::ostream& out, const std::vector<LossPoint>& curve) {
  out << "step,epoch,loss\n";
  char buf[64];
  for (const LossPoint& p : curve) {
    std::snprintf(buf, sizeof(buf), "%.6g", p.loss);
    out << p.step << ',' << p.epoch << ',' << buf << '\n';
  }
}

}  // namespace salora
