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

#include "salora/model.hpp"

#include <cmath>
#include <string>

#include "salora/error.hpp"

namespace salora {

namespace {

double activate(Activation act, double v) {
  switch (act) {
    case Activation::kTanh:
      return std::tanh(v);
    case Activation::kRelu:
      return v > 0.0 ? v : 0.0;
    case Activation::kIdentity:
      return v;
  }
  return v;
}

double activate_derivative(Activation act, double pre) {
  switch (act) {
    case Activation::kTanh: {
      const double t = std::tanh(pre);
      return 1.0 - t * t;
    }
    case Activation::kRelu:
      return pre > 0.0 ? 1.0 : 0.0;
    case Activation::kIdentity:
      return 1.0;
  }
  return 1.0;
}

Matrix apply(Activation act, Matrix m) {
  for (double& v : m.data()) v = activate(act, v);
  return m;
}

}  // namespace

std::string_view activation_name(Activation act) {
  switch (act) {
    case Activation::kTanh:
      return "tanh";
    case Activation::kRelu:
      return "relu";
    case Activation::kIdentity:
      return "identity";
  }
  return "unknown";
}

Activation parse_activation(std::string_view name) {
  if (name == "tanh") return Activation::kTanh;
  if (name == "relu") return Activation::kRelu;
  if (name == "identity") return Activation::kIdentity;
  throw ConfigError("unknown activation '" + std::string(name) + "'");
}

Matrix LinearLayer::effective_weight() const {
  if (!adapter) return weight;
  return salora::effective_weight(weight, *adapter);
}

bool ToyModel::has_adapters() const {
  for (const auto& layer : layers)
    if (layer.adapter) return true;
  return false;
}

void ToyModel::validate() const {
  if (layers.empty()) throw ConfigError("model has no layers");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const LinearLayer& l = layers[i];
    if (l.weight.rows() == 0 || l.weight.cols() == 0) {
      throw ConfigError("layer " + std::to_string(i) + " has an empty weight");
    }
    if (i + 1 < layers.size() && l.out_dim() != layers[i + 1].in_dim()) {
      throw ShapeError("layer " + std::to_string(i) + " output " + std::to_string(l.out_dim()) +
                       " does not chain into layer " + std::to_string(i + 1) + " input " +
                       std::to_string(layers[i + 1].in_dim()));
    }
    if (l.adapter) {
      const AdapterSlot& s = *l.adapter;
      if (s.out_dim() != l.out_dim() || s.in_dim() != l.in_dim() || s.b.cols() != s.rank()) {
        throw ShapeError("layer " + std::to_string(i) + " adapter " + s.b.shape_string() + "*" +
                         s.a.shape_string() + " does not fit weight " + l.weight.shape_string());
      }
    }
  }
}

ForwardResult forward(const ToyModel& model, const Matrix& x, bool capture) {
  model.validate();
  if (x.rows() != model.input_dim()) {
    throw ShapeError("forward: input " + x.shape_string() + " but model expects " +
                     std::to_string(model.input_dim()) + " rows");
  }
  ForwardResult result;
  if (capture) result.trace.emplace();
  Matrix h = x;
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    Matrix y = matmul(model.layers[i].effective_weight(), h);
    if (capture) {
      result.trace->inputs.push_back(h);
      result.trace->outputs.push_back(y);
    }
    h = (i + 1 < model.layers.size()) ? apply(model.activation, std::move(y)) : std::move(y);
  }
  result.output = std::move(h);
  return result;
}

BackwardResult layer_gradients(const ToyModel& model, const Matrix& x, const Matrix& upstream_grad) {
  ForwardResult fwd = forward(model, x, /*capture=*/true);
  if (!same_shape(upstream_grad, fwd.output)) {
    throw ShapeError("backward: upstream gradient " + upstream_grad.shape_string() +
                     " does not match output " + fwd.output.shape_string());
  }
  const std::size_t n = model.layers.size();
  BackwardResult r;
  r.adapters.resize(n);
  r.output_grads.resize(n);
  r.inputs = std::move(fwd.trace->inputs);

  Matrix g = upstream_grad;
  for (std::size_t i = n; i-- > 0;) {
    if (i > 0) {
      Matrix down = matmul(transpose(model.layers[i].effective_weight()), g);
      const Matrix& pre = fwd.trace->outputs[i - 1];
      for (std::size_t k = 0; k < down.size(); ++k)
        down.data()[k] *= activate_derivative(model.activation, pre.data()[k]);
      r.output_grads[i] = std::move(g);
      g = std::move(down);
    } else {
      r.output_grads[i] = std::move(g);
    }
  }
  return r;
}

BackwardResult backward(const ToyModel& model, const Matrix& x, const Matrix& upstream_grad) {
  if (!model.has_adapters()) throw ConfigError("backward: model has no adapters to train");
  BackwardResult r = layer_gradients(model, x, upstream_grad);
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    const auto& slot = model.layers[i].adapter;
    if (!slot) continue;
    const Matrix& g = r.output_grads[i];
    const Matrix xt = transpose(r.inputs[i]);
    // Projected output gradient (C^T G); C is symmetric but keep the
    // transpose so the rule matches the chain rule literally.
    const Matrix pg = slot->kind == AdapterKind::kSaLoRA ? matmul(transpose(*slot->c), g) : g;
    AdapterGradients grads;
    grads.b = matmul(pg, transpose(matmul(slot->a, r.inputs[i])));
    grads.a = matmul(transpose(slot->b), matmul(pg, xt));
    r.adapters[i] = std::move(grads);
  }
  return r;
}

}  // namespace salora
