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

#include "salora/probe.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <string>

#include "salora/error.hpp"
#include "salora/keyvalue.hpp"
#include "salora/linalg.hpp"
#include "salora/random.hpp"

namespace salora {

void WorldParams::validate() const {
  if (width == 0) throw ConfigError("world width must be positive");
  if (layers == 0) throw ConfigError("world needs at least one layer");
  if (planted_rank >= width) {
    throw ConfigError("planted_rank " + std::to_string(planted_rank) + " must be below width " +
                      std::to_string(width));
  }
  if (teacher_task_rank > width - planted_rank) {
    throw ConfigError("teacher_task_rank " + std::to_string(teacher_task_rank) +
                      " exceeds the complement dimension " + std::to_string(width - planted_rank));
  }
  if (n_benign == 0 || n_protected == 0) throw ConfigError("world needs benign and protected samples");
  if (!(teacher_in >= 0.0 && teacher_in <= 1.0) || !(teacher_out >= 0.0 && teacher_out <= 1.0)) {
    throw ConfigError("teacher_in and teacher_out must lie in [0, 1]");
  }
  for (double v : {generic_scale, coupling, alpha, benign_strength, protected_noise,
                   protected_shift, teacher_eta, teacher_task_scale}) {
    if (!std::isfinite(v)) throw ConfigError("world parameters must be finite");
  }
}

Matrix SyntheticWorld::planted_weight(std::size_t layer) const {
  if (layer >= planted_subspace.size() || layer >= planted_alpha.size()) {
    throw ConfigError("no planted data for layer " + std::to_string(layer));
  }
  const Matrix& v = planted_subspace[layer];
  return matmul(matmul(v, Matrix::diagonal(planted_alpha[layer])), transpose(v));
}

namespace {

Matrix orthonormal_columns(const Matrix& m) {
  if (m.cols() == 0) return Matrix(m.rows(), 0);
  return top_left_singular_vectors(m, m.cols());
}

// Unit vector drawn from the range of the projector p.
Matrix unit_in(const Matrix& p, Rng& rng) {
  Matrix z = matmul(p, rng.gaussian(p.rows(), 1));
  const double n = frobenius_norm(z);
  return n > 0.0 ? (1.0 / n) * z : z;
}

}  // namespace

SyntheticWorld build_world(const WorldParams& params, std::uint64_t seed) {
  params.validate();
  const std::size_t d = params.width;
  const std::size_t k = params.planted_rank;
  Rng rng(derive_seed(seed, "world"));

  SyntheticWorld world;
  world.params = params;
  world.seed = seed;
  world.model.activation = params.activation;

  const Matrix v = orthonormal_columns(rng.gaussian(d, k));
  const Matrix pc = Matrix::identity(d) - matmul(v, transpose(v));

  for (std::size_t l = 0; l < params.layers; ++l) {
    const Matrix r = rng.gaussian(d, d, params.generic_scale / std::sqrt(static_cast<double>(d)));
    std::vector<double> alpha(k);
    for (double& a : alpha) a = params.alpha * (1.0 + 0.2 * rng.uniform());
    world.planted_subspace.push_back(v);
    world.planted_alpha.push_back(alpha);
    Matrix w = matmul(matmul(pc, r), pc) + params.coupling * r + world.planted_weight(l);
    world.model.layers.push_back({std::move(w), std::nullopt});
  }

  Matrix mu(k, 1);
  if (k > 0) {
    mu = rng.gaussian(k, 1);
    mu = (1.0 / frobenius_norm(mu)) * mu;
  }
  const double sqrt_k = std::sqrt(static_cast<double>(std::max<std::size_t>(k, 1)));
  auto draw_inputs = [&](std::size_t n, double strength, double shift) {
    Matrix x = matmul(pc, rng.gaussian(d, n, 1.0 / std::sqrt(static_cast<double>(d))));
    Matrix c = rng.gaussian(k, n, strength / sqrt_k);
    for (std::size_t i = 0; i < k; ++i) {
      for (std::size_t j = 0; j < n; ++j) c(i, j) += shift * mu(i, 0);
    }
    return x + matmul(v, c);
  };
  world.benign_inputs = draw_inputs(params.n_benign, params.benign_strength, 0.0);
  world.protected_inputs = draw_inputs(params.n_protected, params.protected_noise,
                                       params.protected_shift);

  ToyModel teacher = world.model;
  const Matrix vm = matmul(v, mu);
  for (std::size_t l = 0; l < params.layers; ++l) {
    const Matrix& w = world.model.layers[l].weight;
    const Matrix q = params.teacher_in * vm +
                     std::sqrt(1.0 - params.teacher_in * params.teacher_in) * unit_in(pc, rng);
    const Matrix p = (-params.teacher_out) * vm +
                     std::sqrt(1.0 - params.teacher_out * params.teacher_out) * unit_in(pc, rng);
    Matrix t = w + params.teacher_eta * matmul(p, transpose(q));
    const std::size_t kt = params.teacher_task_rank;
    if (kt > 0) {
      const Matrix pr = orthonormal_columns(matmul(pc, rng.gaussian(d, kt)));
      const Matrix qr = column_block(svd(w).v, 0, kt);
      t = t + params.teacher_task_scale * matmul(pr, transpose(qr));
    }
    teacher.layers[l].weight = std::move(t);
  }
  world.benign_targets = forward(teacher, world.benign_inputs).output;

  std::vector<Matrix> planted;
  for (std::size_t l = 0; l < params.layers; ++l) planted.push_back(world.planted_weight(l));
  world.gamma = planted_gamma(world.model, planted, world.protected_inputs);
  return world;
}

std::vector<double> planted_gamma(const ToyModel& model, const std::vector<Matrix>& planted_weights,
                                  const Matrix& protected_inputs) {
  if (planted_weights.size() != model.layers.size()) {
    throw ConfigError("planted data covers " + std::to_string(planted_weights.size()) +
                      " layers, model has " + std::to_string(model.layers.size()));
  }
  const ForwardResult fwd = forward(model, protected_inputs, /*capture=*/true);
  std::vector<double> gamma;
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const Matrix a = matmul(planted_weights[l], fwd.trace->inputs[l]);
    double g = a.cols() == 0 ? 0.0 : std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < a.cols(); ++j) {
      double s = 0.0;
      for (std::size_t i = 0; i < a.rows(); ++i) s += a(i, j) * a(i, j);
      g = std::min(g, std::sqrt(s));
    }
    gamma.push_back(g);
  }
  return gamma;
}

namespace {

double logit(const LinearProbe& probe, const Matrix& f, std::size_t j) {
  double z = probe.bias;
  for (std::size_t i = 0; i < f.rows(); ++i) z += probe.weight(0, i) * f(i, j);
  return z;
}

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace

LinearProbe train_probe(const ProbeDataset& data, const ProbeOptions& options) {
  const Matrix& f = data.features;
  if (data.labels.size() != f.cols()) {
    throw ShapeError("probe: " + std::to_string(data.labels.size()) + " labels for features " +
                     f.shape_string());
  }
  const auto ones = std::count(data.labels.begin(), data.labels.end(), 1);
  const auto zeros = std::count(data.labels.begin(), data.labels.end(), 0);
  if (ones + zeros != static_cast<std::ptrdiff_t>(data.labels.size())) {
    throw ValidationError("probe labels must be 0 or 1");
  }
  if (ones == 0 || zeros == 0) throw ValidationError("probe data must contain both classes");
  if (!all_finite(f)) throw ValidationError("probe features contain non-finite values");

  LinearProbe probe{Matrix(1, f.rows()), 0.0};
  const double n = static_cast<double>(f.cols());
  std::vector<double> err(f.cols());
  for (std::size_t it = 0; it < options.iters; ++it) {
    double bias_grad = 0.0;
    for (std::size_t j = 0; j < f.cols(); ++j) {
      err[j] = sigmoid(logit(probe, f, j)) - data.labels[j];
      bias_grad += err[j];
    }
    for (std::size_t i = 0; i < f.rows(); ++i) {
      double g = 0.0;
      for (std::size_t j = 0; j < f.cols(); ++j) g += f(i, j) * err[j];
      probe.weight(0, i) -= options.lr * (g / n + options.l2 * probe.weight(0, i));
    }
    probe.bias -= options.lr * bias_grad / n;
  }
  return probe;
}

double probe_accuracy(const LinearProbe& probe, const ProbeDataset& data) {
  if (probe.weight.rows() != 1 || probe.weight.cols() != data.features.rows()) {
    throw ShapeError("probe weight " + probe.weight.shape_string() + " vs features " +
                     data.features.shape_string());
  }
  if (data.labels.size() != data.features.cols()) {
    throw ShapeError("probe: label count does not match features");
  }
  if (data.labels.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t j = 0; j < data.features.cols(); ++j) {
    const int predicted = logit(probe, data.features, j) >= 0.0 ? 1 : 0;
    hits += predicted == data.labels[j] ? 1 : 0;
  }
  return static_cast<double>(hits) / static_cast<double>(data.labels.size());
}

namespace {

// Averages consecutive groups of columns; a trailing partial group is dropped.
Matrix group_mean(const Matrix& m, std::size_t group) {
  if (group <= 1) return m;
  const std::size_t count = m.cols() / group;
  Matrix out(m.rows(), count);
  for (std::size_t g = 0; g < count; ++g) {
    const Matrix mean = column_mean(column_block(m, g * group, group));
    for (std::size_t i = 0; i < m.rows(); ++i) out(i, g) = mean(i, 0);
  }
  return out;
}

void check_same_architecture(const ToyModel& a, const ToyModel& b) {
  bool same = a.layers.size() == b.layers.size();
  for (std::size_t l = 0; same && l < a.layers.size(); ++l) {
    same = a.layers[l].in_dim() == b.layers[l].in_dim() &&
           a.layers[l].out_dim() == b.layers[l].out_dim();
  }
  if (!same) throw ConfigError("models do not share an architecture");
}

}  // namespace

std::vector<ProbeDataset> probe_datasets(const SyntheticWorld& world, const ToyModel& model,
                                         const ProbeSetup& setup) {
  if (setup.group == 0) throw ConfigError("probe group must be positive");
  const std::size_t nb = std::min(setup.n_benign, world.benign_inputs.cols());
  const ForwardResult prot = forward(model, world.protected_inputs, /*capture=*/true);
  const ForwardResult ben =
      forward(model, column_block(world.benign_inputs, 0, nb), /*capture=*/true);
  std::vector<ProbeDataset> out;
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const Matrix fp = group_mean(prot.trace->outputs[l], setup.group);
    const Matrix fb = group_mean(ben.trace->outputs[l], setup.group);
    ProbeDataset ds;
    ds.features = hconcat(fp, fb);
    ds.labels.assign(fp.cols(), 1);
    ds.labels.insert(ds.labels.end(), fb.cols(), 0);
    out.push_back(std::move(ds));
  }
  return out;
}

std::vector<DriftRow> drift_report(const SyntheticWorld& world, const ToyModel& before,
                                   const ToyModel& after, const ProbeSetup& setup) {
  check_same_architecture(before, after);
  check_same_architecture(world.model, before);
  if (world.planted_subspace.size() != before.layers.size()) {
    throw ConfigError("world has no planted data for every layer");
  }
  const std::vector<ProbeDataset> ds_before = probe_datasets(world, before, setup);
  const std::vector<ProbeDataset> ds_after = probe_datasets(world, after, setup);
  const ForwardResult yb = forward(before, world.protected_inputs, /*capture=*/true);
  const ForwardResult ya = forward(after, world.protected_inputs, /*capture=*/true);

  std::vector<DriftRow> rows;
  for (std::size_t l = 0; l < before.layers.size(); ++l) {
    DriftRow row;
    row.layer = l;
    const LinearProbe probe = train_probe(ds_before[l], setup.options);
    row.acc_before = probe_accuracy(probe, ds_before[l]);
    row.acc_after = probe_accuracy(probe, ds_after[l]);
    const Matrix& ob = yb.trace->outputs[l];
    const double diff = frobenius_norm(ya.trace->outputs[l] - ob);
    const double base = frobenius_norm(ob);
    row.output_drift = base > 0.0 ? diff / base : diff;
    const Matrix delta = after.layers[l].effective_weight() - before.layers[l].effective_weight();
    row.subspace_perturbation =
        frobenius_norm(matmul(transpose(world.planted_subspace[l]), delta));
    rows.push_back(row);
  }
  return rows;
}

double mean_probe_drop(const std::vector<DriftRow>& rows) {
  if (rows.empty()) return 0.0;
  double s = 0.0;
  for (const DriftRow& r : rows) s += r.acc_before - r.acc_after;
  return s / static_cast<double>(rows.size());
}

void write_drift_csv(std::ostream& out, const std::vector<DriftRow>& rows) {
  out << "layer,acc_before,acc_after,output_drift,subspace_perturbation\n";
  for (const DriftRow& r : rows) {
    out << r.layer << ',' << format_double(r.acc_before) << ',' << format_double(r.acc_after)
        << ',' << format_double(r.output_drift) << ',' << format_double(r.subspace_perturbation)
        << '\n';
  }
}

Prop1Result proposition1_instance(const Prop1Instance& inst) {
  const Matrix& g = inst.output_grad;
  if (inst.x.cols() != g.cols() || inst.w_s.rows() != g.rows() ||
      inst.w_s.cols() != inst.x.rows()) {
    throw ShapeError("overlap bound: W_S " + inst.w_s.shape_string() + ", X " +
                     inst.x.shape_string() + ", grad " + g.shape_string());
  }
  Prop1Result r;
  const Matrix grad_dw = matmul(g, transpose(inst.x));
  r.lhs = frobenius_norm(matmul(inst.w_s, transpose(grad_dw)));
  r.region_norm = frobenius_norm(matmul(inst.w_s, inst.x));
  const std::size_t n = g.cols();
  if (n > 0 && n <= g.rows()) r.sigma_min = svd(g).s[n - 1];
  r.rhs = inst.gamma * r.sigma_min;
  r.vacuous = r.sigma_min == 0.0 || !(r.region_norm > inst.gamma);
  r.pass = r.vacuous || r.lhs >= r.rhs - 1e-12;
  return r;
}

std::vector<Prop1Result> proposition1_check(const SyntheticWorld& world, const ToyModel& model,
                                            const Matrix& inputs, const Matrix& output_grad) {
  if (world.planted_subspace.size() != model.layers.size() ||
      world.gamma.size() != model.layers.size()) {
    throw ConfigError("overlap bound check needs planted data for every layer");
  }
  const BackwardResult back = layer_gradients(model, inputs, output_grad);
  std::vector<Prop1Result> out;
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    out.push_back(proposition1_instance(
        {world.planted_weight(l), back.inputs[l], back.output_grads[l], world.gamma[l]}));
  }
  return out;
}

void write_prop1_csv(std::ostream& out, const std::vector<Prop1Result>& rows) {
  out << "instance,lhs,rhs,vacuous,pass\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out << i << ',' << format_double(rows[i].lhs) << ',' << format_double(rows[i].rhs) << ','
        << (rows[i].vacuous ? 1 : 0) << ',' << (rows[i].pass ? 1 : 0) << '\n';
  }
}

}  // namespace salora
