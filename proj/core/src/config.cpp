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

#include "salora/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "salora/error.hpp"
#include "salora/keyvalue.hpp"

namespace salora {

namespace {

const std::set<std::string, std::less<>>& known_keys() {
  static const std::set<std::string, std::less<>> keys = {
      "experiment.method", "experiment.seed", "experiment.r", "experiment.r_s",
      "experiment.r_t", "experiment.layers",
      "train.lr", "train.batch_size", "train.epochs", "train.beta1", "train.beta2", "train.eps",
      "train.weight_decay", "train.loss",
      "world.width", "world.layers", "world.planted_rank", "world.n_benign", "world.n_protected",
      "world.activation", "world.generic_scale", "world.coupling", "world.alpha",
      "world.benign_strength", "world.protected_noise", "world.protected_shift",
      "world.teacher_eta", "world.teacher_in", "world.teacher_out", "world.teacher_task_scale",
      "world.teacher_task_rank",
      "probe.n_benign", "probe.group", "probe.iters", "probe.lr", "probe.l2",
      "paths.world", "paths.run"};
  return keys;
}

std::vector<std::size_t> parse_layers(const std::string& text) {
  std::vector<std::size_t> out;
  if (text.empty() || text == "all") return out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    KeyValueDoc one;
    one.set("layer", item);
    out.push_back(one.get_size("layer"));
  }
  return out;
}

std::string join_layers(const std::vector<std::size_t>& layers) {
  if (layers.empty()) return "all";
  std::string s;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (i) s += ',';
    s += std::to_string(layers[i]);
  }
  return s;
}

}  // namespace

TrainConfig ExperimentConfig::default_train() {
  TrainConfig t;
  t.epochs = 50;
  return t;
}

ExperimentConfig ExperimentConfig::parse(std::string_view text) {
  const KeyValueDoc doc = KeyValueDoc::parse(text);
  for (const auto& [key, value] : doc.entries()) {
    if (!known_keys().contains(key)) throw ConfigError("unknown config key '" + key + "'");
  }
  ExperimentConfig c;
  auto size = [&](std::string_view key, std::size_t& dst) {
    if (doc.contains(key)) dst = doc.get_size(key);
  };
  auto real = [&](std::string_view key, double& dst) {
    if (doc.contains(key)) dst = doc.get_double(key);
  };

  if (doc.contains("experiment.method")) c.method = parse_method(doc.get("experiment.method"));
  if (doc.contains("experiment.seed")) c.seed = doc.get_u64("experiment.seed");
  size("experiment.r", c.r);
  c.r_s = c.r;
  size("experiment.r_s", c.r_s);
  c.r_t = c.r;
  size("experiment.r_t", c.r_t);
  if (doc.contains("experiment.layers")) c.layers = parse_layers(doc.get("experiment.layers"));

  real("train.lr", c.train.learning_rate);
  size("train.batch_size", c.train.batch_size);
  size("train.epochs", c.train.epochs);
  real("train.beta1", c.train.adamw.beta1);
  real("train.beta2", c.train.adamw.beta2);
  real("train.eps", c.train.adamw.eps);
  real("train.weight_decay", c.train.adamw.weight_decay);
  if (doc.contains("train.loss")) c.train.loss = parse_loss_kind(doc.get("train.loss"));

  WorldParams& w = c.world;
  size("world.width", w.width);
  size("world.layers", w.layers);
  size("world.planted_rank", w.planted_rank);
  size("world.n_benign", w.n_benign);
  size("world.n_protected", w.n_protected);
  if (doc.contains("world.activation")) w.activation = parse_activation(doc.get("world.activation"));
  real("world.generic_scale", w.generic_scale);
  real("world.coupling", w.coupling);
  real("world.alpha", w.alpha);
  real("world.benign_strength", w.benign_strength);
  real("world.protected_noise", w.protected_noise);
  real("world.protected_shift", w.protected_shift);
  real("world.teacher_eta", w.teacher_eta);
  real("world.teacher_in", w.teacher_in);
  real("world.teacher_out", w.teacher_out);
  real("world.teacher_task_scale", w.teacher_task_scale);
  size("world.teacher_task_rank", w.teacher_task_rank);

  size("probe.n_benign", c.probe.n_benign);
  size("probe.group", c.probe.group);
  size("probe.iters", c.probe.options.iters);
  real("probe.lr", c.probe.options.lr);
  real("probe.l2", c.probe.options.l2);

  c.world_dir = doc.get_or("paths.world", c.world_dir);
  c.run_dir = doc.get_or("paths.run", c.run_dir);
  c.train.seed = c.seed;
  c.validate();
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path.string() + ": cannot open config");
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse(ss.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::string ExperimentConfig::to_string() const {
  std::ostringstream o;
  const auto num = [](double v) { return format_double(v); };
  o << "[experiment]\n"
    << "method=" << method_name(method) << '\n'
    << "seed=" << seed << '\n'
    << "r=" << r << '\n'
    << "r_s=" << r_s << '\n'
    << "r_t=" << r_t << '\n'
    << "layers=" << join_layers(layers) << '\n'
    << "\n[train]\n"
    << "lr=" << num(train.learning_rate) << '\n'
    << "batch_size=" << train.batch_size << '\n'
    << "epochs=" << train.epochs << '\n'
    << "beta1=" << num(train.adamw.beta1) << '\n'
    << "beta2=" << num(train.adamw.beta2) << '\n'
    << "eps=" << num(train.adamw.eps) << '\n'
    << "weight_decay=" << num(train.adamw.weight_decay) << '\n'
    << "loss=" << loss_kind_name(train.loss) << '\n'
    << "\n[world]\n"
    << "width=" << world.width << '\n'
    << "layers=" << world.layers << '\n'
    << "planted_rank=" << world.planted_rank << '\n'
    << "n_benign=" << world.n_benign << '\n'
    << "n_protected=" << world.n_protected << '\n'
    << "activation=" << activation_name(world.activation) << '\n'
    << "generic_scale=" << num(world.generic_scale) << '\n'
    << "coupling=" << num(world.coupling) << '\n'
    << "alpha=" << num(world.alpha) << '\n'
    << "benign_strength=" << num(world.benign_strength) << '\n'
    << "protected_noise=" << num(world.protected_noise) << '\n'
    << "protected_shift=" << num(world.protected_shift) << '\n'
    << "teacher_eta=" << num(world.teacher_eta) << '\n'
    << "teacher_in=" << num(world.teacher_in) << '\n'
    << "teacher_out=" << num(world.teacher_out) << '\n'
    << "teacher_task_scale=" << num(world.teacher_task_scale) << '\n'
    << "teacher_task_rank=" << world.teacher_task_rank << '\n'
    << "\n[probe]\n"
    << "n_benign=" << probe.n_benign << '\n'
    << "group=" << probe.group << '\n'
    << "iters=" << probe.options.iters << '\n'
    << "lr=" << num(probe.options.lr) << '\n'
    << "l2=" << num(probe.options.l2) << '\n'
    << "\n[paths]\n"
    << "world=" << world_dir << '\n'
    << "run=" << run_dir << '\n';
  return o.str();
}

void ExperimentConfig::validate() const {
  if (r == 0) throw ConfigError("r must be positive");
  train.validate();
  world.validate();
  if (r > world.width) throw ConfigError("r exceeds the layer width");
  if (r_s > world.width) throw ConfigError("r_s exceeds the layer width");
  for (std::size_t l : layers) {
    if (l >= world.layers) throw ConfigError("adapted layer " + std::to_string(l) + " out of range");
  }
  if (probe.group == 0) throw ConfigError("probe.group must be positive");
}

}  // namespace salora
