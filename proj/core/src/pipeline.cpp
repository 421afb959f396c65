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

#include "salora/pipeline.hpp"

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>

#include "salora/error.hpp"
#include "salora/keyvalue.hpp"
#include "salora/linalg.hpp"
#include "salora/matrix_io.hpp"
#include "salora/random.hpp"

namespace salora {

namespace {

constexpr const char* kWorldFormat = "salora-world-1";

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(path.string() + ": cannot open for writing");
  out << text;
  if (!out) throw IoError(path.string() + ": write failed");
}

std::string hex64(std::uint64_t v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%016" PRIx64, v);
  return buf;
}

// The [world] section of a canonical config.
std::string world_section(const WorldParams& params) {
  ExperimentConfig c;
  c.world = params;
  const std::string all = c.to_string();
  const auto begin = all.find("[world]");
  const auto end = all.find("\n[", begin);
  return all.substr(begin, end - begin + 1);
}

std::string planted_path(std::size_t l, const char* what) {
  return "layer" + std::to_string(l) + "_" + what + ".mtx";
}

}  // namespace

void save_world(const fs::path& dir, const SyntheticWorld& world) {
  ensure_dir(dir / "planted");
  save_model(dir / "model", world.model);
  save_mtx(dir / "benign_inputs.mtx", world.benign_inputs);
  save_mtx(dir / "benign_targets.mtx", world.benign_targets);
  save_mtx(dir / "protected_inputs.mtx", world.protected_inputs);
  for (std::size_t l = 0; l < world.planted_subspace.size(); ++l) {
    save_mtx(dir / "planted" / planted_path(l, "v"), world.planted_subspace[l]);
    const auto& a = world.planted_alpha[l];
    save_mtx(dir / "planted" / planted_path(l, "alpha"), Matrix(a.size(), 1, a));
  }
  std::string manifest = "format=" + std::string(kWorldFormat) + "\n";
  manifest += "seed=" + std::to_string(world.seed) + "\n";
  for (std::size_t l = 0; l < world.gamma.size(); ++l) {
    manifest += "gamma" + std::to_string(l) + "=" + format_double(world.gamma[l]) + "\n";
  }
  manifest += "\n" + world_section(world.params);
  write_text(dir / "manifest.txt", manifest);
}

SyntheticWorld load_world(const fs::path& dir) {
  if (!fs::exists(dir / "manifest.txt")) {
    throw IoError(dir.string() + ": not a world directory (manifest.txt missing)");
  }
  const KeyValueDoc doc = KeyValueDoc::load(dir / "manifest.txt");
  if (doc.get("format") != kWorldFormat) {
    throw ConfigError(dir.string() + ": unsupported world format '" + doc.get("format") + "'");
  }
  std::string world_text = "[world]\n";
  for (const auto& [key, value] : doc.entries()) {
    if (key.rfind("world.", 0) == 0) world_text += key.substr(6) + "=" + value + "\n";
  }
  SyntheticWorld w;
  w.params = ExperimentConfig::parse(world_text).world;
  w.seed = doc.get_u64("seed");
  w.model = load_model(dir / "model");
  if (w.model.layers.size() != w.params.layers) {
    throw ConfigError(dir.string() + ": model layer count disagrees with manifest");
  }
  w.benign_inputs = load_mtx(dir / "benign_inputs.mtx");
  w.benign_targets = load_mtx(dir / "benign_targets.mtx");
  w.protected_inputs = load_mtx(dir / "protected_inputs.mtx");
  for (std::size_t l = 0; l < w.params.layers; ++l) {
    w.planted_subspace.push_back(load_mtx(dir / "planted" / planted_path(l, "v")));
    const Matrix a = load_mtx(dir / "planted" / planted_path(l, "alpha"));
    w.planted_alpha.emplace_back(a.data().begin(), a.data().end());
    w.gamma.push_back(doc.get_double("gamma" + std::to_string(l)));
  }
  return w;
}

void cmd_gen_world(const ExperimentConfig& config, const fs::path& out) {
  config.validate();
  save_world(out, build_world(config.world, config.seed));
}

FinetuneOutcome finetune_world(const SyntheticWorld& world, const ExperimentConfig& config,
                               const StepObserver& observer) {
  config.validate();
  LayerContexts contexts;
  const bool salora = method_kind(config.method) == AdapterKind::kSaLoRA;
  if (salora) {
    contexts = capture_contexts(world.model, world.protected_inputs, world.benign_inputs,
                                config.r_s, config.r_t);
  }
  AdapterPlan plan;
  plan.method = config.method;
  plan.rank = config.r;
  plan.layers = config.layers;
  plan.init_seed = derive_seed(config.seed, "init");
  TrainConfig train = config.train;
  train.seed = config.seed;

  FinetuneOutcome out;
  const ToyModel start = attach_adapters(world.model, plan, salora ? &contexts : nullptr);
  out.frozen_before = frozen_digest(start);
  out.train = train_adapters(start, {world.benign_inputs, world.benign_targets}, train, observer);
  out.frozen_after = frozen_digest(out.train.model);
  return out;
}

AdapterCheckpoint checkpoint_from(const ToyModel& trained, Method method) {
  AdapterCheckpoint ckpt;
  ckpt.method = std::string(method_name(method));
  for (std::size_t l = 0; l < trained.layers.size(); ++l) {
    const auto& slot = trained.layers[l].adapter;
    if (!slot) continue;
    ckpt.layers.push_back(l);
    ckpt.records.push_back(slot->kind == AdapterKind::kSaLoRA ? merge_for_saving(*slot)
                                                             : make_record(*slot));
  }
  return ckpt;
}

ToyModel snapshot_of(const ToyModel& trained) {
  ToyModel snap;
  snap.activation = trained.activation;
  for (const LinearLayer& layer : trained.layers) {
    snap.layers.push_back({layer.effective_weight(), std::nullopt});
  }
  return snap;
}

void cmd_finetune(const ExperimentConfig& config, const fs::path& world_dir, const fs::path& out) {
  const SyntheticWorld world = load_world(world_dir);
  const FinetuneOutcome r = finetune_world(world, config);
  ensure_dir(out);
  save_adapters(out / "adapter", checkpoint_from(r.train.model, config.method));
  save_model(out / "snapshot", snapshot_of(r.train.model));
  std::ostringstream csv;
  write_loss_csv(csv, r.train.curve);
  write_text(out / "loss.csv", csv.str());

  KeyValueDoc summary;
  summary.set("method", std::string(method_name(config.method)));
  summary.set("seed", std::to_string(config.seed));
  summary.set("steps", std::to_string(r.train.curve.size()));
  summary.set("initial_loss", format_double(r.train.initial_loss));
  summary.set("final_loss", format_double(r.train.final_loss));
  summary.set("frozen_digest_before", hex64(r.frozen_before));
  summary.set("frozen_digest_after", hex64(r.frozen_after));
  summary.set("trainable_digest", hex64(trainable_digest(r.train.model)));
  summary.save(out / "summary.txt");
  write_text(out / "config.txt", config.to_string());
}

void cmd_infer(const fs::path& model_dir, const fs::path& adapter_dir, const fs::path& inputs,
               const fs::path& out) {
  ToyModel model = load_model(model_dir);
  if (!adapter_dir.empty()) model = apply_adapters_for_inference(model, load_adapters(adapter_dir));
  const Matrix x = load_mtx(inputs);
  if (x.rows() != model.input_dim()) {
    throw ShapeError(inputs.string() + ": inputs have " + std::to_string(x.rows()) +
                     " rows but the model expects " + std::to_string(model.input_dim()));
  }
  if (out.has_parent_path()) ensure_dir(out.parent_path());
  save_mtx(out, forward(model, x).output);
}

ToyModel resolve_model(const fs::path& path, const SyntheticWorld& world) {
  if (fs::exists(path / "adapter" / "manifest.txt")) {
    return apply_adapters_for_inference(world.model, load_adapters(path / "adapter"));
  }
  if (!fs::exists(path / "manifest.txt")) {
    throw IoError(path.string() + ": neither a model, adapter nor run directory");
  }
  const std::string format = KeyValueDoc::load(path / "manifest.txt").get_or("format", "");
  if (format.rfind("salora-adapter", 0) == 0) {
    return apply_adapters_for_inference(world.model, load_adapters(path));
  }
  return load_model(path);
}

AnalyzeSummary analyze(const SyntheticWorld& world, const ToyModel& before, const ToyModel& after,
                       const ExperimentConfig& config) {
  AnalyzeSummary s;
  s.drift = drift_report(world, before, after, config.probe);
  s.mean_drop = mean_probe_drop(s.drift);
  const std::size_t n = world.benign_inputs.cols();
  const std::size_t bs = config.train.batch_size;
  for (std::size_t begin = 0; begin < n; begin += bs) {
    const std::size_t count = std::min(bs, n - begin);
    const Matrix x = column_block(world.benign_inputs, begin, count);
    const Matrix y = column_block(world.benign_targets, begin, count);
    const Matrix g = evaluate_loss(config.train.loss, forward(after, x).output, y).output_grad;
    for (const Prop1Result& r : proposition1_check(world, after, x, g)) {
      s.prop1.push_back(r);
      if (r.vacuous) {
        ++s.prop1_vacuous;
      } else {
        ++s.prop1_checked;
        if (!r.pass) ++s.prop1_failed;
      }
    }
  }
  return s;
}

AnalyzeSummary cmd_analyze(const ExperimentConfig& config, const fs::path& world_dir,
                           const fs::path& before, const fs::path& after, const fs::path& out,
                           std::ostream& log) {
  const SyntheticWorld world = load_world(world_dir);
  const ToyModel m_before = before.empty() ? world.model : resolve_model(before, world);
  const ToyModel m_after = resolve_model(after, world);
  const AnalyzeSummary s = analyze(world, m_before, m_after, config);

  ensure_dir(out);
  std::ostringstream drift, prop1;
  write_drift_csv(drift, s.drift);
  write_prop1_csv(prop1, s.prop1);
  write_text(out / "drift.csv", drift.str());
  write_text(out / "prop1.csv", prop1.str());

  char line[160];
  log << "layer  acc_before  acc_after  output_drift  subspace_perturbation\n";
  for (const DriftRow& r : s.drift) {
    std::snprintf(line, sizeof(line), "%5zu  %10.4f  %9.4f  %12.4e  %21.4e\n", r.layer,
                  r.acc_before, r.acc_after, r.output_drift, r.subspace_perturbation);
    log << line;
  }
  std::snprintf(line, sizeof(line), "mean probe drop: %.4f\n", s.mean_drop);
  log << line;
  log << "overlap bound: " << s.prop1_checked << " checked, " << s.prop1_vacuous << " vacuous, "
      << s.prop1_failed << " failed\n";
  return s;
}

std::vector<SeedOutcome> compare_methods(const ExperimentConfig& config,
                                         const std::vector<std::uint64_t>& seeds) {
  std::vector<SeedOutcome> out;
  for (std::uint64_t seed : seeds) {
    const SyntheticWorld world = build_world(config.world, seed);
    ExperimentConfig c = config;
    c.seed = seed;
    SeedOutcome o;
    o.seed = seed;

    c.method = Method::kLoRA;
    const FinetuneOutcome lora = finetune_world(world, c);
    o.lora_drop = mean_probe_drop(drift_report(world, world.model, lora.train.model, c.probe));

    c.method = Method::kSaLoRA;
    const FinetuneOutcome sal = finetune_world(world, c);
    o.salora_drop = mean_probe_drop(drift_report(world, world.model, sal.train.model, c.probe));
    o.salora_final_loss = sal.train.final_loss;

    c.method = Method::kSaLoRANoTaskInit;
    o.no_init_final_loss = finetune_world(world, c).train.final_loss;
    out.push_back(o);
  }
  return out;
}

namespace {

struct Check {
  std::ostream& log;
  bool ok = true;
  void operator()(const char* name, bool pass) {
    log << (pass ? "PASS " : "FAIL ") << name << '\n';
    ok = ok && pass;
  }
};

}  // namespace

bool selftest(std::ostream& log) {
  Check check{log};
  Rng rng(derive_seed(7, "selftest"));

  const Matrix m = rng.gaussian(7, 5);
  const SvdResult f = svd(m);
  check("svd reconstruction", max_abs_diff(reconstruct(f, f.s.size()), m) < 1e-10);

  const Matrix w = rng.gaussian(6, 6);
  const SafetyProjector p = compute_safety_projector(w, {rng.gaussian(6, 10), 2});
  check("projector idempotent", max_abs_diff(matmul(p.c, p.c), p.c) < 1e-10);
  check("projector symmetric", max_abs_diff(transpose(p.c), p.c) < 1e-12);

  ToyModel model;
  model.activation = Activation::kTanh;
  model.layers.push_back({rng.gaussian(6, 6, 0.5), std::nullopt});
  model.layers.push_back({rng.gaussian(3, 6, 0.5), std::nullopt});
  const Matrix x = rng.gaussian(6, 8);
  const Matrix y = rng.gaussian(3, 8);
  const LayerContexts ctx = capture_contexts(model, x, x, 2, 2);
  const ToyModel adapted = attach_adapters(model, {Method::kSaLoRA, 2, {}, 1}, &ctx);
  check("init preserves outputs",
        max_abs_diff(forward(adapted, x).output, forward(model, x).output) < 1e-10);

  ToyModel perturbed = adapted;
  for (auto& layer : perturbed.layers) {
    layer.adapter->a = layer.adapter->a + rng.gaussian(2, layer.in_dim(), 0.1);
    layer.adapter->b = layer.adapter->b + rng.gaussian(layer.out_dim(), 2, 0.1);
  }
  const double worst = audit_gradients(perturbed, x, y, LossKind::kMse).max_rel_error;
  check("adapter gradients match finite differences", worst < 1e-5);

  std::stringstream buf;
  write_mtx(buf, m);
  check("mtx1 round trip", read_mtx(buf) == m);

  const AdapterCheckpoint ckpt = checkpoint_from(perturbed, Method::kSaLoRA);
  const ToyModel inferred = apply_adapters_for_inference(model, ckpt);
  check("merged inference matches training forward",
        max_abs_diff(forward(inferred, x).output, forward(perturbed, x).output) < 1e-9);
  return check.ok;
}

}  // namespace salora
