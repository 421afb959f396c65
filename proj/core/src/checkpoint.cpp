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

#include "salora/checkpoint.hpp"

#include <sstream>

#include "salora/error.hpp"
#include "salora/keyvalue.hpp"
#include "salora/matrix_io.hpp"

namespace salora {

namespace fs = std::filesystem;

namespace {

constexpr const char* kModelFormat = "salora-model-1";
constexpr const char* kAdapterFormat = "salora-adapter-1";

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

std::string layer_key(std::size_t i, const char* field) {
  return "layer" + std::to_string(i) + "." + field;
}

std::string join_indices(const std::vector<std::size_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(v[i]);
  }
  return out;
}

std::vector<std::size_t> split_indices(const std::string& s) {
  std::vector<std::size_t> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      out.push_back(static_cast<std::size_t>(std::stoull(item)));
    } catch (const std::exception&) {
      throw ConfigError("bad layer index '" + item + "'");
    }
  }
  return out;
}

}  // namespace

void save_model(const fs::path& dir, const ToyModel& model) {
  model.validate();
  ensure_dir(dir);
  KeyValueDoc m;
  m.set("format", kModelFormat);
  m.set("layers", std::to_string(model.layers.size()));
  m.set("activation", std::string(activation_name(model.activation)));
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    const LinearLayer& l = model.layers[i];
    m.set(layer_key(i, "in"), std::to_string(l.in_dim()));
    m.set(layer_key(i, "out"), std::to_string(l.out_dim()));
    m.set(layer_key(i, "adapter"),
          l.adapter ? std::string(adapter_kind_name(l.adapter->kind)) : "none");
    save_mtx(dir / ("layer" + std::to_string(i) + ".mtx"), l.weight);
  }
  m.save(dir / "manifest.txt");
}

ToyModel load_model(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("model checkpoint not found: " + dir.string());
  const KeyValueDoc m = KeyValueDoc::load(dir / "manifest.txt");
  if (m.get("format") != kModelFormat) {
    throw ConfigError(dir.string() + ": unsupported model format '" + m.get("format") + "'");
  }
  ToyModel model;
  model.activation = parse_activation(m.get("activation"));
  const std::size_t n = m.get_size("layers");
  for (std::size_t i = 0; i < n; ++i) {
    LinearLayer layer;
    layer.weight = load_mtx(dir / ("layer" + std::to_string(i) + ".mtx"));
    if (!all_finite(layer.weight)) {
      throw ValidationError(dir.string() + ": layer " + std::to_string(i) + " has non-finite weights");
    }
    if (layer.weight.cols() != m.get_size(layer_key(i, "in")) ||
        layer.weight.rows() != m.get_size(layer_key(i, "out"))) {
      throw ShapeError(dir.string() + ": layer " + std::to_string(i) + " weight " +
                       layer.weight.shape_string() + " disagrees with manifest");
    }
    model.layers.push_back(std::move(layer));
  }
  model.validate();
  return model;
}

void save_adapters(const fs::path& dir, const AdapterCheckpoint& ckpt) {
  if (ckpt.layers.size() != ckpt.records.size() || ckpt.records.empty()) {
    throw ConfigError("adapter checkpoint needs one record per adapted layer");
  }
  ensure_dir(dir);
  const AdapterRecord& first = ckpt.records.front();
  KeyValueDoc m;
  m.set("format", kAdapterFormat);
  m.set("method", ckpt.method);
  m.set("kind", std::string(adapter_kind_name(first.kind)));
  m.set("r", std::to_string(first.rank));
  m.set("layers", join_indices(ckpt.layers));
  for (std::size_t k = 0; k < ckpt.records.size(); ++k) {
    const AdapterRecord& rec = ckpt.records[k];
    if (rec.kind != first.kind) throw ConfigError("mixed adapter kinds in one checkpoint");
    const std::size_t idx = ckpt.layers[k];
    m.set(layer_key(idx, "r_s"), std::to_string(rec.safety_rank));
    const fs::path ldir = dir / ("layer" + std::to_string(idx));
    ensure_dir(ldir);
    if (rec.kind == AdapterKind::kSaLoRA) {
      save_mtx(ldir / "b_prime.mtx", rec.b);
      save_mtx(ldir / "a.mtx", rec.a);
      save_mtx(ldir / "b0_prime.mtx", rec.b0);
      save_mtx(ldir / "a0.mtx", rec.a0);
    } else {
      save_mtx(ldir / "b.mtx", rec.b);
      save_mtx(ldir / "a.mtx", rec.a);
      if (rec.kind == AdapterKind::kPiSSA) save_mtx(ldir / "residual.mtx", rec.residual);
    }
  }
  m.save(dir / "manifest.txt");
}

AdapterCheckpoint load_adapters(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("adapter checkpoint not found: " + dir.string());
  const KeyValueDoc m = KeyValueDoc::load(dir / "manifest.txt");
  if (m.get("format") != kAdapterFormat) {
    throw ConfigError(dir.string() + ": unsupported adapter format '" + m.get("format") + "'");
  }
  AdapterCheckpoint ckpt;
  ckpt.method = m.get("method");
  ckpt.layers = split_indices(m.get("layers"));
  const AdapterKind kind = parse_adapter_kind(m.get("kind"));
  const std::size_t r = m.get_size("r");
  for (std::size_t idx : ckpt.layers) {
    const fs::path ldir = dir / ("layer" + std::to_string(idx));
    AdapterRecord rec;
    rec.kind = kind;
    rec.rank = r;
    rec.safety_rank = m.get_size(layer_key(idx, "r_s"));
    if (kind == AdapterKind::kSaLoRA) {
      rec.b = load_mtx(ldir / "b_prime.mtx");
      rec.a = load_mtx(ldir / "a.mtx");
      rec.b0 = load_mtx(ldir / "b0_prime.mtx");
      rec.a0 = load_mtx(ldir / "a0.mtx");
    } else {
      rec.b = load_mtx(ldir / "b.mtx");
      rec.a = load_mtx(ldir / "a.mtx");
      if (kind == AdapterKind::kPiSSA) rec.residual = load_mtx(ldir / "residual.mtx");
    }
    if (rec.b.cols() != r || rec.a.rows() != r) {
      throw ShapeError(ldir.string() + ": factors " + rec.b.shape_string() + "*" +
                       rec.a.shape_string() + " disagree with rank " + std::to_string(r));
    }
    ckpt.records.push_back(std::move(rec));
  }
  return ckpt;
}

std::uintmax_t adapter_payload_bytes(const fs::path& dir) {
  std::uintmax_t total = 0;
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".mtx") total += entry.file_size();
  }
  return total;
}

ToyModel apply_adapters_for_inference(const ToyModel& pretrained, const AdapterCheckpoint& ckpt) {
  ToyModel out = pretrained;
  for (std::size_t k = 0; k < ckpt.layers.size(); ++k) {
    const std::size_t idx = ckpt.layers[k];
    if (idx >= out.layers.size()) {
      throw ShapeError("adapter targets layer " + std::to_string(idx) + " but the model has " +
                       std::to_string(out.layers.size()) + " layers");
    }
    out.layers[idx].weight = assemble_for_inference(pretrained.layers[idx].weight, ckpt.records[k]);
    out.layers[idx].adapter.reset();
  }
  return out;
}

}  // namespace salora
