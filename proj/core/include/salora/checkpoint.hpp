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

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "salora/adapter.hpp"
#include "salora/model.hpp"

namespace salora {

/// Model checkpoint directory:
///   manifest.txt   format, layer count, activation, per-layer dims and
///                  adapter kind
///   layer<i>.mtx   pre-trained weight of layer i
/// Adapters are not part of a model checkpoint; they live in adapter
/// checkpoints.
void save_model(const std::filesystem::path& dir, const ToyModel& model);
ToyModel load_model(const std::filesystem::path& dir);

struct AdapterCheckpoint {
  std::string method;  // lora | pissa | salora | salora_no_init
  std::vector<std::size_t> layers;
  std::vector<AdapterRecord> records;  // parallel to layers
};

/// Adapter checkpoint directory:
///   manifest.txt        method, kind, r, r_s, adapted layer indices
///   layer<i>/b_prime.mtx, a.mtx, b0_prime.mtx, a0.mtx   (SaLoRA)
///   layer<i>/b.mtx, a.mtx [, residual.mtx]              (LoRA / PiSSA)
void save_adapters(const std::filesystem::path& dir, const AdapterCheckpoint& ckpt);
AdapterCheckpoint load_adapters(const std::filesystem::path& dir);

/// Total bytes of the adapter tensor files (manifest excluded).
std::uintmax_t adapter_payload_bytes(const std::filesystem::path& dir);

/// Pre-trained model with every recorded layer's weight replaced by its
/// inference weight. Throws ShapeError on a layer/record mismatch.
ToyModel apply_adapters_for_inference(const ToyModel& pretrained, const AdapterCheckpoint& ckpt);

}  // namespace salora
