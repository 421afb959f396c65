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

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "salora/config.hpp"
#include "salora/error.hpp"
#include "salora/pipeline.hpp"

namespace fs = std::filesystem;

namespace {

struct Options {
  std::string config;
  std::string method;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string world;
  std::string model;
  std::string adapter;
  std::string inputs;
  std::string before;
  std::string after;
};

salora::ExperimentConfig load_config(const Options& o) {
  salora::ExperimentConfig c =
      o.config.empty() ? salora::ExperimentConfig{} : salora::ExperimentConfig::load(o.config);
  if (!o.method.empty()) c.method = salora::parse_method(o.method);
  if (o.seed) c.seed = *o.seed;
  c.validate();
  return c;
}

void add_common(CLI::App* cmd, Options& o) {
  cmd->add_option("--config", o.config, "experiment config file");
  cmd->add_option("--method", o.method, "lora | pissa | salora | salora_no_init");
  cmd->add_option("--seed", o.seed, "root seed");
  cmd->add_option("--out", o.out, "output location");
}

int run(int argc, char** argv) {
  CLI::App app{"SaLoRA toolkit: safety-preserving low-rank adaptation on toy models"};
  app.require_subcommand(1);
  Options o;

  auto* gen = app.add_subcommand("gen-world", "generate a synthetic planted-subspace world");
  add_common(gen, o);

  auto* ft = app.add_subcommand("finetune", "fine-tune adapters on a world's benign task");
  add_common(ft, o);
  ft->add_option("--world", o.world, "world directory (default: [paths] world)");

  auto* inf = app.add_subcommand("infer", "run a model with an adapter checkpoint applied");
  add_common(inf, o);
  inf->add_option("--model", o.model, "model checkpoint directory")->required();
  inf->add_option("--adapter", o.adapter, "adapter checkpoint directory (omit for the bare model)");
  inf->add_option("--inputs", o.inputs, "MTX1 input matrix, one column per sample")->required();

  auto* an = app.add_subcommand("analyze", "probe drift and gradient-overlap bound report");
  add_common(an, o);
  an->add_option("--world", o.world, "world directory (default: [paths] world)");
  an->add_option("--before", o.before, "model, adapter or run directory (default: world model)");
  an->add_option("--after", o.after, "model, adapter or run directory")->required();

  auto* st = app.add_subcommand("selftest", "run built-in consistency checks");
  add_common(st, o);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  if (*gen) {
    const auto c = load_config(o);
    const fs::path out = o.out.empty() ? fs::path(c.world_dir) : fs::path(o.out);
    salora::cmd_gen_world(c, out);
    std::cout << "world written to " << out.string() << '\n';
  } else if (*ft) {
    const auto c = load_config(o);
    const fs::path world = o.world.empty() ? fs::path(c.world_dir) : fs::path(o.world);
    const fs::path out = o.out.empty() ? fs::path(c.run_dir) : fs::path(o.out);
    salora::cmd_finetune(c, world, out);
    std::cout << "run written to " << out.string() << '\n';
  } else if (*inf) {
    if (o.out.empty()) throw salora::ConfigError("infer needs --out FILE");
    salora::cmd_infer(o.model, o.adapter, o.inputs, o.out);
  } else if (*an) {
    const auto c = load_config(o);
    const fs::path world = o.world.empty() ? fs::path(c.world_dir) : fs::path(o.world);
    const fs::path out = o.out.empty() ? fs::path("analysis") : fs::path(o.out);
    salora::cmd_analyze(c, world, o.before, o.after, out, std::cout);
  } else if (*st) {
    return salora::selftest(std::cout) ? 0 : 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const salora::Error& e) {
    std::cerr << "error: " << salora::category_name(e.category()) << ": " << e.what() << '\n';
    return salora::exit_code(e.category());
  } catch (const std::exception& e) {
    std::cerr << "error: internal: " << e.what() << '\n';
    return 1;
  }
}
