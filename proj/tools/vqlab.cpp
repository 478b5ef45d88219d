// Copyright 2026 The vqlab Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// vqlab: experiment runner. Every subcommand takes the same flags and
// writes its files into --out.

#include <iostream>

#include <CLI11.hpp>

#include "vqlab/error.hpp"
#include "vqlab/runner.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitInvalid = 2;

const char* describe(const std::string& cmd) {
  if (cmd == "train") return "Train one model; writes run.csv, run.json, model.vqmd, code_activity.csv";
  if (cmd == "sweep-codebook") return "Train every variant at every codebook size";
  if (cmd == "ablate-init") return "Frozen codebook + projector per initialization strategy";
  if (cmd == "transfer") return "Codebook from source_data vs from the target data";
  if (cmd == "token-replace") return "Decode with the M-th nearest entry per token";
  if (cmd == "ablate-projector") return "Static/trainable codebook with and without projector";
  if (cmd == "ablate-dim") return "One run per projected code width";
  return "Time nearest-entry search against codebook size";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"vqlab experiment runner"};
  app.require_subcommand(1);
  vqlab::CommandOptions opts;
  std::string config, out, checkpoint;
  std::uint64_t seed = 0;
  bool quiet = false;
  for (const char* name : vqlab::kCommands) {
    CLI::App* sub = app.add_subcommand(name, describe(name));
    sub->add_option("--config", config, "Experiment config JSON (defaults: desk standard)")
        ->check(CLI::ExistingFile);
    sub->add_option("--out", out, "Output directory")->required();
    sub->add_option("--seed", seed, "Override model and training seeds");
    sub->add_flag("--force", opts.force, "Replace an existing output directory");
    sub->add_flag("-q,--quiet", quiet, "No progress lines on stderr");
    if (std::string(name) == "token-replace")
      sub->add_option("--checkpoint", checkpoint, "Trained model.vqmd")
          ->required()
          ->check(CLI::ExistingFile);
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInvalid;
  }

  const CLI::App* sub = app.get_subcommands().front();
  opts.command = sub->get_name();
  opts.out = out;
  if (!config.empty()) opts.config = config;
  if (sub->count("--seed")) opts.seed = seed;
  if (!checkpoint.empty()) opts.checkpoint = checkpoint;
  vqlab::LogFn log;
  if (!quiet) log = [](const std::string& line) { std::cerr << line << "\n"; };

  try {
    const vqlab::OutputBundle bundle = vqlab::run_command(opts, log);
    bundle.publish(opts.out, opts.force);
    if (log) log("wrote " + opts.out.string());
    return kExitOk;
  } catch (const vqlab::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}
