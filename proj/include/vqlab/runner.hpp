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
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "vqlab/data.hpp"
#include "vqlab/experiments.hpp"
#include "vqlab/model.hpp"
#include "vqlab/trainer.hpp"

namespace vqlab {

struct BenchConfig {
  std::vector<std::size_t> sizes = {1000, 10000, 100000};
  std::size_t tokens = 10000;
  std::size_t code_dim = 8;
  int threads = 1;
  int repeats = 3;
  //! Images per timed forward step.
  std::size_t batch_images = 32;
};

//! Everything a subcommand needs. Defaults are the desk standard setup.
struct ExperimentConfig {
  DatasetSpec data;
  //! Second dataset for transfer; its training split supplies the codebook.
  DatasetSpec source_data;
  ModelConfig model;
  TrainConfig train;
  CodebookConfig codebook;
  std::vector<std::size_t> sizes = {256, 1024, 4096};
  std::vector<Variant> variants = {Variant::kLC, Variant::kGD};
  std::vector<InitStrategy> strategies = {InitStrategy::kRandomInit,
                                          InitStrategy::kRandomSelection,
                                          InitStrategy::kKMeans};
  std::vector<std::size_t> dims = {4, 8, 16, 32};
  std::vector<std::size_t> m_values = {1, 2, 8, 32};
  //! Eval images written as PPM by token-replace.
  std::size_t samples = 4;
  BenchConfig bench;

  ExperimentConfig();
  void validate() const;
  //! Full config with every default filled in.
  std::string to_json() const;
  //! Missing keys keep their defaults; unknown keys are rejected by name.
  static ExperimentConfig from_json(const std::string& text);
  //! Reseeds model init, batching and the train/eval split.
  void override_seed(std::uint64_t seed);
};

ExperimentConfig load_experiment_config(const std::filesystem::path& path);

//! One line of every summary table.
struct SummaryRow {
  std::string variant;  // variant plus the ablation setting, e.g. LC/kmeans
  std::size_t codebook_size = 0;
  std::size_t code_dim = 0;  // width of the searched vectors
  double utilization = 0.0;  // cumulative over training traffic
  double mse = 0.0;          // final eval metrics
  double psnr = 0.0;
  double ssim = 0.0;
  std::uint64_t seed = 0;
};

inline constexpr const char* kSummaryCsvHeader =
    "variant,N,code_dim,utilization,mse,psnr,ssim,seed";
std::string summary_csv(const std::vector<SummaryRow>& rows);

struct TokenReplaceRow {
  std::size_t m = 0;
  double mse = 0.0;
  double psnr = 0.0;
  double ssim = 0.0;
};
inline constexpr const char* kTokenReplaceCsvHeader = "M,mse,psnr,ssim";
std::string token_replace_csv(const std::vector<TokenReplaceRow>& rows);

struct TokenReplaceResult {
  std::vector<TokenReplaceRow> rows;
  double baseline_psnr = 0.0;
  //! Reconstructions of the first images, per M in row order.
  Dataset originals;
  std::vector<Dataset> samples;
};

//! Decodes, for each M, the M-th nearest entry of every token instead of
//! the nearest one and scores the result against `images`.
TokenReplaceResult token_replace(const Autoencoder& model, const Dataset& images,
                                 const std::vector<std::size_t>& m_values,
                                 std::size_t samples);

struct BenchRow {
  std::size_t codebook_size = 0;
  std::size_t tokens = 0;
  std::size_t code_dim = 0;
  int threads = 1;
  double quantize_seconds = 0.0;
  //! One desk forward_loss step with a codebook of this size.
  double forward_seconds = 0.0;
  double quantize_share = 0.0;
};
inline constexpr const char* kBenchCsvHeader =
    "N,tokens,code_dim,threads,quantize_seconds,forward_seconds,quantize_share";
std::string bench_csv(const std::vector<BenchRow>& rows);

//! Best-of-repeats timings of the nearest-entry search against random
//! codebooks, with the share of a full forward step spent in quantization.
std::vector<BenchRow> bench_quantize(const ExperimentConfig& cfg);

//! A trained model with its record and summary line.
struct RunResult {
  SummaryRow summary;
  RunRecord record;
  Autoencoder model;
  std::uint64_t checksum_before = 0;
  //! Projector weight before training; empty without projector.
  std::vector<float> projector_before;
};

using LogFn = std::function<void(const std::string&)>;

//! Runs the studies of one config. Identical runs (same data, model,
//! codebook and training settings) are trained once and reused, and
//! generated datasets and codebook features are cached as well.
class ExperimentRunner {
 public:
  explicit ExperimentRunner(ExperimentConfig cfg, LogFn log = {});

  const ExperimentConfig& config() const { return cfg_; }

  //! Trains with `model`/`codebook` on the target data. Codebook features
  //! come from `source` when given.
  const RunResult& run(const std::string& label, const ModelConfig& model,
                       const CodebookConfig& codebook,
                       const DatasetSpec* source = nullptr);

  const RunResult& train();
  //! Sizes ascending, for every configured variant.
  std::vector<SummaryRow> sweep_codebook();
  //! Frozen codebook plus projector per initialization strategy.
  std::vector<SummaryRow> ablate_init();
  //! Same-dataset baseline first, then codebook from source_data.
  std::vector<SummaryRow> transfer();
  //! static+no-projector, trainable+projector, static+projector.
  std::vector<SummaryRow> ablate_projector();
  //! One LC run per projected width, sorted by width.
  std::vector<SummaryRow> ablate_dim();

  const DatasetSplit& split(const DatasetSpec& spec);
  //! Every run trained so far, in no particular order.
  std::vector<const RunResult*> completed_runs() const;

 private:
  const FeatureSet& features(const DatasetSpec& spec, const CodebookConfig& cb,
                             const ModelConfig& model);

  ExperimentConfig cfg_;
  LogFn log_;
  std::map<std::string, DatasetSplit> splits_;
  std::map<std::string, FeatureSet> features_;
  std::map<std::string, std::unique_ptr<RunResult>> runs_;
};

//! Files gathered in memory and published as one directory.
class OutputBundle {
 public:
  void add(const std::string& relative, std::string content);
  void add(const std::string& relative, std::vector<std::uint8_t> content);
  //! Writes into a sibling temporary directory and renames it into place.
  //! An existing target is replaced only with `force`, else ConfigError.
  void publish(const std::filesystem::path& dir, bool force) const;
  const std::map<std::string, std::vector<std::uint8_t>>& files() const {
    return files_;
  }

 private:
  std::map<std::string, std::vector<std::uint8_t>> files_;
};

//! Throws ConfigError when `dir` exists and `force` is false.
void check_output_dir(const std::filesystem::path& dir, bool force);

inline constexpr const char* kCommands[] = {
    "train",          "sweep-codebook", "ablate-init",   "transfer",
    "token-replace",  "ablate-projector", "ablate-dim",  "bench-quantize"};

struct CommandOptions {
  std::string command;
  std::optional<std::filesystem::path> config;
  std::filesystem::path out;
  std::optional<std::uint64_t> seed;
  bool force = false;
  //! token-replace input.
  std::optional<std::filesystem::path> checkpoint;
};

//! Runs a subcommand and returns the files it produced (not yet written).
OutputBundle run_command(const CommandOptions& opts, LogFn log = {});

}  // namespace vqlab
