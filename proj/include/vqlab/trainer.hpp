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
#include <span>
#include <string>
#include <vector>

#include "vqlab/data.hpp"
#include "vqlab/model.hpp"
#include "vqlab/quantizer.hpp"

namespace vqlab {

struct TrainConfig {
  int epochs = 20;
  double base_lr = 5e-4;
  int warmup_epochs = 5;
  std::size_t batch_size = 64;
  std::uint64_t seed = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double eval_fraction = 0.1;

  void validate() const;
  std::string to_json() const;
  static TrainConfig from_json(const std::string& text);
};

//! Linear ramp base_lr * step / warmup_steps, then half-cycle cosine decay
//! reaching zero at epochs * steps_per_epoch.
double lr_at(std::size_t step, std::size_t steps_per_epoch, const TrainConfig& cfg);

struct AdamState {
  std::vector<std::vector<float>> m;
  std::vector<std::vector<float>> v;
  std::uint64_t step = 0;
};

//! One bias-corrected Adam update of every parameter holding a gradient.
//! Throws NumericError naming the first tensor with a non-finite gradient.
void adam_step(std::span<const NamedTensor> params, AdamState& state, double lr,
               double beta1, double beta2, double eps);

struct EpochRow {
  int epoch = 0;
  double recon_loss = 0.0;
  double quant_loss = 0.0;
  double total_loss = 0.0;
  double epoch_utilization = 0.0;
  double cumulative_utilization = 0.0;
  double eval_mse = 0.0;
  double eval_psnr = 0.0;
  double eval_ssim = 0.0;
  double wall_seconds = 0.0;
};

struct RunRecord {
  std::string train_config;  // JSON
  std::string model_config;  // JSON
  std::vector<EpochRow> rows;
  //! Per-entry token counts over all training traffic.
  std::vector<std::uint64_t> cumulative_counts;
};

inline constexpr const char* kRunCsvHeader =
    "epoch,recon_loss,quant_loss,total_loss,epoch_utilization,"
    "cumulative_utilization,eval_mse,eval_psnr,eval_ssim,wall_seconds";

std::string run_csv(const RunRecord& record);
std::string run_json(const RunRecord& record);

using EpochCallback = std::function<void(const EpochRow&)>;

//! Splits `data` into train/eval by cfg.eval_fraction and trains in place.
RunRecord train(const Dataset& data, const TrainConfig& cfg, Autoencoder& model,
                const EpochCallback& on_epoch = {});

//! Trains on `train_set` and evaluates on `eval_set` after every epoch.
RunRecord train_on(const Dataset& train_set, const Dataset& eval_set,
                   const TrainConfig& cfg, Autoencoder& model,
                   const EpochCallback& on_epoch = {});

struct EvalResult {
  double mse = 0.0;
  double psnr = 0.0;
  double ssim = 0.0;
  Utilization utilization;
};

//! Quantized reconstruction quality and token usage on a dataset.
EvalResult evaluate(const Autoencoder& model, const Dataset& ds);

}  // namespace vqlab
