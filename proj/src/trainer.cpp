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
#include "vqlab/trainer.hpp"

#include <chrono>
#include <cmath>
#include <numbers>
#include <numeric>
#include <set>

#include <json.hpp>

#include "vqlab/error.hpp"
#include "vqlab/metrics.hpp"
#include "vqlab/random.hpp"

namespace vqlab {

namespace {

constexpr std::size_t kEvalBatch = 256;

}  // namespace

void TrainConfig::validate() const {
  if (epochs < 0) throw ConfigError("train: epochs must be >= 0");
  if (warmup_epochs < 0 || warmup_epochs > epochs)
    throw ConfigError("train: warmup_epochs must lie in [0, epochs]");
  if (!(base_lr > 0.0)) throw ConfigError("train: base_lr must be > 0");
  if (batch_size == 0) throw ConfigError("train: batch_size must be >= 1");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
    throw ConfigError("train: betas must lie in [0, 1)");
  if (!(eps > 0.0)) throw ConfigError("train: eps must be > 0");
  if (!(eval_fraction > 0.0 && eval_fraction < 1.0))
    throw ConfigError("train: eval_fraction must lie in (0, 1)");
}

std::string TrainConfig::to_json() const {
  nlohmann::ordered_json j;
  j["epochs"] = epochs;
  j["base_lr"] = base_lr;
  j["warmup_epochs"] = warmup_epochs;
  j["batch_size"] = batch_size;
  j["seed"] = seed;
  j["beta1"] = beta1;
  j["beta2"] = beta2;
  j["eps"] = eps;
  j["eval_fraction"] = eval_fraction;
  return j.dump();
}

TrainConfig TrainConfig::from_json(const std::string& text) {
  TrainConfig c;
  try {
    const auto j = nlohmann::json::parse(text);
    static const std::set<std::string> known = {"epochs", "base_lr", "warmup_epochs",
                                                "batch_size", "seed", "beta1",
                                                "beta2", "eps", "eval_fraction"};
    for (const auto& [k, _] : j.items())
      if (!known.count(k)) throw ConfigError("train: unknown field \"" + k + "\"");
    c.epochs = j.value("epochs", c.epochs);
    c.base_lr = j.value("base_lr", c.base_lr);
    c.warmup_epochs = j.value("warmup_epochs", c.warmup_epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.seed = j.value("seed", c.seed);
    c.beta1 = j.value("beta1", c.beta1);
    c.beta2 = j.value("beta2", c.beta2);
    c.eps = j.value("eps", c.eps);
    c.eval_fraction = j.value("eval_fraction", c.eval_fraction);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("train: ") + e.what());
  }
  c.validate();
  return c;
}

double lr_at(std::size_t step, std::size_t steps_per_epoch, const TrainConfig& cfg) {
  const double warm = double(cfg.warmup_epochs) * double(steps_per_epoch);
  const double total = double(cfg.epochs) * double(steps_per_epoch);
  const double s = double(step);
  if (s < warm) return cfg.base_lr * s / warm;
  if (total <= warm) return cfg.base_lr;
  const double t = std::min(1.0, (s - warm) / (total - warm));
  return cfg.base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * t));
}

void adam_step(std::span<const NamedTensor> params, AdamState& state, double lr,
               double beta1, double beta2, double eps) {
  if (state.m.size() != params.size()) {
    state.m.assign(params.size(), {});
    state.v.assign(params.size(), {});
    for (std::size_t i = 0; i < params.size(); ++i) {
      state.m[i].assign(params[i].tensor.numel(), 0.0f);
      state.v[i].assign(params[i].tensor.numel(), 0.0f);
    }
  }
  for (const auto& p : params)
    for (float g : p.tensor.grad())
      if (!std::isfinite(g))
        throw NumericError("adam: non-finite gradient in " + p.name);
  ++state.step;
  const double c1 = 1.0 - std::pow(beta1, double(state.step));
  const double c2 = 1.0 - std::pow(beta2, double(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor t = params[i].tensor;
    const auto g = t.grad();
    if (g.empty()) continue;
    auto w = t.mutable_data();
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t k = 0; k < w.size(); ++k) {
      const double gk = g[k];
      m[k] = static_cast<float>(beta1 * m[k] + (1.0 - beta1) * gk);
      v[k] = static_cast<float>(beta2 * v[k] + (1.0 - beta2) * gk * gk);
      const double mh = m[k] / c1, vh = v[k] / c2;
      w[k] = static_cast<float>(w[k] - lr * mh / (std::sqrt(vh) + eps));
    }
  }
}

std::string run_csv(const RunRecord& record) {
  std::string out = std::string(kRunCsvHeader) + "\n";
  for (const auto& r : record.rows) {
    out += std::to_string(r.epoch);
    for (double v : {r.recon_loss, r.quant_loss, r.total_loss, r.epoch_utilization,
                     r.cumulative_utilization, r.eval_mse, r.eval_psnr, r.eval_ssim,
                     r.wall_seconds})
      out += "," + format_number(v);
    out += "\n";
  }
  return out;
}

std::string run_json(const RunRecord& record) {
  nlohmann::ordered_json j;
  j["train"] = nlohmann::ordered_json::parse(record.train_config);
  j["model"] = nlohmann::ordered_json::parse(record.model_config);
  auto rows = nlohmann::ordered_json::array();
  for (const auto& r : record.rows) {
    nlohmann::ordered_json row;
    row["epoch"] = r.epoch;
    row["recon_loss"] = r.recon_loss;
    row["quant_loss"] = r.quant_loss;
    row["total_loss"] = r.total_loss;
    row["epoch_utilization"] = r.epoch_utilization;
    row["cumulative_utilization"] = r.cumulative_utilization;
    row["eval_mse"] = r.eval_mse;
    row["eval_psnr"] = r.eval_psnr;
    row["eval_ssim"] = r.eval_ssim;
    row["wall_seconds"] = r.wall_seconds;
    rows.push_back(row);
  }
  j["rows"] = rows;
  return j.dump(2) + "\n";
}

EvalResult evaluate(const Autoencoder& model, const Dataset& ds) {
  const std::size_t n = ds.count();
  UsageCounter usage(model.quantizer().codebook.size());
  Dataset recon;
  recon.size = ds.size;
  recon.channels = ds.channels;
  recon.pixels.reserve(ds.pixels.size());
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < n; start += kEvalBatch) {
    idx.resize(std::min(kEvalBatch, n - start));
    std::iota(idx.begin(), idx.end(), start);
    const Tensor patches = model.patchify(ds, idx);
    NoGradGuard guard;
    const QuantizeOutput q = model.quantizer().apply(model.encode(patches));
    usage.add(q.tokens);
    const Dataset part = model.unpatchify(model.decode(q.z_q), ds);
    recon.pixels.insert(recon.pixels.end(), part.pixels.begin(), part.pixels.end());
  }
  EvalResult out;
  out.utilization = usage.snapshot();
  if (n == 0) return out;
  const QualityReport q = evaluate_quality(ds, recon);
  out.mse = q.mean_mse;
  out.psnr = q.mean_psnr;
  out.ssim = q.mean_ssim;
  return out;
}

RunRecord train_on(const Dataset& train_set, const Dataset& eval_set,
                   const TrainConfig& cfg, Autoencoder& model,
                   const EpochCallback& on_epoch) {
  cfg.validate();
  if (train_set.count() == 0) throw ConfigError("train: training set is empty");
  RunRecord record;
  record.train_config = cfg.to_json();
  record.model_config = model.config().to_json();
  QuantizerState& quant = model.quantizer();
  const std::size_t n_codes = quant.codebook.size();
  record.cumulative_counts.assign(n_codes, 0);
  if (cfg.epochs == 0) return record;

  const std::size_t n = train_set.count();
  const std::size_t steps_per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
  auto params = model.parameters();
  AdamState adam;
  UsageCounter cumulative(n_codes);
  std::vector<std::size_t> order(n);
  Rng rng(cfg.seed);
  std::size_t step = 0;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(std::span<std::size_t>(order));
    UsageCounter epoch_usage(n_codes);
    double recon_sum = 0.0, quant_sum = 0.0;
    std::size_t token_sum = 0;
    for (std::size_t b = 0; b < steps_per_epoch; ++b, ++step) {
      const std::span<const std::size_t> batch(
          order.data() + b * cfg.batch_size,
          std::min(cfg.batch_size, n - b * cfg.batch_size));
      const Tensor patches = model.patchify(train_set, batch);
      try {
        TapeScope scope;
        const ForwardResult fr = model.forward_loss(patches);
        if (!std::isfinite(fr.recon_loss) || !std::isfinite(fr.quant_loss))
          throw NumericError("loss is not finite");
        scope.tape().backward(fr.loss);
        adam_step(params, adam, lr_at(step + 1, steps_per_epoch, cfg), cfg.beta1,
                  cfg.beta2, cfg.eps);
        for (auto p : params) p.tensor.zero_grad();
        if (quant.variant == Variant::kEMA) {
          NoGradGuard guard;
          const Tensor feats = quant.prepare_features(fr.z);
          ema_update(*quant.ema, quant.codebook, fr.tokens, feats);
        }
        epoch_usage.add(fr.tokens);
        recon_sum += fr.recon_loss * double(batch.size());
        quant_sum += fr.quant_loss * double(batch.size());
        token_sum += batch.size();
      } catch (const NumericError& e) {
        throw NumericError("train: epoch " + std::to_string(epoch) + " step " +
                           std::to_string(b) + ": " + e.what());
      }
    }
    cumulative.merge(epoch_usage);
    EpochRow row;
    row.epoch = epoch;
    row.recon_loss = recon_sum / double(token_sum);
    row.quant_loss = quant_sum / double(token_sum);
    row.total_loss = row.recon_loss + row.quant_loss;
    row.epoch_utilization = epoch_usage.snapshot().rate();
    row.cumulative_utilization = cumulative.snapshot().rate();
    if (eval_set.count() > 0) {
      const EvalResult ev = evaluate(model, eval_set);
      row.eval_mse = ev.mse;
      row.eval_psnr = ev.psnr;
      row.eval_ssim = ev.ssim;
    }
    row.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    record.rows.push_back(row);
    if (on_epoch) on_epoch(row);
  }
  record.cumulative_counts = cumulative.snapshot().counts;
  return record;
}

RunRecord train(const Dataset& data, const TrainConfig& cfg, Autoencoder& model,
                const EpochCallback& on_epoch) {
  cfg.validate();
  const DatasetSplit split = split_dataset(data, cfg.eval_fraction, cfg.seed);
  return train_on(split.train, split.eval, cfg, model, on_epoch);
}

}  // namespace vqlab
