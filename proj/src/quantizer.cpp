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
#include "vqlab/quantizer.hpp"

#include <algorithm>
#include <stdexcept>

#include "vqlab/error.hpp"

namespace vqlab {

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::kGD: return "GD";
    case Variant::kFC: return "FC";
    case Variant::kEMA: return "EMA";
    case Variant::kLC: return "LC";
  }
  return "LC";
}

Variant parse_variant(const std::string& name) {
  if (name == "GD") return Variant::kGD;
  if (name == "FC") return Variant::kFC;
  if (name == "EMA") return Variant::kEMA;
  if (name == "LC") return Variant::kLC;
  throw ConfigError("variant: expected GD, FC, EMA or LC, got \"" + name + "\"");
}

EmaStats EmaStats::start(const Codebook& codebook, double gamma, double eps) {
  if (!(gamma >= 0.0 && gamma < 1.0))
    throw std::invalid_argument("ema: gamma must lie in [0, 1)");
  if (!(eps > 0.0)) throw std::invalid_argument("ema: eps must be positive");
  EmaStats s;
  s.gamma = gamma;
  s.eps = eps;
  s.counts.assign(codebook.size(), 0.0);
  s.sums.resize(codebook.size() * codebook.dim());
  const auto e = codebook.entries.data();
  for (std::size_t i = 0; i < s.sums.size(); ++i) s.sums[i] = double(e[i]) * eps;
  return s;
}

void ema_update(EmaStats& stats, Codebook& codebook, const TokenMap& tokens,
                MatrixView features) {
  const std::size_t n = codebook.size(), d = codebook.dim();
  if (codebook.frozen) throw std::logic_error("ema_update: codebook is frozen");
  if (stats.counts.size() != n || stats.sums.size() != n * d)
    throw ShapeError("ema_update: statistics do not match the codebook");
  if (features.rows != tokens.size() || features.cols != d)
    throw ShapeError("ema_update: " + std::to_string(features.rows) + "x" +
                     std::to_string(features.cols) + " features for " +
                     std::to_string(tokens.size()) + " tokens of width " +
                     std::to_string(d));
  std::vector<double> hits(n, 0.0), acc(n * d, 0.0);
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    const std::int32_t i = tokens.indices[t];
    if (i < 0 || std::size_t(i) >= n)
      throw std::out_of_range("ema_update: token index " + std::to_string(i) +
                              " outside [0, " + std::to_string(n) + ")");
    hits[std::size_t(i)] += 1.0;
    const float* z = features.row(t);
    for (std::size_t j = 0; j < d; ++j) acc[std::size_t(i) * d + j] += double(z[j]);
  }
  const double g = stats.gamma;
  auto entries = codebook.entries.mutable_data();
  for (std::size_t i = 0; i < n; ++i) {
    if (hits[i] == 0.0) continue;
    stats.counts[i] = g * stats.counts[i] + (1.0 - g) * hits[i];
    const double denom = std::max(stats.counts[i], stats.eps);
    for (std::size_t j = 0; j < d; ++j) {
      double& s = stats.sums[i * d + j];
      s = g * s + (1.0 - g) * acc[i * d + j];
      entries[i * d + j] = static_cast<float>(s / denom);
    }
  }
}

Tensor quantization_loss(Variant variant, const Tensor& z_pre, const Tensor& z_q,
                         float alpha, float beta) {
  if (z_pre.shape() != z_q.shape())
    throw ShapeError("quantization_loss: " + shape_str(z_pre.shape()) + " vs " +
                     shape_str(z_q.shape()));
  Tensor commit = scale(mse(stop_gradient(z_q), z_pre), alpha);
  if (variant == Variant::kEMA) return commit;
  return commit + scale(mse(stop_gradient(z_pre), z_q), beta);
}

std::size_t Utilization::active() const {
  return static_cast<std::size_t>(std::count(used.begin(), used.end(), true));
}

double Utilization::rate() const {
  return used.empty() ? 0.0 : double(active()) / double(used.size());
}

std::uint64_t Utilization::total() const {
  std::uint64_t t = 0;
  for (auto c : counts) t += c;
  return t;
}

void UsageCounter::add(std::span<const std::int32_t> indices) {
  for (auto i : indices) {
    if (i < 0 || std::size_t(i) >= counts_.size())
      throw std::out_of_range("utilization: index " + std::to_string(i) +
                              " outside [0, " + std::to_string(counts_.size()) + ")");
    ++counts_[std::size_t(i)];
  }
}

void UsageCounter::add(const TokenMap& tokens) { add(tokens.indices); }

void UsageCounter::merge(const UsageCounter& other) {
  if (other.counts_.size() != counts_.size())
    throw ShapeError("utilization: merging counters of different sizes");
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
}

Utilization UsageCounter::snapshot() const {
  Utilization u;
  u.counts = counts_;
  u.used.resize(counts_.size());
  for (std::size_t i = 0; i < counts_.size(); ++i) u.used[i] = counts_[i] >= 1;
  return u;
}

Utilization utilization_sets(std::span<const TokenMap> token_maps, std::size_t n) {
  UsageCounter c(n);
  for (const auto& tm : token_maps) c.add(tm);
  return c.snapshot();
}

void QuantizerState::validate() const {
  codebook.validate();
  if (!(alpha > 0.0f) || !(beta > 0.0f))
    throw ConfigError("quantizer: alpha and beta must be positive");
  if (variant == Variant::kLC) {
    if (!codebook.frozen) throw ConfigError("quantizer: LC requires a frozen codebook");
    if (!projector && !projector_ablated)
      throw ConfigError("quantizer: LC requires a projector");
  } else if (projector_ablated) {
    throw ConfigError("quantizer: projector ablation applies to LC only");
  }
  if (variant == Variant::kEMA) {
    if (!ema) throw ConfigError("quantizer: EMA requires running statistics");
    if (codebook.entries.requires_grad())
      throw ConfigError("quantizer: EMA codebook must not take gradients");
    if (projector) throw ConfigError("quantizer: EMA has no projector");
  }
  if ((variant == Variant::kGD || variant == Variant::kFC) && codebook.frozen)
    throw ConfigError("quantizer: " + variant_name(variant) +
                      " requires a trainable codebook");
  if (projector) {
    projector->validate();
    if (projector->in_dim() != codebook.dim())
      throw ConfigError("quantizer: projector input " +
                        std::to_string(projector->in_dim()) + " != codebook width " +
                        std::to_string(codebook.dim()));
  }
}

std::size_t QuantizerState::code_dim() const {
  return projector ? projector->out_dim() : codebook.dim();
}

Tensor QuantizerState::effective_codebook() const {
  Tensor eff = projector ? project(codebook, *projector) : codebook.entries;
  return normalize ? normalize_rows(eff) : eff;
}

Tensor QuantizerState::prepare_features(const Tensor& z) const {
  return normalize ? normalize_rows(z) : z;
}

QuantizeOutput QuantizerState::apply(const Tensor& z) const {
  QuantizeOutput out;
  out.effective = effective_codebook();
  out.features = prepare_features(z);
  if (out.features.dim() != 2 || out.features.cols() != out.effective.cols())
    throw ShapeError("quantizer: features " + shape_str(out.features.shape()) +
                     " do not match codebook " + shape_str(out.effective.shape()));
  out.tokens = NearestIndex(out.effective, metric).quantize(out.features);
  out.z_q = gather_rows(out.effective, out.tokens.indices);
  return out;
}

QuantizeOutput QuantizerState::apply_with_tokens(const Tensor& z,
                                                 const TokenMap& tokens) const {
  QuantizeOutput out;
  out.effective = effective_codebook();
  out.features = prepare_features(z);
  if (tokens.size() != out.features.rows())
    throw ShapeError("quantizer: " + std::to_string(tokens.size()) + " tokens for " +
                     std::to_string(out.features.rows()) + " feature rows");
  out.tokens = tokens;
  out.z_q = gather_rows(out.effective, out.tokens.indices);
  return out;
}

std::vector<Tensor> QuantizerState::parameters() const {
  std::vector<Tensor> out;
  if (projector)
    for (const auto& p : projector->parameters()) out.push_back(p);
  if (codebook.entries.requires_grad()) out.push_back(codebook.entries);
  return out;
}

}  // namespace vqlab
