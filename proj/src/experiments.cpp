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
#include "vqlab/experiments.hpp"

#include <set>

#include <json.hpp>

#include "vqlab/error.hpp"
#include "vqlab/features.hpp"

namespace vqlab {

void CodebookConfig::validate() const {
  if (size == 0) throw ConfigError("codebook: size must be >= 1");
  if (kmeans_iters < 1) throw ConfigError("codebook: kmeans_iters must be >= 1");
  if (source == FeatureSource::kImported && feature_file.empty())
    throw ConfigError("codebook: source imported-file requires feature_file");
  if (!(ema_gamma >= 0.0 && ema_gamma < 1.0))
    throw ConfigError("codebook: ema_gamma must lie in [0, 1)");
}

std::string CodebookConfig::to_json() const {
  nlohmann::ordered_json j;
  j["size"] = size;
  j["init"] = strategy_name(init);
  j["source"] = source_name(source);
  j["feature_file"] = feature_file;
  j["minibatch"] = minibatch;
  j["kmeans_iters"] = kmeans_iters;
  j["max_points"] = max_points;
  j["metric"] = metric_name(metric);
  j["normalize"] = normalize;
  j["projector"] = projector;
  j["gd_projector"] = gd_projector;
  j["ema_gamma"] = ema_gamma;
  return j.dump(2);
}

CodebookConfig CodebookConfig::from_json(const std::string& text) {
  CodebookConfig c;
  try {
    const auto j = nlohmann::json::parse(text);
    if (!j.is_object()) throw ConfigError("codebook: expected a JSON object");
    static const std::set<std::string> known = {
        "size",      "init",      "source",    "feature_file", "minibatch", "kmeans_iters",
        "max_points", "metric",   "normalize", "projector",    "gd_projector", "ema_gamma"};
    for (const auto& [key, value] : j.items())
      if (!known.count(key)) throw ConfigError("codebook: unknown key '" + key + "'");
    c.size = j.value("size", c.size);
    if (j.contains("init")) c.init = parse_strategy(j["init"].get<std::string>());
    if (j.contains("source")) c.source = parse_source(j["source"].get<std::string>());
    c.feature_file = j.value("feature_file", c.feature_file);
    c.minibatch = j.value("minibatch", c.minibatch);
    c.kmeans_iters = j.value("kmeans_iters", c.kmeans_iters);
    c.max_points = j.value("max_points", c.max_points);
    if (j.contains("metric")) c.metric = parse_metric(j["metric"].get<std::string>());
    c.normalize = j.value("normalize", c.normalize);
    c.projector = j.value("projector", c.projector);
    c.gd_projector = j.value("gd_projector", c.gd_projector);
    c.ema_gamma = j.value("ema_gamma", c.ema_gamma);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("codebook: ") + e.what());
  }
  c.validate();
  return c;
}

FeatureSet codebook_features(const CodebookConfig& cb, const ModelConfig& model,
                             const Dataset& train) {
  switch (cb.source) {
    case FeatureSource::kPixelPatch:
      return extract_pixel_patch_features(train, model.patch_size);
    case FeatureSource::kImported:
      return load_feature_file(cb.feature_file);
    case FeatureSource::kTinyEncoder: {
      TinyEncoderOptions opts;
      opts.patch = model.patch_size;
      opts.seed = model.seed ^ 0x7e1feaULL;
      return extract_tiny_encoder_features(train, opts);
    }
  }
  throw ConfigError("codebook: unknown feature source");
}

QuantizerState build_quantizer_from(const ModelConfig& model, const CodebookConfig& cb,
                                    const FeatureSet& features) {
  cb.validate();
  QuantizerState q;
  q.variant = model.variant;
  q.metric = cb.metric;
  q.alpha = model.alpha;
  q.beta = model.beta;
  q.normalize = cb.normalize;
  const std::uint64_t seed = model.seed ^ 0xc0deb00cULL;
  auto init_from_features = [&]() {
    switch (cb.init) {
      case InitStrategy::kRandomInit:
        return init_random(cb.size, features.dim(), seed);
      case InitStrategy::kRandomSelection:
        return init_random_selection(features, cb.size, seed);
      case InitStrategy::kKMeans: {
        KMeansInitOptions opts;
        opts.minibatch = cb.minibatch;
        opts.max_iters = cb.kmeans_iters;
        opts.max_points = cb.max_points;
        return init_kmeans(features, cb.size, seed, opts);
      }
    }
    throw ConfigError("codebook: unknown init strategy");
  };
  switch (model.variant) {
    case Variant::kLC:
      q.codebook = init_from_features();
      q.codebook.frozen = true;
      if (cb.projector)
        q.projector = make_projector(q.codebook.dim(), model.code_dim, seed + 1);
      else
        q.projector_ablated = true;
      break;
    case Variant::kGD:
      if (cb.gd_projector) {
        q.codebook = init_from_features();
        q.projector = make_projector(q.codebook.dim(), model.code_dim, seed + 1);
      } else {
        q.codebook = init_random(cb.size, model.feature_dim, seed);
      }
      q.codebook.frozen = false;
      q.codebook.entries.set_requires_grad(true);
      break;
    case Variant::kFC:
      q.codebook = init_random(cb.size, model.code_dim, seed);
      q.codebook.frozen = false;
      q.codebook.entries.set_requires_grad(true);
      break;
    case Variant::kEMA:
      q.codebook = init_random(cb.size, model.feature_dim, seed);
      q.codebook.frozen = false;
      q.ema = EmaStats::start(q.codebook, cb.ema_gamma);
      break;
  }
  q.validate();
  return q;
}

QuantizerState build_quantizer(const ModelConfig& model, const CodebookConfig& cb,
                               const Dataset& train) {
  const bool needs_features =
      model.variant == Variant::kLC || (model.variant == Variant::kGD && cb.gd_projector);
  if (!needs_features) return build_quantizer_from(model, cb, FeatureSet{});
  return build_quantizer_from(model, cb, codebook_features(cb, model, train));
}

}  // namespace vqlab
