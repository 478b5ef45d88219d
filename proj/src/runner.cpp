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

#include "vqlab/runner.hpp"

#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include <json.hpp>

#include "vqlab/error.hpp"
#include "vqlab/kernels.hpp"
#include "vqlab/metrics.hpp"
#include "vqlab/nearest.hpp"
#include "vqlab/random.hpp"

namespace vqlab {
namespace {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

constexpr std::size_t kImageBatch = 256;

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Overlays `patch` on the defaults of a sub-config and re-parses it, so
// the sub-config's own parser still rejects unknown keys.
template <typename T>
T merged(const T& base, const nlohmann::json& patch, const char* section) {
  if (!patch.is_object())
    throw ConfigError(std::string("experiment: '") + section + "' must be an object");
  nlohmann::json j = nlohmann::json::parse(base.to_json());
  j.merge_patch(patch);
  return T::from_json(j.dump());
}

template <typename T, typename Parse>
std::vector<T> parse_list(const nlohmann::json& j, const char* key, Parse parse) {
  if (!j.is_array()) throw ConfigError(std::string("experiment: '") + key + "' must be a list");
  std::vector<T> out;
  for (const auto& v : j) out.push_back(parse(v));
  return out;
}

std::size_t as_size(const nlohmann::json& v) { return v.get<std::size_t>(); }

void require(bool ok, const std::string& msg) {
  if (!ok) throw ConfigError("experiment: " + msg);
}

std::string join_key(std::initializer_list<std::string> parts) {
  std::string key;
  for (const auto& p : parts) key += p + "\x1f";
  return key;
}

}  // namespace

// ---------------------------------------------------------------------------
// Config

ExperimentConfig::ExperimentConfig() {
  source_data.name = "synthetic-b";
  source_data.seed = 2;
  source_data.mix = {2.0, 1.0, 1.0};
  model.enc_hidden = {256, 256};
  train.epochs = 10;
  train.base_lr = 1e-3;
  train.warmup_epochs = 1;
  train.batch_size = 32;
}

void ExperimentConfig::validate() const {
  model.validate();
  train.validate();
  codebook.validate();
  require(data.size == model.image_size, "data.size must equal model.image_size");
  require(data.channels == model.channels, "data.channels must equal model.channels");
  require(source_data.size == model.image_size,
          "source_data.size must equal model.image_size");
  require(source_data.channels == model.channels,
          "source_data.channels must equal model.channels");
  require(!sizes.empty(), "sizes must not be empty");
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    require(sizes[i] >= 1, "sizes entries must be >= 1");
    require(i == 0 || sizes[i] > sizes[i - 1], "sizes must be strictly ascending");
  }
  require(!variants.empty(), "variants must not be empty");
  require(!strategies.empty(), "strategies must not be empty");
  require(std::set<InitStrategy>(strategies.begin(), strategies.end()).size() ==
              strategies.size(),
          "strategies must not repeat");
  require(!dims.empty(), "dims must not be empty");
  for (std::size_t d : dims)
    require(d >= 1 && d <= model.feature_dim, "dims entries must lie in [1, model.feature_dim]");
  require(!m_values.empty(), "m_values must not be empty");
  for (std::size_t m : m_values) require(m >= 1, "m_values entries must be >= 1");
  require(!bench.sizes.empty(), "bench.sizes must not be empty");
  for (std::size_t n : bench.sizes) require(n >= 1, "bench.sizes entries must be >= 1");
  require(bench.tokens >= 1, "bench.tokens must be >= 1");
  require(bench.code_dim >= 1 && bench.code_dim <= model.feature_dim,
          "bench.code_dim must lie in [1, model.feature_dim]");
  require(bench.threads >= 1, "bench.threads must be >= 1");
  require(bench.repeats >= 1, "bench.repeats must be >= 1");
  require(bench.batch_images >= 1, "bench.batch_images must be >= 1");
}

std::string ExperimentConfig::to_json() const {
  Json j;
  j["data"] = Json::parse(data.to_json());
  j["source_data"] = Json::parse(source_data.to_json());
  j["model"] = Json::parse(model.to_json());
  j["train"] = Json::parse(train.to_json());
  j["codebook"] = Json::parse(codebook.to_json());
  j["sizes"] = sizes;
  j["variants"] = Json::array();
  for (Variant v : variants) j["variants"].push_back(variant_name(v));
  j["strategies"] = Json::array();
  for (InitStrategy s : strategies) j["strategies"].push_back(strategy_name(s));
  j["dims"] = dims;
  j["m_values"] = m_values;
  j["samples"] = samples;
  j["bench"] = {{"sizes", bench.sizes},       {"tokens", bench.tokens},
                {"code_dim", bench.code_dim}, {"threads", bench.threads},
                {"repeats", bench.repeats},   {"batch_images", bench.batch_images}};
  return j.dump(2) + "\n";
}

ExperimentConfig ExperimentConfig::from_json(const std::string& text) {
  ExperimentConfig c;
  try {
    const auto j = nlohmann::json::parse(text);
    require(j.is_object(), "expected a JSON object");
    static const std::set<std::string> known = {
        "data",     "source_data", "model", "train",    "codebook", "sizes",
        "variants", "strategies",  "dims",  "m_values", "samples",  "bench"};
    for (const auto& [key, value] : j.items())
      if (!known.count(key)) throw ConfigError("experiment: unknown key '" + key + "'");
    if (j.contains("data")) c.data = merged(c.data, j["data"], "data");
    if (j.contains("source_data"))
      c.source_data = merged(c.source_data, j["source_data"], "source_data");
    if (j.contains("model")) c.model = merged(c.model, j["model"], "model");
    if (j.contains("train")) c.train = merged(c.train, j["train"], "train");
    if (j.contains("codebook")) c.codebook = merged(c.codebook, j["codebook"], "codebook");
    if (j.contains("sizes")) c.sizes = parse_list<std::size_t>(j["sizes"], "sizes", as_size);
    if (j.contains("variants"))
      c.variants = parse_list<Variant>(j["variants"], "variants", [](const auto& v) {
        return parse_variant(v.template get<std::string>());
      });
    if (j.contains("strategies"))
      c.strategies = parse_list<InitStrategy>(j["strategies"], "strategies", [](const auto& v) {
        return parse_strategy(v.template get<std::string>());
      });
    if (j.contains("dims")) c.dims = parse_list<std::size_t>(j["dims"], "dims", as_size);
    if (j.contains("m_values"))
      c.m_values = parse_list<std::size_t>(j["m_values"], "m_values", as_size);
    c.samples = j.value("samples", c.samples);
    if (j.contains("bench")) {
      const auto& b = j["bench"];
      require(b.is_object(), "'bench' must be an object");
      static const std::set<std::string> bench_keys = {"sizes",   "tokens",  "code_dim",
                                                       "threads", "repeats", "batch_images"};
      for (const auto& [key, value] : b.items())
        if (!bench_keys.count(key)) throw ConfigError("experiment: unknown key 'bench." + key + "'");
      if (b.contains("sizes"))
        c.bench.sizes = parse_list<std::size_t>(b["sizes"], "bench.sizes", as_size);
      c.bench.tokens = b.value("tokens", c.bench.tokens);
      c.bench.code_dim = b.value("code_dim", c.bench.code_dim);
      c.bench.threads = b.value("threads", c.bench.threads);
      c.bench.repeats = b.value("repeats", c.bench.repeats);
      c.bench.batch_images = b.value("batch_images", c.bench.batch_images);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("experiment: ") + e.what());
  }
  c.validate();
  return c;
}

void ExperimentConfig::override_seed(std::uint64_t seed) {
  model.seed = seed;
  train.seed = seed;
}

ExperimentConfig load_experiment_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("experiment: cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ExperimentConfig::from_json(ss.str());
}

// ---------------------------------------------------------------------------
// Tables

std::string summary_csv(const std::vector<SummaryRow>& rows) {
  std::string out = std::string(kSummaryCsvHeader) + "\n";
  for (const SummaryRow& r : rows)
    out += r.variant + "," + std::to_string(r.codebook_size) + "," +
           std::to_string(r.code_dim) + "," + format_number(r.utilization) + "," +
           format_number(r.mse) + "," + format_number(r.psnr) + "," +
           format_number(r.ssim) + "," + std::to_string(r.seed) + "\n";
  return out;
}

std::string token_replace_csv(const std::vector<TokenReplaceRow>& rows) {
  std::string out = std::string(kTokenReplaceCsvHeader) + "\n";
  for (const TokenReplaceRow& r : rows)
    out += std::to_string(r.m) + "," + format_number(r.mse) + "," + format_number(r.psnr) +
           "," + format_number(r.ssim) + "\n";
  return out;
}

std::string bench_csv(const std::vector<BenchRow>& rows) {
  std::string out = std::string(kBenchCsvHeader) + "\n";
  for (const BenchRow& r : rows)
    out += std::to_string(r.codebook_size) + "," + std::to_string(r.tokens) + "," +
           std::to_string(r.code_dim) + "," + std::to_string(r.threads) + "," +
           format_number(r.quantize_seconds) + "," + format_number(r.forward_seconds) +
           "," + format_number(r.quantize_share) + "\n";
  return out;
}

// ---------------------------------------------------------------------------
// Token replacement

TokenReplaceResult token_replace(const Autoencoder& model, const Dataset& images,
                                 const std::vector<std::size_t>& m_values,
                                 std::size_t samples) {
  const QuantizerState& q = model.quantizer();
  const std::size_t n_codes = q.codebook.size();
  if (m_values.empty()) throw ConfigError("token-replace: m_values must not be empty");
  for (std::size_t m : m_values)
    if (m < 1 || m > n_codes)
      throw ConfigError("token-replace: M=" + std::to_string(m) + " outside [1, " +
                        std::to_string(n_codes) + "]");
  const ModelConfig& mc = model.config();
  if (images.size != mc.image_size || images.channels != mc.channels)
    throw ShapeError("token-replace: images do not match the model's image shape");
  const std::size_t max_m = *std::max_element(m_values.begin(), m_values.end());

  NoGradGuard guard;
  const Tensor effective = q.effective_codebook();
  auto empty_like = [&] {
    Dataset d;
    d.name = images.name;
    d.split = images.split;
    d.size = images.size;
    d.channels = images.channels;
    return d;
  };
  Dataset baseline = empty_like();
  std::vector<Dataset> replaced(m_values.size(), empty_like());
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < images.count(); start += kImageBatch) {
    idx.resize(std::min(kImageBatch, images.count() - start));
    std::iota(idx.begin(), idx.end(), start);
    const Tensor patches = model.patchify(images, idx);
    const Tensor feats = q.prepare_features(model.encode(patches));
    const KnnResult nn = knn(feats, effective, max_m, q.metric);
    const Dataset base = model.unpatchify(model.reconstruct(patches), images);
    baseline.pixels.insert(baseline.pixels.end(), base.pixels.begin(), base.pixels.end());
    for (std::size_t k = 0; k < m_values.size(); ++k) {
      TokenMap tokens;
      tokens.height = nn.rows;
      tokens.width = 1;
      tokens.codebook_size = n_codes;
      tokens.indices.resize(nn.rows);
      for (std::size_t r = 0; r < nn.rows; ++r) tokens.indices[r] = nn.index(r, m_values[k] - 1);
      const Dataset part = model.unpatchify(model.reconstruct_from(tokens), images);
      replaced[k].pixels.insert(replaced[k].pixels.end(), part.pixels.begin(),
                                part.pixels.end());
    }
  }

  TokenReplaceResult out;
  out.baseline_psnr = evaluate_quality(images, baseline).mean_psnr;
  std::vector<std::size_t> first(std::min(samples, images.count()));
  std::iota(first.begin(), first.end(), 0);
  out.originals = images.subset(first);
  for (std::size_t k = 0; k < m_values.size(); ++k) {
    const QualityReport qr = evaluate_quality(images, replaced[k]);
    out.rows.push_back({m_values[k], qr.mean_mse, qr.mean_psnr, qr.mean_ssim});
    out.samples.push_back(replaced[k].subset(first));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Benchmark

std::vector<BenchRow> bench_quantize(const ExperimentConfig& cfg) {
  cfg.validate();
  const BenchConfig& b = cfg.bench;
  const int saved_threads = kernels::max_threads();
  kernels::set_threads(b.threads);
  Rng rng(cfg.model.seed ^ 0xbe4c4ULL);
  Matrix z(b.tokens, b.code_dim);
  for (float& v : z.values) v = rng.uniform(-1.0f, 1.0f);

  ModelConfig mc = cfg.model;
  mc.variant = Variant::kLC;
  mc.code_dim = b.code_dim;
  const Dataset images = gen_synthetic(SyntheticStyle::kMixed, b.batch_images,
                                       mc.image_size, cfg.data.seed, mc.channels);
  std::vector<std::size_t> all(images.count());
  std::iota(all.begin(), all.end(), 0);
  FeatureSet shape_only;
  shape_only.rows = Matrix(1, mc.patch_dim());

  std::vector<BenchRow> rows;
  try {
    for (std::size_t n : b.sizes) {
      Matrix codebook(n, b.code_dim);
      for (float& v : codebook.values) v = rng.uniform(-1.0f, 1.0f);
      BenchRow row;
      row.codebook_size = n;
      row.tokens = b.tokens;
      row.code_dim = b.code_dim;
      row.threads = b.threads;
      row.quantize_seconds = 1e300;
      for (int r = 0; r < b.repeats; ++r) {
        const auto t0 = std::chrono::steady_clock::now();
        const TokenMap tm = quantize(z, codebook);
        row.quantize_seconds = std::min(row.quantize_seconds, seconds_since(t0));
        if (tm.size() != b.tokens) throw std::logic_error("bench: token count mismatch");
      }

      CodebookConfig cc = cfg.codebook;
      cc.size = n;
      cc.init = InitStrategy::kRandomInit;
      cc.projector = true;
      const Autoencoder model(mc, build_quantizer_from(mc, cc, shape_only));
      const Tensor patches = model.patchify(images, all);
      double forward = 1e300, quant = 1e300;
      for (int r = 0; r < b.repeats; ++r) {
        TapeScope scope;
        auto t0 = std::chrono::steady_clock::now();
        const ForwardResult fr = model.forward_loss(patches);
        forward = std::min(forward, seconds_since(t0));
        const Tensor enc = model.encode(patches);
        t0 = std::chrono::steady_clock::now();
        const QuantizeOutput qo = model.quantizer().apply(enc);
        quant = std::min(quant, seconds_since(t0));
        if (qo.tokens.size() != fr.tokens.size()) throw std::logic_error("bench: token mismatch");
      }
      row.forward_seconds = forward;
      row.quantize_share = forward > 0 ? std::min(1.0, quant / forward) : 0.0;
      rows.push_back(row);
    }
  } catch (...) {
    kernels::set_threads(saved_threads);
    throw;
  }
  kernels::set_threads(saved_threads);
  return rows;
}

// ---------------------------------------------------------------------------
// Runner

ExperimentRunner::ExperimentRunner(ExperimentConfig cfg, LogFn log)
    : cfg_(std::move(cfg)), log_(std::move(log)) {
  cfg_.validate();
}

const DatasetSplit& ExperimentRunner::split(const DatasetSpec& spec) {
  const std::string key = join_key({spec.to_json(), std::to_string(cfg_.train.eval_fraction),
                                    std::to_string(cfg_.train.seed)});
  auto it = splits_.find(key);
  if (it == splits_.end()) {
    if (log_) log_("generating " + spec.name + " (" + std::to_string(spec.count) + " images)");
    it = splits_.emplace(key, split_dataset(spec.generate(), cfg_.train.eval_fraction,
                                            cfg_.train.seed))
             .first;
  }
  return it->second;
}

const FeatureSet& ExperimentRunner::features(const DatasetSpec& spec, const CodebookConfig& cb,
                                             const ModelConfig& model) {
  const std::string key =
      join_key({spec.to_json(), source_name(cb.source), cb.feature_file,
                std::to_string(model.patch_size), std::to_string(model.seed)});
  auto it = features_.find(key);
  if (it == features_.end()) {
    const Dataset& train_set = split(spec).train;
    if (log_) log_("extracting " + source_name(cb.source) + " features of " + spec.name);
    it = features_.emplace(key, codebook_features(cb, model, train_set)).first;
  }
  return it->second;
}

const RunResult& ExperimentRunner::run(const std::string& label, const ModelConfig& model,
                                       const CodebookConfig& codebook,
                                       const DatasetSpec* source) {
  model.validate();
  codebook.validate();
  const std::string key =
      join_key({model.to_json(), codebook.to_json(), cfg_.data.to_json(),
                source ? source->to_json() : "", cfg_.train.to_json()});
  if (auto it = runs_.find(key); it != runs_.end()) return *it->second;

  const DatasetSplit& target = split(cfg_.data);
  const bool needs_features = model.variant == Variant::kLC ||
                              (model.variant == Variant::kGD && codebook.gd_projector);
  if (log_) log_("[" + label + "] building codebook N=" + std::to_string(codebook.size));
  QuantizerState quant =
      needs_features
          ? build_quantizer_from(model, codebook,
                                 features(source ? *source : cfg_.data, codebook, model))
          : build_quantizer_from(model, codebook, FeatureSet{});

  auto res = std::make_unique<RunResult>();
  res->model = Autoencoder(model, std::move(quant));
  res->checksum_before = res->model.quantizer().codebook.checksum();
  if (const auto& proj = res->model.quantizer().projector)
    res->projector_before.assign(proj->weight.data().begin(), proj->weight.data().end());
  const int epochs = cfg_.train.epochs;
  res->record = train_on(target.train, target.eval, cfg_.train, res->model,
                         [&](const EpochRow& row) {
                           if (!log_) return;
                           std::ostringstream os;
                           os << "[" << label << "] epoch " << row.epoch << "/" << epochs
                              << " loss " << format_number(row.total_loss) << " util "
                              << format_number(row.cumulative_utilization) << " eval_mse "
                              << format_number(row.eval_mse) << " ("
                              << format_number(row.wall_seconds) << " s)";
                           log_(os.str());
                         });

  SummaryRow& s = res->summary;
  s.variant = label;
  s.codebook_size = res->model.quantizer().codebook.size();
  s.code_dim = res->model.quantizer().code_dim();
  s.seed = model.seed;
  if (!res->record.rows.empty()) {
    const EpochRow& last = res->record.rows.back();
    s.utilization = last.cumulative_utilization;
    s.mse = last.eval_mse;
    s.psnr = last.eval_psnr;
    s.ssim = last.eval_ssim;
  } else {
    const EvalResult e = evaluate(res->model, target.eval);
    s.utilization = e.utilization.rate();
    s.mse = e.mse;
    s.psnr = e.psnr;
    s.ssim = e.ssim;
  }
  return *runs_.emplace(key, std::move(res)).first->second;
}

std::vector<const RunResult*> ExperimentRunner::completed_runs() const {
  std::vector<const RunResult*> out;
  for (const auto& [key, run] : runs_) out.push_back(run.get());
  return out;
}

namespace {
SummaryRow relabel(SummaryRow row, std::string label) {
  row.variant = std::move(label);
  return row;
}
}  // namespace

const RunResult& ExperimentRunner::train() {
  return run(variant_name(cfg_.model.variant), cfg_.model, cfg_.codebook);
}

std::vector<SummaryRow> ExperimentRunner::sweep_codebook() {
  std::vector<SummaryRow> rows;
  for (Variant v : cfg_.variants) {
    for (std::size_t n : cfg_.sizes) {
      ModelConfig m = cfg_.model;
      m.variant = v;
      CodebookConfig cb = cfg_.codebook;
      cb.size = n;
      rows.push_back(relabel(run(variant_name(v), m, cb).summary, variant_name(v)));
    }
  }
  return rows;
}

std::vector<SummaryRow> ExperimentRunner::ablate_init() {
  std::vector<SummaryRow> rows;
  for (InitStrategy s : cfg_.strategies) {
    ModelConfig m = cfg_.model;
    m.variant = Variant::kLC;
    CodebookConfig cb = cfg_.codebook;
    cb.init = s;
    cb.projector = true;
    const std::string label = "LC/" + strategy_name(s);
    rows.push_back(relabel(run(label, m, cb).summary, label));
  }
  return rows;
}

std::vector<SummaryRow> ExperimentRunner::transfer() {
  ModelConfig m = cfg_.model;
  m.variant = Variant::kLC;
  CodebookConfig cb = cfg_.codebook;
  cb.projector = true;
  const std::string same = "LC/" + cfg_.data.name + "->" + cfg_.data.name;
  const std::string cross = "LC/" + cfg_.source_data.name + "->" + cfg_.data.name;
  std::vector<SummaryRow> rows;
  rows.push_back(relabel(run(same, m, cb).summary, same));
  rows.push_back(relabel(run(cross, m, cb, &cfg_.source_data).summary, cross));
  return rows;
}

std::vector<SummaryRow> ExperimentRunner::ablate_projector() {
  std::vector<SummaryRow> rows;
  ModelConfig lc = cfg_.model;
  lc.variant = Variant::kLC;
  CodebookConfig bare = cfg_.codebook;
  bare.projector = false;
  rows.push_back(relabel(run("LC/static+no-projector", lc, bare).summary,
                         "LC/static+no-projector"));
  ModelConfig gd = cfg_.model;
  gd.variant = Variant::kGD;
  CodebookConfig trainable = cfg_.codebook;
  trainable.gd_projector = true;
  rows.push_back(relabel(run("GD/trainable+projector", gd, trainable).summary,
                         "GD/trainable+projector"));
  CodebookConfig with = cfg_.codebook;
  with.projector = true;
  rows.push_back(
      relabel(run("LC/static+projector", lc, with).summary, "LC/static+projector"));
  return rows;
}

std::vector<SummaryRow> ExperimentRunner::ablate_dim() {
  std::vector<std::size_t> dims = cfg_.dims;
  std::sort(dims.begin(), dims.end());
  dims.erase(std::unique(dims.begin(), dims.end()), dims.end());
  std::vector<SummaryRow> rows;
  for (std::size_t d : dims) {
    ModelConfig m = cfg_.model;
    m.variant = Variant::kLC;
    m.code_dim = d;
    CodebookConfig cb = cfg_.codebook;
    cb.projector = true;
    rows.push_back(relabel(run("LC", m, cb).summary, "LC"));
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Output

void OutputBundle::add(const std::string& relative, std::string content) {
  files_[relative] = std::vector<std::uint8_t>(content.begin(), content.end());
}

void OutputBundle::add(const std::string& relative, std::vector<std::uint8_t> content) {
  files_[relative] = std::move(content);
}

namespace {
fs::path normalized_dir(const fs::path& dir) {
  fs::path d = dir.lexically_normal();
  if (d.filename().empty()) d = d.parent_path();
  if (d.empty()) throw ConfigError("output: --out must name a directory");
  return d;
}
}  // namespace

void check_output_dir(const fs::path& dir, bool force) {
  const fs::path d = normalized_dir(dir);
  if (fs::exists(d) && !force)
    throw ConfigError("output: " + d.string() + " exists; pass --force to replace it");
}

void OutputBundle::publish(const fs::path& dir, bool force) const {
  const fs::path target = normalized_dir(dir);
  check_output_dir(target, force);
  fs::path parent = target.parent_path();
  if (parent.empty()) parent = ".";
  fs::create_directories(parent);
  const fs::path tmp =
      parent / ("." + target.filename().string() + ".tmp-" + std::to_string(::getpid()));
  fs::remove_all(tmp);
  try {
    fs::create_directories(tmp);
    for (const auto& [name, bytes] : files_) {
      const fs::path p = tmp / name;
      fs::create_directories(p.parent_path());
      std::ofstream out(p, std::ios::binary);
      out.write(reinterpret_cast<const char*>(bytes.data()),
                static_cast<std::streamsize>(bytes.size()));
      if (!out) throw std::runtime_error("output: cannot write " + p.string());
    }
    if (fs::exists(target)) fs::remove_all(target);
    fs::rename(tmp, target);
  } catch (...) {
    std::error_code ec;
    fs::remove_all(tmp, ec);
    throw;
  }
}

// ---------------------------------------------------------------------------
// Commands

OutputBundle run_command(const CommandOptions& opts, LogFn log) {
  if (std::find(std::begin(kCommands), std::end(kCommands), opts.command) ==
      std::end(kCommands))
    throw ConfigError("unknown command '" + opts.command + "'");
  ExperimentConfig cfg = opts.config ? load_experiment_config(*opts.config) : ExperimentConfig{};
  if (opts.seed) cfg.override_seed(*opts.seed);
  cfg.validate();
  if (opts.command == "token-replace" && !opts.checkpoint)
    throw ConfigError("token-replace: --checkpoint is required");
  check_output_dir(opts.out, opts.force);

  OutputBundle out;
  out.add("config.json", cfg.to_json());
  const std::string& cmd = opts.command;
  if (cmd == "bench-quantize") {
    out.add("bench.csv", bench_csv(bench_quantize(cfg)));
    return out;
  }
  ExperimentRunner runner(cfg, log);
  if (cmd == "train") {
    const RunResult& r = runner.train();
    Json j = Json::parse(run_json(r.record));
    j["experiment"] = Json::parse(cfg.to_json());
    out.add("run.csv", run_csv(r.record));
    out.add("run.json", j.dump(2) + "\n");
    out.add("model.vqmd", encode_checkpoint(r.model));
    out.add("code_activity.csv", code_activity_csv(r.record.cumulative_counts));
    out.add("summary.csv", summary_csv({r.summary}));
  } else if (cmd == "sweep-codebook") {
    out.add("summary.csv", summary_csv(runner.sweep_codebook()));
  } else if (cmd == "ablate-init") {
    out.add("summary.csv", summary_csv(runner.ablate_init()));
  } else if (cmd == "transfer") {
    out.add("summary.csv", summary_csv(runner.transfer()));
  } else if (cmd == "ablate-projector") {
    out.add("summary.csv", summary_csv(runner.ablate_projector()));
  } else if (cmd == "ablate-dim") {
    out.add("summary.csv", summary_csv(runner.ablate_dim()));
  } else if (cmd == "token-replace") {
    const Autoencoder model = load_checkpoint(*opts.checkpoint);
    const TokenReplaceResult r =
        token_replace(model, runner.split(cfg.data).eval, cfg.m_values, cfg.samples);
    out.add("token_replace.csv", token_replace_csv(r.rows));
    Json j;
    j["baseline_psnr"] = r.baseline_psnr;
    j["images"] = runner.split(cfg.data).eval.count();
    out.add("token_replace.json", j.dump(2) + "\n");
    for (std::size_t i = 0; i < r.originals.count(); ++i) {
      const std::string id = std::to_string(i);
      out.add("samples/original_" + id + ".ppm", encode_ppm(r.originals.image_copy(i)));
      for (std::size_t k = 0; k < r.rows.size(); ++k)
        out.add("samples/m" + std::to_string(r.rows[k].m) + "_" + id + ".ppm",
                encode_ppm(r.samples[k].image_copy(i)));
    }
  }
  return out;
}

}  // namespace vqlab
