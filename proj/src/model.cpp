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
#include "vqlab/model.hpp"

#include <bit>
#include <cmath>
#include <set>

#include <json.hpp>

#include "vqlab/binary_io.hpp"
#include "vqlab/error.hpp"

namespace vqlab {

namespace {

constexpr std::uint16_t kCheckpointVersion = 1;

void write_f64(io::Writer& w, double v) { w.u64(std::bit_cast<std::uint64_t>(v)); }
double read_f64(io::Reader& r) { return std::bit_cast<double>(r.u64()); }

void write_tensor(io::Writer& w, const Tensor& t) {
  w.u32(static_cast<std::uint32_t>(t.rows()));
  w.u32(static_cast<std::uint32_t>(t.cols()));
  w.f32s(t.data());
}

Tensor read_tensor(io::Reader& r, std::size_t rows, std::size_t cols,
                   const std::string& name) {
  const std::size_t got_r = r.u32(), got_c = r.u32();
  if (got_r != rows || got_c != cols)
    throw FormatError("checkpoint: tensor " + name + " is " + std::to_string(got_r) +
                      "x" + std::to_string(got_c) + ", expected " +
                      std::to_string(rows) + "x" + std::to_string(cols));
  return Tensor::matrix(rows, cols, r.f32s(rows * cols));
}

std::vector<std::size_t> layer_widths(const ModelConfig& cfg, std::size_t latent) {
  std::vector<std::size_t> w = {cfg.patch_dim()};
  w.insert(w.end(), cfg.enc_hidden.begin(), cfg.enc_hidden.end());
  w.push_back(latent);
  return w;
}

}  // namespace

std::size_t ModelConfig::latent_dim() const {
  return variant == Variant::kFC || variant == Variant::kLC ? code_dim : feature_dim;
}

void ModelConfig::validate() const {
  if (patch_size == 0 || image_size == 0 || image_size % patch_size != 0)
    throw ConfigError("model: image_size " + std::to_string(image_size) +
                      " must be a positive multiple of patch_size " +
                      std::to_string(patch_size));
  if (channels != 1 && channels != 3) throw ConfigError("model: channels must be 1 or 3");
  if (feature_dim == 0 || code_dim == 0)
    throw ConfigError("model: feature_dim and code_dim must be >= 1");
  if (code_dim > feature_dim)
    throw ConfigError("model: code_dim " + std::to_string(code_dim) +
                      " exceeds feature_dim " + std::to_string(feature_dim));
  for (auto h : enc_hidden)
    if (h == 0) throw ConfigError("model: enc_hidden widths must be >= 1");
  if (!(alpha > 0.0f) || !(beta > 0.0f))
    throw ConfigError("model: alpha and beta must be > 0");
  if (!(leaky_slope >= 0.0f && leaky_slope < 1.0f))
    throw ConfigError("model: leaky_slope must lie in [0, 1)");
}

std::string ModelConfig::to_json() const {
  nlohmann::ordered_json j;
  j["image_size"] = image_size;
  j["patch_size"] = patch_size;
  j["channels"] = channels;
  j["enc_hidden"] = enc_hidden;
  j["feature_dim"] = feature_dim;
  j["code_dim"] = code_dim;
  j["variant"] = variant_name(variant);
  j["alpha"] = alpha;
  j["beta"] = beta;
  j["leaky_slope"] = leaky_slope;
  j["seed"] = seed;
  return j.dump();
}

ModelConfig ModelConfig::from_json(const std::string& text) {
  ModelConfig c;
  try {
    const auto j = nlohmann::json::parse(text);
    static const std::set<std::string> known = {
        "image_size", "patch_size", "channels", "enc_hidden", "feature_dim", "code_dim",
        "variant",    "alpha",      "beta",     "leaky_slope", "seed"};
    for (const auto& [k, _] : j.items())
      if (!known.count(k)) throw ConfigError("model: unknown field \"" + k + "\"");
    c.image_size = j.value("image_size", c.image_size);
    c.patch_size = j.value("patch_size", c.patch_size);
    c.channels = j.value("channels", c.channels);
    c.enc_hidden = j.value("enc_hidden", c.enc_hidden);
    c.feature_dim = j.value("feature_dim", c.feature_dim);
    c.code_dim = j.value("code_dim", c.code_dim);
    if (j.contains("variant")) c.variant = parse_variant(j.at("variant").get<std::string>());
    c.alpha = j.value("alpha", c.alpha);
    c.beta = j.value("beta", c.beta);
    c.leaky_slope = j.value("leaky_slope", c.leaky_slope);
    c.seed = j.value("seed", c.seed);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model: ") + e.what());
  }
  c.validate();
  return c;
}

Linear make_linear(std::size_t in, std::size_t out, float slope, Rng& rng) {
  const double gain = std::sqrt(2.0 / (1.0 + double(slope) * slope));
  const float bound = static_cast<float>(gain * std::sqrt(3.0 / double(in)));
  std::vector<float> w(in * out);
  for (auto& v : w) v = rng.uniform(-bound, bound);
  Linear l{Tensor::matrix(in, out, std::move(w)), Tensor({out}, 0.0f)};
  l.weight.set_requires_grad(true);
  l.bias.set_requires_grad(true);
  return l;
}

Autoencoder::Autoencoder(ModelConfig cfg, QuantizerState quantizer)
    : cfg_(std::move(cfg)), quant_(std::move(quantizer)) {
  cfg_.validate();
  quant_.validate();
  if (quant_.variant != cfg_.variant)
    throw ConfigError("model: config variant " + variant_name(cfg_.variant) +
                      " but quantizer variant " + variant_name(quant_.variant));
  const std::size_t latent = quant_.code_dim();
  Rng rng(cfg_.seed);
  const auto widths = layer_widths(cfg_, latent);
  for (std::size_t i = 0; i + 1 < widths.size(); ++i)
    encoder_.push_back(make_linear(widths[i], widths[i + 1], cfg_.leaky_slope, rng));
  for (std::size_t i = widths.size() - 1; i > 0; --i)
    decoder_.push_back(make_linear(widths[i], widths[i - 1], cfg_.leaky_slope, rng));
}

Tensor Autoencoder::patchify(const Dataset& ds, std::span<const std::size_t> images) const {
  if (ds.size != cfg_.image_size || ds.channels != cfg_.channels)
    throw ShapeError("model: dataset images are " + std::to_string(ds.size) + "x" +
                     std::to_string(ds.size) + "x" + std::to_string(ds.channels) +
                     ", model expects " + std::to_string(cfg_.image_size) + "x" +
                     std::to_string(cfg_.image_size) + "x" + std::to_string(cfg_.channels));
  const std::size_t g = cfg_.grid(), pd = cfg_.patch_dim();
  std::vector<float> out(images.size() * g * g * pd);
  for (std::size_t b = 0; b < images.size(); ++b)
    for (std::size_t py = 0; py < g; ++py)
      for (std::size_t px = 0; px < g; ++px)
        extract_patch(ds.image(images[b]), ds.size, ds.channels, cfg_.patch_size, py, px,
                      out.data() + ((b * g + py) * g + px) * pd);
  return Tensor::matrix(images.size() * g * g, pd, std::move(out));
}

Dataset Autoencoder::unpatchify(const Tensor& tokens, const Dataset& like) const {
  const std::size_t g = cfg_.grid(), pd = cfg_.patch_dim(), per = g * g;
  if (tokens.cols() != pd || tokens.rows() % per != 0)
    throw ShapeError("model: cannot unpatchify " + shape_str(tokens.shape()));
  Dataset out;
  out.name = like.name;
  out.seed = like.seed;
  out.split = like.split;
  out.size = cfg_.image_size;
  out.channels = cfg_.channels;
  const std::size_t n = tokens.rows() / per;
  out.pixels.resize(n * out.image_numel());
  const auto src = tokens.data();
  for (std::size_t b = 0; b < n; ++b) {
    std::span<float> img(out.pixels.data() + b * out.image_numel(), out.image_numel());
    for (std::size_t py = 0; py < g; ++py)
      for (std::size_t px = 0; px < g; ++px)
        place_patch(img, out.size, out.channels, cfg_.patch_size, py, px,
                    src.data() + ((b * g + py) * g + px) * pd);
  }
  return out;
}

Tensor Autoencoder::encode(const Tensor& patches) const {
  if (patches.dim() != 2 || patches.cols() != cfg_.patch_dim())
    throw ShapeError("encode: expected rows of width " + std::to_string(cfg_.patch_dim()) +
                     ", got " + shape_str(patches.shape()));
  Tensor h = patches;
  for (std::size_t i = 0; i < encoder_.size(); ++i) {
    h = encoder_[i].forward(h);
    if (i + 1 < encoder_.size()) h = leaky_relu(h, cfg_.leaky_slope);
  }
  return h;
}

Tensor Autoencoder::decode(const Tensor& codes) const {
  const std::size_t in = decoder_.front().weight.rows();
  if (codes.dim() != 2 || codes.cols() != in)
    throw ShapeError("decode: expected rows of width " + std::to_string(in) + ", got " +
                     shape_str(codes.shape()));
  Tensor h = codes;
  for (std::size_t i = 0; i < decoder_.size(); ++i) {
    h = decoder_[i].forward(h);
    h = i + 1 < decoder_.size() ? leaky_relu(h, cfg_.leaky_slope) : sigmoid(h);
  }
  return h;
}

ForwardResult Autoencoder::forward_loss(const Tensor& patches, const TokenMap* fixed) const {
  ForwardResult r;
  r.z = encode(patches);
  const QuantizeOutput q = fixed ? quant_.apply_with_tokens(r.z, *fixed) : quant_.apply(r.z);
  r.x_hat = decode(straight_through(q.features, q.z_q));
  const Tensor recon = mse(r.x_hat, patches);
  const Tensor ql =
      quantization_loss(quant_.variant, q.features, q.z_q, cfg_.alpha, cfg_.beta);
  r.loss = recon + ql;
  r.recon_loss = recon.item_wide();
  r.quant_loss = ql.item_wide();
  r.tokens = q.tokens;
  r.tokens.height = r.tokens.width = cfg_.grid();
  return r;
}

Tensor Autoencoder::reconstruct(const Tensor& patches) const {
  NoGradGuard guard;
  const QuantizeOutput q = quant_.apply(encode(patches));
  return decode(q.z_q);
}

Tensor Autoencoder::reconstruct_from(const TokenMap& tokens) const {
  NoGradGuard guard;
  return decode(gather_rows(quant_.effective_codebook(), tokens.indices));
}

std::vector<NamedTensor> Autoencoder::parameters() const {
  std::vector<NamedTensor> out;
  for (std::size_t i = 0; i < encoder_.size(); ++i) {
    out.push_back({"encoder." + std::to_string(i) + ".weight", encoder_[i].weight});
    out.push_back({"encoder." + std::to_string(i) + ".bias", encoder_[i].bias});
  }
  for (std::size_t i = 0; i < decoder_.size(); ++i) {
    out.push_back({"decoder." + std::to_string(i) + ".weight", decoder_[i].weight});
    out.push_back({"decoder." + std::to_string(i) + ".bias", decoder_[i].bias});
  }
  if (quant_.projector) {
    out.push_back({"projector.weight", quant_.projector->weight});
    if (quant_.projector->use_bias) out.push_back({"projector.bias", quant_.projector->bias});
  }
  if (quant_.codebook.entries.requires_grad())
    out.push_back({"codebook.entries", quant_.codebook.entries});
  return out;
}

Autoencoder Autoencoder::clone() const {
  Autoencoder m = *this;
  auto copy = [](Tensor& t) {
    if (!t.defined()) return;
    const bool grad = t.requires_grad();
    t = t.clone();
    if (grad) t.set_requires_grad(true);
  };
  for (auto& l : m.encoder_) copy(l.weight), copy(l.bias);
  for (auto& l : m.decoder_) copy(l.weight), copy(l.bias);
  m.quant_.codebook = quant_.codebook.clone();
  if (m.quant_.projector) {
    copy(m.quant_.projector->weight);
    copy(m.quant_.projector->bias);
  }
  return m;
}

std::vector<std::uint8_t> encode_checkpoint(const Autoencoder& model) {
  const QuantizerState& q = model.quantizer();
  io::Writer w;
  w.magic("VQMD");
  w.u16(kCheckpointVersion);
  w.str(model.config().to_json());
  w.u8(static_cast<std::uint8_t>(q.metric));
  w.u8(q.normalize ? 1 : 0);
  w.u8(q.projector_ablated ? 1 : 0);
  const auto cb = encode_codebook(q.codebook);
  w.u32(static_cast<std::uint32_t>(cb.size()));
  w.bytes(cb.data(), cb.size());
  w.u8(q.projector ? (q.projector->use_bias ? 2 : 1) : 0);
  if (q.projector) {
    write_tensor(w, q.projector->weight);
    if (q.projector->use_bias) w.f32s(q.projector->bias.data());
  }
  w.u8(q.ema ? 1 : 0);
  if (q.ema) {
    write_f64(w, q.ema->gamma);
    write_f64(w, q.ema->eps);
    for (double v : q.ema->counts) write_f64(w, v);
    for (double v : q.ema->sums) write_f64(w, v);
  }
  const auto& layers = model.encoder_layers();
  const auto& dec = model.decoder_layers();
  w.u32(static_cast<std::uint32_t>(layers.size() + dec.size()));
  for (const auto* group : {&layers, &dec})
    for (const auto& l : *group) {
      write_tensor(w, l.weight);
      w.f32s(l.bias.data());
    }
  return w.take();
}

Autoencoder decode_checkpoint(std::span<const std::uint8_t> bytes) {
  io::Reader r(bytes, "checkpoint");
  r.expect_magic("VQMD");
  const auto version = r.u16();
  if (version != kCheckpointVersion)
    throw FormatError("checkpoint: version " + std::to_string(version) + " unsupported");
  ModelConfig cfg;
  try {
    cfg = ModelConfig::from_json(r.str());
  } catch (const ConfigError& e) {
    throw FormatError(std::string("checkpoint: bad config: ") + e.what());
  }
  QuantizerState q;
  q.variant = cfg.variant;
  q.alpha = cfg.alpha;
  q.beta = cfg.beta;
  const auto metric = r.u8();
  if (metric > 1) throw FormatError("checkpoint: unknown metric tag");
  q.metric = static_cast<Metric>(metric);
  q.normalize = r.u8() != 0;
  q.projector_ablated = r.u8() != 0;
  q.codebook = decode_codebook(r.bytes(r.u32()));
  if (q.variant == Variant::kGD || q.variant == Variant::kFC)
    q.codebook.entries.set_requires_grad(true);
  const auto proj = r.u8();
  if (proj > 2) throw FormatError("checkpoint: unknown projector tag");
  if (proj) {
    Projector p;
    p.use_bias = proj == 2;
    const std::size_t in = q.codebook.dim();
    const std::size_t rows = r.u32();
    const std::size_t cols = r.u32();
    if (rows != in || cols == 0) throw FormatError("checkpoint: projector does not match codebook");
    p.weight = Tensor::matrix(in, cols, r.f32s(in * cols));
    p.weight.set_requires_grad(true);
    if (p.use_bias) {
      p.bias = Tensor({cols}, r.f32s(cols));
      p.bias.set_requires_grad(true);
    }
    q.projector = std::move(p);
  }
  if (r.u8()) {
    EmaStats s;
    s.gamma = read_f64(r);
    s.eps = read_f64(r);
    s.counts.resize(q.codebook.size());
    s.sums.resize(q.codebook.size() * q.codebook.dim());
    for (auto& v : s.counts) v = read_f64(r);
    for (auto& v : s.sums) v = read_f64(r);
    q.ema = std::move(s);
  }
  Autoencoder model(cfg, std::move(q));
  const std::size_t layers = r.u32();
  auto params = model.parameters();
  if (layers != model.encoder_layers().size() + model.decoder_layers().size())
    throw FormatError("checkpoint: layer count does not match config");
  for (std::size_t i = 0; i < 2 * layers; i += 2) {
    Tensor& w = params[i].tensor;
    const Tensor loaded = read_tensor(r, w.rows(), w.cols(), params[i].name);
    std::copy(loaded.data().begin(), loaded.data().end(), w.mutable_data().begin());
    const auto b = r.f32s(params[i + 1].tensor.numel());
    std::copy(b.begin(), b.end(), params[i + 1].tensor.mutable_data().begin());
  }
  r.expect_end();
  return model;
}

void save_checkpoint(const Autoencoder& model, const std::filesystem::path& path) {
  io::write_file(path, encode_checkpoint(model));
}

Autoencoder load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(io::read_file(path));
}

}  // namespace vqlab
