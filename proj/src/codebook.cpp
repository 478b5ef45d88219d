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
#include "vqlab/codebook.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

#include "vqlab/binary_io.hpp"
#include "vqlab/error.hpp"
#include "vqlab/random.hpp"

namespace vqlab {

namespace {

constexpr char kMagic[] = "VQCB";
constexpr std::uint16_t kVersion = 1;
constexpr std::uint16_t kFrozenFlag = 1;

Codebook from_matrix(Matrix m, InitStrategy s, const std::string& dataset,
                     std::uint64_t seed) {
  Codebook cb;
  cb.entries = m.to_tensor();
  cb.init_strategy = s;
  cb.source_dataset = dataset;
  cb.seed = seed;
  return cb;
}

FeatureSet subsample(const FeatureSet& features, std::size_t max_points,
                     std::uint64_t seed) {
  if (max_points == 0 || features.count() <= max_points) return features;
  Rng rng(seed ^ 0x5eedULL);
  std::vector<std::size_t> idx(features.count());
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t i = 0; i < max_points; ++i)
    std::swap(idx[i], idx[i + rng.below(idx.size() - i)]);
  idx.resize(max_points);
  std::sort(idx.begin(), idx.end());
  FeatureSet out = features;
  out.rows = Matrix(max_points, features.dim());
  for (std::size_t i = 0; i < max_points; ++i)
    std::copy_n(features.rows.row(idx[i]), features.dim(), out.rows.row(i));
  return out;
}

}  // namespace

std::string strategy_name(InitStrategy s) {
  switch (s) {
    case InitStrategy::kRandomInit: return "random-init";
    case InitStrategy::kRandomSelection: return "random-selection";
    case InitStrategy::kKMeans: return "kmeans";
  }
  return "kmeans";
}

InitStrategy parse_strategy(const std::string& name) {
  if (name == "random-init") return InitStrategy::kRandomInit;
  if (name == "random-selection") return InitStrategy::kRandomSelection;
  if (name == "kmeans") return InitStrategy::kKMeans;
  throw ConfigError("init strategy: expected random-init, random-selection or "
                    "kmeans, got \"" + name + "\"");
}

std::uint64_t Codebook::checksum() const { return io::checksum(entries.data()); }

void Codebook::validate() const {
  if (!entries.defined() || entries.dim() != 2 || entries.rows() == 0 ||
      entries.cols() == 0)
    throw ShapeError("codebook: entries must be a non-empty N x D matrix");
  for (float v : entries.data())
    if (!std::isfinite(v)) throw NumericError("codebook: non-finite entry");
}

Codebook Codebook::clone() const {
  Codebook out = *this;
  out.entries = entries.clone();
  if (entries.requires_grad()) out.entries.set_requires_grad(true);
  return out;
}

std::vector<Tensor> Projector::parameters() const {
  if (use_bias) return {weight, bias};
  return {weight};
}

void Projector::validate() const {
  if (!weight.defined() || weight.dim() != 2 || weight.rows() == 0 || weight.cols() == 0)
    throw ShapeError("projector: weight must be a non-empty D x D' matrix");
  if (use_bias && (!bias.defined() || bias.numel() != weight.cols()))
    throw ShapeError("projector: bias length must equal D'");
}

Projector make_projector(std::size_t in_dim, std::size_t out_dim,
                         std::uint64_t seed, bool use_bias) {
  if (in_dim == 0 || out_dim == 0)
    throw ShapeError("projector: dimensions must be positive");
  Rng rng(seed);
  const float bound = 1.0f / std::sqrt(float(in_dim));
  std::vector<float> w(in_dim * out_dim);
  for (auto& v : w) v = rng.uniform(-bound, bound);
  Projector p;
  p.use_bias = use_bias;
  p.weight = Tensor({in_dim, out_dim}, std::move(w));
  p.weight.set_requires_grad(true);
  if (use_bias) {
    std::vector<float> b(out_dim);
    for (auto& v : b) v = rng.uniform(-bound, bound);
    p.bias = Tensor({out_dim}, std::move(b));
    p.bias.set_requires_grad(true);
  }
  return p;
}

Codebook init_random(std::size_t n, std::size_t d, std::uint64_t seed) {
  if (n == 0 || d == 0) throw ShapeError("init_random: N and D must be >= 1");
  Rng rng(seed);
  const float bound = 1.0f / float(n);
  Matrix m(n, d);
  for (auto& v : m.values) v = rng.uniform(-bound, bound);
  return from_matrix(std::move(m), InitStrategy::kRandomInit, "", seed);
}

Codebook init_random_selection(const FeatureSet& features, std::size_t n,
                               std::uint64_t seed) {
  features.validate();
  if (n == 0 || n > features.count())
    throw std::invalid_argument("init_random_selection: N = " + std::to_string(n) +
                                " but only " + std::to_string(features.count()) +
                                " feature rows");
  Rng rng(seed);
  std::vector<std::size_t> idx(features.count());
  std::iota(idx.begin(), idx.end(), 0);
  Matrix m(n, features.dim());
  for (std::size_t i = 0; i < n; ++i) {
    std::swap(idx[i], idx[i + rng.below(idx.size() - i)]);
    std::copy_n(features.rows.row(idx[i]), features.dim(), m.row(i));
  }
  return from_matrix(std::move(m), InitStrategy::kRandomSelection,
                     features.dataset_id, seed);
}

Codebook init_kmeans(const FeatureSet& features, std::size_t n,
                     std::uint64_t seed, const KMeansInitOptions& opts) {
  features.validate();
  if (n == 0 || n > features.count())
    throw std::invalid_argument("init_kmeans: N = " + std::to_string(n) +
                                " but only " + std::to_string(features.count()) +
                                " feature rows");
  const FeatureSet pool = subsample(features, std::max(opts.max_points, n), seed);
  ClusterResult r =
      opts.minibatch
          ? minibatch_kmeans_fit(pool, n, opts.batch, opts.steps, seed)
          : kmeans_fit(pool, n, opts.max_iters, opts.tol, seed);
  return from_matrix(std::move(r.centers), InitStrategy::kKMeans,
                     features.dataset_id, seed);
}

Tensor project(const Codebook& codebook, const Projector& projector) {
  projector.validate();
  if (codebook.dim() != projector.in_dim())
    throw ShapeError("project: codebook width " + std::to_string(codebook.dim()) +
                     " != projector input " + std::to_string(projector.in_dim()));
  Tensor out = matmul(codebook.entries, projector.weight);
  return projector.use_bias ? add_rowwise(out, projector.bias) : out;
}

std::vector<std::uint8_t> encode_codebook(const Codebook& cb) {
  cb.validate();
  io::Writer w;
  w.magic(std::string_view(kMagic, 4));
  w.u16(kVersion);
  w.u16(cb.frozen ? kFrozenFlag : 0);
  w.u32(static_cast<std::uint32_t>(cb.size()));
  w.u32(static_cast<std::uint32_t>(cb.dim()));
  w.u8(static_cast<std::uint8_t>(cb.init_strategy));
  w.u64(cb.seed);
  w.str(cb.source_dataset);
  w.f32s(cb.entries.data());
  return w.take();
}

Codebook decode_codebook(std::span<const std::uint8_t> bytes) {
  io::Reader r(bytes, "codebook file");
  r.expect_magic(std::string_view(kMagic, 4));
  const std::uint16_t version = r.u16();
  if (version != kVersion)
    throw FormatError("codebook file: version " + std::to_string(version) +
                      " unsupported (expected " + std::to_string(kVersion) + ")");
  const std::uint16_t flags = r.u16();
  const std::uint32_t n = r.u32(), d = r.u32();
  const std::uint8_t tag = r.u8();
  if (tag > static_cast<std::uint8_t>(InitStrategy::kKMeans))
    throw FormatError("codebook file: unknown init strategy tag " + std::to_string(tag));
  Codebook cb;
  cb.seed = r.u64();
  cb.source_dataset = r.str();
  if (n == 0 || d == 0) throw FormatError("codebook file: empty codebook");
  cb.entries = Tensor({n, d}, r.f32s(std::uint64_t(n) * d));
  r.expect_end();
  cb.frozen = (flags & kFrozenFlag) != 0;
  cb.init_strategy = static_cast<InitStrategy>(tag);
  cb.validate();
  return cb;
}

void save_codebook(const Codebook& cb, const std::filesystem::path& path) {
  io::write_file(path, encode_codebook(cb));
}

Codebook load_codebook(const std::filesystem::path& path) {
  return decode_codebook(io::read_file(path));
}

}  // namespace vqlab
