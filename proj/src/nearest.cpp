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
#include "vqlab/nearest.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <stdexcept>
#include <utility>

#include "vqlab/error.hpp"

namespace vqlab {

namespace {

constexpr std::size_t kRowTile = 32;
constexpr std::size_t kLane = 16;
constexpr std::size_t kPackedBytes = 32768;
constexpr std::size_t kPruneAt = 512;
constexpr double kUnitRoundoff = 0x1p-24;
constexpr float kInf = std::numeric_limits<float>::infinity();

using Candidate = std::pair<float, std::int32_t>;

// Sixteen float lanes; one register with AVX-512, split by the compiler
// otherwise.
using Lanes = float __attribute__((vector_size(64)));
constexpr std::size_t kGroup = 4;

inline Lanes load(const float* p) {
  Lanes v;
  std::memcpy(&v, p, sizeof(v));
  return v;
}
inline void store(float* p, Lanes v) { std::memcpy(p, &v, sizeof(v)); }
inline Lanes splat(float x) {
  Lanes v;
  for (std::size_t i = 0; i < kLane; ++i) v[i] = x;
  return v;
}
inline float hmin(Lanes v) {
  float m = v[0];
  for (std::size_t i = 1; i < kLane; ++i) m = std::min(m, v[i]);
  return m;
}

double row_norm(const float* z, std::size_t d) {
  double acc = 0.0;
  for (std::size_t p = 0; p < d; ++p) acc += double(z[p]) * double(z[p]);
  return std::sqrt(acc);
}

void check_codebook(MatrixView codebook) {
  if (codebook.rows == 0) throw ShapeError("nearest: empty codebook");
  if (codebook.cols == 0) throw ShapeError("nearest: zero-width codebook");
  for (float v : codebook.span())
    if (!std::isfinite(v)) throw NumericError("nearest: non-finite codebook entry");
}

void check_pair(MatrixView features, MatrixView codebook) {
  check_codebook(codebook);
  if (features.cols != codebook.cols)
    throw ShapeError("nearest: feature width " + std::to_string(features.cols) +
                     " != codebook width " + std::to_string(codebook.cols));
}

bool by_distance_then_index(const std::pair<double, std::int32_t>& a,
                            const std::pair<double, std::int32_t>& b) {
  return a.first != b.first ? a.first < b.first : a.second < b.second;
}

}  // namespace

std::string metric_name(Metric m) { return m == Metric::kL2 ? "l2" : "cosine"; }

Metric parse_metric(const std::string& name) {
  if (name == "l2") return Metric::kL2;
  if (name == "cosine") return Metric::kCosine;
  throw ConfigError("metric: expected \"l2\" or \"cosine\", got \"" + name + "\"");
}

double exact_distance(const float* z, const float* b, std::size_t dim,
                      Metric metric) {
  if (metric == Metric::kL2) {
    double acc = 0.0;
    for (std::size_t p = 0; p < dim; ++p) {
      const double diff = double(z[p]) - double(b[p]);
      acc += diff * diff;
    }
    return acc;
  }
  double dot = 0.0, zz = 0.0, bb = 0.0;
  for (std::size_t p = 0; p < dim; ++p) {
    dot += double(z[p]) * double(b[p]);
    zz += double(z[p]) * double(z[p]);
    bb += double(b[p]) * double(b[p]);
  }
  if (zz == 0.0 || bb == 0.0) return 1.0;
  return std::clamp(1.0 - dot / (std::sqrt(zz) * std::sqrt(bb)), 0.0, 2.0);
}

NearestIndex::NearestIndex(MatrixView codebook, Metric metric)
    : metric_(metric), n_(codebook.rows), d_(codebook.cols) {
  check_codebook(codebook);
  entries_.assign(codebook.data, codebook.data + n_ * d_);

  std::size_t block = kPackedBytes / (sizeof(float) * d_);
  block = std::clamp<std::size_t>(block / kLane * kLane, kLane, 512);
  block_ = std::min(block, (n_ + kLane - 1) / kLane * kLane);
  blocks_ = (n_ + block_ - 1) / block_;

  packed_.assign(blocks_ * block_ * d_, 0.0f);
  offsets_.assign(blocks_ * block_, kInf);
  for (std::size_t i = 0; i < n_; ++i) {
    const float* b = codebook.row(i);
    const double norm = row_norm(b, d_);
    const std::size_t blk = i / block_, j = i % block_;
    float* dst = packed_.data() + blk * block_ * d_;
    if (metric_ == Metric::kL2) {
      offsets_[i] = static_cast<float>(norm * norm);
      for (std::size_t p = 0; p < d_; ++p) dst[p * block_ + j] = b[p];
      max_sq_norm_ = std::max(max_sq_norm_, norm * norm);
      max_norm_ = std::max(max_norm_, norm);
    } else {
      offsets_[i] = 0.0f;
      double packed_sq = 0.0;
      for (std::size_t p = 0; p < d_; ++p) {
        const float v = norm > 0.0 ? static_cast<float>(double(b[p]) / norm) : 0.0f;
        dst[p * block_ + j] = v;
        packed_sq += double(v) * double(v);
      }
      max_norm_ = std::max(max_norm_, std::sqrt(packed_sq));
    }
  }
}

void NearestIndex::check_features(MatrixView features) const {
  if (features.cols != d_)
    throw ShapeError("nearest: feature width " + std::to_string(features.cols) +
                     " != codebook width " + std::to_string(d_));
  for (float v : features.span())
    if (!std::isfinite(v)) throw NumericError("nearest: non-finite feature");
}

// Scores four rows at once against one packed block:
//   s[r][j] = offset_j + sum_p scaled[r][p] * packed[p][j]
// Each lane sums over p in fixed order, so the result for a row does not
// depend on which rows share its group. out may be null; row_min receives
// the per-row minimum over the block.
void NearestIndex::score_group(const float* scaled_rows, std::size_t block,
                               float* out, float* row_min) const {
  const float* bt = packed_.data() + block * block_ * d_;
  const float* off = offsets_.data() + block * block_;
  const std::size_t w = block_, d = d_;
  const float* z0 = scaled_rows;
  const float* z1 = z0 + d;
  const float* z2 = z1 + d;
  const float* z3 = z2 + d;
  Lanes m0 = splat(kInf), m1 = m0, m2 = m0, m3 = m0;
  for (std::size_t j = 0; j < w; j += kLane) {
    const Lanes o = load(off + j);
    Lanes a0 = o, a1 = o, a2 = o, a3 = o;
    for (std::size_t p = 0; p < d; ++p) {
      const Lanes b = load(bt + p * w + j);
      a0 += z0[p] * b;
      a1 += z1[p] * b;
      a2 += z2[p] * b;
      a3 += z3[p] * b;
    }
    m0 = a0 < m0 ? a0 : m0;
    m1 = a1 < m1 ? a1 : m1;
    m2 = a2 < m2 ? a2 : m2;
    m3 = a3 < m3 ? a3 : m3;
    if (out) {
      store(out + j, a0);
      store(out + w + j, a1);
      store(out + 2 * w + j, a2);
      store(out + 3 * w + j, a3);
    }
  }
  row_min[0] = hmin(m0);
  row_min[1] = hmin(m1);
  row_min[2] = hmin(m2);
  row_min[3] = hmin(m3);
}

// Twice the worst-case gap between a float score and its real value, so
// any entry that could beat the float minimum in exact arithmetic is kept.
double NearestIndex::score_margin(double norm) const {
  const double scale = metric_ == Metric::kL2 ? 2.0 : 1.0;
  const double bound = double(d_ + 4) * kUnitRoundoff *
                       (max_sq_norm_ + scale * norm * max_norm_);
  return 2.02 * bound + 1e-30;
}

TokenMap NearestIndex::quantize(MatrixView features) const {
  check_features(features);
  const std::size_t t = features.rows;
  TokenMap out;
  out.height = t;
  out.width = 1;
  out.codebook_size = n_;
  out.indices.assign(t, 0);
  out.distances.assign(t, 0.0f);
  const float scale = metric_ == Metric::kL2 ? -2.0f : -1.0f;
  const long tiles = static_cast<long>((t + kRowTile - 1) / kRowTile);

#pragma omp parallel
  {
    std::vector<float> scaled(kRowTile * d_), scores(kGroup * block_);
    std::vector<float> best(kRowTile);
    std::vector<double> margin(kRowTile);
    std::vector<std::vector<Candidate>> cands(kRowTile);
    float group_min[kGroup];

#pragma omp for schedule(static)
    for (long tile = 0; tile < tiles; ++tile) {
      const std::size_t r0 = std::size_t(tile) * kRowTile;
      const std::size_t rows = std::min(kRowTile, t - r0);
      std::fill(scaled.begin(), scaled.end(), 0.0f);
      for (std::size_t r = 0; r < rows; ++r) {
        const float* z = features.row(r0 + r);
        for (std::size_t p = 0; p < d_; ++p) scaled[r * d_ + p] = scale * z[p];
        margin[r] = score_margin(row_norm(z, d_));
        best[r] = kInf;
        cands[r].clear();
      }
      for (std::size_t blk = 0; blk < blocks_; ++blk) {
        const auto base = static_cast<std::int32_t>(blk * block_);
        for (std::size_t g = 0; g < rows; g += kGroup) {
          const float* zs = scaled.data() + g * d_;
          score_group(zs, blk, nullptr, group_min);
          bool any = false;
          for (std::size_t k = 0; k < kGroup && g + k < rows; ++k)
            any |= double(group_min[k]) <= double(best[g + k]) + margin[g + k];
          if (!any) continue;
          score_group(zs, blk, scores.data(), group_min);
          for (std::size_t k = 0; k < kGroup && g + k < rows; ++k) {
            const std::size_t r = g + k;
            if (double(group_min[k]) > double(best[r]) + margin[r]) continue;
            best[r] = std::min(best[r], group_min[k]);
            const double thr = double(best[r]) + margin[r];
            const float* s = scores.data() + k * block_;
            auto& c = cands[r];
            for (std::size_t j = 0; j < block_; ++j)
              if (double(s[j]) <= thr)
                c.emplace_back(s[j], base + static_cast<std::int32_t>(j));
            if (c.size() > kPruneAt)
              std::erase_if(c, [&](const Candidate& e) { return double(e.first) > thr; });
          }
        }
      }
      // Candidates arrive in ascending index order; a strict comparison
      // keeps the lowest index among exact ties.
      for (std::size_t r = 0; r < rows; ++r) {
        const float* z = features.row(r0 + r);
        const double thr = double(best[r]) + margin[r];
        double bd = std::numeric_limits<double>::infinity();
        std::int32_t bi = -1;
        for (const auto& [score, idx] : cands[r]) {
          if (double(score) > thr) continue;
          const double dist =
              exact_distance(z, entries_.data() + std::size_t(idx) * d_, d_, metric_);
          if (dist < bd) {
            bd = dist;
            bi = idx;
          }
        }
        out.indices[r0 + r] = bi;
        out.distances[r0 + r] = static_cast<float>(bd);
      }
    }
  }
  return out;
}

KnnResult NearestIndex::knn(MatrixView features, std::size_t m) const {
  check_features(features);
  if (m == 0 || m > n_)
    throw std::invalid_argument("knn: M = " + std::to_string(m) +
                                " outside [1, " + std::to_string(n_) + "]");
  const std::size_t t = features.rows;
  KnnResult out;
  out.rows = t;
  out.k = m;
  out.indices.assign(t * m, 0);
  out.distances.assign(t * m, 0.0f);
  const float scale = metric_ == Metric::kL2 ? -2.0f : -1.0f;

const long groups = static_cast<long>((t + kGroup - 1) / kGroup);
  const std::size_t padded = blocks_ * block_;

#pragma omp parallel
  {
    std::vector<float> scaled(kGroup * d_), block_scores(kGroup * block_);
    std::vector<float> scores(kGroup * padded), sorted(n_);
    std::vector<std::pair<double, std::int32_t>> exact;
    float group_min[kGroup];

#pragma omp for schedule(static)
    for (long grp = 0; grp < groups; ++grp) {
      const std::size_t r0 = std::size_t(grp) * kGroup;
      const std::size_t rows = std::min(kGroup, t - r0);
      std::fill(scaled.begin(), scaled.end(), 0.0f);
      for (std::size_t k = 0; k < rows; ++k)
        for (std::size_t p = 0; p < d_; ++p)
          scaled[k * d_ + p] = scale * features.row(r0 + k)[p];
      for (std::size_t blk = 0; blk < blocks_; ++blk) {
        score_group(scaled.data(), blk, block_scores.data(), group_min);
        for (std::size_t k = 0; k < rows; ++k)
          std::copy_n(block_scores.data() + k * block_, block_,
                      scores.data() + k * padded + blk * block_);
      }
      for (std::size_t k = 0; k < rows; ++k) {
        const std::size_t row = r0 + k;
        const float* z = features.row(row);
        const float* s = scores.data() + k * padded;
        std::copy_n(s, n_, sorted.begin());
        std::nth_element(sorted.begin(), sorted.begin() + long(m - 1), sorted.end());
        const double thr = double(sorted[m - 1]) + score_margin(row_norm(z, d_));
        exact.clear();
        for (std::size_t i = 0; i < n_; ++i)
          if (double(s[i]) <= thr)
            exact.emplace_back(
                exact_distance(z, entries_.data() + i * d_, d_, metric_),
                static_cast<std::int32_t>(i));
        std::partial_sort(exact.begin(), exact.begin() + long(m), exact.end(),
                          by_distance_then_index);
        for (std::size_t c = 0; c < m; ++c) {
          out.indices[row * m + c] = exact[c].second;
          out.distances[row * m + c] = static_cast<float>(exact[c].first);
        }
      }
    }
  }
  return out;
}

TokenMap quantize(MatrixView features, MatrixView codebook, Metric metric) {
  check_pair(features, codebook);
  return NearestIndex(codebook, metric).quantize(features);
}

KnnResult knn(MatrixView features, MatrixView codebook, std::size_t m,
              Metric metric) {
  check_pair(features, codebook);
  return NearestIndex(codebook, metric).knn(features, m);
}

TokenMap quantize_reference(MatrixView features, MatrixView codebook,
                            Metric metric) {
  check_pair(features, codebook);
  TokenMap out;
  out.height = features.rows;
  out.width = 1;
  out.codebook_size = codebook.rows;
  out.indices.resize(features.rows);
  out.distances.resize(features.rows);
  for (std::size_t r = 0; r < features.rows; ++r) {
    double bd = std::numeric_limits<double>::infinity();
    std::int32_t bi = 0;
    for (std::size_t i = 0; i < codebook.rows; ++i) {
      const double dist =
          exact_distance(features.row(r), codebook.row(i), codebook.cols, metric);
      if (dist < bd) {
        bd = dist;
        bi = static_cast<std::int32_t>(i);
      }
    }
    out.indices[r] = bi;
    out.distances[r] = static_cast<float>(bd);
  }
  return out;
}

KnnResult knn_reference(MatrixView features, MatrixView codebook, std::size_t m,
                        Metric metric) {
  check_pair(features, codebook);
  if (m == 0 || m > codebook.rows)
    throw std::invalid_argument("knn: M = " + std::to_string(m) +
                                " outside [1, " + std::to_string(codebook.rows) + "]");
  KnnResult out;
  out.rows = features.rows;
  out.k = m;
  std::vector<std::pair<double, std::int32_t>> all(codebook.rows);
  for (std::size_t r = 0; r < features.rows; ++r) {
    for (std::size_t i = 0; i < codebook.rows; ++i)
      all[i] = {exact_distance(features.row(r), codebook.row(i), codebook.cols, metric),
                static_cast<std::int32_t>(i)};
    std::sort(all.begin(), all.end(), by_distance_then_index);
    for (std::size_t c = 0; c < m; ++c) {
      out.indices.push_back(all[c].second);
      out.distances.push_back(static_cast<float>(all[c].first));
    }
  }
  return out;
}

}  // namespace vqlab
