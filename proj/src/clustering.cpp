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
#include "vqlab/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "vqlab/error.hpp"
#include "vqlab/nearest.hpp"
#include "vqlab/random.hpp"

namespace vqlab {

namespace {

// Multiply-adds allowed for seeding mini-batch k-means with k-means++.
constexpr double kSeedingBudget = 2e10;

void check_k(const FeatureSet& features, std::size_t k) {
  features.validate();
  if (k == 0) throw std::invalid_argument("kmeans: K must be at least 1");
  if (k > features.count())
    throw std::invalid_argument("kmeans: K = " + std::to_string(k) +
                                " exceeds the " +
                                std::to_string(features.count()) + " feature rows");
}

double squared_distance(const float* a, const float* b, std::size_t d) {
  return exact_distance(a, b, d, Metric::kL2);
}

std::vector<std::int32_t> assign(MatrixView points, MatrixView centers) {
  return NearestIndex(centers, Metric::kL2).quantize(points).indices;
}

// Points ordered by decreasing distance to their assigned center, ties by
// index.
std::vector<std::size_t> farthest_first(MatrixView points, MatrixView centers,
                                        const std::vector<std::int32_t>& assignments) {
  std::vector<double> dist(points.rows);
  for (std::size_t i = 0; i < points.rows; ++i)
    dist[i] = squared_distance(points.row(i),
                               centers.row(std::size_t(assignments[i])), points.cols);
  std::vector<std::size_t> order(points.rows);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return dist[a] > dist[b]; });
  return order;
}

std::vector<std::size_t> cluster_sizes(const std::vector<std::int32_t>& assignments,
                                       std::size_t k) {
  std::vector<std::size_t> sizes(k, 0);
  for (auto a : assignments) ++sizes[std::size_t(a)];
  return sizes;
}

// Moves each empty center onto a far point and reassigns, until no center
// is empty or no progress is possible (fewer distinct points than K).
void fill_empty_clusters(MatrixView points, Matrix& centers,
                         std::vector<std::int32_t>& assignments) {
  for (std::size_t round = 0; round < centers.rows; ++round) {
    const auto sizes = cluster_sizes(assignments, centers.rows);
    std::vector<std::size_t> empty;
    for (std::size_t c = 0; c < centers.rows; ++c)
      if (sizes[c] == 0) empty.push_back(c);
    if (empty.empty()) return;
    const auto order = farthest_first(points, centers, assignments);
    std::vector<std::size_t> remaining = sizes;
    std::size_t next = 0;
    bool moved = false;
    for (std::size_t c : empty) {
      while (next < order.size() &&
             remaining[std::size_t(assignments[order[next]])] <= 1)
        ++next;
      if (next == order.size()) break;
      const std::size_t p = order[next++];
      --remaining[std::size_t(assignments[p])];
      std::copy_n(points.row(p), points.cols, centers.row(c));
      moved = true;
    }
    if (!moved) return;
    assignments = assign(points, centers);
  }
}

}  // namespace

std::string source_name(FeatureSource s) {
  switch (s) {
    case FeatureSource::kPixelPatch: return "pixel-patch";
    case FeatureSource::kTinyEncoder: return "tiny-encoder";
    case FeatureSource::kImported: return "imported-file";
  }
  return "imported-file";
}

FeatureSource parse_source(const std::string& name) {
  if (name == "pixel-patch") return FeatureSource::kPixelPatch;
  if (name == "tiny-encoder") return FeatureSource::kTinyEncoder;
  if (name == "imported-file") return FeatureSource::kImported;
  throw ConfigError("feature source: expected pixel-patch, tiny-encoder or "
                    "imported-file, got \"" + name + "\"");
}

void FeatureSet::validate() const {
  if (rows.rows == 0 || rows.cols == 0)
    throw ShapeError("feature set: empty (" + std::to_string(rows.rows) + "x" +
                     std::to_string(rows.cols) + ")");
  for (std::size_t i = 0; i < rows.rows; ++i)
    for (std::size_t j = 0; j < rows.cols; ++j)
      if (!std::isfinite(rows(i, j)))
        throw NumericError("feature set: non-finite value in row " + std::to_string(i));
}

double inertia_of(MatrixView points, MatrixView centers,
                  const std::vector<std::int32_t>& assignments) {
  double total = 0.0;
  for (std::size_t i = 0; i < points.rows; ++i)
    total += squared_distance(points.row(i),
                              centers.row(std::size_t(assignments[i])), points.cols);
  return total;
}

// Points x centers x width above which seeding stops drawing several
// candidates per step.
constexpr double kGreedySeedingBudget = 1e9;

Matrix kmeans_pp_init(const FeatureSet& features, std::size_t k,
                      std::uint64_t seed) {
  check_k(features, k);
  const std::size_t p = features.count(), d = features.dim();
  const Matrix& x = features.rows;
  Rng rng(seed);

  // Points transposed so the distance update vectorises across points.
  std::vector<float> xt(d * p);
  for (std::size_t i = 0; i < p; ++i)
    for (std::size_t j = 0; j < d; ++j) xt[j * p + i] = x(i, j);

  // Writes min(|x_i - x_r|^2, nearest_i) into `out` and returns its sum.
  // Block sums are added in a fixed order so the result does not depend on
  // the thread count.
  constexpr std::size_t kBlock = 1024;
  const std::size_t blocks = (p + kBlock - 1) / kBlock;
  std::vector<double> partial(blocks);
  auto potential_with = [&](std::size_t r, const std::vector<float>& nearest,
                            std::vector<float>& out) {
    const float* ctr = x.row(r);
#pragma omp parallel for schedule(static) if (p * d > 65536)
    for (long b = 0; b < static_cast<long>(blocks); ++b) {
      const std::size_t lo = std::size_t(b) * kBlock, hi = std::min(p, lo + kBlock);
      const std::size_t len = hi - lo;
      alignas(64) float dist[kBlock] = {};
      for (std::size_t j = 0; j < d; ++j) {
        const float* col = xt.data() + j * p + lo;
        const float cj = ctr[j];
#pragma omp simd
        for (std::size_t i = 0; i < len; ++i) {
          const float e = col[i] - cj;
          dist[i] += e * e;
        }
      }
      double acc = 0.0;
      for (std::size_t i = 0; i < len; ++i) {
        out[lo + i] = std::min(dist[i], nearest[lo + i]);
        acc += out[lo + i];
      }
      partial[std::size_t(b)] = acc;
    }
    double total = 0.0;
    for (double v : partial) total += v;
    return total;
  };

  // Greedy variant: several candidates are drawn by squared-distance
  // weight and the one leaving the smallest total potential is kept. Large
  // problems draw a single candidate.
  const bool greedy = double(p) * double(k) * double(d) <= kGreedySeedingBudget;
  const std::size_t trials =
      greedy ? 2 + static_cast<std::size_t>(std::log(double(k))) : 1;
  std::vector<float> nearest(p, std::numeric_limits<float>::infinity()), cand(p),
      best_cand(p);
  std::vector<double> cum(p);
  std::vector<char> chosen(p, 0);
  Matrix centers(k, d);
  std::size_t pick = rng.below(p);
  potential_with(pick, nearest, nearest);
  for (std::size_t c = 0;; ++c) {
    chosen[pick] = 1;
    std::copy_n(x.row(pick), d, centers.row(c));
    if (c + 1 == k) break;

    double total = 0.0;
    std::size_t last_positive = p;
    for (std::size_t i = 0; i < p; ++i) {
      if (!chosen[i] && nearest[i] > 0.0f) {
        total += nearest[i];
        last_positive = i;
      }
      cum[i] = total;
    }
    if (total <= 0.0) {
      // Every unchosen row duplicates a center; take one uniformly.
      std::vector<std::size_t> free;
      for (std::size_t i = 0; i < p; ++i)
        if (!chosen[i]) free.push_back(i);
      pick = free[rng.below(free.size())];
      continue;
    }
    double best_potential = std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t < trials; ++t) {
      const double target = rng.uniform() * total;
      auto it = std::upper_bound(cum.begin(), cum.end(), target);
      const std::size_t candidate =
          it == cum.end() ? last_positive : std::size_t(it - cum.begin());
      const double potential = potential_with(candidate, nearest, cand);
      if (potential < best_potential) {
        best_potential = potential;
        pick = candidate;
        best_cand.swap(cand);
      }
    }
    nearest.swap(best_cand);
  }
  return centers;
}

ClusterResult kmeans_fit(const FeatureSet& features, std::size_t k,
                         int max_iters, double tol, std::uint64_t seed) {
  check_k(features, k);
  if (max_iters < 1) throw std::invalid_argument("kmeans: max_iters must be >= 1");
  const std::size_t p = features.count(), d = features.dim();
  const MatrixView x = features.rows;

  ClusterResult res;
  res.centers = kmeans_pp_init(features, k, seed);
  std::vector<double> sums(k * d);
  std::vector<std::size_t> counts(k);
  for (int it = 1; it <= max_iters; ++it) {
    res.assignments = assign(x, res.centers);
    res.inertia_history.push_back(inertia_of(x, res.centers, res.assignments));

    std::fill(sums.begin(), sums.end(), 0.0);
    std::fill(counts.begin(), counts.end(), 0);
    for (std::size_t i = 0; i < p; ++i) {
      const auto c = std::size_t(res.assignments[i]);
      ++counts[c];
      for (std::size_t j = 0; j < d; ++j) sums[c * d + j] += double(x.row(i)[j]);
    }
    Matrix next(k, d);
    bool reseeded = false;
    std::vector<std::size_t> order;
    std::size_t cursor = 0;
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] > 0) {
        for (std::size_t j = 0; j < d; ++j)
          next(c, j) = static_cast<float>(sums[c * d + j] / double(counts[c]));
        continue;
      }
      if (order.empty()) order = farthest_first(x, res.centers, res.assignments);
      std::copy_n(x.row(order[cursor++ % p]), d, next.row(c));
      reseeded = true;
    }
    double shift = 0.0;
    for (std::size_t c = 0; c < k; ++c)
      shift = std::max(shift, std::sqrt(squared_distance(res.centers.row(c),
                                                         next.row(c), d)));
    res.centers = std::move(next);
    res.reseeded.push_back(reseeded);
    res.iterations_run = it;
    if (shift < tol && !reseeded) break;
  }
  res.assignments = assign(x, res.centers);
  fill_empty_clusters(x, res.centers, res.assignments);
  res.inertia = inertia_of(x, res.centers, res.assignments);
  return res;
}

ClusterResult minibatch_kmeans_fit(const FeatureSet& features, std::size_t k,
                                   std::size_t batch, int steps,
                                   std::uint64_t seed) {
  check_k(features, k);
  if (batch == 0) throw std::invalid_argument("minibatch kmeans: batch must be >= 1");
  if (steps < 0) throw std::invalid_argument("minibatch kmeans: steps must be >= 0");
  const std::size_t p = features.count(), d = features.dim();
  const MatrixView x = features.rows;
  Rng rng(seed);

  std::vector<std::size_t> perm(p);
  std::iota(perm.begin(), perm.end(), 0);
  const std::size_t sample = std::min(p, std::max(3 * batch, k));
  for (std::size_t i = 0; i < sample; ++i)
    std::swap(perm[i], perm[i + rng.below(p - i)]);
  ClusterResult res;
  const double init_cost = double(k) * double(sample) * double(d) *
                           (2.0 + std::log(double(k)));
  if (init_cost <= kSeedingBudget) {
    FeatureSet subset;
    subset.rows = Matrix(sample, d);
    for (std::size_t i = 0; i < sample; ++i)
      std::copy_n(x.row(perm[i]), d, subset.rows.row(i));
    res.centers = kmeans_pp_init(subset, k, rng.next());
  } else {
    res.centers = Matrix(k, d);
    for (std::size_t c = 0; c < k; ++c)
      std::copy_n(x.row(perm[c]), d, res.centers.row(c));
  }

  std::vector<double> counts(k, 0.0);
  std::size_t pos = p;
  Matrix rows(batch, d);
  std::vector<std::size_t> picked(batch);
  for (int s = 0; s < steps; ++s) {
    for (std::size_t b = 0; b < batch; ++b) {
      if (pos == p) {
        rng.shuffle(std::span<std::size_t>(perm));
        pos = 0;
      }
      picked[b] = perm[pos++];
      std::copy_n(x.row(picked[b]), d, rows.row(b));
    }
    const auto labels = assign(rows, res.centers);
    for (std::size_t b = 0; b < batch; ++b) {
      const auto c = std::size_t(labels[b]);
      counts[c] += 1.0;
      const double eta = 1.0 / counts[c];
      float* ctr = res.centers.row(c);
      const float* v = rows.row(b);
      for (std::size_t j = 0; j < d; ++j)
        ctr[j] = static_cast<float>((1.0 - eta) * double(ctr[j]) + eta * double(v[j]));
    }
    res.iterations_run = s + 1;
  }
  res.assignments = assign(x, res.centers);
  fill_empty_clusters(x, res.centers, res.assignments);
  res.inertia = inertia_of(x, res.centers, res.assignments);
  return res;
}

}  // namespace vqlab
