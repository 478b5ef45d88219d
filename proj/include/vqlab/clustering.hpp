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
#include <string>
#include <vector>

#include "vqlab/matrix.hpp"

namespace vqlab {

enum class FeatureSource { kPixelPatch, kTinyEncoder, kImported };

std::string source_name(FeatureSource s);
FeatureSource parse_source(const std::string& name);

//! Rows to be clustered into codebook entries.
struct FeatureSet {
  Matrix rows;
  FeatureSource source = FeatureSource::kImported;
  std::string dataset_id;
  std::uint64_t seed = 0;

  std::size_t count() const { return rows.rows; }
  std::size_t dim() const { return rows.cols; }
  //! Throws ShapeError when empty and NumericError on a non-finite value.
  void validate() const;
};

struct ClusterResult {
  Matrix centers;
  std::vector<std::int32_t> assignments;
  double inertia = 0.0;
  int iterations_run = 0;
  //! Inertia measured by each Lloyd assignment step, before its update.
  std::vector<double> inertia_history;
  //! Whether iteration i's update reseeded an empty cluster.
  std::vector<bool> reseeded;
};

//! Sum of squared distances of each row to its assigned center, in double.
double inertia_of(MatrixView points, MatrixView centers,
                  const std::vector<std::int32_t>& assignments);

Matrix kmeans_pp_init(const FeatureSet& features, std::size_t k,
                      std::uint64_t seed);

//! Lloyd iterations from greedy k-means++ until the largest center shift is below
//! tol. Empty clusters are reseeded to the point farthest from its center.
ClusterResult kmeans_fit(const FeatureSet& features, std::size_t k,
                         int max_iters = 100, double tol = 1e-4,
                         std::uint64_t seed = 0);

//! Mini-batch k-means. Starts from k-means++ on a random subsample of
//! max(3 * batch, K) rows, or from K random distinct rows when that seeding
//! would exceed a fixed cost budget (very large K). Batches walk seeded
//! permutations of the data; per-center step 1/count; one full assignment
//! pass at the end.
ClusterResult minibatch_kmeans_fit(const FeatureSet& features, std::size_t k,
                                   std::size_t batch, int steps,
                                   std::uint64_t seed = 0);

}  // namespace vqlab
