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

enum class Metric { kL2, kCosine };

std::string metric_name(Metric m);
Metric parse_metric(const std::string& name);

//! Grid of selected codebook indices with the distance of each selection.
//! l2 distances are squared Euclidean; cosine distances are 1 - cos in [0, 2].
struct TokenMap {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t codebook_size = 0;
  std::vector<std::int32_t> indices;
  std::vector<float> distances;

  std::size_t size() const { return indices.size(); }
};

//! Row-major T x M neighbour lists, each row sorted by (distance, index).
struct KnnResult {
  std::size_t rows = 0;
  std::size_t k = 0;
  std::vector<std::int32_t> indices;
  std::vector<float> distances;

  std::int32_t index(std::size_t row, std::size_t col) const {
    return indices[row * k + col];
  }
  float distance(std::size_t row, std::size_t col) const {
    return distances[row * k + col];
  }
};

//! Distance between two rows evaluated in double precision. This is the
//! quantity both search paths minimise; cos is taken as 0 for a zero row.
double exact_distance(const float* z, const float* b, std::size_t dim,
                      Metric metric);

//! Codebook packed for repeated blocked searches.
//!
//! A float pass over the expansion |b|^2 - 2 z.b keeps every entry whose
//! score lies within a rounding-error bound of the running minimum; those
//! few candidates are then ranked by exact_distance. The selected indices
//! therefore equal a double-precision brute-force search, including the
//! lowest-index tie-break. Rows are processed in parallel with OpenMP and
//! results do not depend on the thread count.
class NearestIndex {
 public:
  NearestIndex(MatrixView codebook, Metric metric);

  TokenMap quantize(MatrixView features) const;
  KnnResult knn(MatrixView features, std::size_t m) const;

  std::size_t size() const { return n_; }
  std::size_t dim() const { return d_; }
  Metric metric() const { return metric_; }

 private:
  void check_features(MatrixView features) const;
  void score_group(const float* scaled_rows, std::size_t block, float* out,
                   float* row_min) const;
  double score_margin(double row_norm) const;

  Metric metric_;
  std::size_t n_ = 0;
  std::size_t d_ = 0;
  std::size_t block_ = 0;
  std::size_t blocks_ = 0;
  std::vector<float> entries_;  // row-major copy for refinement
  std::vector<float> packed_;   // per block: d_ x block_ transposed
  std::vector<float> offsets_;  // per padded entry: |b|^2 (l2), 0 (cosine)
  double max_sq_norm_ = 0.0;
  double max_norm_ = 0.0;
};

TokenMap quantize(MatrixView features, MatrixView codebook,
                  Metric metric = Metric::kL2);
KnnResult knn(MatrixView features, MatrixView codebook, std::size_t m,
              Metric metric = Metric::kL2);

//! Serial O(T*N) searches over exact_distance; kept for tests and benchmarks.
TokenMap quantize_reference(MatrixView features, MatrixView codebook,
                            Metric metric = Metric::kL2);
KnnResult knn_reference(MatrixView features, MatrixView codebook,
                        std::size_t m, Metric metric = Metric::kL2);

}  // namespace vqlab
