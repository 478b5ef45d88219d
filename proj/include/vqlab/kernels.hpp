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

namespace vqlab::kernels {

// Row-major GEMM: C (+)= op(A) * op(B), with C m×n and the inner extent k.
// op(A) is A (m×k) or, when trans_a, the transpose of a stored k×m matrix;
// likewise op(B) is B (k×n) or the transpose of a stored n×k matrix.
//
// The parallel kernel splits work over rows of C only, so every output
// element is accumulated by a single thread in a fixed order and the result
// does not depend on the thread count.
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n,
          std::size_t k, const float* a, const float* b, float* c,
          bool accumulate);

// Serial triple loop with double accumulation; test and benchmark baseline.
void gemm_reference(bool trans_a, bool trans_b, std::size_t m, std::size_t n,
                    std::size_t k, const float* a, const float* b, float* c,
                    bool accumulate);

int max_threads();
void set_threads(int n);

}  // namespace vqlab::kernels
