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
#include <span>
#include <string>
#include <vector>

#include "vqlab/error.hpp"
#include "vqlab/tensor.hpp"

namespace vqlab {

//! Owning row-major float matrix for data that never enters the tape.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<float> values;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, float fill = 0.0f)
      : rows(r), cols(c), values(r * c, fill) {}
  Matrix(std::size_t r, std::size_t c, std::vector<float> v)
      : rows(r), cols(c), values(std::move(v)) {
    if (values.size() != rows * cols)
      throw ShapeError("matrix: " + std::to_string(values.size()) +
                       " values for " + std::to_string(rows) + "x" +
                       std::to_string(cols));
  }

  float* row(std::size_t i) { return values.data() + i * cols; }
  const float* row(std::size_t i) const { return values.data() + i * cols; }
  float& operator()(std::size_t i, std::size_t j) { return values[i * cols + j]; }
  float operator()(std::size_t i, std::size_t j) const {
    return values[i * cols + j];
  }
  bool operator==(const Matrix&) const = default;

  Tensor to_tensor() const { return Tensor::matrix(rows, cols, values); }
  static Matrix from_tensor(const Tensor& t) {
    return Matrix(t.rows(), t.cols(),
                  std::vector<float>(t.data().begin(), t.data().end()));
  }
};

//! Non-owning read-only view of a row-major matrix.
struct MatrixView {
  const float* data = nullptr;
  std::size_t rows = 0;
  std::size_t cols = 0;

  MatrixView() = default;
  MatrixView(const float* d, std::size_t r, std::size_t c)
      : data(d), rows(r), cols(c) {}
  MatrixView(const Matrix& m)  // NOLINT: implicit by design of a view
      : data(m.values.data()), rows(m.rows), cols(m.cols) {}
  MatrixView(const Tensor& t)  // NOLINT
      : data(t.data().data()), rows(t.rows()), cols(t.cols()) {}

  const float* row(std::size_t i) const { return data + i * cols; }
  std::span<const float> span() const { return {data, rows * cols}; }
};

}  // namespace vqlab
