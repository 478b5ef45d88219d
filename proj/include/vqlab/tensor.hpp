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
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace vqlab {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {
struct Node;
}  // namespace detail

/*! Dense row-major float32 tensor with an optional gradient slot.
 *
 *  Tensor is a shared handle: copies alias the same storage, which is what
 *  lets the tape route gradients back to parameters. Use clone() for an
 *  independent copy. Every op result is checked for NaN/Inf and throws
 *  NumericError naming the op.
 */
class Tensor {
 public:
  Tensor();
  explicit Tensor(Shape shape, float fill = 0.0f);
  Tensor(Shape shape, std::vector<float> values);

  static Tensor scalar(float value);
  static Tensor matrix(std::size_t rows, std::size_t cols,
                       std::vector<float> values);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t dim() const { return shape().size(); }
  std::size_t numel() const;
  //! Extents of a 2-D tensor; throws ShapeError otherwise.
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const float> data() const;
  //! Mutable view; intended for leaves (parameters, inputs).
  std::span<float> mutable_data();
  float item() const;
  //! Scalar value before float rounding when produced by sum/mean/mse.
  double item_wide() const;
  float at(std::size_t r, std::size_t c) const;

  bool requires_grad() const;
  Tensor& set_requires_grad(bool on);
  bool is_leaf() const;
  bool has_grad() const;
  //! Accumulated gradient; empty span when no gradient was ever produced.
  std::span<const float> grad() const;
  std::span<float> mutable_grad();
  void zero_grad();
  //! Releases the gradient buffer entirely (has_grad() becomes false).
  void drop_grad();

  //! Deep copy as a fresh leaf without gradient tracking.
  Tensor clone() const;

  explicit Tensor(std::shared_ptr<detail::Node> node);
  const std::shared_ptr<detail::Node>& node() const { return node_; }

 private:
  std::shared_ptr<detail::Node> node_;
};

/*! Ordered record of differentiable ops for one unit of work.
 *
 *  Each thread owns an implicit active tape; TapeScope installs a fresh one.
 *  backward() replays records in reverse, accumulates into requires_grad
 *  leaves, frees intermediate gradients and clears the tape.
 */
class Tape {
 public:
  using BackwardFn = std::function<void(std::span<const float> grad_out)>;

  Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  ~Tape();

  void record(const Tensor& output, std::vector<Tensor> inputs,
              BackwardFn backward);
  void backward(const Tensor& loss);
  void clear();
  std::size_t size() const { return records_.size(); }

  static Tape& active();

 private:
  struct Record {
    std::shared_ptr<detail::Node> output;
    std::vector<std::shared_ptr<detail::Node>> inputs;
    BackwardFn backward;
  };
  std::vector<Record> records_;
  std::uint64_t id_;

  friend class TapeScope;
};

//! Installs a new active tape for the current thread for its lifetime.
class TapeScope {
 public:
  TapeScope();
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;
  Tape& tape() { return tape_; }

 private:
  Tape tape_;
  Tape* previous_;
};

//! Disables recording on the current thread (evaluation passes).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

bool grad_enabled();

// ---------------------------------------------------------------------------
// Ops. Elementwise binaries accept equal shapes or a one-element operand.

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, float factor);
Tensor leaky_relu(const Tensor& a, float slope);
Tensor sigmoid(const Tensor& a);
//! x[m×n] + bias[n] on every row (the bias term of a linear layer).
Tensor add_rowwise(const Tensor& x, const Tensor& bias);
//! Row-wise x / max(|x|, eps).
Tensor normalize_rows(const Tensor& x, float eps = 1e-12f);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
//! Mean of squared differences.
Tensor mse(const Tensor& a, const Tensor& b);
//! Forward identity (bit-exact copy); contributes no gradient.
Tensor stop_gradient(const Tensor& x);
//! Rows of `table` selected by `indices`; gradients scatter-add back.
Tensor gather_rows(const Tensor& table, std::span<const std::int32_t> indices);
//! Forward value of z_q; the backward pass hands the gradient to z unchanged.
Tensor straight_through(const Tensor& z, const Tensor& z_q);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator*(float s, const Tensor& a) { return scale(a, s); }

// ---------------------------------------------------------------------------
// Gradient checking.

struct GradCheckResult {
  //! max_k |analytic_k - numeric_k| / max(max|analytic|, max|numeric|)
  double max_rel_error = 0.0;
  std::vector<double> analytic;
  std::vector<double> numeric;
};

/*! Compares the reverse-mode gradient of scalar `f` at `x` against central
 *  differences. The step is `eps` rounded to a power of two so x +/- h is
 *  exact; the quotient uses the realized float difference.
 *
 *  Stop-gradient paths are not excluded: where f routes x through
 *  stop_gradient the analytic side is zero and the check reports the
 *  mismatch. Callers must build f without sg on the checked path.
 *
 *  Throws std::runtime_error when two evaluations of f(x) differ.
 */
GradCheckResult gradient_check(const std::function<Tensor(const Tensor&)>& f,
                               const Tensor& x, double eps = 1e-3);

}  // namespace vqlab
