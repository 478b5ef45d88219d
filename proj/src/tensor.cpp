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
#include "vqlab/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>
#include <sstream>

#include "vqlab/error.hpp"
#include "vqlab/kernels.hpp"

namespace vqlab {

namespace detail {

struct Node {
  Shape shape;
  std::vector<float> data;
  std::vector<float> grad;  // empty when absent
  bool requires_grad = false;
  bool leaf = true;
  std::uint64_t tape_id = 0;
  // Unrounded value of a 64-bit reduction, when this node is one.
  double wide_scalar = 0.0;
  bool has_wide_scalar = false;
};

}  // namespace detail

using detail::Node;

namespace {

thread_local Tape* t_active = nullptr;
thread_local int t_no_grad = 0;
std::atomic<std::uint64_t> g_next_tape_id{1};

std::span<float> grad_buffer(Node& node) {
  if (node.grad.empty()) node.grad.assign(node.data.size(), 0.0f);
  return node.grad;
}

void check_finite(const std::vector<float>& values, const char* op) {
  for (float v : values) {
    if (!std::isfinite(v))
      throw NumericError(std::string("non-finite value produced by ") + op);
  }
}

bool is_scalar_like(const Tensor& t) { return t.numel() == 1; }

void require_2d(const Tensor& t, const char* op) {
  if (t.dim() != 2)
    throw ShapeError(std::string(op) + ": expected a 2-D tensor, got " +
                     shape_str(t.shape()));
}

bool needs_tape(std::initializer_list<const Tensor*> inputs) {
  if (!grad_enabled()) return false;
  for (const Tensor* t : inputs)
    if (t->requires_grad()) return true;
  return false;
}

Tensor make_output(Shape shape, std::vector<float> values, const char* op) {
  check_finite(values, op);
  return Tensor(std::move(shape), std::move(values));
}

Tensor make_scalar_output(double value, const char* op) {
  Tensor t = make_output({}, {static_cast<float>(value)}, op);
  t.node()->wide_scalar = value;
  t.node()->has_wide_scalar = true;
  return t;
}

// Result shape of an elementwise binary op, or throws.
Shape broadcast_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() == b.shape()) return a.shape();
  if (is_scalar_like(b)) return a.shape();
  if (is_scalar_like(a)) return b.shape();
  throw ShapeError(std::string(op) + ": incompatible shapes " +
                   shape_str(a.shape()) + " and " + shape_str(b.shape()));
}

// Folds an output-shaped gradient into an operand that may be a broadcast
// scalar. `dvalue(i)` is d(out_i)/d(operand_i) times grad_out[i].
template <typename Fn>
void accumulate_operand(Node& node, std::size_t out_n, Fn&& dvalue) {
  auto g = grad_buffer(node);
  if (node.data.size() == out_n) {
    for (std::size_t i = 0; i < out_n; ++i) g[i] += dvalue(i);
  } else {
    double acc = 0.0;
    for (std::size_t i = 0; i < out_n; ++i) acc += dvalue(i);
    g[0] += static_cast<float>(acc);
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Shape helpers

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t e : shape) n *= e;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

// ---------------------------------------------------------------------------
// Tensor

Tensor::Tensor() = default;

Tensor::Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

Tensor::Tensor(Shape shape, float fill) : node_(std::make_shared<Node>()) {
  node_->data.assign(shape_numel(shape), fill);
  node_->shape = std::move(shape);
}

Tensor::Tensor(Shape shape, std::vector<float> values)
    : node_(std::make_shared<Node>()) {
  if (shape_numel(shape) != values.size())
    throw ShapeError("tensor: " + std::to_string(values.size()) +
                     " values do not fill shape " + shape_str(shape));
  node_->shape = std::move(shape);
  node_->data = std::move(values);
}

Tensor Tensor::scalar(float value) { return Tensor(Shape{}, {value}); }

Tensor Tensor::matrix(std::size_t rows, std::size_t cols,
                      std::vector<float> values) {
  return Tensor(Shape{rows, cols}, std::move(values));
}

const Shape& Tensor::shape() const { return node_->shape; }
std::size_t Tensor::numel() const { return node_->data.size(); }

std::size_t Tensor::rows() const {
  require_2d(*this, "rows");
  return node_->shape[0];
}

std::size_t Tensor::cols() const {
  require_2d(*this, "cols");
  return node_->shape[1];
}

std::span<const float> Tensor::data() const { return node_->data; }
std::span<float> Tensor::mutable_data() { return node_->data; }

float Tensor::item() const {
  if (numel() != 1)
    throw ShapeError("item: tensor of shape " + shape_str(shape()) +
                     " is not a scalar");
  return node_->data[0];
}

double Tensor::item_wide() const {
  if (node_->has_wide_scalar) return node_->wide_scalar;
  return item();
}

float Tensor::at(std::size_t r, std::size_t c) const {
  return node_->data[r * cols() + c];
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool on) {
  if (!node_->leaf)
    throw std::logic_error("set_requires_grad: only leaves can be toggled");
  node_->requires_grad = on;
  return *this;
}

bool Tensor::is_leaf() const { return node_->leaf; }
bool Tensor::has_grad() const { return !node_->grad.empty(); }
std::span<const float> Tensor::grad() const { return node_->grad; }
std::span<float> Tensor::mutable_grad() { return grad_buffer(*node_); }

void Tensor::zero_grad() {
  std::fill(node_->grad.begin(), node_->grad.end(), 0.0f);
}

void Tensor::drop_grad() {
  node_->grad.clear();
  node_->grad.shrink_to_fit();
}

Tensor Tensor::clone() const { return Tensor(node_->shape, node_->data); }

// ---------------------------------------------------------------------------
// Tape

Tape::Tape() : id_(g_next_tape_id.fetch_add(1)) {}
Tape::~Tape() = default;

Tape& Tape::active() {
  if (t_active == nullptr) {
    thread_local Tape fallback;
    t_active = &fallback;
  }
  return *t_active;
}

void Tape::record(const Tensor& output, std::vector<Tensor> inputs,
                  BackwardFn backward) {
  Node& out = *output.node();
  out.requires_grad = true;
  out.leaf = false;
  out.tape_id = id_;
  Record rec;
  rec.output = output.node();
  rec.inputs.reserve(inputs.size());
  for (auto& t : inputs) rec.inputs.push_back(t.node());
  rec.backward = std::move(backward);
  records_.push_back(std::move(rec));
}

void Tape::backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1)
    throw ShapeError("backward: loss must be a scalar tensor");
  if (!loss.requires_grad())
    throw std::logic_error(
        "backward: loss is detached (does not require grad)");
  Node& root = *loss.node();
  if (!root.leaf && root.tape_id != id_)
    throw std::logic_error("backward: loss was not produced on this tape");
  if (!root.leaf) {
    const bool present =
        std::any_of(records_.begin(), records_.end(),
                    [&](const Record& r) { return r.output.get() == &root; });
    if (!present)
      throw std::logic_error(
          "backward: loss is no longer on the tape (already backpropagated?)");
  }

  grad_buffer(root)[0] += 1.0f;
  for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
    if (it->output->grad.empty()) continue;
    it->backward(it->output->grad);
  }
  for (auto& rec : records_) {
    rec.output->grad.clear();
    rec.output->grad.shrink_to_fit();
  }
  clear();
}

void Tape::clear() { records_.clear(); }

TapeScope::TapeScope() : previous_(t_active) { t_active = &tape_; }
TapeScope::~TapeScope() { t_active = previous_; }

NoGradGuard::NoGradGuard() { ++t_no_grad; }
NoGradGuard::~NoGradGuard() { --t_no_grad; }

bool grad_enabled() { return t_no_grad == 0; }

// ---------------------------------------------------------------------------
// Ops

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_2d(a, "matmul");
  require_2d(b, "matmul");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k)
    throw ShapeError("matmul: inner extents differ, " + shape_str(a.shape()) +
                     " x " + shape_str(b.shape()));
  std::vector<float> out(m * n);
  kernels::gemm(false, false, m, n, k, a.data().data(), b.data().data(),
                out.data(), false);
  Tensor c = make_output({m, n}, std::move(out), "matmul");
  if (needs_tape({&a, &b})) {
    auto an = a.node(), bn = b.node();
    Tape::active().record(c, {a, b}, [an, bn, m, n, k](std::span<const float> g) {
      if (an->requires_grad)  // dA = dC * B^T
        kernels::gemm(false, true, m, k, n, g.data(), bn->data.data(),
                      grad_buffer(*an).data(), true);
      if (bn->requires_grad)  // dB = A^T * dC
        kernels::gemm(true, false, k, n, m, an->data.data(), g.data(),
                      grad_buffer(*bn).data(), true);
    });
  }
  return c;
}

namespace {

enum class BinaryOp { kAdd, kSub, kMul };

Tensor binary(const Tensor& a, const Tensor& b, BinaryOp op, const char* name) {
  Shape shape = broadcast_shape(a, b, name);
  const std::size_t n = shape_numel(shape);
  const bool a_scalar = a.numel() != n;
  const bool b_scalar = b.numel() != n;
  auto av = a.data(), bv = b.data();
  std::vector<float> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const float x = av[a_scalar ? 0 : i];
    const float y = bv[b_scalar ? 0 : i];
    switch (op) {
      case BinaryOp::kAdd: out[i] = x + y; break;
      case BinaryOp::kSub: out[i] = x - y; break;
      case BinaryOp::kMul: out[i] = x * y; break;
    }
  }
  Tensor c = make_output(std::move(shape), std::move(out), name);
  if (needs_tape({&a, &b})) {
    auto an = a.node(), bn = b.node();
    Tape::active().record(c, {a, b}, [an, bn, n, a_scalar, b_scalar, op](
                                          std::span<const float> g) {
      if (an->requires_grad) {
        accumulate_operand(*an, n, [&](std::size_t i) -> double {
          if (op == BinaryOp::kMul)
            return static_cast<double>(g[i]) * bn->data[b_scalar ? 0 : i];
          return g[i];
        });
      }
      if (bn->requires_grad) {
        accumulate_operand(*bn, n, [&](std::size_t i) -> double {
          if (op == BinaryOp::kMul)
            return static_cast<double>(g[i]) * an->data[a_scalar ? 0 : i];
          if (op == BinaryOp::kSub) return -static_cast<double>(g[i]);
          return g[i];
        });
      }
    });
  }
  return c;
}

// Unary map with a derivative expressed in terms of input x and output y.
template <typename Fwd, typename Deriv>
Tensor unary(const Tensor& a, const char* name, Fwd fwd, Deriv deriv) {
  auto av = a.data();
  std::vector<float> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = fwd(av[i]);
  Tensor c = make_output(a.shape(), std::move(out), name);
  if (needs_tape({&a})) {
    auto an = a.node();
    std::weak_ptr<Node> cw = c.node();
    Tape::active().record(c, {a}, [an, cw, deriv](std::span<const float> g) {
      auto cn = cw.lock();
      auto ga = grad_buffer(*an);
      for (std::size_t i = 0; i < g.size(); ++i)
        ga[i] += g[i] * deriv(an->data[i], cn->data[i]);
    });
  }
  return c;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(a, b, BinaryOp::kAdd, "add");
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(a, b, BinaryOp::kSub, "sub");
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(a, b, BinaryOp::kMul, "mul");
}

Tensor scale(const Tensor& a, float factor) {
  return unary(
      a, "scale", [factor](float x) { return factor * x; },
      [factor](float, float) { return factor; });
}

Tensor leaky_relu(const Tensor& a, float slope) {
  return unary(
      a, "leaky_relu", [slope](float x) { return x >= 0.0f ? x : slope * x; },
      [slope](float x, float) { return x >= 0.0f ? 1.0f : slope; });
}

Tensor sigmoid(const Tensor& a) {
  return unary(
      a, "sigmoid",
      [](float x) {
        // Evaluated in double and rounded once; split by sign so exp()
        // never overflows.
        const double xd = x;
        if (xd >= 0.0) return static_cast<float>(1.0 / (1.0 + std::exp(-xd)));
        const double e = std::exp(xd);
        return static_cast<float>(e / (1.0 + e));
      },
      [](float, float y) { return y * (1.0f - y); });
}

Tensor add_rowwise(const Tensor& x, const Tensor& bias) {
  require_2d(x, "add_rowwise");
  const std::size_t m = x.rows(), n = x.cols();
  if (bias.numel() != n)
    throw ShapeError("add_rowwise: bias " + shape_str(bias.shape()) +
                     " does not match row width of " + shape_str(x.shape()));
  std::vector<float> out(x.data().begin(), x.data().end());
  auto bv = bias.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] += bv[j];
  Tensor c = make_output({m, n}, std::move(out), "add_rowwise");
  if (needs_tape({&x, &bias})) {
    auto xn = x.node(), bn = bias.node();
    Tape::active().record(c, {x, bias}, [xn, bn, m, n](std::span<const float> g) {
      if (xn->requires_grad) {
        auto gx = grad_buffer(*xn);
        for (std::size_t i = 0; i < m * n; ++i) gx[i] += g[i];
      }
      if (bn->requires_grad) {
        auto gb = grad_buffer(*bn);
        std::vector<double> acc(n, 0.0);
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j) acc[j] += g[i * n + j];
        for (std::size_t j = 0; j < n; ++j) gb[j] += static_cast<float>(acc[j]);
      }
    });
  }
  return c;
}

Tensor normalize_rows(const Tensor& x, float eps) {
  require_2d(x, "normalize_rows");
  const std::size_t m = x.rows(), n = x.cols();
  auto xv = x.data();
  std::vector<float> norms(m);
  std::vector<float> out(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    double ss = 0.0;
    for (std::size_t j = 0; j < n; ++j) ss += double(xv[i * n + j]) * xv[i * n + j];
    norms[i] = std::max(static_cast<float>(std::sqrt(ss)), eps);
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = xv[i * n + j] / norms[i];
  }
  Tensor c = make_output({m, n}, std::move(out), "normalize_rows");
  if (needs_tape({&x})) {
    auto xn = x.node();
    std::weak_ptr<Node> cw = c.node();
    Tape::active().record(c, {x}, [xn, cw, norms, m, n, eps](std::span<const float> g) {
      auto cn = cw.lock();
      auto gx = grad_buffer(*xn);
      for (std::size_t i = 0; i < m; ++i) {
        const float* y = cn->data.data() + i * n;
        const float* gy = g.data() + i * n;
        if (norms[i] <= eps) {
          // Clamped branch: y = x / eps is linear in x.
          for (std::size_t j = 0; j < n; ++j) gx[i * n + j] += gy[j] / eps;
          continue;
        }
        double dot = 0.0;
        for (std::size_t j = 0; j < n; ++j) dot += double(y[j]) * gy[j];
        for (std::size_t j = 0; j < n; ++j)
          gx[i * n + j] += static_cast<float>((gy[j] - y[j] * dot) / norms[i]);
      }
    });
  }
  return c;
}

Tensor sum(const Tensor& a) {
  double acc = 0.0;
  for (float v : a.data()) acc += v;
  Tensor c = make_scalar_output(acc, "sum");
  if (needs_tape({&a})) {
    auto an = a.node();
    Tape::active().record(c, {a}, [an](std::span<const float> g) {
      auto ga = grad_buffer(*an);
      for (float& v : ga) v += g[0];
    });
  }
  return c;
}

Tensor mean(const Tensor& a) {
  if (a.numel() == 0) throw ShapeError("mean: empty tensor");
  double acc = 0.0;
  for (float v : a.data()) acc += v;
  const double count = static_cast<double>(a.numel());
  Tensor c = make_scalar_output(acc / count, "mean");
  if (needs_tape({&a})) {
    auto an = a.node();
    Tape::active().record(c, {a}, [an, count](std::span<const float> g) {
      auto ga = grad_buffer(*an);
      const float d = static_cast<float>(g[0] / count);
      for (float& v : ga) v += d;
    });
  }
  return c;
}

Tensor mse(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    throw ShapeError("mse: shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  if (a.numel() == 0) throw ShapeError("mse: empty tensor");
  auto av = a.data(), bv = b.data();
  double acc = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) {
    const double d = double(av[i]) - double(bv[i]);
    acc += d * d;
  }
  const double count = static_cast<double>(av.size());
  Tensor c = make_scalar_output(acc / count, "mse");
  if (needs_tape({&a, &b})) {
    auto an = a.node(), bn = b.node();
    Tape::active().record(c, {a, b}, [an, bn, count](std::span<const float> g) {
      const double s = 2.0 * g[0] / count;
      const std::size_t n = an->data.size();
      if (an->requires_grad) {
        auto ga = grad_buffer(*an);
        for (std::size_t i = 0; i < n; ++i)
          ga[i] += static_cast<float>(s * (double(an->data[i]) - bn->data[i]));
      }
      if (bn->requires_grad) {
        auto gb = grad_buffer(*bn);
        for (std::size_t i = 0; i < n; ++i)
          gb[i] -= static_cast<float>(s * (double(an->data[i]) - bn->data[i]));
      }
    });
  }
  return c;
}

Tensor stop_gradient(const Tensor& x) { return x.clone(); }

Tensor gather_rows(const Tensor& table, std::span<const std::int32_t> indices) {
  require_2d(table, "gather_rows");
  const std::size_t n = table.rows(), d = table.cols(), t = indices.size();
  std::vector<float> out(t * d);
  auto tv = table.data();
  for (std::size_t r = 0; r < t; ++r) {
    const auto idx = indices[r];
    if (idx < 0 || static_cast<std::size_t>(idx) >= n)
      throw std::out_of_range("gather_rows: index " + std::to_string(idx) +
                              " outside [0, " + std::to_string(n) + ")");
    std::memcpy(out.data() + r * d, tv.data() + idx * d, d * sizeof(float));
  }
  Tensor c = make_output({t, d}, std::move(out), "gather_rows");
  if (needs_tape({&table})) {
    auto tn = table.node();
    std::vector<std::int32_t> idx(indices.begin(), indices.end());
    Tape::active().record(c, {table}, [tn, idx = std::move(idx), d](
                                          std::span<const float> g) {
      auto gt = grad_buffer(*tn);
      for (std::size_t r = 0; r < idx.size(); ++r) {
        float* dst = gt.data() + static_cast<std::size_t>(idx[r]) * d;
        for (std::size_t j = 0; j < d; ++j) dst[j] += g[r * d + j];
      }
    });
  }
  return c;
}

Tensor straight_through(const Tensor& z, const Tensor& z_q) {
  if (z.shape() != z_q.shape())
    throw ShapeError("straight_through: shape mismatch " + shape_str(z.shape()) +
                     " vs " + shape_str(z_q.shape()));
  Tensor c(z_q.shape(), std::vector<float>(z_q.data().begin(), z_q.data().end()));
  if (needs_tape({&z})) {
    auto zn = z.node();
    Tape::active().record(c, {z}, [zn](std::span<const float> g) {
      auto gz = grad_buffer(*zn);
      for (std::size_t i = 0; i < g.size(); ++i) gz[i] += g[i];
    });
  }
  return c;
}

// ---------------------------------------------------------------------------
// Gradient check

GradCheckResult gradient_check(const std::function<Tensor(const Tensor&)>& f,
                               const Tensor& x, double eps) {
  GradCheckResult res;
  const std::size_t n = x.numel();

  Tensor leaf = x.clone();
  leaf.set_requires_grad(true);
  {
    TapeScope scope;
    Tensor y = f(leaf);
    if (y.numel() != 1) throw ShapeError("gradient_check: f must be scalar");
    scope.tape().backward(y);
  }
  res.analytic.assign(n, 0.0);
  if (leaf.has_grad())
    for (std::size_t i = 0; i < n; ++i) res.analytic[i] = leaf.grad()[i];

  NoGradGuard no_grad;
  Tensor probe = x.clone();
  const double f0 = f(probe).item_wide();
  const double f1 = f(probe).item_wide();
  if (std::memcmp(&f0, &f1, sizeof(double)) != 0)
    throw std::runtime_error(
        "gradient_check: f is not deterministic (two evaluations differ)");

  const double h = std::exp2(std::round(std::log2(eps)));
  res.numeric.assign(n, 0.0);
  auto pv = probe.mutable_data();
  for (std::size_t i = 0; i < n; ++i) {
    const float orig = pv[i];
    const float up = static_cast<float>(orig + h);
    const float down = static_cast<float>(orig - h);
    pv[i] = up;
    const double fp = f(probe).item_wide();
    pv[i] = down;
    const double fm = f(probe).item_wide();
    pv[i] = orig;
    res.numeric[i] = (fp - fm) / (double(up) - double(down));
  }

  double scale_ref = 0.0, worst = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    scale_ref = std::max({scale_ref, std::abs(res.analytic[i]),
                          std::abs(res.numeric[i])});
    worst = std::max(worst, std::abs(res.analytic[i] - res.numeric[i]));
  }
  res.max_rel_error = scale_ref > 0.0 ? worst / scale_ref : worst;
  return res;
}

}  // namespace vqlab
