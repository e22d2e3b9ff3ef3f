/*
 * Copyright (c) 2026, The i2i-lab Authors. All rights reserved.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "i2i/tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "i2i/rng.hpp"

namespace i2i {

using detail::NodePtr;
using detail::TensorNode;

namespace {

thread_local Tape* g_active_tape = nullptr;
thread_local bool g_recording = true;

Tape* recording_tape() { return g_recording ? g_active_tape : nullptr; }

void require(bool ok, const std::string& what) {
  if (!ok) throw ShapeError(what);
}

void require_matrix(const Tensor& t, std::string_view op) {
  if (!t.defined() || t.rank() != 2)
    throw ShapeError(std::string(op) + ": expected a rank-2 tensor");
}

void check_finite(std::span<const double> values, std::string_view op) {
  for (double v : values) {
    if (!std::isfinite(v)) throw NonFiniteError(std::string(op) + ": non-finite value in result");
  }
}

NodePtr new_node(Shape shape, std::vector<double> data) {
  auto node = std::make_shared<TensorNode>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  return node;
}

// Wraps a freshly computed forward value; records a backward closure when a
// tape is active and any input needs a gradient.
template <typename MakeBackward>
Tensor finish(std::string_view op, Shape shape, std::vector<double> data,
              std::initializer_list<const Tensor*> inputs, MakeBackward&& make_backward) {
  check_finite(data, op);
  NodePtr out = new_node(std::move(shape), std::move(data));
  Tape* tape = recording_tape();
  bool needs = false;
  for (const Tensor* t : inputs) needs = needs || t->requires_grad();
  if (tape != nullptr && needs) {
    out->requires_grad = true;
    out->producer = tape;
    tape->record(op, out, make_backward());
  }
  return Tensor(out);
}

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

// C[m x n] += A[m x k] * B[k x n]
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c) {
  MutMap(c, m, n).noalias() += ConstMap(a, m, k) * ConstMap(b, k, n);
}

// C[m x n] += A[m x k] * B[n x k]^T
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c) {
  MutMap(c, m, n).noalias() += ConstMap(a, m, k) * ConstMap(b, n, k).transpose();
}

// C[k x n] += A[m x k]^T * B[m x n]
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c) {
  MutMap(c, k, n).noalias() += ConstMap(a, m, k).transpose() * ConstMap(b, m, n);
}

}  // namespace

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::vector<double>& TensorNode::grad_buffer() {
  if (frozen) throw TapeError("gradient accumulation into a frozen tensor");
  if (grad.empty()) grad.assign(data.size(), 0.0);
  return grad;
}

// --- Tensor ----------------------------------------------------------------

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const std::size_t n = shape_size(shape);
  return from(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  if (shape.empty()) throw ShapeError("tensor shape must have at least one dimension");
  for (std::size_t d : shape)
    if (d == 0) throw ShapeError("tensor dimensions must be positive: " + shape_str(shape));
  if (shape_size(shape) != values.size())
    throw ShapeError("data length " + std::to_string(values.size()) + " does not match shape " +
                     shape_str(shape));
  check_finite(values, "Tensor::from");
  Tensor t(new_node(std::move(shape), std::move(values)));
  t.node_->requires_grad = requires_grad;
  return t;
}

Tensor Tensor::randn(Shape shape, double stddev, Rng& rng, bool requires_grad) {
  std::vector<double> values(shape_size(shape));
  for (double& v : values) v = rng.normal(0.0, stddev);
  return from(std::move(shape), std::move(values), requires_grad);
}

Tensor Tensor::identity(std::size_t n, bool requires_grad) {
  std::vector<double> values(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) values[i * n + i] = 1.0;
  return from({n, n}, std::move(values), requires_grad);
}

const Shape& Tensor::shape() const {
  if (!node_) throw ShapeError("undefined tensor");
  return node_->shape;
}

std::size_t Tensor::dim(std::size_t axis) const {
  const Shape& s = shape();
  if (axis >= s.size()) throw ShapeError("axis out of range for shape " + shape_str(s));
  return s[axis];
}

std::size_t Tensor::size() const { return shape_size(shape()); }

std::span<const double> Tensor::data() const {
  shape();
  return node_->data;
}

std::span<double> Tensor::mutable_data() {
  shape();
  if (node_->producer != nullptr) throw TapeError("mutable_data on a recorded intermediate");
  return node_->data;
}

double Tensor::item() const {
  if (size() != 1) throw ShapeError("item() on non-scalar tensor " + shape_str(shape()));
  return node_->data[0];
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

void Tensor::set_requires_grad(bool on) {
  shape();
  if (on && node_->frozen) throw TapeError("cannot enable gradients on a frozen tensor");
  node_->requires_grad = on;
}

void Tensor::freeze() {
  shape();
  node_->requires_grad = false;
  node_->frozen = true;
  node_->grad.clear();
}

bool Tensor::frozen() const { return node_ && node_->frozen; }

bool Tensor::has_grad() const { return node_ && !node_->grad.empty(); }

std::span<const double> Tensor::grad() const {
  shape();
  return node_->grad;
}

void Tensor::zero_grad() {
  if (node_) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

Tensor Tensor::clone(bool requires_grad) const {
  return from(shape(), std::vector<double>(data().begin(), data().end()), requires_grad);
}

// --- Tape --------------------------------------------------------------------

Tape::Tape() : previous_(g_active_tape) { g_active_tape = this; }

Tape::~Tape() {
  if (g_active_tape == this) g_active_tape = previous_;
}

Tape* Tape::active() { return g_active_tape; }

void Tape::record(std::string_view op, NodePtr output, BackwardFn fn) {
  if (consumed_) throw TapeError("recording onto a tape whose backward already ran");
  entries_.push_back(Entry{op, std::move(output), std::move(fn)});
}

std::vector<std::string_view> Tape::op_names() const {
  std::vector<std::string_view> names;
  names.reserve(entries_.size());
  for (const Entry& e : entries_) names.push_back(e.op);
  return names;
}

void Tape::backward(const Tensor& loss) {
  if (consumed_) throw TapeError("backward already ran on this tape");
  if (!loss.defined() || loss.size() != 1)
    throw TapeError("backward requires a scalar loss");
  if (loss.node()->producer != this) throw TapeError("loss was not recorded on this tape");
  consumed_ = true;
  loss.node()->grad_buffer()[0] += 1.0;
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    if (it->output->grad.empty()) continue;
    it->backward(it->output->grad);
  }
  entries_.clear();
}

NoGradGuard::NoGradGuard() : saved_(g_recording) { g_recording = false; }
NoGradGuard::~NoGradGuard() { g_recording = saved_; }

void backward(const Tensor& loss) {
  Tape* tape = Tape::active();
  if (tape == nullptr) throw TapeError("backward with no active tape");
  tape->backward(loss);
}

// --- primitives --------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  require(b.rows() == k, "matmul: inner dimensions differ " + shape_str(a.shape()) + " x " +
                             shape_str(b.shape()));
  std::vector<double> out(m * n, 0.0);
  gemm_nn(m, n, k, a.data().data(), b.data().data(), out.data());
  return finish("matmul", {m, n}, std::move(out), {&a, &b}, [&] {
    return [an = a.node(), bn = b.node(), m, n, k](std::span<const double> g) {
      if (an->requires_grad) gemm_nt(m, k, n, g.data(), bn->data.data(), an->grad_buffer().data());
      if (bn->requires_grad) gemm_tn(m, n, k, an->data.data(), g.data(), bn->grad_buffer().data());
    };
  });
}

Tensor transpose(const Tensor& a) {
  require_matrix(a, "transpose");
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(m * n);
  const auto x = a.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = x[i * n + j];
  return finish("transpose", {n, m}, std::move(out), {&a}, [&] {
    return [an = a.node(), m, n](std::span<const double> g) {
      auto& ga = an->grad_buffer();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += g[j * m + i];
    };
  });
}

namespace {

Tensor elementwise_binary(std::string_view op, const Tensor& a, const Tensor& b, int kind) {
  require(a.shape() == b.shape(), std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                                      " vs " + shape_str(b.shape()));
  const auto x = a.data();
  const auto y = b.data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = kind == 0 ? x[i] + y[i] : kind == 1 ? x[i] - y[i] : x[i] * y[i];
  }
  return finish(op, a.shape(), std::move(out), {&a, &b}, [&] {
    return [an = a.node(), bn = b.node(), kind](std::span<const double> g) {
      if (an->requires_grad) {
        auto& ga = an->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += kind == 2 ? g[i] * bn->data[i] : g[i];
      }
      if (bn->requires_grad) {
        auto& gb = bn->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i)
          gb[i] += kind == 0 ? g[i] : kind == 1 ? -g[i] : g[i] * an->data[i];
      }
    };
  });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return elementwise_binary("add", a, b, 0); }
Tensor sub(const Tensor& a, const Tensor& b) { return elementwise_binary("sub", a, b, 1); }
Tensor mul(const Tensor& a, const Tensor& b) { return elementwise_binary("mul", a, b, 2); }

Tensor scale(const Tensor& a, double factor) {
  const auto x = a.data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * factor;
  return finish("scale", a.shape(), std::move(out), {&a}, [&] {
    return [an = a.node(), factor](std::span<const double> g) {
      auto& ga = an->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * factor;
    };
  });
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  require_matrix(x, "add_bias");
  const std::size_t n = x.rows(), d = x.cols();
  require(bias.size() == d, "add_bias: bias length " + std::to_string(bias.size()) +
                                " does not match " + std::to_string(d));
  const auto xv = x.data();
  const auto bv = bias.data();
  std::vector<double> out(n * d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) out[i * d + j] = xv[i * d + j] + bv[j];
  return finish("add_bias", x.shape(), std::move(out), {&x, &bias}, [&] {
    return [xn = x.node(), bn = bias.node(), n, d](std::span<const double> g) {
      if (xn->requires_grad) {
        auto& gx = xn->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
      }
      if (bn->requires_grad) {
        auto& gb = bn->grad_buffer();
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < d; ++j) gb[j] += g[i * d + j];
      }
    };
  });
}

Tensor relu(const Tensor& x) {
  const auto xv = x.data();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] > 0.0 ? xv[i] : 0.0;
  return finish("relu", x.shape(), std::move(out), {&x}, [&] {
    return [xn = x.node()](std::span<const double> g) {
      auto& gx = xn->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i)
        if (xn->data[i] > 0.0) gx[i] += g[i];
    };
  });
}

Tensor softmax(const Tensor& x, std::size_t axis) {
  const Shape& s = x.shape();
  require(axis < s.size(), "softmax: axis out of range for " + shape_str(s));
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t n = s[axis];
  const auto xv = x.data();
  std::vector<double> out(xv.size());
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * n * inner + in;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < n; ++j) mx = std::max(mx, xv[base + j * inner]);
      double total = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        const double e = std::exp(xv[base + j * inner] - mx);
        out[base + j * inner] = e;
        total += e;
      }
      for (std::size_t j = 0; j < n; ++j) out[base + j * inner] /= total;
    }
  }
  std::vector<double> saved = out;
  return finish("softmax", s, std::move(out), {&x}, [&] {
    return [xn = x.node(), y = std::move(saved), outer, inner, n](std::span<const double> g) {
      auto& gx = xn->grad_buffer();
      for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t in = 0; in < inner; ++in) {
          const std::size_t base = o * n * inner + in;
          double dot = 0.0;
          for (std::size_t j = 0; j < n; ++j) dot += g[base + j * inner] * y[base + j * inner];
          for (std::size_t j = 0; j < n; ++j) {
            const std::size_t idx = base + j * inner;
            gx[idx] += y[idx] * (g[idx] - dot);
          }
        }
      }
    };
  });
}

Tensor layernorm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  const std::size_t d = x.cols();
  const std::size_t rows = x.size() / d;
  require(gain.size() == d && bias.size() == d,
          "layernorm: gain/bias must match the normalized axis of " + shape_str(x.shape()));
  const auto xv = x.data();
  const auto gv = gain.data();
  const auto bv = bias.data();
  std::vector<double> out(xv.size());
  std::vector<double> xhat(xv.size());
  std::vector<double> rstd(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = xv.data() + r * d;
    double mean = 0.0;
    for (std::size_t j = 0; j < d; ++j) mean += row[j];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (row[j] - mean) * (row[j] - mean);
    var /= static_cast<double>(d);
    rstd[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) {
      const double h = (row[j] - mean) * rstd[r];
      xhat[r * d + j] = h;
      out[r * d + j] = h * gv[j] + bv[j];
    }
  }
  return finish("layernorm", x.shape(), std::move(out), {&x, &gain, &bias}, [&] {
    return [xn = x.node(), gn = gain.node(), bn = bias.node(), xhat = std::move(xhat),
            rstd = std::move(rstd), rows, d](std::span<const double> g) {
      if (gn->requires_grad) {
        auto& gg = gn->grad_buffer();
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t j = 0; j < d; ++j) gg[j] += g[r * d + j] * xhat[r * d + j];
      }
      if (bn->requires_grad) {
        auto& gb = bn->grad_buffer();
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t j = 0; j < d; ++j) gb[j] += g[r * d + j];
      }
      if (xn->requires_grad) {
        auto& gx = xn->grad_buffer();
        const double inv_d = 1.0 / static_cast<double>(d);
        for (std::size_t r = 0; r < rows; ++r) {
          double mean_dh = 0.0, mean_dh_h = 0.0;
          for (std::size_t j = 0; j < d; ++j) {
            const double dh = g[r * d + j] * gn->data[j];
            mean_dh += dh;
            mean_dh_h += dh * xhat[r * d + j];
          }
          mean_dh *= inv_d;
          mean_dh_h *= inv_d;
          for (std::size_t j = 0; j < d; ++j) {
            const double dh = g[r * d + j] * gn->data[j];
            gx[r * d + j] += rstd[r] * (dh - mean_dh - xhat[r * d + j] * mean_dh_h);
          }
        }
      }
    };
  });
}

Tensor sum(const Tensor& x) {
  const auto xv = x.data();
  double total = 0.0;
  for (double v : xv) total += v;
  return finish("sum", {1}, {total}, {&x}, [&] {
    return [xn = x.node()](std::span<const double> g) {
      auto& gx = xn->grad_buffer();
      for (double& v : gx) v += g[0];
    };
  });
}

Tensor mse(const Tensor& a, const Tensor& b) {
  require(a.shape() == b.shape(),
          "mse: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  const auto x = a.data();
  const auto y = b.data();
  double total = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) total += (x[i] - y[i]) * (x[i] - y[i]);
  const double n = static_cast<double>(x.size());
  return finish("mse", {1}, {total / n}, {&a, &b}, [&] {
    return [an = a.node(), bn = b.node(), n](std::span<const double> g) {
      const double c = 2.0 * g[0] / n;
      if (an->requires_grad) {
        auto& ga = an->grad_buffer();
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += c * (an->data[i] - bn->data[i]);
      }
      if (bn->requires_grad) {
        auto& gb = bn->grad_buffer();
        for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= c * (an->data[i] - bn->data[i]);
      }
    };
  });
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> targets, int ignore_index) {
  require_matrix(logits, "cross_entropy");
  const std::size_t n = logits.rows(), vocab = logits.cols();
  require(targets.size() == n, "cross_entropy: one target per logits row required");
  const auto lv = logits.data();
  std::vector<double> probs(n * vocab);
  std::vector<int> tgt(targets.begin(), targets.end());
  double total = 0.0;
  std::size_t counted = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const int t = tgt[i];
    if (t == ignore_index) continue;
    if (t < 0 || static_cast<std::size_t>(t) >= vocab)
      throw ShapeError("cross_entropy: target " + std::to_string(t) + " outside [0, vocab)");
    const double* row = lv.data() + i * vocab;
    double mx = row[0];
    for (std::size_t j = 1; j < vocab; ++j) mx = std::max(mx, row[j]);
    double z = 0.0;
    for (std::size_t j = 0; j < vocab; ++j) z += std::exp(row[j] - mx);
    const double log_z = mx + std::log(z);
    for (std::size_t j = 0; j < vocab; ++j) probs[i * vocab + j] = std::exp(row[j] - log_z);
    total += log_z - row[t];
    ++counted;
  }
  if (counted == 0) throw ShapeError("cross_entropy: every position is ignored");
  const double count = static_cast<double>(counted);
  return finish("cross_entropy", {1}, {total / count}, {&logits}, [&] {
    return [ln = logits.node(), probs = std::move(probs), tgt = std::move(tgt), n, vocab, count,
            ignore_index](std::span<const double> g) {
      auto& gl = ln->grad_buffer();
      const double c = g[0] / count;
      for (std::size_t i = 0; i < n; ++i) {
        if (tgt[i] == ignore_index) continue;
        for (std::size_t j = 0; j < vocab; ++j) gl[i * vocab + j] += c * probs[i * vocab + j];
        gl[i * vocab + static_cast<std::size_t>(tgt[i])] -= c;
      }
    };
  });
}

Tensor gather_rows(const Tensor& table, std::span<const int> ids) {
  require_matrix(table, "gather_rows");
  require(!ids.empty(), "gather_rows: no ids");
  const std::size_t vocab = table.rows(), d = table.cols();
  const auto tv = table.data();
  std::vector<double> out(ids.size() * d);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= vocab)
      throw ShapeError("gather_rows: index " + std::to_string(ids[i]) + " out of range");
    std::copy_n(tv.data() + static_cast<std::size_t>(ids[i]) * d, d, out.data() + i * d);
  }
  std::vector<int> saved(ids.begin(), ids.end());
  return finish("gather_rows", {ids.size(), d}, std::move(out), {&table}, [&] {
    return [tn = table.node(), ids = std::move(saved), d](std::span<const double> g) {
      auto& gt = tn->grad_buffer();
      for (std::size_t i = 0; i < ids.size(); ++i) {
        double* dst = gt.data() + static_cast<std::size_t>(ids[i]) * d;
        for (std::size_t j = 0; j < d; ++j) dst[j] += g[i * d + j];
      }
    };
  });
}

Tensor concat_sequences(const Tensor& a, const Tensor& b, std::size_t batch) {
  require_matrix(a, "concat_sequences");
  require_matrix(b, "concat_sequences");
  require(batch > 0 && a.rows() % batch == 0 && b.rows() % batch == 0 && a.cols() == b.cols(),
          "concat_sequences: incompatible shapes " + shape_str(a.shape()) + ", " +
              shape_str(b.shape()));
  const std::size_t ta = a.rows() / batch, tb = b.rows() / batch, d = a.cols();
  const std::size_t t = ta + tb;
  std::vector<double> out(batch * t * d);
  const auto av = a.data();
  const auto bv = b.data();
  for (std::size_t e = 0; e < batch; ++e) {
    std::copy_n(av.data() + e * ta * d, ta * d, out.data() + e * t * d);
    std::copy_n(bv.data() + e * tb * d, tb * d, out.data() + (e * t + ta) * d);
  }
  return finish("concat_sequences", {batch * t, d}, std::move(out), {&a, &b}, [&] {
    return [an = a.node(), bn = b.node(), batch, ta, tb, d](std::span<const double> g) {
      const std::size_t t = ta + tb;
      if (an->requires_grad) {
        auto& ga = an->grad_buffer();
        for (std::size_t e = 0; e < batch; ++e)
          for (std::size_t i = 0; i < ta * d; ++i) ga[e * ta * d + i] += g[e * t * d + i];
      }
      if (bn->requires_grad) {
        auto& gb = bn->grad_buffer();
        for (std::size_t e = 0; e < batch; ++e)
          for (std::size_t i = 0; i < tb * d; ++i) gb[e * tb * d + i] += g[(e * t + ta) * d + i];
      }
    };
  });
}

Tensor mean_pool(const Tensor& x, std::size_t batch) {
  require_matrix(x, "mean_pool");
  require(batch > 0 && x.rows() % batch == 0, "mean_pool: rows not divisible by batch");
  const std::size_t t = x.rows() / batch, d = x.cols();
  const auto xv = x.data();
  std::vector<double> out(batch * d, 0.0);
  for (std::size_t e = 0; e < batch; ++e) {
    for (std::size_t i = 0; i < t; ++i)
      for (std::size_t j = 0; j < d; ++j) out[e * d + j] += xv[(e * t + i) * d + j];
    for (std::size_t j = 0; j < d; ++j) out[e * d + j] /= static_cast<double>(t);
  }
  return finish("mean_pool", {batch, d}, std::move(out), {&x}, [&] {
    return [xn = x.node(), batch, t, d](std::span<const double> g) {
      auto& gx = xn->grad_buffer();
      const double inv = 1.0 / static_cast<double>(t);
      for (std::size_t e = 0; e < batch; ++e)
        for (std::size_t i = 0; i < t; ++i)
          for (std::size_t j = 0; j < d; ++j) gx[(e * t + i) * d + j] += g[e * d + j] * inv;
    };
  });
}

Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t batch,
                 std::size_t heads, bool causal) {
  require_matrix(q, "attention");
  require_matrix(k, "attention");
  require_matrix(v, "attention");
  const std::size_t d = q.cols();
  require(batch > 0 && heads > 0 && d % heads == 0, "attention: d_model not divisible by heads");
  require(k.cols() == d && v.cols() == d && k.rows() == v.rows(), "attention: k/v shape mismatch");
  require(q.rows() % batch == 0 && k.rows() % batch == 0, "attention: rows not divisible by batch");
  const std::size_t tq = q.rows() / batch, tk = k.rows() / batch, dh = d / heads;
  require(!causal || tq == tk, "attention: causal mask needs equal query/key lengths");
  const double sc = 1.0 / std::sqrt(static_cast<double>(dh));
  const auto qv = q.data();
  const auto kv = k.data();
  const auto vv = v.data();
  std::vector<double> out(batch * tq * d, 0.0);
  std::vector<double> probs(batch * heads * tq * tk, 0.0);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t h = 0; h < heads; ++h) {
      for (std::size_t i = 0; i < tq; ++i) {
        double* p = probs.data() + ((b * heads + h) * tq + i) * tk;
        const double* qi = qv.data() + (b * tq + i) * d + h * dh;
        const std::size_t visible = causal ? i + 1 : tk;
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < visible; ++j) {
          const double* kj = kv.data() + (b * tk + j) * d + h * dh;
          double s = 0.0;
          for (std::size_t c = 0; c < dh; ++c) s += qi[c] * kj[c];
          p[j] = s * sc;
          mx = std::max(mx, p[j]);
        }
        double total = 0.0;
        for (std::size_t j = 0; j < visible; ++j) {
          p[j] = std::exp(p[j] - mx);
          total += p[j];
        }
        double* oi = out.data() + (b * tq + i) * d + h * dh;
        for (std::size_t j = 0; j < visible; ++j) {
          p[j] /= total;
          const double* vj = vv.data() + (b * tk + j) * d + h * dh;
          for (std::size_t c = 0; c < dh; ++c) oi[c] += p[j] * vj[c];
        }
      }
    }
  }
  return finish("attention", {batch * tq, d}, std::move(out), {&q, &k, &v}, [&] {
    return [qn = q.node(), kn = k.node(), vn = v.node(), probs = std::move(probs), batch, heads,
            tq, tk, d, dh, sc](std::span<const double> g) {
      std::vector<double>* gq = qn->requires_grad ? &qn->grad_buffer() : nullptr;
      std::vector<double>* gk = kn->requires_grad ? &kn->grad_buffer() : nullptr;
      std::vector<double>* gv = vn->requires_grad ? &vn->grad_buffer() : nullptr;
      std::vector<double> dp(tk);
      for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t h = 0; h < heads; ++h) {
          for (std::size_t i = 0; i < tq; ++i) {
            const double* p = probs.data() + ((b * heads + h) * tq + i) * tk;
            const double* gi = g.data() + (b * tq + i) * d + h * dh;
            double dot = 0.0;
            for (std::size_t j = 0; j < tk; ++j) {
              const double* vj = vn->data.data() + (b * tk + j) * d + h * dh;
              double s = 0.0;
              for (std::size_t c = 0; c < dh; ++c) s += gi[c] * vj[c];
              dp[j] = s;
              dot += s * p[j];
              if (gv != nullptr && p[j] != 0.0) {
                double* dvj = gv->data() + (b * tk + j) * d + h * dh;
                for (std::size_t c = 0; c < dh; ++c) dvj[c] += p[j] * gi[c];
              }
            }
            const double* qi = qn->data.data() + (b * tq + i) * d + h * dh;
            for (std::size_t j = 0; j < tk; ++j) {
              if (p[j] == 0.0) continue;
              const double ds = p[j] * (dp[j] - dot) * sc;
              const double* kj = kn->data.data() + (b * tk + j) * d + h * dh;
              if (gq != nullptr) {
                double* dqi = gq->data() + (b * tq + i) * d + h * dh;
                for (std::size_t c = 0; c < dh; ++c) dqi[c] += ds * kj[c];
              }
              if (gk != nullptr) {
                double* dkj = gk->data() + (b * tk + j) * d + h * dh;
                for (std::size_t c = 0; c < dh; ++c) dkj[c] += ds * qi[c];
              }
            }
          }
        }
      }
    };
  });
}

Tensor rowdot(const Tensor& a, const Tensor& b) {
  require_matrix(a, "rowdot");
  require(a.shape() == b.shape(), "rowdot: shape mismatch");
  const std::size_t n = a.rows(), d = a.cols();
  const auto av = a.data();
  const auto bv = b.data();
  std::vector<double> out(n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) out[i] += av[i * d + j] * bv[i * d + j];
  return finish("rowdot", {n, 1}, std::move(out), {&a, &b}, [&] {
    return [an = a.node(), bn = b.node(), n, d](std::span<const double> g) {
      if (an->requires_grad) {
        auto& ga = an->grad_buffer();
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < d; ++j) ga[i * d + j] += g[i] * bn->data[i * d + j];
      }
      if (bn->requires_grad) {
        auto& gb = bn->grad_buffer();
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < d; ++j) gb[i * d + j] += g[i] * an->data[i * d + j];
      }
    };
  });
}

Tensor concat_cols(std::span<const Tensor> parts) {
  require(!parts.empty(), "concat_cols: no parts");
  const std::size_t n = parts[0].rows();
  std::size_t total = 0;
  std::vector<std::size_t> widths;
  for (const Tensor& p : parts) {
    require_matrix(p, "concat_cols");
    require(p.rows() == n, "concat_cols: row counts differ");
    widths.push_back(p.cols());
    total += p.cols();
  }
  std::vector<double> out(n * total);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto pv = parts[k].data();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < widths[k]; ++j) out[i * total + offset + j] = pv[i * widths[k] + j];
    offset += widths[k];
  }
  Tape* tape = recording_tape();
  bool needs = false;
  for (const Tensor& p : parts) needs = needs || p.requires_grad();
  check_finite(out, "concat_cols");
  NodePtr node = new_node({n, total}, std::move(out));
  if (tape != nullptr && needs) {
    node->requires_grad = true;
    node->producer = tape;
    std::vector<NodePtr> inputs;
    for (const Tensor& p : parts) inputs.push_back(p.node());
    tape->record("concat_cols", node,
                 [inputs = std::move(inputs), widths = std::move(widths), n,
                  total](std::span<const double> g) {
                   std::size_t off = 0;
                   for (std::size_t k = 0; k < inputs.size(); ++k) {
                     if (inputs[k]->requires_grad) {
                       auto& gp = inputs[k]->grad_buffer();
                       for (std::size_t i = 0; i < n; ++i)
                         for (std::size_t j = 0; j < widths[k]; ++j)
                           gp[i * widths[k] + j] += g[i * total + off + j];
                     }
                     off += widths[k];
                   }
                 });
  }
  return Tensor(node);
}

Tensor column(const Tensor& x, std::size_t j) {
  require_matrix(x, "column");
  const std::size_t n = x.rows(), w = x.cols();
  require(j < w, "column: index out of range");
  const auto xv = x.data();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = xv[i * w + j];
  return finish("column", {n, 1}, std::move(out), {&x}, [&] {
    return [xn = x.node(), n, w, j](std::span<const double> g) {
      auto& gx = xn->grad_buffer();
      for (std::size_t i = 0; i < n; ++i) gx[i * w + j] += g[i];
    };
  });
}

Tensor scale_rows(const Tensor& x, const Tensor& s) {
  require_matrix(x, "scale_rows");
  const std::size_t n = x.rows(), d = x.cols();
  require(s.size() == n, "scale_rows: one scale per row required");
  const auto xv = x.data();
  const auto sv = s.data();
  std::vector<double> out(n * d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) out[i * d + j] = xv[i * d + j] * sv[i];
  return finish("scale_rows", x.shape(), std::move(out), {&x, &s}, [&] {
    return [xn = x.node(), sn = s.node(), n, d](std::span<const double> g) {
      if (xn->requires_grad) {
        auto& gx = xn->grad_buffer();
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < d; ++j) gx[i * d + j] += g[i * d + j] * sn->data[i];
      }
      if (sn->requires_grad) {
        auto& gs = sn->grad_buffer();
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < d; ++j) gs[i] += g[i * d + j] * xn->data[i * d + j];
      }
    };
  });
}

Tensor dropout(const Tensor& x, double rate, Rng& rng) {
  if (rate < 0.0 || rate >= 1.0) throw std::invalid_argument("dropout: rate must be in [0, 1)");
  if (rate == 0.0) return x;
  const auto xv = x.data();
  std::vector<double> mask(xv.size());
  const double keep = 1.0 / (1.0 - rate);
  for (double& m : mask) m = rng.uniform() < rate ? 0.0 : keep;
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] * mask[i];
  return finish("dropout", x.shape(), std::move(out), {&x}, [&] {
    return [xn = x.node(), mask = std::move(mask)](std::span<const double> g) {
      auto& gx = xn->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * mask[i];
    };
  });
}

}  // namespace i2i
