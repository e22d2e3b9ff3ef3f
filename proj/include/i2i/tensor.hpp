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

#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace i2i {

class Rng;

using Shape = std::vector<std::size_t>;

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class TapeError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

std::string shape_str(const Shape& shape);
std::size_t shape_size(const Shape& shape);

namespace detail {

struct TensorNode {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until something accumulates into it
  bool requires_grad = false;
  bool frozen = false;
  const void* producer = nullptr;  // tape that recorded this node, null for leaves

  std::vector<double>& grad_buffer();
};

using NodePtr = std::shared_ptr<TensorNode>;

}  // namespace detail

/// Dense row-major fp64 array with an optional reverse-mode gradient.
///
/// Tensor is a shared handle: copies alias the same storage, as parameters
/// must be visible both to the model and to the optimizer. Use clone() for a
/// deep copy. Every forward result is checked for NaN/Inf.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor randn(Shape shape, double stddev, Rng& rng, bool requires_grad = false);
  static Tensor identity(std::size_t n, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t dim(std::size_t axis) const;
  std::size_t rank() const { return shape().size(); }
  std::size_t size() const;
  std::size_t rows() const { return dim(0); }
  std::size_t cols() const { return rank() < 2 ? 1 : dim(rank() - 1); }

  std::span<const double> data() const;
  /// Writable view; only legal on leaves (parameters, inputs).
  std::span<double> mutable_data();
  double item() const;
  double at(std::size_t flat) const { return data()[flat]; }
  double at(std::size_t row, std::size_t col) const { return data()[row * cols() + col]; }

  bool requires_grad() const;
  /// Throws TapeError when enabling gradients on a frozen tensor.
  void set_requires_grad(bool on);
  /// Permanently disables gradients; later set_requires_grad(true) throws.
  void freeze();
  bool frozen() const;

  bool has_grad() const;
  std::span<const double> grad() const;
  void zero_grad();

  Tensor clone(bool requires_grad = false) const;
  bool same_storage(const Tensor& other) const { return node_ == other.node_; }

  const detail::NodePtr& node() const { return node_; }
  explicit Tensor(detail::NodePtr node) : node_(std::move(node)) {}

 private:
  detail::NodePtr node_;
};

/// Ordered record of primitive applications for one forward pass.
///
/// Constructing a Tape makes it the active tape of the calling thread until
/// it is destroyed; ops record onto the active tape whenever an input
/// requires a gradient. With no active tape, ops run in inference mode.
/// backward() may run once.
class Tape {
 public:
  using BackwardFn = std::function<void(std::span<const double> out_grad)>;

  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* active();

  void backward(const Tensor& loss);
  std::size_t size() const { return entries_.size(); }
  bool consumed() const { return consumed_; }
  std::vector<std::string_view> op_names() const;

  void record(std::string_view op, detail::NodePtr output, BackwardFn fn);

 private:
  struct Entry {
    std::string_view op;
    detail::NodePtr output;
    BackwardFn backward;
  };
  std::vector<Entry> entries_;
  Tape* previous_ = nullptr;
  bool consumed_ = false;
};

/// Suspends recording for its lifetime (evaluation inside a training step).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool saved_;
};

/// Runs backward on the active tape.
void backward(const Tensor& loss);

// Primitives. Matrices are rank-2 [rows x cols]; sequence batches are stored
// as [batch * length x features] with examples contiguous.

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
/// x[N x d] + bias[d] broadcast over rows.
Tensor add_bias(const Tensor& x, const Tensor& bias);
Tensor relu(const Tensor& x);
Tensor softmax(const Tensor& x, std::size_t axis);
/// Normalizes over the last axis, then applies gain and bias.
Tensor layernorm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);
Tensor sum(const Tensor& x);
Tensor mse(const Tensor& a, const Tensor& b);
/// Mean negative log-likelihood over positions whose target != ignore_index.
Tensor cross_entropy(const Tensor& logits, std::span<const int> targets, int ignore_index = -1);
/// Rows of table selected by ids: [ids.size() x table.cols()].
Tensor gather_rows(const Tensor& table, std::span<const int> ids);
/// Per-example concatenation along the sequence axis:
/// a[B*Ta x d], b[B*Tb x d] -> [B*(Ta+Tb) x d].
Tensor concat_sequences(const Tensor& a, const Tensor& b, std::size_t batch);
/// Mean over the sequence axis: [B*T x d] -> [B x d].
Tensor mean_pool(const Tensor& x, std::size_t batch);
/// Multi-head scaled dot-product attention on already-projected inputs.
/// q[B*Tq x d], k and v [B*Tk x d]; causal masks key j > query i.
Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t batch,
                 std::size_t heads, bool causal);
/// Row-wise inner product: [N x d], [N x d] -> [N x 1].
Tensor rowdot(const Tensor& a, const Tensor& b);
/// Column concatenation of [N x c_i] blocks.
Tensor concat_cols(std::span<const Tensor> parts);
/// Column j of x as [N x 1].
Tensor column(const Tensor& x, std::size_t j);
/// x[N x d] scaled row-wise by s[N x 1].
Tensor scale_rows(const Tensor& x, const Tensor& s);
/// Inverted dropout; identity when rate == 0.
Tensor dropout(const Tensor& x, double rate, Rng& rng);

}  // namespace i2i
