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

#include "i2i/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "i2i/rng.hpp"

namespace i2i {

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
  return std::abs(analytic - numeric) / denom;
}

namespace {

double evaluate(const std::function<Tensor()>& loss_fn) {
  NoGradGuard no_grad;
  const double value = loss_fn().item();
  if (!std::isfinite(value)) throw NonFiniteError("grad_check: non-finite loss");
  return value;
}

}  // namespace

GradCheckResult grad_check(const std::function<Tensor()>& loss_fn, std::span<Tensor> params,
                           const GradCheckOptions& options) {
  for (Tensor& p : params) {
    if (!p.requires_grad()) throw TapeError("grad_check: parameter does not require grad");
    p.zero_grad();
  }
  std::vector<std::vector<double>> analytic;
  {
    Tape tape;
    const Tensor loss = loss_fn();
    if (!std::isfinite(loss.item())) throw NonFiniteError("grad_check: non-finite loss");
    tape.backward(loss);
  }
  for (const Tensor& p : params) {
    if (p.has_grad())
      analytic.emplace_back(p.grad().begin(), p.grad().end());
    else
      analytic.emplace_back(p.size(), 0.0);
  }

  Rng rng(options.seed);
  GradCheckResult result;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Tensor& p = params[pi];
    std::vector<std::size_t> coords;
    if (options.sample_threshold > 0 && p.size() > options.sample_threshold) {
      auto perm = rng.permutation(p.size());
      coords.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(options.sample_threshold));
      std::sort(coords.begin(), coords.end());
    } else {
      coords.resize(p.size());
      for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = i;
    }
    for (std::size_t idx : coords) {
      auto values = p.mutable_data();
      const double original = values[idx];
      values[idx] = original + options.eps;
      const double up = evaluate(loss_fn);
      values[idx] = original - options.eps;
      const double down = evaluate(loss_fn);
      values[idx] = original;
      const double numeric = (up - down) / (2.0 * options.eps);
      const double rel = relative_error(analytic[pi][idx], numeric);
      ++result.coordinates;
      if (rel > result.max_rel_error || result.coordinates == 1) {
        result.max_rel_error = rel;
        result.worst_param = pi;
        result.worst_index = idx;
        result.worst_analytic = analytic[pi][idx];
        result.worst_numeric = numeric;
      }
    }
  }
  return result;
}

}  // namespace i2i
