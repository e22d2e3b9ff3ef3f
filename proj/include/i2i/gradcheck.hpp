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

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "i2i/tensor.hpp"

namespace i2i {

struct GradCheckOptions {
  double eps = 1e-5;
  /// Tensors larger than this are checked on a seeded sample of this many
  /// coordinates; 0 checks every coordinate.
  std::size_t sample_threshold = 0;
  std::uint64_t seed = 0;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t coordinates = 0;
  std::size_t worst_param = 0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

/// Relative error used throughout: |a - n| / max(|a|, |n|, 1e-6). The floor
/// sits above central-difference roundoff (about 1e-16 |loss| / eps), which
/// otherwise dominates gradients below 1e-7.
double relative_error(double analytic, double numeric);

/// Compares the reverse-mode gradient of `loss_fn` with central differences
/// over every coordinate of `params`. `loss_fn` must build a scalar loss from
/// the current parameter values and be deterministic.
GradCheckResult grad_check(const std::function<Tensor()>& loss_fn, std::span<Tensor> params,
                           const GradCheckOptions& options = {});

struct GradCheckCase {
  std::string name;
  GradCheckResult result;
};

/// Checks every autodiff primitive on small random inputs, then the full
/// model (cross-entropy through a fusion of two adapters, and the hidden-state
/// distillation loss) on a tiny configuration. Model cases sample at most
/// `model_coordinates` entries per tensor.
std::vector<GradCheckCase> gradcheck_suite(std::uint64_t seed = 0, double eps = 1e-5,
                                           std::size_t model_coordinates = 24);

}  // namespace i2i
