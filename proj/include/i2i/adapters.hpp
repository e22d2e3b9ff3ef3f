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
#include <string>
#include <vector>

#include "i2i/config.hpp"
#include "i2i/rng.hpp"
#include "i2i/tensor.hpp"

namespace i2i {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

/// Bottleneck adapter weights at one insertion point.
struct AdapterPoint {
  Tensor down;       // [d_model x r]
  Tensor down_bias;  // [r]
  Tensor up;         // [r x d_model]
  Tensor up_bias;    // [d_model]
};

/// One task's adapter: a residual bottleneck at every insertion point.
struct AdapterParams {
  std::size_t bottleneck = 0;
  std::vector<AdapterPoint> points;

  std::vector<NamedTensor> named_parameters() const;
  std::vector<Tensor> parameters() const;
  AdapterParams clone() const;
  void set_trainable(bool on);
  void freeze();
};

/// Query/key/value matrices of the fusion attention at one insertion point.
struct FusionPoint {
  Tensor query;  // [d_model x d_model]
  Tensor key;
  Tensor value;
};

/// Attention over an ordered list of adapters (AdapterFusion layer).
struct FusionParams {
  std::size_t n_adapters = 0;
  std::vector<FusionPoint> points;

  std::vector<NamedTensor> named_parameters() const;
  std::vector<Tensor> parameters() const;
  FusionParams clone() const;
  void set_trainable(bool on);
  void freeze();
};

struct FusionResult {
  Tensor output;   // [N x d_model]
  Tensor weights;  // attention over adapters, [N x k]
};

/// x + Up(ReLU(Down(x))).
Tensor adapter_forward(const AdapterPoint& adapter, const Tensor& x);

/// Attention fusion: per row t, alpha = softmax_i((x_t Q) . (o_i,t K) / sqrt(d)),
/// output_t = sum_i alpha_i (o_i,t V). No residual is added here; each
/// adapter output already carries x.
FusionResult fusion_forward(const FusionPoint& fusion, const Tensor& x,
                            std::span<const Tensor> adapter_outputs);

/// Down-projection ~ N(0, 0.02^2); up-projection and biases zero, so a fresh
/// adapter is an exact identity.
AdapterParams init_adapter(const BackboneConfig& config, std::size_t bottleneck, Rng& rng);

/// Value = identity; query and key ~ N(0, 0.02^2). Throws ConfigError when
/// n_adapters == 0.
FusionParams init_fusion(const BackboneConfig& config, std::size_t n_adapters, Rng& rng);

std::size_t count_params(const AdapterParams& adapter);
std::size_t count_params(const FusionParams& fusion);

/// Closed forms: n_points * (2 d r + r + d) and n_points * 3 d^2.
std::size_t adapter_param_formula(std::size_t n_points, std::size_t d_model, std::size_t r);
std::size_t fusion_param_formula(std::size_t n_points, std::size_t d_model);

std::size_t count_named(const std::vector<NamedTensor>& tensors);

}  // namespace i2i
