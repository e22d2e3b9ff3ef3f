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

#include "i2i/adapters.hpp"

#include <cmath>

namespace i2i {

std::size_t count_named(const std::vector<NamedTensor>& tensors) {
  std::size_t total = 0;
  for (const NamedTensor& t : tensors) total += t.tensor.size();
  return total;
}

std::vector<NamedTensor> AdapterParams::named_parameters() const {
  std::vector<NamedTensor> out;
  for (std::size_t p = 0; p < points.size(); ++p) {
    const std::string prefix = "point" + std::to_string(p) + ".";
    out.push_back({prefix + "down", points[p].down});
    out.push_back({prefix + "down_bias", points[p].down_bias});
    out.push_back({prefix + "up", points[p].up});
    out.push_back({prefix + "up_bias", points[p].up_bias});
  }
  return out;
}

std::vector<Tensor> AdapterParams::parameters() const {
  std::vector<Tensor> out;
  for (auto& nt : named_parameters()) out.push_back(nt.tensor);
  return out;
}

AdapterParams AdapterParams::clone() const {
  AdapterParams copy;
  copy.bottleneck = bottleneck;
  for (const AdapterPoint& p : points)
    copy.points.push_back({p.down.clone(), p.down_bias.clone(), p.up.clone(), p.up_bias.clone()});
  return copy;
}

void AdapterParams::set_trainable(bool on) {
  for (Tensor t : parameters()) t.set_requires_grad(on);
}

void AdapterParams::freeze() {
  for (Tensor t : parameters()) t.freeze();
}

std::vector<NamedTensor> FusionParams::named_parameters() const {
  std::vector<NamedTensor> out;
  for (std::size_t p = 0; p < points.size(); ++p) {
    const std::string prefix = "point" + std::to_string(p) + ".";
    out.push_back({prefix + "query", points[p].query});
    out.push_back({prefix + "key", points[p].key});
    out.push_back({prefix + "value", points[p].value});
  }
  return out;
}

std::vector<Tensor> FusionParams::parameters() const {
  std::vector<Tensor> out;
  for (auto& nt : named_parameters()) out.push_back(nt.tensor);
  return out;
}

FusionParams FusionParams::clone() const {
  FusionParams copy;
  copy.n_adapters = n_adapters;
  for (const FusionPoint& p : points)
    copy.points.push_back({p.query.clone(), p.key.clone(), p.value.clone()});
  return copy;
}

void FusionParams::set_trainable(bool on) {
  for (Tensor t : parameters()) t.set_requires_grad(on);
}

void FusionParams::freeze() {
  for (Tensor t : parameters()) t.freeze();
}

Tensor adapter_forward(const AdapterPoint& adapter, const Tensor& x) {
  if (x.rank() != 2 || x.cols() != adapter.down.rows())
    throw ShapeError("adapter_forward: input width " + shape_str(x.shape()) +
                     " does not match adapter " + shape_str(adapter.down.shape()));
  const Tensor hidden = relu(add_bias(matmul(x, adapter.down), adapter.down_bias));
  return add(x, add_bias(matmul(hidden, adapter.up), adapter.up_bias));
}

FusionResult fusion_forward(const FusionPoint& fusion, const Tensor& x,
                            std::span<const Tensor> adapter_outputs) {
  if (adapter_outputs.empty()) throw ShapeError("fusion_forward: empty adapter list");
  for (const Tensor& o : adapter_outputs)
    if (o.shape() != x.shape()) throw ShapeError("fusion_forward: adapter output shape mismatch");
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(x.cols()));
  // (x Q)(o K)^T == ((x Q) K^T) o^T, so the key map is applied once to the query.
  const Tensor query_in_key_space = matmul(matmul(x, fusion.query), transpose(fusion.key));
  std::vector<Tensor> scores;
  scores.reserve(adapter_outputs.size());
  for (const Tensor& o : adapter_outputs) scores.push_back(scale(rowdot(query_in_key_space, o), inv_sqrt_d));
  const Tensor weights = softmax(concat_cols(scores), 1);
  // sum_i alpha_i (o_i V) == (sum_i alpha_i o_i) V
  Tensor mixed = scale_rows(adapter_outputs[0], column(weights, 0));
  for (std::size_t i = 1; i < adapter_outputs.size(); ++i)
    mixed = add(mixed, scale_rows(adapter_outputs[i], column(weights, i)));
  return {matmul(mixed, fusion.value), weights};
}

AdapterParams init_adapter(const BackboneConfig& config, std::size_t bottleneck, Rng& rng) {
  if (bottleneck == 0) throw ConfigError("adapter bottleneck must be >= 1");
  const std::size_t d = config.d_model;
  AdapterParams params;
  params.bottleneck = bottleneck;
  for (std::size_t p = 0; p < config.insertion_points(); ++p) {
    params.points.push_back({Tensor::randn({d, bottleneck}, 0.02, rng), Tensor::zeros({bottleneck}),
                             Tensor::zeros({bottleneck, d}), Tensor::zeros({d})});
  }
  return params;
}

FusionParams init_fusion(const BackboneConfig& config, std::size_t n_adapters, Rng& rng) {
  if (n_adapters == 0) throw ConfigError("fusion requires at least one adapter");
  const std::size_t d = config.d_model;
  FusionParams params;
  params.n_adapters = n_adapters;
  for (std::size_t p = 0; p < config.insertion_points(); ++p) {
    Tensor q = Tensor::randn({d, d}, 0.02, rng);
    Tensor k = Tensor::randn({d, d}, 0.02, rng);
    params.points.push_back({q, k, Tensor::identity(d)});
  }
  return params;
}

std::size_t count_params(const AdapterParams& adapter) {
  return count_named(adapter.named_parameters());
}

std::size_t count_params(const FusionParams& fusion) {
  if (fusion.n_adapters == 0) throw ConfigError("fusion over an empty adapter list");
  return count_named(fusion.named_parameters());
}

std::size_t adapter_param_formula(std::size_t n_points, std::size_t d_model, std::size_t r) {
  return n_points * (2 * d_model * r + r + d_model);
}

std::size_t fusion_param_formula(std::size_t n_points, std::size_t d_model) {
  return n_points * 3 * d_model * d_model;
}

}  // namespace i2i
