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

#include "i2i/i2i.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace i2i {

I2IVariant I2IVariant::parse(std::string_view name) {
  if (name == "FF") return FF();
  if (name == "FL") return FL();
  if (name == "LL") return LL();
  throw ConfigError("unknown I2I variant '" + std::string(name) + "' (expected FF, FL or LL)");
}

void I2IVariant::validate() const {
  auto in_range = [](double f) { return f > 0.0 && f <= 1.0; };
  if (!in_range(improvise_fraction) || !in_range(initialize_fraction))
    throw ConfigError("I2I fractions must lie in (0, 1]");
}

std::vector<std::size_t> subsample_indices(std::size_t n, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0))
    throw std::invalid_argument("subsample: fraction must lie in (0, 1]");
  const auto take = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n)));
  if (take >= n) {
    std::vector<std::size_t> all(n);
    for (std::size_t i = 0; i < n; ++i) all[i] = i;
    return all;
  }
  Rng rng(seed);
  std::vector<std::size_t> order = rng.permutation(n);
  order.resize(take);
  std::sort(order.begin(), order.end());
  return order;
}

std::vector<Example> subsample(std::span<const Example> examples, double fraction,
                               std::uint64_t seed) {
  std::vector<Example> out;
  for (std::size_t i : subsample_indices(examples.size(), fraction, seed))
    out.push_back(examples[i]);
  if (out.empty()) throw std::invalid_argument("subsample: empty result");
  return out;
}

ImproviseOutcome improvise(std::size_t k, const BackboneParams& backbone, const TaskHead& psi0,
                           std::span<const AdapterParams* const> previous,
                           std::span<const Example> subset, std::span<const Example> val,
                           const PhaseHyper& hyper, std::uint64_t seed) {
  if (k < 2) throw std::invalid_argument("improvise requires k >= 2");
  if (previous.size() != k - 1) throw std::invalid_argument("improvise: expected k-1 adapters");
  if (subset.empty()) throw std::invalid_argument("improvise: empty subsample");
  ImproviseOutcome out;
  out.head = psi0.clone();
  out.head.set_trainable(true);
  std::vector<Tensor> trainable = out.head.parameters();
  AdapterRouting routing = AdapterRouting::single(*previous[0]);
  if (k >= 3) {
    Rng init_rng = Rng(seed).split("fusion-init");
    out.fusion = init_fusion(backbone.config, previous.size(), init_rng);
    out.fusion->set_trainable(true);
    for (const Tensor& t : out.fusion->parameters()) trainable.push_back(t);
    routing = AdapterRouting{{previous.begin(), previous.end()}, &*out.fusion};
  }
  out.trace = fit_supervised(backbone, out.head, routing, trainable, subset, val, hyper, seed);
  out.score = out.trace.best_score;
  out.head.freeze();
  if (out.fusion) out.fusion->freeze();
  return out;
}

InitializeOutcome initialize(std::size_t k, const BackboneParams& backbone,
                             std::span<const AdapterParams* const> previous,
                             const ImproviseOutcome& teacher, std::span<const Example> subset,
                             std::span<const Example> val, std::size_t bottleneck,
                             const PhaseHyper& hyper, std::uint64_t seed) {
  if (k < 2) throw std::invalid_argument("initialize requires k >= 2");
  if (previous.size() != k - 1) throw std::invalid_argument("initialize: expected k-1 adapters");
  if (k >= 3 && !teacher.fusion) throw std::invalid_argument("initialize: teacher fusion missing");
  if (subset.empty()) throw std::invalid_argument("initialize: empty subset");
  InitializeOutcome out;
  out.head = teacher.head.clone();
  if (k == 2) {
    out.adapter = previous[0]->clone();
    out.score = evaluate_score(backbone, out.head, AdapterRouting::single(out.adapter), val);
    out.trace.initial_loss = out.trace.final_loss = 0.0;
    return out;
  }
  const AdapterRouting teacher_routing{{previous.begin(), previous.end()}, &*teacher.fusion};
  const TeacherStates states = teacher_states(backbone, teacher.head, teacher_routing, subset);
  Rng rng(seed);
  Rng init_rng = rng.split("init");
  out.adapter = init_adapter(backbone.config, bottleneck, init_rng);
  out.adapter.set_trainable(true);
  out.head.set_trainable(true);
  std::vector<Tensor> trainable = out.adapter.parameters();
  for (const Tensor& t : out.head.parameters()) trainable.push_back(t);
  out.trace = distill(backbone, states, out.head, AdapterRouting::single(out.adapter), trainable,
                      subset, hyper, rng.split("fit").seed());
  out.adapter.set_trainable(false);
  out.head.set_trainable(false);
  out.score = evaluate_score(backbone, out.head, AdapterRouting::single(out.adapter), val);
  return out;
}

AdapterOutcome train_adapter(const BackboneParams& backbone, const InitializeOutcome& init,
                             std::span<const Example> train, std::span<const Example> val,
                             const PhaseHyper& hyper, std::uint64_t seed) {
  return train_adapter_from(backbone, init.adapter.clone(), init.head.clone(), train, val, hyper,
                            seed);
}

}  // namespace i2i
