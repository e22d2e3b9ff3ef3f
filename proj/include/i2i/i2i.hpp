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
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "i2i/baselines.hpp"

namespace i2i {

/// Data budgets for the improvise and initialize phases. Phase three always
/// uses the full training set.
struct I2IVariant {
  std::string name;
  double improvise_fraction = 1.0;
  double initialize_fraction = 1.0;

  static I2IVariant FF() { return {"FF", 1.0, 1.0}; }
  static I2IVariant FL() { return {"FL", 1.0, 0.05}; }
  static I2IVariant LL() { return {"LL", 0.05, 0.05}; }
  /// Accepts "FF", "FL" or "LL"; throws ConfigError otherwise.
  static I2IVariant parse(std::string_view name);
  void validate() const;
};

/// ceil(fraction * n) sorted indices. The subset is a prefix of one seeded
/// permutation, so smaller fractions under the same seed are nested inside
/// larger ones.
std::vector<std::size_t> subsample_indices(std::size_t n, double fraction, std::uint64_t seed);
std::vector<Example> subsample(std::span<const Example> examples, double fraction,
                               std::uint64_t seed);

struct ImproviseOutcome {
  std::optional<FusionParams> fusion;  // absent for k == 2
  TaskHead head;
  double score = 0.0;
  TrainTrace trace;
};

/// Phase one. For k == 2 trains only the head through the single frozen
/// previous adapter; for k >= 3 trains a fresh fusion over the previous
/// adapters together with the head. The returned fusion and head are frozen.
ImproviseOutcome improvise(std::size_t k, const BackboneParams& backbone, const TaskHead& psi0,
                           std::span<const AdapterParams* const> previous,
                           std::span<const Example> subset, std::span<const Example> val,
                           const PhaseHyper& hyper, std::uint64_t seed);

struct InitializeOutcome {
  AdapterParams adapter;
  TaskHead head;
  double score = 0.0;
  DistillTrace trace;
};

/// Phase two. k == 2 copies the previous adapter and the improvise head with
/// no optimization. k >= 3 distills the improvise model (teacher) into a
/// fresh adapter and a copy of the teacher head. The fusion is not retained.
InitializeOutcome initialize(std::size_t k, const BackboneParams& backbone,
                             std::span<const AdapterParams* const> previous,
                             const ImproviseOutcome& teacher, std::span<const Example> subset,
                             std::span<const Example> val, std::size_t bottleneck,
                             const PhaseHyper& hyper, std::uint64_t seed);

/// Phase three: supervised training on the full task data from the phase-two
/// adapter and head.
AdapterOutcome train_adapter(const BackboneParams& backbone, const InitializeOutcome& init,
                             std::span<const Example> train, std::span<const Example> val,
                             const PhaseHyper& hyper, std::uint64_t seed);

}  // namespace i2i
