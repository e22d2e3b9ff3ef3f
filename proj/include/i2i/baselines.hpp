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
#include <vector>

#include "i2i/adapters.hpp"
#include "i2i/backbone.hpp"
#include "i2i/training.hpp"

namespace i2i {

/// A trained (adapter, head) pair with its validation score.
struct AdapterOutcome {
  AdapterParams adapter;
  TaskHead head;
  double score = 0.0;
  TrainTrace trace;
};

/// Supervised training of an adapter and head starting from the given values
/// inside the frozen backbone. Shared by every algorithm's adapter phase.
AdapterOutcome train_adapter_from(const BackboneParams& backbone, AdapterParams adapter,
                                  TaskHead head, std::span<const Example> train,
                                  std::span<const Example> val, const PhaseHyper& hyper,
                                  std::uint64_t seed);

/// Fresh adapter, head copied from psi0, trained on the full task data.
AdapterOutcome train_vanilla(const BackboneParams& backbone, const TaskHead& psi0,
                             std::span<const Example> train, std::span<const Example> val,
                             std::size_t bottleneck, const PhaseHyper& hyper, std::uint64_t seed);

struct FusionOutcome {
  AdapterOutcome extraction;  // phase 1: the task's own adapter
  FusionParams fusion;        // phase 2: fusion over previous adapters plus the new one
  TaskHead head;
  double score = 0.0;
  TrainTrace trace;
};

/// Two-phase AdapterFusion for task k >= 2. Phase 1 trains a fresh adapter
/// (or takes `extraction` when supplied, e.g. from a vanilla cache); phase 2
/// trains a fusion over previous adapters and the new one, plus the head.
/// The fusion is kept for inference.
FusionOutcome train_adapterfusion(const BackboneParams& backbone, const TaskHead& psi0,
                                  std::span<const AdapterParams* const> previous,
                                  std::span<const Example> train, std::span<const Example> val,
                                  std::size_t bottleneck, const PhaseHyper& adapter_hyper,
                                  const PhaseHyper& fusion_hyper, std::uint64_t extraction_seed,
                                  std::uint64_t fusion_seed,
                                  std::optional<AdapterOutcome> extraction = std::nullopt);

/// Exact cosine similarity; 0 when either vector is all zeros.
double cosine_similarity(std::span<const double> a, std::span<const double> b);

/// Index of the most similar prior representation; ties go to the earliest.
/// Throws std::invalid_argument when there are no priors.
std::size_t select_closest(std::span<const double> candidate,
                           std::span<const std::vector<double>> priors);

/// Argmax over a row of precomputed similarities (same tie rule); NaN
/// entries, such as a matrix diagonal, are skipped.
std::size_t select_closest(std::span<const double> similarities);

struct TaskSimilarityMatrix {
  std::vector<std::string> task_ids;
  std::vector<std::vector<double>> values;  // NaN on the diagonal

  static TaskSimilarityMatrix build(std::vector<std::string> ids,
                                    std::span<const std::vector<double>> representations);
  std::string to_csv() const;
};

struct ClosestTaskOutcome {
  AdapterOutcome trained;
  std::size_t selected = 0;                // index into priors
  std::vector<double> similarities;        // candidate vs every prior
  std::vector<double> representation;      // h_k recomputed with the trained head
};

/// Selects the prior task whose stored representation is closest to h_k
/// (computed with psi0 and no adapters on the new data), copies its adapter
/// and head, then trains on the new task.
ClosestTaskOutcome closest_task_init(const BackboneParams& backbone, const TaskHead& psi0,
                                     std::span<const AdapterParams* const> prior_adapters,
                                     std::span<const TaskHead* const> prior_heads,
                                     std::span<const std::vector<double>> prior_representations,
                                     std::span<const Example> train, std::span<const Example> val,
                                     const PhaseHyper& hyper, std::uint64_t seed);

struct HeadOutcome {
  TaskHead head;
  double score = 0.0;
  TrainTrace trace;
};

/// Trains only a head (from psi0) on the frozen backbone with no adapters.
HeadOutcome knowledge_free(const BackboneParams& backbone, const TaskHead& psi0,
                           std::span<const Example> train, std::span<const Example> val,
                           const PhaseHyper& hyper, std::uint64_t seed);

struct FinetuneOutcome {
  double score = 0.0;
  TrainTrace trace;
};

/// Single-task reference: trains a copy of the backbone and a copy of psi0.
/// The original backbone is never modified.
FinetuneOutcome full_finetune(const BackboneParams& backbone, const TaskHead& psi0,
                              std::span<const Example> train, std::span<const Example> val,
                              const PhaseHyper& hyper, std::uint64_t seed);

}  // namespace i2i
