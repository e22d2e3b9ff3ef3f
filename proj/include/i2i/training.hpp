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
#include <span>
#include <vector>

#include "i2i/backbone.hpp"
#include "i2i/example.hpp"
#include "i2i/optim.hpp"

namespace i2i {

/// Budget and optimizer settings for one training phase.
struct PhaseHyper {
  std::size_t epochs = 6;
  std::size_t batch_size = 32;
  double learning_rate = 1e-3;
  /// Epochs without validation improvement before stopping; 0 disables.
  std::size_t patience = 3;

  void validate() const;
  bool operator==(const PhaseHyper&) const = default;
};

struct TrainTrace {
  std::vector<double> loss;       // mean minibatch loss per epoch
  std::vector<double> val_score;  // entry 0 is the score before any update
  std::size_t steps = 0;          // optimizer steps taken
  std::size_t best_epoch = 0;     // epoch whose parameters were kept
  double best_score = 0.0;
};

/// Exact-match percentage of greedy decodes against example answers.
double evaluate_score(const BackboneParams& backbone, const TaskHead& head,
                      const AdapterRouting& routing, std::span<const Example> examples);

/// Cross-entropy training of `trainable` with shuffled minibatches.
///
/// Validation exact match is measured before training and after every
/// epoch; the best-scoring parameters (earliest on ties, including the
/// untouched start) are restored on return.
TrainTrace fit_supervised(const BackboneParams& backbone, const TaskHead& head,
                          const AdapterRouting& routing, std::span<Tensor> trainable,
                          std::span<const Example> train, std::span<const Example> val,
                          const PhaseHyper& hyper, std::uint64_t seed);

struct DistillTrace {
  std::vector<double> loss;  // mean minibatch L_D per epoch
  double initial_loss = 0.0;  // L_D over all inputs before training
  double final_loss = 0.0;    // L_D over all inputs after training
  std::size_t steps = 0;
};

/// Final-layer hidden states of a frozen teacher, one row block per example.
struct TeacherStates {
  std::size_t src_len = 0;
  std::size_t tgt_len = 0;
  std::size_t d_model = 0;
  std::vector<double> encoder;  // [n * src_len x d]
  std::vector<double> decoder;  // [n * tgt_len x d]
};

TeacherStates teacher_states(const BackboneParams& backbone, const TaskHead& head,
                             const AdapterRouting& routing, std::span<const Example> inputs);

/// L_D = MSE(h^E_T, h^E_S) + MSE(h^D_T, h^D_S), averaged over all inputs.
double distillation_loss(const BackboneParams& backbone, const TaskHead& student_head,
                         const AdapterRouting& student, std::span<const Example> inputs,
                         const TeacherStates& teacher);

/// Trains `trainable` (student adapter and head) to match the teacher's
/// hidden states under teacher forcing. Answers feed the decoder only; no
/// label loss is applied. Runs the full epoch budget.
DistillTrace distill(const BackboneParams& backbone, const TeacherStates& teacher,
                     const TaskHead& student_head, const AdapterRouting& student,
                     std::span<Tensor> trainable, std::span<const Example> inputs,
                     const PhaseHyper& hyper, std::uint64_t seed);

struct PretrainResult {
  BackboneParams backbone;
  TaskHead psi0;
  std::vector<double> loss;
  double mixture_score = 0.0;  // exact match on the corpus after training
  double majority_rate = 0.0;  // most frequent answer share of the corpus
};

/// Trains every backbone weight and Psi_0 on the pretraining mixture, then
/// freezes both. epochs == 0 returns the frozen random initialization.
PretrainResult pretrain_backbone(const BackboneConfig& config, std::span<const Example> corpus,
                                 const PhaseHyper& hyper, std::uint64_t seed);

}  // namespace i2i
