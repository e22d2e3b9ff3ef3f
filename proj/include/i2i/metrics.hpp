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

#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "i2i/record.hpp"

namespace i2i {

class MetricError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// 100 (S_F - S_A) / S_A. Throws MetricError when S_A == 0.
double knowledge_transfer(double s_f, double s_a);

/// Mean of per-task transfers for tasks 2..K. Throws on an empty list.
double overall_transfer(std::span<const double> per_task);

/// 100 (S_F - S_Phi) / S_F. Throws MetricError when S_F == 0.
double distillation_decay(double s_f, double s_phi);

/// Mean over pairs (after phase two, after phase three) of the relative gain
/// 100 (after3 - after2) / after2.
double phase3_gain(std::span<const std::pair<double, double>> pairs);

/// Unweighted mean; throws on an empty list.
double mean_of(std::span<const double> values);

/// Per-run metrics for one candidate record against a vanilla record.
struct MetricTable {
  std::string method;
  std::vector<std::string> task_ids;      // candidate schedule order
  std::vector<double> scores;             // S^i
  std::vector<std::optional<double>> transfer;  // T_i; empty for the first task
  double overall = 0.0;                   // mean over tasks 2..K
  std::vector<std::optional<double>> decay;     // I2I only, tasks 2..K
  std::optional<double> phase3_gain;      // I2I only

  /// Columns: task, step, score, transfer, decay; then an overall row.
  std::string to_csv() const;
};

/// Throws MetricError when the two records cover different task sets or the
/// candidate has fewer than two tasks.
MetricTable compute_metrics(const CLRunRecord& vanilla, const CLRunRecord& candidate);

/// Distillation decay per task (k >= 2) and phase-three gain of an I2I record.
std::vector<std::optional<double>> decay_per_task(const CLRunRecord& record);
std::optional<double> run_phase3_gain(const CLRunRecord& record);

/// Cross-order aggregate. Per task: the mean transfer and score over the
/// orders where the task is not first. Overall: the mean of the per-order
/// overall transfers.
struct AggregateRow {
  std::string method;
  std::vector<std::string> task_ids;
  std::vector<std::optional<double>> transfer;
  std::vector<std::optional<double>> score;
  double overall = 0.0;
};

AggregateRow aggregate_orders(std::span<const MetricTable> per_order);

/// One header row, then "T_i [S^i]" cells and the overall transfer per method.
std::string aggregate_csv(std::span<const AggregateRow> rows);

}  // namespace i2i
