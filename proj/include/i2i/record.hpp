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
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

namespace i2i {

inline constexpr int kRecordSchemaVersion = 1;

/// One training phase of one task.
struct PhaseTrace {
  std::string phase;               // adapter | fusion | improvise | initialize | train
  std::size_t examples = 0;        // training examples the phase touched
  std::size_t steps = 0;           // optimizer steps
  std::vector<double> loss;        // per-epoch mean loss
  std::vector<double> val_score;   // per-epoch validation score (entry 0 before training)
  double score = 0.0;              // validation score of the phase's output
  std::string digest;              // parameters after the phase
  std::optional<double> distill_initial;  // L_D before / after (initialize only)
  std::optional<double> distill_final;
};

struct ParamCounts {
  std::size_t training_forward = 0;  // parameters active in a training forward pass
  std::size_t inference = 0;         // parameters active when serving this task
  std::size_t total = 0;             // everything persisted so far, backbone included
  bool operator==(const ParamCounts&) const = default;
};

struct TaskRecord {
  std::string task_id;
  std::size_t step = 0;  // 1-based position in the schedule
  double score = 0.0;    // final validation exact match S^k
  std::map<std::string, double> phase_scores;
  std::vector<PhaseTrace> phases;
  ParamCounts params;
  std::map<std::string, std::string> digests;  // adapter / head / fusion after the task
  std::optional<std::string> initialized_from;  // ClosestTaskInit choice
  std::vector<double> similarities;              // ClosestTaskInit: vs every prior task
  std::size_t audited = 0;  // prior tasks re-evaluated bit-exactly after this task
};

/// Complete audit trail of one schedule. Wall-clock times are kept in a
/// separate timing file so that the record itself is reproducible byte for byte.
struct CLRunRecord {
  int schema_version = kRecordSchemaVersion;
  std::string algorithm;
  std::string variant;  // empty unless algorithm == i2i
  std::uint64_t seed = 0;
  std::vector<std::string> order;
  std::string backbone_digest;
  std::string config_digest;
  nlohmann::json hyper;
  std::vector<TaskRecord> tasks;

  const TaskRecord& task(const std::string& id) const;
  /// Digest of the canonical serialization.
  std::string digest() const;
};

nlohmann::json to_json(const CLRunRecord& record);
CLRunRecord record_from_json(const nlohmann::json& j);

/// Canonical text: sorted keys, two-space indent, trailing newline.
std::string canonical_dump(const nlohmann::json& j);
void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

void write_record(const std::filesystem::path& path, const CLRunRecord& record);
CLRunRecord read_record(const std::filesystem::path& path);

}  // namespace i2i
