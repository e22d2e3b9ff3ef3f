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
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "i2i/baselines.hpp"
#include "i2i/checkpoint.hpp"
#include "i2i/i2i.hpp"
#include "i2i/record.hpp"
#include "i2i/tasks.hpp"

namespace i2i {

enum class Algorithm { Vanilla, AdapterFusion, ClosestTaskInit, I2I };

std::string_view to_string(Algorithm algorithm);
Algorithm parse_algorithm(std::string_view name);

/// Per-phase budgets. Every phase defaults to the same budget.
struct Hyperparameters {
  std::size_t bottleneck = 8;
  PhaseHyper adapter;     // vanilla, T_1, ClosestTaskInit, AdapterFusion phase 1
  PhaseHyper fusion;      // AdapterFusion phase 2
  PhaseHyper improvise;   // I2I phase one and the Knowledge-Free baseline
  PhaseHyper initialize;  // I2I phase two
  PhaseHyper train;       // I2I phase three

  void validate() const;
  bool operator==(const Hyperparameters&) const = default;
};

nlohmann::json to_json(const PhaseHyper& h);
PhaseHyper phase_hyper_from_json(const nlohmann::json& j);
nlohmann::json to_json(const Hyperparameters& h);
Hyperparameters hyperparameters_from_json(const nlohmann::json& j);

struct CLSchedule {
  std::vector<std::string> order;
  Algorithm algorithm = Algorithm::Vanilla;
  std::optional<I2IVariant> variant;  // present iff algorithm == I2I
  Hyperparameters hyper;
  std::uint64_t seed = 0;

  /// Throws ConfigError on duplicate tasks or a variant/algorithm mismatch.
  void validate() const;
};

/// Seed of one phase of one task: derive_seed(run_seed, task_id + "/" + label).
std::uint64_t phase_seed(std::uint64_t run_seed, const std::string& task_id,
                         std::string_view label);

class DataAccessError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class AuditError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Revocable view of one task's data. The training split becomes unreadable
/// once the task finishes; the validation split stays available for the
/// task-aware evaluation of stored parameters.
class TaskDataHandle {
 public:
  TaskDataHandle(std::string id, std::shared_ptr<const TaskData> data,
                 std::shared_ptr<const bool> revoked);
  const std::string& id() const { return id_; }
  /// Throws DataAccessError after revocation.
  std::span<const Example> train() const;
  std::span<const Example> val() const;

 private:
  std::string id_;
  std::shared_ptr<const TaskData> data_;
  std::shared_ptr<const bool> revoked_;
};

/// Owns every task's data for one run and enforces the access firewall.
class DataVault {
 public:
  void add(const std::string& id, std::shared_ptr<const TaskData> data);
  bool contains(const std::string& id) const;
  /// Opens a task; throws DataAccessError if it was already closed.
  TaskDataHandle open(const std::string& id);
  /// Revokes training access for every handle of the task.
  void close(const std::string& id);
  std::span<const Example> val(const std::string& id) const;

 private:
  struct Entry {
    std::shared_ptr<const TaskData> data;
    std::shared_ptr<bool> revoked;
  };
  std::map<std::string, Entry> entries_;
};

/// Parameters persisted for one task.
struct StoredTask {
  std::string id;
  AdapterParams adapter;
  TaskHead head;
  std::optional<FusionParams> fusion;  // AdapterFusion, over tasks 1..k in store order
  std::vector<double> representation;  // ClosestTaskInit h_j
  double score = 0.0;
};

/// Task-aware model store: the frozen backbone plus per-task parameters.
class ModelStore {
 public:
  void add(StoredTask task);
  void set_score(std::size_t index, double score);
  std::size_t size() const { return tasks_.size(); }
  const StoredTask& at(std::size_t index) const { return tasks_.at(index); }
  const StoredTask& find(const std::string& id) const;
  std::vector<const AdapterParams*> adapters(std::size_t count) const;
  /// Adapter and fusion routing that serves task `index`.
  AdapterRouting routing(std::size_t index) const;
  bool has_fusion() const;

  std::vector<CheckpointBlock> blocks() const;
  /// Rebuilds a store written by save_store; the bottleneck width is read
  /// from the block shapes.
  static ModelStore from_checkpoint(const Checkpoint& ckpt, const BackboneConfig& config);

 private:
  std::vector<StoredTask> tasks_;
};

void save_store(const std::filesystem::path& path, const BackboneConfig& config,
                const ModelStore& store);

/// Parameter counts after `step` tasks (1-based), enumerated from the store.
/// training_forward is the largest forward pass used while training that
/// task: the improvise fusion for I2I phase one and the phase-2 fusion for
/// AdapterFusion.
ParamCounts param_report(Algorithm algorithm, const BackboneParams& backbone,
                         const ModelStore& store, std::size_t step);

struct ParamReportRow {
  std::size_t step = 0;
  std::string algorithm;
  ParamCounts counts;
};
std::string param_report_csv(std::span<const ParamReportRow> rows);
std::vector<ParamReportRow> param_report_rows(const CLRunRecord& record);

/// Reuses vanilla adapters across schedules with the same seed and budget.
/// Vanilla training depends only on (task, seed, budget), so the cache is
/// shared between task orders, AdapterFusion phase 1 and I2I task 1.
class VanillaCache {
 public:
  /// Deep copy of the cached outcome, if any.
  std::optional<AdapterOutcome> get(const std::string& key) const;
  void put(const std::string& key, const AdapterOutcome& outcome);

 private:
  std::map<std::string, AdapterOutcome> entries_;
};

struct RunTiming {
  std::vector<std::pair<std::string, double>> task_seconds;
  double total_seconds = 0.0;
  nlohmann::json to_json() const;
};

struct RunResult {
  CLRunRecord record;
  ModelStore store;
  RunTiming timing;
};

struct RunContext {
  const BackboneParams& backbone;
  const TaskHead& psi0;
  DataVault& vault;
  VanillaCache* cache = nullptr;
  std::function<void(const std::string&)> log;
};

/// Executes the schedule, re-evaluating every stored task after each new one
/// (throws AuditError when a score changes) and closing each task's training
/// data once it completes.
RunResult run_schedule(const CLSchedule& schedule, RunContext& context);

/// run_schedule with algorithm = I2I.
RunResult run_i2i(std::vector<std::string> order, const I2IVariant& variant,
                  const Hyperparameters& hyper, std::uint64_t seed, RunContext& context);

/// Vanilla adapter for one task with the cache consulted first.
AdapterOutcome cached_vanilla(const BackboneParams& backbone, const TaskHead& psi0,
                              const std::string& task_id, std::span<const Example> train,
                              std::span<const Example> val, const Hyperparameters& hyper,
                              std::uint64_t run_seed, VanillaCache* cache);

}  // namespace i2i
