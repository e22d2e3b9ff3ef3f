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
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "i2i/config.hpp"
#include "i2i/gradcheck.hpp"
#include "i2i/harness.hpp"
#include "i2i/metrics.hpp"
#include "i2i/tasks.hpp"
#include "i2i/training.hpp"

namespace i2i {

/// Environment variable naming the default output root.
inline constexpr const char* kOutputRootEnv = "I2I_OUT";

struct SuiteConfig {
  std::uint64_t codebook_seed = 7;
  std::uint64_t suite_seed = 3;
  std::size_t train_size = 2000;
  std::size_t val_size = 500;
  /// Empty means default_tasks(suite_seed, train_size, val_size).
  std::vector<QATask> tasks;

  std::vector<QATask> resolved_tasks() const;
};

struct PretrainConfig {
  std::size_t per_type = 2000;
  std::uint64_t corpus_seed = 11;
  std::uint64_t seed = 5;
  PhaseHyper hyper{.epochs = 20, .batch_size = 32, .learning_rate = 1e-3, .patience = 0};
};

/// Everything one command needs. Loaded from a single JSON file; command-line
/// flags are overrides of its keys.
struct RunConfig {
  BackboneConfig backbone;
  SceneSpace scene;
  SuiteConfig suite;
  PretrainConfig pretrain;
  Algorithm algorithm = Algorithm::I2I;
  std::optional<I2IVariant> variant = I2IVariant::FF();
  Hyperparameters hyper;
  std::uint64_t seed = 1;
  int order = 1;     // 1, 2 or 3
  std::string out;   // empty: $I2I_OUT, else "runs"

  /// Throws ConfigError.
  void validate() const;
  std::filesystem::path out_root() const;
  std::filesystem::path data_dir() const { return out_root() / "data"; }
  std::filesystem::path backbone_path() const { return out_root() / "backbone.ckpt"; }
  /// out/runs/<method>/seed<N>/order<k>
  std::filesystem::path run_dir() const;
  std::string method_name() const;
};

nlohmann::json to_json(const RunConfig& config);
/// Rejects unknown keys at every level; missing keys keep their defaults.
RunConfig run_config_from_json(const nlohmann::json& j);

/// Applies "dotted.key=value" overrides to a config document. The value is
/// parsed as JSON when possible and taken as a string otherwise.
void apply_override(nlohmann::json& doc, const std::string& assignment);

/// Reads the file (or the defaults when path is empty), applies overrides
/// in order and validates.
RunConfig load_run_config(const std::filesystem::path& path,
                          std::span<const std::string> overrides = {});

/// Task order k (1-based) of the suite: a seeded permutation of the task ids.
std::vector<std::string> task_order(const RunConfig& config, int k);

class DigestMismatchError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class OutputExistsError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class GenStatus { Created, UpToDate };

/// Writes every task's train/val split and the pretraining corpus as JSON
/// lines plus manifest.json with per-file digests. A second call verifies the
/// files against the manifest and rewrites nothing.
GenStatus cmd_gen(const RunConfig& config);

/// Reads the generated suite, verifying each file digest.
std::map<std::string, std::shared_ptr<const TaskData>> load_suite(const RunConfig& config);

/// Pretrains the backbone on the generated corpus. Refuses to replace an
/// existing checkpoint.
PretrainResult cmd_pretrain(const RunConfig& config);

struct RunOutputs {
  RunResult result;
  std::filesystem::path dir;
};

/// Runs one schedule and writes record.json, store.ckpt, params.csv and
/// timing.json into run_dir().
RunOutputs cmd_run(const RunConfig& config, VanillaCache* cache = nullptr);

/// One MetricTable per candidate, followed by the cross-order aggregate of
/// every method with more than one record.
std::string cmd_metrics(const std::filesystem::path& vanilla,
                        std::span<const std::filesystem::path> candidates);

struct GradCheckReport {
  std::vector<GradCheckCase> cases;
  double tolerance = 1e-4;
  bool passed() const;
  std::string text() const;
};

GradCheckReport cmd_gradcheck(std::uint64_t seed = 0);

/// Renders parameter reports (one curve per algorithm for each count) or metric tables
/// (per-task transfer bars) as standalone SVG. The input kind is detected
/// from the CSV header; several parameter reports are merged.
std::string render_plot(std::span<const std::string> csv_inputs);
void cmd_plot(std::span<const std::filesystem::path> inputs, const std::filesystem::path& output);

}  // namespace i2i
