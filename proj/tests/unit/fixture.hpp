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

#include <filesystem>
#include <string>
#include <vector>

#include "i2i/commands.hpp"

namespace i2i::testing {

/// Overrides for a miniature configuration that trains in seconds.
inline std::vector<std::string> tiny_overrides(const std::filesystem::path& root) {
  return {"out=\"" + root.string() + "\"",
          "backbone.d_model=16",
          "backbone.n_heads=2",
          "backbone.n_enc_layers=1",
          "backbone.n_dec_layers=1",
          "backbone.d_ff=24",
          "suite.train_size=60",
          "suite.val_size=30",
          "pretrain.per_type=40",
          "pretrain.hyper.epochs=1",
          "hyper.bottleneck=4",
          "hyper.adapter.epochs=1",
          "hyper.fusion.epochs=1",
          "hyper.improvise.epochs=1",
          "hyper.initialize.epochs=1",
          "hyper.train.epochs=1"};
}

inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("i2i_unit_" + name);
  std::filesystem::remove_all(dir);
  return dir;
}

/// Generated suite and pretrained backbone shared by a test file.
inline const RunConfig& tiny_setup(const std::string& name) {
  static std::map<std::string, RunConfig> cache;
  auto it = cache.find(name);
  if (it != cache.end()) return it->second;
  const RunConfig config = load_run_config({}, tiny_overrides(scratch_dir(name)));
  cmd_gen(config);
  cmd_pretrain(config);
  return cache.emplace(name, config).first->second;
}

inline RunConfig with_algorithm(RunConfig c, Algorithm algorithm,
                                std::optional<I2IVariant> variant = std::nullopt) {
  c.algorithm = algorithm;
  c.variant = variant;
  return c;
}

}  // namespace i2i::testing
