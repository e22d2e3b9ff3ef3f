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
#include <stdexcept>
#include <string>
#include <vector>

#include "i2i/adapters.hpp"
#include "i2i/backbone.hpp"

namespace i2i {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CheckpointBlock {
  std::string name;
  Shape shape;
  std::vector<double> data;
};

/// Binary parameter container.
///
/// Layout, all integers little-endian:
///   magic     8 bytes  "I2ICKPT\0"
///   version   u32      (kCheckpointVersion)
///   digest    u32 length + bytes  (BackboneConfig::digest of the model)
///   count     u64      number of blocks
///   per block: u32 name length, name bytes, u32 rank, rank x u64 dims,
///              product(dims) x fp64 (IEEE-754 little-endian)
/// Blocks are written in the order given, so identical inputs give
/// identical bytes.
struct Checkpoint {
  std::uint32_t version = 0;
  std::string config_digest;
  std::vector<CheckpointBlock> blocks;

  const CheckpointBlock& block(const std::string& name) const;
  bool contains(const std::string& name) const;
  /// Blocks whose name starts with prefix, prefix stripped.
  std::vector<CheckpointBlock> with_prefix(const std::string& prefix) const;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<CheckpointBlock> to_blocks(const std::vector<NamedTensor>& tensors,
                                       const std::string& prefix = "");
/// Copies block values into tensors of matching names and shapes.
void load_blocks(const std::vector<CheckpointBlock>& blocks,
                 const std::vector<NamedTensor>& tensors, const std::string& prefix = "");

void write_checkpoint(const std::filesystem::path& path, const std::string& config_digest,
                      const std::vector<CheckpointBlock>& blocks);
Checkpoint read_checkpoint(const std::filesystem::path& path);

/// Digest over names, shapes and values.
std::string params_digest(const std::vector<NamedTensor>& tensors);

/// Backbone plus the shared task-head initializer Psi_0.
void save_backbone(const std::filesystem::path& path, const BackboneParams& backbone,
                   const TaskHead& psi0);
/// Loads into freshly shaped, frozen tensors. Throws CheckpointError when the
/// stamped config digest differs from config.digest().
std::pair<BackboneParams, TaskHead> load_backbone(const std::filesystem::path& path,
                                                  const BackboneConfig& config);

}  // namespace i2i
