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

#include <cstddef>
#include <stdexcept>
#include <string>

namespace i2i {

/// Shape of the frozen encoder-decoder backbone. Defaults are the desk-scale
/// configuration used by every experiment in this repository.
struct BackboneConfig {
  std::size_t d_model = 64;
  std::size_t n_heads = 4;
  std::size_t n_enc_layers = 2;
  std::size_t n_dec_layers = 2;
  std::size_t d_ff = 128;
  std::size_t vocab_size = 64;
  std::size_t max_src_len = 32;
  std::size_t max_tgt_len = 4;
  std::size_t feature_dim = 16;
  double dropout = 0.0;

  /// Throws ConfigError when an invariant is violated.
  void validate() const;
  /// One adapter (or fusion) insertion point per encoder and decoder layer.
  std::size_t insertion_points() const { return n_enc_layers + n_dec_layers; }
  /// Canonical text used for the config digest stamped into checkpoints.
  std::string canonical() const;
  std::string digest() const;

  bool operator==(const BackboneConfig&) const = default;
};

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace i2i
