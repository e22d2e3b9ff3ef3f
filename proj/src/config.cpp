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

#include "i2i/config.hpp"

#include <sstream>

#include "i2i/digest.hpp"

namespace i2i {

void BackboneConfig::validate() const {
  auto fail = [](const std::string& what) { throw ConfigError("backbone config: " + what); };
  if (d_model == 0 || n_heads == 0 || n_enc_layers == 0 || n_dec_layers == 0 || d_ff == 0 ||
      vocab_size == 0 || max_src_len == 0 || max_tgt_len == 0 || feature_dim == 0)
    fail("all dimensions must be >= 1");
  if (d_model % n_heads != 0) fail("d_model must be divisible by n_heads");
  if (!(dropout >= 0.0 && dropout < 1.0)) fail("dropout must be in [0, 1)");
}

std::string BackboneConfig::canonical() const {
  std::ostringstream os;
  os << "d_model=" << d_model << ";n_heads=" << n_heads << ";n_enc_layers=" << n_enc_layers
     << ";n_dec_layers=" << n_dec_layers << ";d_ff=" << d_ff << ";vocab_size=" << vocab_size
     << ";max_src_len=" << max_src_len << ";max_tgt_len=" << max_tgt_len
     << ";feature_dim=" << feature_dim;
  return os.str();
}

std::string BackboneConfig::digest() const { return to_hex(fnv1a64(canonical())); }

}  // namespace i2i
