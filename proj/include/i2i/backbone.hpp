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

#include <span>
#include <vector>

#include "i2i/adapters.hpp"
#include "i2i/config.hpp"
#include "i2i/example.hpp"
#include "i2i/rng.hpp"
#include "i2i/tensor.hpp"

namespace i2i {

struct AttentionWeights {
  Tensor wq, bq, wk, bk, wv, bv, wo, bo;
};

struct FeedForwardWeights {
  Tensor w1, b1, w2, b2;
};

struct EncoderLayer {
  Tensor ln1_gain, ln1_bias;
  AttentionWeights self_attn;
  Tensor ln2_gain, ln2_bias;
  FeedForwardWeights ff;
};

struct DecoderLayer {
  Tensor ln1_gain, ln1_bias;
  AttentionWeights self_attn;
  Tensor ln2_gain, ln2_bias;
  AttentionWeights cross_attn;
  Tensor ln3_gain, ln3_bias;
  FeedForwardWeights ff;
};

/// The backbone M0. Pre-layernorm encoder-decoder transformer with learned
/// positions and an output projection tied to the token embedding table.
/// After freeze() every tensor rejects gradients permanently.
struct BackboneParams {
  BackboneConfig config;
  Tensor token_embedding;  // [vocab x d]
  Tensor src_position;     // [max_src_len x d]
  Tensor tgt_position;     // [max_tgt_len x d]
  std::vector<EncoderLayer> encoder;
  std::vector<DecoderLayer> decoder;
  Tensor enc_final_gain, enc_final_bias;
  Tensor dec_final_gain, dec_final_bias;

  std::vector<NamedTensor> named_parameters() const;
  std::vector<Tensor> parameters() const;
  BackboneParams clone() const;
  void set_trainable(bool on);
  void freeze();
  bool frozen() const;
};

/// Task head Psi: projects continuous scene features into the embedding space.
struct TaskHead {
  Tensor weight;  // [feature_dim x d]
  Tensor bias;    // [d]

  std::vector<NamedTensor> named_parameters() const;
  std::vector<Tensor> parameters() const;
  TaskHead clone() const;
  void set_trainable(bool on);
  void freeze();
};

std::size_t count_params(const BackboneParams& backbone);
std::size_t count_params(const TaskHead& head);

BackboneParams init_backbone(const BackboneConfig& config, Rng& rng);
TaskHead init_task_head(const BackboneConfig& config, Rng& rng);

/// What sits at each insertion point: nothing, one adapter, or a fusion over
/// several adapters.
struct AdapterRouting {
  std::vector<const AdapterParams*> adapters;
  const FusionParams* fusion = nullptr;

  static AdapterRouting none() { return {}; }
  static AdapterRouting single(const AdapterParams& adapter) { return {{&adapter}, nullptr}; }
  void validate(const BackboneConfig& config) const;
};

/// A shape-homogeneous group of examples packed for the model.
struct Batch {
  std::size_t size = 0;
  std::size_t n_slots = 0;
  std::size_t question_len = 0;
  std::size_t target_len = 0;  // BOS + answer; 0 when built without targets
  std::vector<double> features;      // [size * n_slots x feature_dim]
  std::vector<int> question;         // [size * question_len]
  std::vector<int> decoder_input;    // BOS, answer..., PAD-padded
  std::vector<int> targets;          // answer..., EOS, ignore-padded

  std::size_t src_len() const { return n_slots + question_len; }
};

inline constexpr int kIgnoreIndex = -1;

/// Packs examples; all must share slot count and question length.
Batch make_batch(std::span<const Example* const> examples, const BackboneConfig& config,
                 bool with_targets = true);

struct ForwardOptions {
  bool training = false;
  Rng* dropout_rng = nullptr;  // required when training with dropout > 0
};

struct ForwardOutput {
  Tensor logits;          // [B*T x vocab]
  Tensor encoder_hidden;  // h^E: [B*S x d], after the final encoder layernorm
  Tensor decoder_hidden;  // h^D: [B*T x d], after the final decoder layernorm
  Tensor pooled;          // [B x d], mean of h^E over source positions
};

/// Teacher-forced forward pass. Adapters sit after the feed-forward residual
/// of every layer, so decoder cross-attention consumes adapter-transformed
/// encoder states.
ForwardOutput forward(const BackboneParams& backbone, const TaskHead& head,
                      const AdapterRouting& routing, const Batch& batch,
                      const ForwardOptions& options = {});

/// Encoder only; returns h^E.
Tensor encode(const BackboneParams& backbone, const TaskHead& head, const AdapterRouting& routing,
              const Batch& batch, const ForwardOptions& options = {});

/// Greedy decoding up to max_tgt_len tokens or EOS. Returned sequences exclude EOS.
std::vector<std::vector<int>> generate(const BackboneParams& backbone, const TaskHead& head,
                                       const AdapterRouting& routing,
                                       std::span<const Example> examples,
                                       std::size_t batch_size = 128);

/// Mean over examples of the mean-pooled encoder state, with no adapters.
std::vector<double> encode_pooled(const BackboneParams& backbone, const TaskHead& head,
                                  std::span<const Example> examples, std::size_t batch_size = 128);

}  // namespace i2i
