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

#include "i2i/backbone.hpp"

#include <algorithm>
#include <stdexcept>

namespace i2i {

namespace {

constexpr double kInitStd = 0.02;

void append_attention(std::vector<NamedTensor>& out, const std::string& prefix,
                      const AttentionWeights& a) {
  out.push_back({prefix + "wq", a.wq});
  out.push_back({prefix + "bq", a.bq});
  out.push_back({prefix + "wk", a.wk});
  out.push_back({prefix + "bk", a.bk});
  out.push_back({prefix + "wv", a.wv});
  out.push_back({prefix + "bv", a.bv});
  out.push_back({prefix + "wo", a.wo});
  out.push_back({prefix + "bo", a.bo});
}

void append_ff(std::vector<NamedTensor>& out, const std::string& prefix,
               const FeedForwardWeights& f) {
  out.push_back({prefix + "w1", f.w1});
  out.push_back({prefix + "b1", f.b1});
  out.push_back({prefix + "w2", f.w2});
  out.push_back({prefix + "b2", f.b2});
}

AttentionWeights init_attention(std::size_t d, Rng& rng) {
  return {Tensor::randn({d, d}, kInitStd, rng), Tensor::zeros({d}),
          Tensor::randn({d, d}, kInitStd, rng), Tensor::zeros({d}),
          Tensor::randn({d, d}, kInitStd, rng), Tensor::zeros({d}),
          Tensor::randn({d, d}, kInitStd, rng), Tensor::zeros({d})};
}

FeedForwardWeights init_ff(std::size_t d, std::size_t d_ff, Rng& rng) {
  return {Tensor::randn({d, d_ff}, kInitStd, rng), Tensor::zeros({d_ff}),
          Tensor::randn({d_ff, d}, kInitStd, rng), Tensor::zeros({d})};
}

AttentionWeights clone_attention(const AttentionWeights& a) {
  return {a.wq.clone(), a.bq.clone(), a.wk.clone(), a.bk.clone(),
          a.wv.clone(), a.bv.clone(), a.wo.clone(), a.bo.clone()};
}

FeedForwardWeights clone_ff(const FeedForwardWeights& f) {
  return {f.w1.clone(), f.b1.clone(), f.w2.clone(), f.b2.clone()};
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  return add_bias(matmul(x, w), b);
}

Tensor maybe_dropout(const Tensor& x, double rate, const ForwardOptions& options) {
  if (!options.training || rate == 0.0) return x;
  if (options.dropout_rng == nullptr)
    throw std::invalid_argument("forward: dropout requires a generator in training mode");
  return dropout(x, rate, *options.dropout_rng);
}

Tensor attention_block(const AttentionWeights& w, const Tensor& query_src, const Tensor& kv_src,
                       std::size_t batch, std::size_t heads, bool causal) {
  const Tensor q = linear(query_src, w.wq, w.bq);
  const Tensor k = linear(kv_src, w.wk, w.bk);
  const Tensor v = linear(kv_src, w.wv, w.bv);
  return linear(attention(q, k, v, batch, heads, causal), w.wo, w.bo);
}

Tensor ff_block(const FeedForwardWeights& f, const Tensor& x) {
  return linear(relu(linear(x, f.w1, f.b1)), f.w2, f.b2);
}

Tensor apply_insertion(const AdapterRouting& routing, std::size_t point, const Tensor& x) {
  if (routing.adapters.empty()) return x;
  if (routing.fusion == nullptr) return adapter_forward(routing.adapters[0]->points[point], x);
  std::vector<Tensor> outputs;
  outputs.reserve(routing.adapters.size());
  for (const AdapterParams* a : routing.adapters) outputs.push_back(adapter_forward(a->points[point], x));
  return fusion_forward(routing.fusion->points[point], x, outputs).output;
}

std::vector<int> positions(std::size_t batch, std::size_t length) {
  std::vector<int> ids(batch * length);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t t = 0; t < length; ++t) ids[b * length + t] = static_cast<int>(t);
  return ids;
}

Tensor decode(const BackboneParams& m, const AdapterRouting& routing, const Tensor& enc_out,
              std::span<const int> decoder_input, std::size_t batch, std::size_t tgt_len,
              const ForwardOptions& options) {
  const BackboneConfig& c = m.config;
  if (tgt_len > c.max_tgt_len)
    throw ShapeError("target length " + std::to_string(tgt_len) + " exceeds max_tgt_len");
  const std::vector<int> pos = positions(batch, tgt_len);
  Tensor y = add(gather_rows(m.token_embedding, decoder_input), gather_rows(m.tgt_position, pos));
  for (std::size_t l = 0; l < m.decoder.size(); ++l) {
    const DecoderLayer& layer = m.decoder[l];
    const Tensor normed = layernorm(y, layer.ln1_gain, layer.ln1_bias);
    Tensor a = attention_block(layer.self_attn, normed, normed, batch, c.n_heads, true);
    y = add(y, maybe_dropout(a, c.dropout, options));
    Tensor x = attention_block(layer.cross_attn, layernorm(y, layer.ln2_gain, layer.ln2_bias),
                               enc_out, batch, c.n_heads, false);
    y = add(y, maybe_dropout(x, c.dropout, options));
    Tensor f = ff_block(layer.ff, layernorm(y, layer.ln3_gain, layer.ln3_bias));
    y = add(y, maybe_dropout(f, c.dropout, options));
    y = apply_insertion(routing, c.n_enc_layers + l, y);
  }
  return layernorm(y, m.dec_final_gain, m.dec_final_bias);
}

}  // namespace

// --- parameter containers ---------------------------------------------------

std::vector<NamedTensor> BackboneParams::named_parameters() const {
  std::vector<NamedTensor> out;
  out.push_back({"token_embedding", token_embedding});
  out.push_back({"src_position", src_position});
  out.push_back({"tgt_position", tgt_position});
  for (std::size_t l = 0; l < encoder.size(); ++l) {
    const std::string p = "encoder." + std::to_string(l) + ".";
    const EncoderLayer& e = encoder[l];
    out.push_back({p + "ln1_gain", e.ln1_gain});
    out.push_back({p + "ln1_bias", e.ln1_bias});
    append_attention(out, p + "self_attn.", e.self_attn);
    out.push_back({p + "ln2_gain", e.ln2_gain});
    out.push_back({p + "ln2_bias", e.ln2_bias});
    append_ff(out, p + "ff.", e.ff);
  }
  for (std::size_t l = 0; l < decoder.size(); ++l) {
    const std::string p = "decoder." + std::to_string(l) + ".";
    const DecoderLayer& e = decoder[l];
    out.push_back({p + "ln1_gain", e.ln1_gain});
    out.push_back({p + "ln1_bias", e.ln1_bias});
    append_attention(out, p + "self_attn.", e.self_attn);
    out.push_back({p + "ln2_gain", e.ln2_gain});
    out.push_back({p + "ln2_bias", e.ln2_bias});
    append_attention(out, p + "cross_attn.", e.cross_attn);
    out.push_back({p + "ln3_gain", e.ln3_gain});
    out.push_back({p + "ln3_bias", e.ln3_bias});
    append_ff(out, p + "ff.", e.ff);
  }
  out.push_back({"enc_final_gain", enc_final_gain});
  out.push_back({"enc_final_bias", enc_final_bias});
  out.push_back({"dec_final_gain", dec_final_gain});
  out.push_back({"dec_final_bias", dec_final_bias});
  return out;
}

std::vector<Tensor> BackboneParams::parameters() const {
  std::vector<Tensor> out;
  for (auto& nt : named_parameters()) out.push_back(nt.tensor);
  return out;
}

BackboneParams BackboneParams::clone() const {
  BackboneParams copy;
  copy.config = config;
  copy.token_embedding = token_embedding.clone();
  copy.src_position = src_position.clone();
  copy.tgt_position = tgt_position.clone();
  for (const EncoderLayer& e : encoder) {
    copy.encoder.push_back({e.ln1_gain.clone(), e.ln1_bias.clone(), clone_attention(e.self_attn),
                            e.ln2_gain.clone(), e.ln2_bias.clone(), clone_ff(e.ff)});
  }
  for (const DecoderLayer& e : decoder) {
    copy.decoder.push_back({e.ln1_gain.clone(), e.ln1_bias.clone(), clone_attention(e.self_attn),
                            e.ln2_gain.clone(), e.ln2_bias.clone(), clone_attention(e.cross_attn),
                            e.ln3_gain.clone(), e.ln3_bias.clone(), clone_ff(e.ff)});
  }
  copy.enc_final_gain = enc_final_gain.clone();
  copy.enc_final_bias = enc_final_bias.clone();
  copy.dec_final_gain = dec_final_gain.clone();
  copy.dec_final_bias = dec_final_bias.clone();
  return copy;
}

void BackboneParams::set_trainable(bool on) {
  for (Tensor t : parameters()) t.set_requires_grad(on);
}

void BackboneParams::freeze() {
  for (Tensor t : parameters()) t.freeze();
}

bool BackboneParams::frozen() const {
  const auto params = parameters();
  return !params.empty() &&
         std::all_of(params.begin(), params.end(), [](const Tensor& t) { return t.frozen(); });
}

std::vector<NamedTensor> TaskHead::named_parameters() const {
  return {{"psi.weight", weight}, {"psi.bias", bias}};
}

std::vector<Tensor> TaskHead::parameters() const { return {weight, bias}; }

TaskHead TaskHead::clone() const { return {weight.clone(), bias.clone()}; }

void TaskHead::set_trainable(bool on) {
  weight.set_requires_grad(on);
  bias.set_requires_grad(on);
}

void TaskHead::freeze() {
  weight.freeze();
  bias.freeze();
}

std::size_t count_params(const BackboneParams& backbone) {
  return count_named(backbone.named_parameters());
}

std::size_t count_params(const TaskHead& head) { return count_named(head.named_parameters()); }

BackboneParams init_backbone(const BackboneConfig& config, Rng& rng) {
  config.validate();
  const std::size_t d = config.d_model;
  BackboneParams m;
  m.config = config;
  m.token_embedding = Tensor::randn({config.vocab_size, d}, kInitStd, rng);
  m.src_position = Tensor::randn({config.max_src_len, d}, kInitStd, rng);
  m.tgt_position = Tensor::randn({config.max_tgt_len, d}, kInitStd, rng);
  for (std::size_t l = 0; l < config.n_enc_layers; ++l) {
    EncoderLayer e;
    e.ln1_gain = Tensor::full({d}, 1.0);
    e.ln1_bias = Tensor::zeros({d});
    e.self_attn = init_attention(d, rng);
    e.ln2_gain = Tensor::full({d}, 1.0);
    e.ln2_bias = Tensor::zeros({d});
    e.ff = init_ff(d, config.d_ff, rng);
    m.encoder.push_back(std::move(e));
  }
  for (std::size_t l = 0; l < config.n_dec_layers; ++l) {
    DecoderLayer e;
    e.ln1_gain = Tensor::full({d}, 1.0);
    e.ln1_bias = Tensor::zeros({d});
    e.self_attn = init_attention(d, rng);
    e.ln2_gain = Tensor::full({d}, 1.0);
    e.ln2_bias = Tensor::zeros({d});
    e.cross_attn = init_attention(d, rng);
    e.ln3_gain = Tensor::full({d}, 1.0);
    e.ln3_bias = Tensor::zeros({d});
    e.ff = init_ff(d, config.d_ff, rng);
    m.decoder.push_back(std::move(e));
  }
  m.enc_final_gain = Tensor::full({d}, 1.0);
  m.enc_final_bias = Tensor::zeros({d});
  m.dec_final_gain = Tensor::full({d}, 1.0);
  m.dec_final_bias = Tensor::zeros({d});
  return m;
}

TaskHead init_task_head(const BackboneConfig& config, Rng& rng) {
  return {Tensor::randn({config.feature_dim, config.d_model}, kInitStd, rng),
          Tensor::zeros({config.d_model})};
}

// --- forward -----------------------------------------------------------------

void AdapterRouting::validate(const BackboneConfig& config) const {
  if (fusion != nullptr) {
    if (adapters.empty()) throw ConfigError("fusion requires at least one adapter");
    if (fusion->n_adapters != adapters.size())
      throw ConfigError("fusion was built for " + std::to_string(fusion->n_adapters) +
                        " adapters but routing supplies " + std::to_string(adapters.size()));
    if (fusion->points.size() != config.insertion_points())
      throw ConfigError("fusion insertion points do not match the backbone");
  } else if (adapters.size() > 1) {
    throw ConfigError("several adapters require a fusion layer");
  }
  for (const AdapterParams* a : adapters) {
    if (a == nullptr || a->points.size() != config.insertion_points())
      throw ConfigError("adapter insertion points do not match the backbone");
    if (a->points[0].down.rows() != config.d_model)
      throw ConfigError("adapter width does not match d_model");
  }
}

Batch make_batch(std::span<const Example* const> examples, const BackboneConfig& config,
                 bool with_targets) {
  if (examples.empty()) throw std::invalid_argument("make_batch: no examples");
  Batch b;
  b.size = examples.size();
  b.n_slots = examples[0]->scene_features.size();
  b.question_len = examples[0]->question.size();
  std::size_t max_answer = 0;
  for (const Example* e : examples) {
    if (e->scene_features.size() != b.n_slots || e->question.size() != b.question_len)
      throw ShapeError("make_batch: examples differ in source layout");
    max_answer = std::max(max_answer, e->answer.size());
  }
  if (b.src_len() > config.max_src_len)
    throw ShapeError("source length " + std::to_string(b.src_len()) + " exceeds max_src_len");
  b.features.reserve(b.size * b.n_slots * config.feature_dim);
  for (const Example* e : examples) {
    for (const auto& slot : e->scene_features) {
      if (slot.size() != config.feature_dim) throw ShapeError("make_batch: feature width mismatch");
      b.features.insert(b.features.end(), slot.begin(), slot.end());
    }
    b.question.insert(b.question.end(), e->question.begin(), e->question.end());
  }
  if (with_targets) {
    b.target_len = max_answer + 1;
    if (b.target_len > config.max_tgt_len)
      throw ShapeError("answer plus EOS exceeds max_tgt_len");
    b.decoder_input.assign(b.size * b.target_len, tokens::kPad);
    b.targets.assign(b.size * b.target_len, kIgnoreIndex);
    for (std::size_t i = 0; i < b.size; ++i) {
      const auto& ans = examples[i]->answer;
      int* in = b.decoder_input.data() + i * b.target_len;
      int* tg = b.targets.data() + i * b.target_len;
      in[0] = tokens::kBos;
      for (std::size_t t = 0; t < ans.size(); ++t) {
        in[t + 1] = ans[t];
        tg[t] = ans[t];
      }
      tg[ans.size()] = tokens::kEos;
    }
  }
  return b;
}

Tensor encode(const BackboneParams& m, const TaskHead& head, const AdapterRouting& routing,
              const Batch& batch, const ForwardOptions& options) {
  const BackboneConfig& c = m.config;
  routing.validate(c);
  if (batch.src_len() > c.max_src_len) throw ShapeError("source exceeds max_src_len");
  const Tensor feats = Tensor::from({batch.size * batch.n_slots, c.feature_dim}, batch.features);
  const Tensor projected = linear(feats, head.weight, head.bias);
  const Tensor words = gather_rows(m.token_embedding, batch.question);
  const std::vector<int> pos = positions(batch.size, batch.src_len());
  Tensor x = add(concat_sequences(projected, words, batch.size), gather_rows(m.src_position, pos));
  for (std::size_t l = 0; l < m.encoder.size(); ++l) {
    const EncoderLayer& layer = m.encoder[l];
    const Tensor normed = layernorm(x, layer.ln1_gain, layer.ln1_bias);
    Tensor a = attention_block(layer.self_attn, normed, normed, batch.size, c.n_heads, false);
    x = add(x, maybe_dropout(a, c.dropout, options));
    Tensor f = ff_block(layer.ff, layernorm(x, layer.ln2_gain, layer.ln2_bias));
    x = add(x, maybe_dropout(f, c.dropout, options));
    x = apply_insertion(routing, l, x);
  }
  return layernorm(x, m.enc_final_gain, m.enc_final_bias);
}

ForwardOutput forward(const BackboneParams& m, const TaskHead& head, const AdapterRouting& routing,
                      const Batch& batch, const ForwardOptions& options) {
  if (batch.target_len == 0) throw std::invalid_argument("forward: batch has no decoder input");
  ForwardOutput out;
  out.encoder_hidden = encode(m, head, routing, batch, options);
  out.decoder_hidden = decode(m, routing, out.encoder_hidden, batch.decoder_input, batch.size,
                              batch.target_len, options);
  out.logits = matmul(out.decoder_hidden, transpose(m.token_embedding));
  out.pooled = mean_pool(out.encoder_hidden, batch.size);
  return out;
}

std::vector<std::vector<int>> generate(const BackboneParams& m, const TaskHead& head,
                                       const AdapterRouting& routing,
                                       std::span<const Example> examples, std::size_t batch_size) {
  NoGradGuard no_grad;
  const BackboneConfig& c = m.config;
  std::vector<std::vector<int>> results(examples.size());
  const Tensor unembed = transpose(m.token_embedding);
  for (std::size_t start = 0; start < examples.size(); start += batch_size) {
    const std::size_t n = std::min(batch_size, examples.size() - start);
    std::vector<const Example*> group;
    for (std::size_t i = 0; i < n; ++i) group.push_back(&examples[start + i]);
    const Batch batch = make_batch(group, c, false);
    const Tensor enc = encode(m, head, routing, batch);
    std::vector<std::vector<int>> prefix(n, std::vector<int>{tokens::kBos});
    std::vector<bool> done(n, false);
    for (std::size_t step = 0; step < c.max_tgt_len; ++step) {
      const std::size_t len = step + 1;
      std::vector<int> dec_in;
      dec_in.reserve(n * len);
      for (const auto& p : prefix) dec_in.insert(dec_in.end(), p.begin(), p.end());
      const Tensor hidden = decode(m, routing, enc, dec_in, n, len, {});
      // Only the last position of each example is needed for the next token.
      std::vector<int> last_rows(n);
      for (std::size_t i = 0; i < n; ++i) last_rows[i] = static_cast<int>(i * len + step);
      const Tensor logits = matmul(gather_rows(hidden, last_rows), unembed);
      bool all_done = true;
      for (std::size_t i = 0; i < n; ++i) {
        const auto row = logits.data().subspan(i * c.vocab_size, c.vocab_size);
        const int next = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
        if (!done[i]) {
          if (next == tokens::kEos)
            done[i] = true;
          else
            results[start + i].push_back(next);
        }
        prefix[i].push_back(next);
        all_done = all_done && done[i];
      }
      if (all_done) break;
    }
  }
  return results;
}

std::vector<double> encode_pooled(const BackboneParams& m, const TaskHead& head,
                                  std::span<const Example> examples, std::size_t batch_size) {
  if (examples.empty()) throw std::invalid_argument("encode_pooled: empty dataset");
  NoGradGuard no_grad;
  const std::size_t d = m.config.d_model;
  std::vector<double> total(d, 0.0);
  for (std::size_t start = 0; start < examples.size(); start += batch_size) {
    const std::size_t n = std::min(batch_size, examples.size() - start);
    std::vector<const Example*> group;
    for (std::size_t i = 0; i < n; ++i) group.push_back(&examples[start + i]);
    const Batch batch = make_batch(group, m.config, false);
    const Tensor pooled = mean_pool(encode(m, head, AdapterRouting::none(), batch), n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j) total[j] += pooled.at(i, j);
  }
  for (double& v : total) v /= static_cast<double>(examples.size());
  return total;
}

}  // namespace i2i
