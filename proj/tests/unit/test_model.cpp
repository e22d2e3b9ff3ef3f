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

#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "i2i/adapters.hpp"
#include "i2i/backbone.hpp"
#include "i2i/checkpoint.hpp"
#include "i2i/tasks.hpp"
#include "i2i/training.hpp"

using namespace i2i;
namespace fs = std::filesystem;

namespace {

BackboneConfig small_config() {
  BackboneConfig c;
  c.d_model = 16;
  c.n_heads = 2;
  c.n_enc_layers = 1;
  c.n_dec_layers = 1;
  c.d_ff = 24;
  return c;
}

std::vector<Example> some_examples(std::size_t n) {
  const Codebook cb(SceneSpace{}, 7);
  return generate_task(default_tasks(3, n, 10)[0], cb).train.examples;
}

bool same_values(const Tensor& a, const Tensor& b) {
  return std::equal(a.data().begin(), a.data().end(), b.data().begin(), b.data().end());
}

}  // namespace

TEST_CASE("parameter counts match the closed forms") {
  const BackboneConfig c;  // default desk-scale model
  Rng rng(1);
  const AdapterParams adapter = init_adapter(c, 8, rng);
  const FusionParams fusion = init_fusion(c, 3, rng);
  CHECK(count_params(adapter) == 4 * (2 * 64 * 8 + 8 + 64));
  CHECK(count_params(adapter) == adapter_param_formula(4, 64, 8));
  CHECK(count_params(fusion) == 4 * 3 * 64 * 64);
  CHECK(count_params(fusion) == fusion_param_formula(4, 64));
  // The fusion size does not depend on how many adapters it attends over.
  CHECK(count_params(init_fusion(c, 7, rng)) == count_params(fusion));
  CHECK(count_params(init_task_head(c, rng)) == 16 * 64 + 64);
  // Embeddings, two encoder layers, two decoder layers, final norms.
  const std::size_t attn = 4 * (64 * 64 + 64), ff = 64 * 128 + 128 + 128 * 64 + 64;
  const std::size_t expected = 64 * 64 + 32 * 64 + 4 * 64 + 2 * (256 + attn + ff) +
                               2 * (384 + 2 * attn + ff) + 256;
  CHECK(count_params(init_backbone(c, rng)) == expected);
  CHECK(count_named(adapter.named_parameters()) == count_params(adapter));
}

TEST_CASE("a fresh adapter is an exact identity") {
  const BackboneConfig c = small_config();
  Rng rng(2);
  const BackboneParams m = init_backbone(c, rng);
  const TaskHead head = init_task_head(c, rng);
  const AdapterParams adapter = init_adapter(c, 4, rng);
  const auto examples = some_examples(8);
  std::vector<const Example*> ptrs;
  for (const auto& e : examples) ptrs.push_back(&e);
  const Batch batch = make_batch(ptrs, c);
  const ForwardOutput plain = forward(m, head, AdapterRouting::none(), batch);
  const ForwardOutput adapted = forward(m, head, AdapterRouting::single(adapter), batch);
  CHECK(same_values(plain.logits, adapted.logits));
  CHECK(same_values(plain.encoder_hidden, adapted.encoder_hidden));
  Rng noise(3);
  const Tensor x = Tensor::randn({5, c.d_model}, 1.0, noise);
  CHECK(same_values(adapter_forward(adapter.points[0], x), x));
}

TEST_CASE("fusion over identical adapter outputs returns them unchanged") {
  // Value starts as the identity and attention weights sum to one.
  const BackboneConfig c = small_config();
  Rng rng(4);
  const FusionParams fusion = init_fusion(c, 3, rng);
  const Tensor x = Tensor::randn({6, c.d_model}, 1.0, rng);
  const Tensor o = Tensor::randn({6, c.d_model}, 1.0, rng);
  const std::vector<Tensor> outputs{o, o, o};
  const FusionResult r = fusion_forward(fusion.points[0], x, outputs);
  for (std::size_t i = 0; i < o.size(); ++i) CHECK(r.output.at(i) == doctest::Approx(o.at(i)).epsilon(1e-12));
  for (std::size_t row = 0; row < 6; ++row) {
    double s = 0.0;
    for (std::size_t k = 0; k < 3; ++k) s += r.weights.at(row, k);
    CHECK(s == doctest::Approx(1.0).epsilon(1e-14));
  }
  CHECK_THROWS_AS(init_fusion(c, 0, rng), ConfigError);
}

TEST_CASE("routing validation") {
  const BackboneConfig c = small_config();
  Rng rng(5);
  const AdapterParams a = init_adapter(c, 4, rng), b = init_adapter(c, 4, rng);
  const FusionParams f = init_fusion(c, 2, rng);
  CHECK_NOTHROW(AdapterRouting({{&a, &b}, &f}).validate(c));
  CHECK_THROWS(AdapterRouting({{&a, &b}, nullptr}).validate(c));
  CHECK_THROWS(AdapterRouting({{&a}, &f}).validate(c));
}

TEST_CASE("a frozen backbone stays bit-identical through adapter training") {
  const BackboneConfig c = small_config();
  Rng rng(6);
  BackboneParams m = init_backbone(c, rng);
  m.freeze();
  const std::string before = params_digest(m.named_parameters());
  TaskHead head = init_task_head(c, rng);
  AdapterParams adapter = init_adapter(c, 4, rng);
  adapter.set_trainable(true);
  head.set_trainable(true);
  std::vector<Tensor> trainable = adapter.parameters();
  for (const Tensor& t : head.parameters()) trainable.push_back(t);
  const auto data = some_examples(40);
  const auto trace = fit_supervised(m, head, AdapterRouting::single(adapter), trainable, data,
                                    std::span(data).first(10), {.epochs = 2, .batch_size = 8}, 1);
  CHECK(trace.steps > 0);
  CHECK(params_digest(m.named_parameters()) == before);
  CHECK_THROWS_AS(m.set_trainable(true), TapeError);
}

TEST_CASE("early stopping keeps the best validation score") {
  const BackboneConfig c = small_config();
  Rng rng(7);
  BackboneParams m = init_backbone(c, rng);
  m.freeze();
  TaskHead head = init_task_head(c, rng);
  AdapterParams adapter = init_adapter(c, 4, rng);
  adapter.set_trainable(true);
  std::vector<Tensor> trainable = adapter.parameters();
  const auto data = some_examples(60);
  const auto val = std::span(data).first(20);
  const auto trace = fit_supervised(m, head, AdapterRouting::single(adapter), trainable, data, val,
                                    {.epochs = 3, .batch_size = 16, .patience = 1}, 2);
  REQUIRE_FALSE(trace.val_score.empty());
  const double best = *std::max_element(trace.val_score.begin(), trace.val_score.end());
  CHECK(trace.best_score == best);
  CHECK(trace.val_score[trace.best_epoch] == best);
  CHECK(evaluate_score(m, head, AdapterRouting::single(adapter), val) == best);
}

TEST_CASE("checkpoint round trip, digests and corruption") {
  const BackboneConfig c = small_config();
  Rng rng(8);
  const BackboneParams m = init_backbone(c, rng);
  const TaskHead psi0 = init_task_head(c, rng);
  const fs::path dir = fs::temp_directory_path() / "i2i_unit_ckpt";
  fs::remove_all(dir);
  fs::create_directories(dir);
  save_backbone(dir / "a.ckpt", m, psi0);
  save_backbone(dir / "b.ckpt", m, psi0);
  CHECK(file_digest(dir / "a.ckpt") == file_digest(dir / "b.ckpt"));

  auto [m2, psi2] = load_backbone(dir / "a.ckpt", c);
  CHECK(m2.frozen());
  CHECK(params_digest(m2.named_parameters()) == params_digest(m.named_parameters()));
  CHECK(params_digest(psi2.named_parameters()) == params_digest(psi0.named_parameters()));

  BackboneConfig other = c;
  other.d_ff = 32;
  CHECK_THROWS_AS(load_backbone(dir / "a.ckpt", other), CheckpointError);

  {
    std::fstream f(dir / "a.ckpt", std::ios::in | std::ios::out | std::ios::binary);
    f.put('X');
  }
  CHECK_THROWS_AS(read_checkpoint(dir / "a.ckpt"), CheckpointError);
  fs::resize_file(dir / "b.ckpt", fs::file_size(dir / "b.ckpt") - 3);
  CHECK_THROWS_AS(read_checkpoint(dir / "b.ckpt"), CheckpointError);
  fs::remove_all(dir);
}

TEST_CASE("params_digest is sensitive to names, shapes and values") {
  Rng rng(9);
  const Tensor t = Tensor::randn({2, 3}, 1.0, rng);
  const std::string d = params_digest({{"w", t}});
  CHECK(params_digest({{"v", t}}) != d);
  CHECK(params_digest({{"w", Tensor::from({3, 2}, {t.data().begin(), t.data().end()})}}) != d);
  Tensor u = t.clone();
  u.mutable_data()[5] = std::nextafter(u.at(5), 10.0);
  CHECK(params_digest({{"w", u}}) != d);
  CHECK(params_digest({{"w", t.clone()}}) == d);
}

TEST_CASE("greedy decoding agrees with teacher-forced argmax on the first token") {
  const BackboneConfig c = small_config();
  Rng rng(10);
  const BackboneParams m = init_backbone(c, rng);
  const TaskHead head = init_task_head(c, rng);
  const auto data = some_examples(6);
  const auto decoded = generate(m, head, AdapterRouting::none(), data);
  std::vector<const Example*> ptrs;
  for (const auto& e : data) ptrs.push_back(&e);
  const Batch batch = make_batch(ptrs, c);
  const ForwardOutput out = forward(m, head, AdapterRouting::none(), batch);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const std::size_t row = i * batch.target_len;
    std::size_t best = 0;
    for (std::size_t v = 1; v < c.vocab_size; ++v)
      if (out.logits.at(row, v) > out.logits.at(row, best)) best = v;
    if (best == static_cast<std::size_t>(tokens::kEos))
      CHECK(decoded[i].empty());
    else
      CHECK((!decoded[i].empty() && decoded[i][0] == static_cast<int>(best)));
  }
}
