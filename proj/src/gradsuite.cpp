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

#include <array>
#include <vector>

#include "i2i/adapters.hpp"
#include "i2i/backbone.hpp"
#include "i2i/gradcheck.hpp"
#include "i2i/rng.hpp"

namespace i2i {

namespace {

Tensor param(Shape shape, Rng& rng, double stddev = 1.0) {
  return Tensor::randn(std::move(shape), stddev, rng, true);
}

// Random projection to a scalar so that every output coordinate gets a
// distinct upstream gradient.
Tensor reduce(const Tensor& y, const Tensor& w) { return sum(mul(y, w)); }

void perturb(const std::vector<Tensor>& params, Rng& rng, double stddev) {
  for (Tensor t : params)
    for (double& v : t.mutable_data()) v += rng.normal(0.0, stddev);
}

BackboneConfig tiny_config() {
  BackboneConfig c;
  c.d_model = 8;
  c.n_heads = 2;
  c.n_enc_layers = 1;
  c.n_dec_layers = 1;
  c.d_ff = 12;
  c.vocab_size = 40;
  c.max_src_len = 6;
  c.max_tgt_len = 3;
  c.feature_dim = 4;
  return c;
}

std::vector<Example> tiny_examples(Rng& rng) {
  std::vector<Example> out;
  for (int i = 0; i < 2; ++i) {
    Example e;
    e.scene_features.assign(3, std::vector<double>(4));
    for (auto& row : e.scene_features)
      for (double& v : row) v = rng.normal();
    e.question = {32 + i, 18 + i};
    e.answer = {4 + i, 11};
    out.push_back(std::move(e));
  }
  return out;
}

}  // namespace

std::vector<GradCheckCase> gradcheck_suite(std::uint64_t seed, double eps,
                                           std::size_t model_coordinates) {
  std::vector<GradCheckCase> out;
  Rng rng(seed);
  GradCheckOptions exhaustive;
  exhaustive.eps = eps;
  auto check = [&](std::string name, std::vector<Tensor> params,
                   const std::function<Tensor()>& fn, GradCheckOptions options) {
    out.push_back({std::move(name), grad_check(fn, params, options)});
  };

  {
    Tensor a = param({3, 4}, rng), b = param({4, 5}, rng), w = Tensor::randn({3, 5}, 1.0, rng);
    check("matmul", {a, b}, [=] { return reduce(matmul(a, b), w); }, exhaustive);
  }
  {
    Tensor a = param({3, 4}, rng), w = Tensor::randn({4, 3}, 1.0, rng);
    check("transpose", {a}, [=] { return reduce(transpose(a), w); }, exhaustive);
  }
  {
    Tensor a = param({3, 4}, rng), b = param({3, 4}, rng), w = Tensor::randn({3, 4}, 1.0, rng);
    check("add", {a, b}, [=] { return reduce(add(a, b), w); }, exhaustive);
    check("sub", {a, b}, [=] { return reduce(sub(a, b), w); }, exhaustive);
    check("mul", {a, b}, [=] { return reduce(mul(a, b), w); }, exhaustive);
    check("scale", {a}, [=] { return reduce(scale(a, -1.7), w); }, exhaustive);
    check("mse", {a, b}, [=] { return mse(a, b); }, exhaustive);
    check("rowdot", {a, b}, [=] {
      return reduce(rowdot(a, b), Tensor::from({3, 1}, {0.3, -1.1, 0.8}));
    }, exhaustive);
  }
  {
    Tensor x = param({4, 3}, rng), bias = param({3}, rng), w = Tensor::randn({4, 3}, 1.0, rng);
    check("add_bias", {x, bias}, [=] { return reduce(add_bias(x, bias), w); }, exhaustive);
  }
  {
    // Entries kept away from the kink at zero.
    Tensor x = param({4, 5}, rng);
    for (double& v : x.mutable_data()) v += v >= 0.0 ? 0.1 : -0.1;
    Tensor w = Tensor::randn({4, 5}, 1.0, rng);
    check("relu", {x}, [=] { return reduce(relu(x), w); }, exhaustive);
  }
  {
    Tensor x = param({3, 4}, rng), w = Tensor::randn({3, 4}, 1.0, rng);
    check("softmax/axis1", {x}, [=] { return reduce(softmax(x, 1), w); }, exhaustive);
    check("softmax/axis0", {x}, [=] { return reduce(softmax(x, 0), w); }, exhaustive);
    check("sum", {x}, [=] { return sum(x); }, exhaustive);
  }
  {
    Tensor x = param({3, 6}, rng), g = param({6}, rng), b = param({6}, rng);
    Tensor w = Tensor::randn({3, 6}, 1.0, rng);
    check("layernorm", {x, g, b}, [=] { return reduce(layernorm(x, g, b), w); }, exhaustive);
  }
  {
    Tensor logits = param({4, 5}, rng);
    const std::vector<int> targets{2, -1, 0, 4};
    check("cross_entropy", {logits}, [=] { return cross_entropy(logits, targets, -1); },
          exhaustive);
  }
  {
    Tensor table = param({5, 3}, rng), w = Tensor::randn({4, 3}, 1.0, rng);
    const std::vector<int> ids{1, 3, 1, 0};
    check("gather_rows", {table}, [=] { return reduce(gather_rows(table, ids), w); }, exhaustive);
  }
  {
    Tensor a = param({4, 3}, rng), b = param({6, 3}, rng), w = Tensor::randn({10, 3}, 1.0, rng);
    check("concat_sequences", {a, b}, [=] { return reduce(concat_sequences(a, b, 2), w); },
          exhaustive);
  }
  {
    Tensor x = param({6, 3}, rng), w = Tensor::randn({2, 3}, 1.0, rng);
    check("mean_pool", {x}, [=] { return reduce(mean_pool(x, 2), w); }, exhaustive);
  }
  for (bool causal : {false, true}) {
    Tensor q = param({6, 4}, rng), k = param({6, 4}, rng), v = param({6, 4}, rng);
    Tensor w = Tensor::randn({6, 4}, 1.0, rng);
    check(causal ? "attention/causal" : "attention", {q, k, v},
          [=] { return reduce(attention(q, k, v, 2, 2, causal), w); }, exhaustive);
  }
  {
    Tensor a = param({3, 2}, rng), b = param({3, 3}, rng), w = Tensor::randn({3, 5}, 1.0, rng);
    check("concat_cols", {a, b}, [=] {
      const std::array<Tensor, 2> parts{a, b};
      return reduce(concat_cols(parts), w);
    }, exhaustive);
  }
  {
    Tensor x = param({4, 3}, rng), w = Tensor::randn({4, 1}, 1.0, rng);
    check("column", {x}, [=] { return reduce(column(x, 1), w); }, exhaustive);
  }
  {
    Tensor x = param({4, 3}, rng), s = param({4, 1}, rng), w = Tensor::randn({4, 3}, 1.0, rng);
    check("scale_rows", {x, s}, [=] { return reduce(scale_rows(x, s), w); }, exhaustive);
  }
  {
    Tensor x = param({4, 5}, rng), w = Tensor::randn({4, 5}, 1.0, rng);
    const std::uint64_t mask_seed = rng.next_u64();
    check("dropout", {x}, [=] {
      Rng mask(mask_seed);
      return reduce(dropout(x, 0.3, mask), w);
    }, exhaustive);
  }

  // Full model passes on a tiny configuration.
  const BackboneConfig config = tiny_config();
  BackboneParams backbone = init_backbone(config, rng);
  TaskHead head = init_task_head(config, rng);
  AdapterParams a1 = init_adapter(config, 3, rng), a2 = init_adapter(config, 3, rng);
  FusionParams fusion = init_fusion(config, 2, rng);
  std::vector<Tensor> all;
  for (const auto& group : {backbone.parameters(), head.parameters(), a1.parameters(),
                            a2.parameters(), fusion.parameters()})
    all.insert(all.end(), group.begin(), group.end());
  perturb(all, rng, 0.1);
  for (Tensor t : all) t.set_requires_grad(true);

  const std::vector<Example> examples = tiny_examples(rng);
  std::vector<const Example*> ptrs{&examples[0], &examples[1]};
  const Batch batch = make_batch(ptrs, config);
  GradCheckOptions sampled = exhaustive;
  sampled.sample_threshold = model_coordinates;
  sampled.seed = seed;

  const AdapterRouting fused{{&a1, &a2}, &fusion};
  check("model/cross_entropy", all, [&] {
    const ForwardOutput out = forward(backbone, head, fused, batch);
    return cross_entropy(out.logits, batch.targets, kIgnoreIndex);
  }, sampled);

  const Tensor enc_target = Tensor::randn({batch.size * batch.src_len(), config.d_model}, 1.0, rng);
  const Tensor dec_target = Tensor::randn({batch.size * batch.target_len, config.d_model}, 1.0, rng);
  std::vector<Tensor> student = head.parameters();
  for (const Tensor& t : a1.parameters()) student.push_back(t);
  check("model/distillation", student, [&] {
    const ForwardOutput out = forward(backbone, head, AdapterRouting::single(a1), batch);
    return add(mse(out.encoder_hidden, enc_target), mse(out.decoder_hidden, dec_target));
  }, sampled);
  return out;
}

}  // namespace i2i
