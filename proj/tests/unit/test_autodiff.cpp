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

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "i2i/commands.hpp"
#include "i2i/digest.hpp"
#include "i2i/gradcheck.hpp"
#include "i2i/optim.hpp"
#include "i2i/rng.hpp"
#include "i2i/tensor.hpp"

using namespace i2i;

namespace {

std::vector<double> grad_of(const Tensor& t) { return {t.grad().begin(), t.grad().end()}; }

}  // namespace

TEST_CASE("matmul gradient matches the closed form") {
  // L = sum(A B): dL/dA = 1 B^T, dL/dB = A^T 1.
  Tensor a = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6}, true);
  Tensor b = Tensor::from({3, 2}, {1, -1, 2, 0, -3, 5}, true);
  {
    Tape tape;
    tape.backward(sum(matmul(a, b)));
  }
  CHECK(grad_of(a) == std::vector<double>{0, 2, 2, 0, 2, 2});
  CHECK(grad_of(b) == std::vector<double>{5, 5, 7, 7, 9, 9});
}

TEST_CASE("softmax rows sum to one and cross entropy of a uniform row is log(n)") {
  Tensor x = Tensor::from({2, 4}, {0.1, 2.0, -1.0, 0.5, 3.0, 3.0, 3.0, 3.0});
  const Tensor p = softmax(x, 1);
  for (std::size_t r = 0; r < 2; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < 4; ++c) s += p.at(r, c);
    CHECK(s == doctest::Approx(1.0).epsilon(1e-15));
  }
  const std::vector<int> targets{-1, 2};
  CHECK(cross_entropy(x, targets, -1).item() == doctest::Approx(std::log(4.0)).epsilon(1e-14));
}

TEST_CASE("layernorm output has zero mean and unit variance per row") {
  Rng rng(3);
  Tensor x = Tensor::randn({3, 8}, 2.0, rng);
  const Tensor y = layernorm(x, Tensor::full({8}, 1.0), Tensor::zeros({8}), 0.0);
  for (std::size_t r = 0; r < 3; ++r) {
    double m = 0.0, v = 0.0;
    for (std::size_t c = 0; c < 8; ++c) m += y.at(r, c) / 8.0;
    for (std::size_t c = 0; c < 8; ++c) v += (y.at(r, c) - m) * (y.at(r, c) - m) / 8.0;
    CHECK(std::abs(m) < 1e-12);
    CHECK(v == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("causal attention ignores future keys") {
  Rng rng(5);
  Tensor q = Tensor::randn({3, 4}, 1.0, rng), k = Tensor::randn({3, 4}, 1.0, rng),
         v = Tensor::randn({3, 4}, 1.0, rng);
  const Tensor out = attention(q, k, v, 1, 2, true);
  // Changing the last key and value cannot affect the first two queries.
  Tensor k2 = k.clone(), v2 = v.clone();
  for (std::size_t c = 0; c < 4; ++c) {
    k2.mutable_data()[2 * 4 + c] += 10.0;
    v2.mutable_data()[2 * 4 + c] -= 7.0;
  }
  const Tensor out2 = attention(q, k2, v2, 1, 2, true);
  for (std::size_t i = 0; i < 8; ++i) CHECK(out.at(i) == out2.at(i));
  // The first query sees only itself.
  for (std::size_t c = 0; c < 4; ++c) CHECK(out.at(0, c) == doctest::Approx(v.at(0, c)).epsilon(1e-14));
}

TEST_CASE("frozen tensors reject gradients and clones are unfrozen leaves") {
  Tensor w = Tensor::from({2}, {1.0, 2.0}, true);
  w.freeze();
  CHECK(w.frozen());
  CHECK_FALSE(w.requires_grad());
  CHECK_THROWS_AS(w.set_requires_grad(true), TapeError);
  Tensor c = w.clone(true);
  CHECK_FALSE(c.frozen());
  CHECK(c.requires_grad());
  CHECK_FALSE(c.same_storage(w));
  c.mutable_data()[0] = 5.0;
  CHECK(w.at(0) == 1.0);
}

TEST_CASE("op results are not writable and NoGradGuard stops recording") {
  Tensor a = Tensor::from({2}, {1.0, 2.0}, true);
  Tape tape;
  Tensor b = scale(a, 2.0);
  CHECK_THROWS(b.mutable_data());
  const std::size_t before = tape.size();
  {
    NoGradGuard guard;
    (void)scale(a, 3.0);
  }
  CHECK(tape.size() == before);
}

TEST_CASE("non-finite forward values are rejected") {
  Tensor a = Tensor::from({1}, {1e300});
  CHECK_THROWS_AS(mul(a, a), NonFiniteError);
}

TEST_CASE("gradcheck suite: every primitive and the full model below 1e-4") {
  const GradCheckReport report = cmd_gradcheck(0);
  REQUIRE(report.cases.size() >= 20);
  for (const auto& c : report.cases) {
    CAPTURE(c.name);
    CHECK(c.result.max_rel_error < 1e-4);
    CHECK(c.result.coordinates > 0);
  }
  CHECK(report.passed());
}

TEST_CASE("linear primitives match finite differences to 1e-8") {
  for (const auto& c : gradcheck_suite(1)) {
    if (c.name == "add" || c.name == "sub" || c.name == "scale" || c.name == "sum" ||
        c.name == "transpose" || c.name == "concat_cols" || c.name == "column" ||
        c.name == "mean_pool" || c.name == "gather_rows") {
      CAPTURE(c.name);
      CHECK(c.result.max_rel_error < 1e-8);
    }
  }
}

TEST_CASE("grad_check reports a deliberately wrong gradient") {
  // The loss reads a parameter value outside the tape, so the recorded
  // backward misses the a0^2 term.
  Tensor a = Tensor::from({2}, {0.7, -0.3}, true);
  const auto wrong = [&] {
    const double hidden = a.at(0) * a.at(0);  // invisible to the tape
    return add(sum(a), Tensor::from({1}, {hidden}));
  };
  std::vector<Tensor> params{a};
  CHECK(grad_check(wrong, params).max_rel_error > 1e-2);
}

TEST_CASE("relative error uses a 1e-6 denominator floor") {
  CHECK(relative_error(1.0, 1.0) == 0.0);
  CHECK(relative_error(2.0, 1.0) == doctest::Approx(0.5));
  CHECK(relative_error(1e-9, 0.0) == doctest::Approx(1e-3));
}

TEST_CASE("Adam first step moves each coordinate by the learning rate") {
  // With bias correction, step one is lr * g / (|g| + eps').
  Tensor p = Tensor::from({3}, {1.0, -2.0, 0.5}, true);
  {
    Tape tape;
    tape.backward(sum(mul(p, Tensor::from({3}, {3.0, -0.5, 0.0}))));
  }
  std::vector<Tensor> params{p};
  AdamState state(params, {.learning_rate = 0.01});
  adam_step(params, state);
  CHECK(p.at(0) == doctest::Approx(1.0 - 0.01).epsilon(1e-9));
  CHECK(p.at(1) == doctest::Approx(-2.0 + 0.01).epsilon(1e-9));
  CHECK(p.at(2) == 0.5);
  CHECK(state.step == 1);
}

TEST_CASE("Adam update follows the bias-corrected recurrence for two steps") {
  std::vector<double> param{1.0}, m{0.0}, v{0.0};
  const AdamHyper h{};
  const double g1 = 0.4, g2 = -0.2;
  adam_update(param, std::vector<double>{g1}, m, v, 1, h);
  adam_update(param, std::vector<double>{g2}, m, v, 2, h);
  // Oracle written out by hand.
  double mm = 0, vv = 0, x = 1.0;
  for (auto [g, t] : {std::pair{g1, 1}, std::pair{g2, 2}}) {
    mm = 0.9 * mm + 0.1 * g;
    vv = 0.999 * vv + 0.001 * g * g;
    const double mh = mm / (1 - std::pow(0.9, t)), vh = vv / (1 - std::pow(0.999, t));
    x -= 1e-3 * mh / (std::sqrt(vh) + 1e-8);
  }
  CHECK(param[0] == doctest::Approx(x).epsilon(1e-15));
}

TEST_CASE("Rng streams are reproducible and split labels are independent") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
  CHECK(Rng(42).split("x").seed() == Rng(42).split("x").seed());
  CHECK(Rng(42).split("x").seed() != Rng(42).split("y").seed());
  CHECK(Rng(42).split("x").seed() != Rng(43).split("x").seed());
  Rng c(9);
  auto perm = c.permutation(50);
  std::sort(perm.begin(), perm.end());
  for (std::size_t i = 0; i < 50; ++i) CHECK(perm[i] == i);
  Rng d(1);
  for (int i = 0; i < 1000; ++i) {
    const double u = d.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    CHECK(d.below(7) < 7);
  }
}

TEST_CASE("Rng wraps mt19937_64 seeded through splitmix64") {
  for (std::uint64_t seed : {0ULL, 1ULL, 99ULL}) {
    std::mt19937_64 reference(splitmix64(seed));
    Rng rng(seed);
    for (int i = 0; i < 10; ++i) CHECK(rng.next_u64() == reference());
  }
  CHECK(derive_seed(5, "abc") == splitmix64(5 ^ fnv1a64("abc")));
}

TEST_CASE("FNV-1a 64 matches the reference test vectors") {
  CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
  CHECK(fnv1a64("foobar") == 0x85944171f73967e8ULL);
  Fnv1a h;
  h.update(std::string_view("foo"));
  h.update(std::string_view("bar"));
  CHECK(h.value() == fnv1a64("foobar"));
  CHECK(to_hex(0xabcULL).size() == 16);
}
