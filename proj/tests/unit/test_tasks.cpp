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
#include <filesystem>
#include <map>
#include <set>

#include "i2i/config.hpp"
#include "i2i/tasks.hpp"

using namespace i2i;

namespace {

// Brute-force answer from decoded slots, written independently of the generator.
std::vector<int> oracle_answer(const QATask& task, const std::vector<Slot>& slots) {
  auto count_color = [&](int c) { return std::count_if(slots.begin(), slots.end(), [&](const Slot& s) { return s.color == c; }); };
  auto count_shape = [&](int sh) { return std::count_if(slots.begin(), slots.end(), [&](const Slot& s) { return s.shape == sh; }); };
  switch (task.type) {
    case QueryType::Count: return {vocab::digit(static_cast<int>(count_color(task.args[0])))};
    case QueryType::Exist: return {count_shape(task.args[0]) > 0 ? vocab::kYes : vocab::kNo};
    case QueryType::Parity: return {count_shape(task.args[0]) % 2 == 0 ? vocab::kEven : vocab::kOdd};
    case QueryType::Compare: {
      const auto a = count_color(task.args[0]), b = count_color(task.args[1]);
      return {a > b ? vocab::kMore : a < b ? vocab::kLess : vocab::kSame};
    }
    case QueryType::MaxSizeColor: {
      int best = -1, color = -1, ties = 0;
      for (const auto& s : slots) {
        if (s.shape != task.args[0]) continue;
        if (s.size > best) best = s.size, color = s.color, ties = 1;
        else if (s.size == best) ++ties;
      }
      REQUIRE(ties == 1);
      return {vocab::color(color)};
    }
  }
  return {};
}

std::string scene_key(const Scene& s) {
  std::string k;
  for (const auto& slot : s.slots)
    k += std::to_string(slot.color) + "." + std::to_string(slot.shape) + "." + std::to_string(slot.size) + ";";
  return k;
}

}  // namespace

TEST_CASE("codebook noise stays inside half the minimum code distance") {
  const Codebook cb(SceneSpace{}, 7);
  CHECK(cb.noise_radius() < 0.5 * cb.min_distance());
  Rng rng(1);
  for (int c = 0; c < 8; ++c)
    for (int s = 0; s < 6; ++s)
      for (int z = 0; z < 3; ++z) {
        const Slot slot{c, s, z};
        CHECK(cb.decode(cb.render(slot)) == slot);
        CHECK(cb.decode(cb.render_noisy(slot, rng)) == slot);
      }
  CHECK(Codebook(SceneSpace{}, 7).digest() == cb.digest());
  CHECK(Codebook(SceneSpace{}, 8).digest() != cb.digest());
}

TEST_CASE("every generated answer matches a brute-force oracle on the decoded scene") {
  const Codebook cb(SceneSpace{}, 7);
  for (const auto& task : default_tasks(3, 200, 60)) {
    CAPTURE(task.id);
    const TaskData data = generate_task(task, cb);
    REQUIRE(data.train.examples.size() == 200);
    REQUIRE(data.val.examples.size() == 60);
    for (const Split* split : {&data.train, &data.val}) {
      for (std::size_t i = 0; i < split->examples.size(); ++i) {
        const Example& e = split->examples[i];
        std::vector<Slot> slots;
        for (const auto& row : e.scene_features) slots.push_back(cb.decode(row));
        CHECK(slots == split->scenes[i].slots);
        CHECK(e.answer == oracle_answer(task, slots));
        CHECK(e.question == question_tokens(task.type, task.args));
      }
    }
  }
}

TEST_CASE("answers are balanced to within one example") {
  const Codebook cb(SceneSpace{}, 7);
  for (const auto& task : default_tasks(3, 400, 100)) {
    const TaskData data = generate_task(task, cb);
    std::map<std::vector<int>, int> counts;
    for (const auto& e : data.train.examples) ++counts[e.answer];
    const auto vocab_size = answer_vocabulary(task.type, cb.space()).size();
    CHECK(counts.size() == vocab_size);
    int lo = 1 << 30, hi = 0;
    for (const auto& [_, n] : counts) lo = std::min(lo, n), hi = std::max(hi, n);
    CHECK(hi - lo <= 1);
    CHECK(majority_answer_rate(data.train.examples) ==
          doctest::Approx(100.0 * hi / 400.0));
  }
}

TEST_CASE("validation scenes never repeat a training scene") {
  const Codebook cb(SceneSpace{}, 7);
  for (const auto& task : default_tasks(3, 300, 100)) {
    const TaskData data = generate_task(task, cb);
    std::set<std::string> train;
    for (const auto& s : data.train.scenes) train.insert(scene_key(s));
    for (const auto& s : data.val.scenes) CHECK_FALSE(train.contains(scene_key(s)));
  }
}

TEST_CASE("generation is deterministic per task seed") {
  const Codebook cb(SceneSpace{}, 7);
  const auto tasks = default_tasks(3, 50, 20);
  const TaskData a = generate_task(tasks[0], cb), b = generate_task(tasks[0], cb);
  CHECK(a.train.examples == b.train.examples);
  CHECK(a.val.examples == b.val.examples);
  auto other = tasks[0];
  other.seed += 1;
  CHECK(generate_task(other, cb).train.examples != a.train.examples);
}

TEST_CASE("pretraining arguments are disjoint from task arguments") {
  const SceneSpace space;
  const auto tasks = default_tasks(3);
  const ArgumentSet pre = pretrain_arguments(space), used = task_arguments(tasks);
  for (int c : pre.colors) CHECK(std::find(used.colors.begin(), used.colors.end(), c) == used.colors.end());
  for (int s : pre.shapes) CHECK(std::find(used.shapes.begin(), used.shapes.end(), s) == used.shapes.end());
  const Codebook cb(space, 7);
  const auto corpus = pretrain_corpus(cb, 40, 11);
  CHECK(corpus.size() == 40 * std::size(kAllQueryTypes));
  std::set<std::vector<int>> task_questions;
  for (const auto& t : tasks) task_questions.insert(question_tokens(t.type, t.args));
  for (const auto& e : corpus) CHECK_FALSE(task_questions.contains(e.question));
}

TEST_CASE("exact match scoring") {
  const std::vector<std::vector<int>> pred = {{4}, {11}, {12, 2}, {}};
  const std::vector<std::vector<int>> ref = {{4}, {12}, {12, 2}, {}};
  CHECK(score_exact_match(pred, ref) == 75.0);
  CHECK_THROWS(score_exact_match(std::span(pred).first(2), ref));
}

TEST_CASE("examples survive a JSON-lines round trip bit for bit") {
  const Codebook cb(SceneSpace{}, 7);
  const TaskData data = generate_task(default_tasks(3, 30, 10)[2], cb);
  const auto path = std::filesystem::temp_directory_path() / "i2i_unit_examples.jsonl";
  write_examples(path, data.train.examples);
  CHECK(read_examples(path) == data.train.examples);
  const std::string digest = file_digest(path);
  write_examples(path, data.train.examples);
  CHECK(file_digest(path) == digest);
  std::filesystem::remove(path);
}

TEST_CASE("invalid task arguments are rejected") {
  const Codebook cb(SceneSpace{}, 7);
  QATask bad{"bad", QueryType::Compare, {0, 0}, 10, 10, 1};
  CHECK_THROWS_AS(generate_task(bad, cb), ConfigError);
  bad = {"bad", QueryType::Count, {99}, 10, 10, 1};
  CHECK_THROWS_AS(generate_task(bad, cb), ConfigError);
  CHECK_THROWS_AS(parse_query_type("COLOR"), ConfigError);
}
