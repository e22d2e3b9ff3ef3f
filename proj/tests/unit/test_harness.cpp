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
#include <limits>
#include <set>

#include "fixture.hpp"
#include "i2i/checkpoint.hpp"

using namespace i2i;
using namespace i2i::testing;

TEST_CASE("subsampling") {
  CHECK(subsample_indices(2000, 0.05, 9).size() == 100);
  CHECK(subsample_indices(21, 0.05, 9).size() == 2);
  CHECK(subsample_indices(10, 1.0, 9).size() == 10);
  CHECK(subsample_indices(10, 1.0, 9) == subsample_indices(10, 1.0, 4));
  const auto small = subsample_indices(500, 0.05, 17);
  const auto large = subsample_indices(500, 0.5, 17);
  CHECK(small == subsample_indices(500, 0.05, 17));
  CHECK(std::is_sorted(small.begin(), small.end()));
  CHECK(std::includes(large.begin(), large.end(), small.begin(), small.end()));
  CHECK(small != subsample_indices(500, 0.05, 18));
  CHECK_THROWS(subsample_indices(10, 0.0, 1));
  CHECK_THROWS(subsample_indices(10, 1.5, 1));
}

TEST_CASE("variants") {
  CHECK(I2IVariant::parse("FF").initialize_fraction == 1.0);
  CHECK(I2IVariant::parse("FL").improvise_fraction == 1.0);
  CHECK(I2IVariant::parse("FL").initialize_fraction == 0.05);
  CHECK(I2IVariant::parse("LL").improvise_fraction == 0.05);
  CHECK_THROWS_AS(I2IVariant::parse("LF"), ConfigError);
  CHECK_THROWS_AS(I2IVariant::parse("ff"), ConfigError);
  CHECK(parse_algorithm("closest_task_init") == Algorithm::ClosestTaskInit);
  CHECK_THROWS_AS(parse_algorithm("finetune"), ConfigError);
}

TEST_CASE("schedule validation") {
  CLSchedule s;
  s.order = {"a", "b", "a"};
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s.order = {"a", "b"};
  s.variant = I2IVariant::FF();
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s.algorithm = Algorithm::I2I;
  CHECK_NOTHROW(s.validate());
  s.variant.reset();
  CHECK_THROWS_AS(s.validate(), ConfigError);
}

TEST_CASE("data vault firewall") {
  auto data = std::make_shared<TaskData>();
  data->train.examples.resize(3);
  data->val.examples.resize(2);
  DataVault vault;
  vault.add("t", data);
  CHECK(vault.contains("t"));
  CHECK_FALSE(vault.contains("u"));
  const TaskDataHandle handle = vault.open("t");
  CHECK(handle.train().size() == 3);
  vault.close("t");
  CHECK_THROWS_AS(handle.train(), DataAccessError);
  CHECK(handle.val().size() == 2);
  CHECK(vault.val("t").size() == 2);
  CHECK_THROWS_AS(vault.open("t"), DataAccessError);
}

TEST_CASE("closest-task selection") {
  const std::vector<double> a{1, 0}, b{0, 1}, zero{0, 0};
  CHECK(cosine_similarity(a, a) == doctest::Approx(1.0));
  CHECK(cosine_similarity(a, b) == 0.0);
  CHECK(cosine_similarity(a, zero) == 0.0);
  const std::vector<std::vector<double>> priors{{2, 0}, {3, 0}, {0, 1}};
  CHECK(select_closest(a, priors) == 0);
  CHECK(select_closest(b, priors) == 2);
  CHECK_THROWS_AS(select_closest(a, std::vector<std::vector<double>>{}), std::invalid_argument);
  const double nan = std::numeric_limits<double>::quiet_NaN();
  const std::vector<double> row{nan, 0.4, 0.9, 0.9};
  CHECK(select_closest(row) == 2);
}

TEST_CASE("vanilla cache returns independent copies") {
  const RunConfig& config = tiny_setup("harness");
  Rng rng(3);
  AdapterOutcome outcome;
  outcome.adapter = init_adapter(config.backbone, 4, rng);
  outcome.head = init_task_head(config.backbone, rng);
  outcome.score = 12.5;
  VanillaCache cache;
  CHECK_FALSE(cache.get("k").has_value());
  cache.put("k", outcome);
  auto first = cache.get("k");
  REQUIRE(first.has_value());
  const double before = first->adapter.points[0].down.at(0);
  first->adapter.points[0].down.mutable_data()[0] += 1.0;
  CHECK(cache.get("k")->adapter.points[0].down.at(0) == before);
  outcome.adapter.points[0].down.mutable_data()[0] += 1.0;
  CHECK(cache.get("k")->adapter.points[0].down.at(0) == before);
  CHECK(cache.get("k")->score == 12.5);
}

TEST_CASE("every algorithm completes a five-task schedule with a clean audit") {
  const RunConfig& base = tiny_setup("harness");
  const std::vector<std::pair<Algorithm, std::optional<I2IVariant>>> methods = {
      {Algorithm::Vanilla, std::nullopt},
      {Algorithm::AdapterFusion, std::nullopt},
      {Algorithm::ClosestTaskInit, std::nullopt},
      {Algorithm::I2I, I2IVariant::FF()},
      {Algorithm::I2I, I2IVariant::FL()},
      {Algorithm::I2I, I2IVariant::LL()}};
  VanillaCache cache;
  for (const auto& [algorithm, variant] : methods) {
    const RunConfig config = with_algorithm(base, algorithm, variant);
    CAPTURE(config.method_name());
    const RunOutputs out = cmd_run(config, &cache);
    const CLRunRecord& record = out.result.record;
    REQUIRE(record.tasks.size() == 5);
    CHECK(record.order == task_order(config, 1));
    for (std::size_t i = 0; i < record.tasks.size(); ++i) {
      CHECK(record.tasks[i].step == i + 1);
      CHECK(record.tasks[i].audited == i);
      CHECK(record.tasks[i].score >= 0.0);
      CHECK(record.tasks[i].score <= 100.0);
    }
    CHECK(std::filesystem::exists(out.dir / "record.json"));
    CHECK(std::filesystem::exists(out.dir / "store.ckpt"));
    CHECK(std::filesystem::exists(out.dir / "params.csv"));
    CHECK(read_record(out.dir / "record.json").digest() == record.digest());

    // The stored parameters reproduce every final score.
    const ModelStore reloaded =
        ModelStore::from_checkpoint(read_checkpoint(out.dir / "store.ckpt"), config.backbone);
    REQUIRE(reloaded.size() == 5);
    for (std::size_t i = 0; i < 5; ++i) CHECK(reloaded.at(i).score == record.tasks[i].score);

    // Totals grow with every task and never fall below the inference count.
    for (std::size_t i = 0; i < 5; ++i) {
      const ParamCounts& p = record.tasks[i].params;
      CHECK(p.inference <= p.total);
      if (i > 0) CHECK(p.total > record.tasks[i - 1].params.total);
    }
    if (algorithm == Algorithm::AdapterFusion) {
      for (std::size_t i = 1; i < 5; ++i)
        CHECK(record.tasks[i].params.inference > record.tasks[i - 1].params.inference);
    }
    if (algorithm == Algorithm::I2I || algorithm == Algorithm::Vanilla ||
        algorithm == Algorithm::ClosestTaskInit) {
      for (std::size_t i = 1; i < 5; ++i)
        CHECK(record.tasks[i].params.inference == record.tasks[0].params.inference);
    }
    if (algorithm == Algorithm::ClosestTaskInit) {
      for (std::size_t i = 1; i < 5; ++i) {
        CHECK(record.tasks[i].similarities.size() == i);
        REQUIRE(record.tasks[i].initialized_from.has_value());
      }
    }
    if (algorithm == Algorithm::I2I) {
      // At k = 2 phase two copies the first adapter without optimization.
      const TaskRecord& second = record.tasks[1];
      const auto init = std::find_if(second.phases.begin(), second.phases.end(),
                                     [](const PhaseTrace& t) { return t.phase == "initialize"; });
      REQUIRE(init != second.phases.end());
      CHECK(init->steps == 0);
      CHECK(second.digests.at("initialize_adapter") == record.tasks[0].digests.at("adapter"));
    }
  }
}

TEST_CASE("a rerun reproduces the record byte for byte") {
  const RunConfig& base = tiny_setup("harness_rerun");
  RunConfig config = with_algorithm(base, Algorithm::I2I, I2IVariant::FL());
  const RunOutputs first = cmd_run(config);
  const std::string bytes = read_text(first.dir / "record.json");
  const std::string store = read_text(first.dir / "store.ckpt");
  std::filesystem::remove_all(first.dir);
  const RunOutputs second = cmd_run(config);
  CHECK(read_text(second.dir / "record.json") == bytes);
  CHECK(read_text(second.dir / "store.ckpt") == store);

  SUBCASE("records detect tampering") {
    nlohmann::json doc = nlohmann::json::parse(bytes);
    doc["tasks"][0]["score"] = 1.0 + doc["tasks"][0]["score"].get<double>();
    CHECK_THROWS(record_from_json(doc));
  }
  SUBCASE("records round-trip") {
    const CLRunRecord r = read_record(second.dir / "record.json");
    const auto copy = second.dir / "copy.json";
    write_record(copy, r);
    CHECK(read_text(copy) == bytes);
  }
}
