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

#include <fstream>

#include "fixture.hpp"

using namespace i2i;
using namespace i2i::testing;

TEST_CASE("configuration loading") {
  SUBCASE("defaults") {
    const RunConfig c = load_run_config({});
    CHECK(c.algorithm == Algorithm::I2I);
    CHECK(c.variant->name == "FF");
    CHECK(c.hyper.bottleneck == 8);
    CHECK(c.method_name() == "i2i_FF");
  }
  SUBCASE("overrides parse JSON values and fall back to strings") {
    const std::vector<std::string> o = {"seed=9", "order=3", "algorithm=vanilla", "variant=null",
                                        "hyper.train.learning_rate=0.01"};
    const RunConfig c = load_run_config({}, o);
    CHECK(c.seed == 9);
    CHECK(c.order == 3);
    CHECK(c.algorithm == Algorithm::Vanilla);
    CHECK_FALSE(c.variant.has_value());
    CHECK(c.hyper.train.learning_rate == 0.01);
    CHECK(c.run_dir().generic_string().ends_with("runs/vanilla/seed9/order3"));
  }
  SUBCASE("unknown keys are rejected") {
    const std::vector<std::string> top = {"sed=3"};
    CHECK_THROWS_AS(load_run_config({}, top), ConfigError);
    const std::vector<std::string> nested = {"hyper.train.lr=0.1"};
    CHECK_THROWS_AS(load_run_config({}, nested), ConfigError);
  }
  SUBCASE("invalid combinations are rejected") {
    const std::vector<std::string> variant_without_i2i = {"algorithm=vanilla", "variant=\"FF\""};
    CHECK_THROWS_AS(load_run_config({}, variant_without_i2i), ConfigError);
    const std::vector<std::string> bad_variant = {"variant=\"XX\""};
    CHECK_THROWS_AS(load_run_config({}, bad_variant), ConfigError);
    const std::vector<std::string> bad_order = {"order=4"};
    CHECK_THROWS_AS(load_run_config({}, bad_order), ConfigError);
    const std::vector<std::string> malformed = {"seed"};
    CHECK_THROWS_AS(load_run_config({}, malformed), ConfigError);
  }
  SUBCASE("the JSON form round-trips") {
    const std::vector<std::string> o = {"seed=4", "hyper.improvise.epochs=2"};
    const RunConfig c = load_run_config({}, o);
    const RunConfig back = run_config_from_json(to_json(c));
    CHECK(canonical_dump(to_json(back)) == canonical_dump(to_json(c)));
  }
  SUBCASE("a config file is read before overrides") {
    const auto dir = scratch_dir("config_file");
    std::filesystem::create_directories(dir);
    write_text(dir / "c.json", "{\"seed\": 12, \"order\": 2}\n");
    const std::vector<std::string> o = {"order=3"};
    const RunConfig c = load_run_config(dir / "c.json", o);
    CHECK(c.seed == 12);
    CHECK(c.order == 3);
  }
}

TEST_CASE("task orders are permutations of the suite") {
  const RunConfig c = load_run_config({});
  std::vector<std::string> ids;
  for (const auto& t : c.suite.resolved_tasks()) ids.push_back(t.id);
  std::sort(ids.begin(), ids.end());
  for (int k = 1; k <= 3; ++k) {
    auto order = task_order(c, k);
    CHECK(order == task_order(c, k));
    std::sort(order.begin(), order.end());
    CHECK(order == ids);
  }
  CHECK(task_order(c, 1) != task_order(c, 2));
}

TEST_CASE("gen, pretrain and the output contracts") {
  const RunConfig& config = tiny_setup("commands");
  SUBCASE("gen is idempotent") {
    CHECK(cmd_gen(config) == GenStatus::UpToDate);
    CHECK(load_suite(config).size() == 5);
  }
  SUBCASE("pretraining refuses to overwrite a checkpoint") {
    CHECK_THROWS_AS(cmd_pretrain(config), OutputExistsError);
  }
  SUBCASE("plots are deterministic and need input") {
    RunConfig c = with_algorithm(config, Algorithm::Vanilla);
    const RunOutputs out = cmd_run(c);
    const std::vector<std::string> inputs = {read_text(out.dir / "params.csv")};
    const std::string svg = render_plot(inputs);
    CHECK(svg.starts_with("<svg"));
    CHECK(svg == render_plot(inputs));
    CHECK_THROWS(render_plot(std::vector<std::string>{}));
    CHECK_THROWS(render_plot(std::vector<std::string>{""}));
  }
  SUBCASE("a corrupted file fails the digest check") {
    const RunConfig copy = [&] {
      RunConfig c = config;
      c.out = (scratch_dir("commands_corrupt")).string();
      return c;
    }();
    cmd_gen(copy);
    const auto victim = copy.data_dir() / copy.suite.resolved_tasks()[0].id / "val.jsonl";
    std::ofstream(victim, std::ios::app) << "\n";
    CHECK_THROWS_AS(load_suite(copy), DigestMismatchError);
    CHECK_THROWS_AS(cmd_gen(copy), DigestMismatchError);
  }
}

TEST_CASE("gradcheck report") {
  const GradCheckReport report = cmd_gradcheck(1);
  CHECK(report.passed());
  CHECK(report.text().find("gradcheck passed") != std::string::npos);
}
