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

#include <cmath>
#include <cstdio>

#include "i2i/metrics.hpp"

using namespace i2i;

namespace {

std::string two_dp(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

CLRunRecord record(const std::string& algorithm, const std::vector<std::string>& ids,
                   const std::vector<double>& scores) {
  CLRunRecord r;
  r.algorithm = algorithm;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    TaskRecord t;
    t.task_id = ids[i];
    t.step = i + 1;
    t.score = scores[i];
    r.tasks.push_back(t);
  }
  return r;
}

}  // namespace

TEST_CASE("knowledge transfer") {
  CHECK(two_dp(knowledge_transfer(61.52, 61.42)) == "0.16");
  CHECK(std::abs(knowledge_transfer(43.32, 42.04) - 3.04) <= 0.05);
  CHECK(knowledge_transfer(37.5, 37.5) == 0.0);
  CHECK(knowledge_transfer(60.0, 50.0) == doctest::Approx(20.0));
  CHECK_THROWS_AS(knowledge_transfer(10.0, 0.0), MetricError);
}

TEST_CASE("overall transfer and cross-order mean") {
  const std::vector<double> zeros{0, 0, 0};
  CHECK(overall_transfer(zeros) == 0.0);
  const std::vector<double> v{1, 2, 3, 4};
  CHECK(overall_transfer(v) == 2.5);
  CHECK_THROWS_AS(overall_transfer(std::vector<double>{}), MetricError);

  const std::vector<std::string> ids{"a", "b", "c"};
  const CLRunRecord vanilla = record("vanilla", ids, {50, 40, 20});
  std::vector<MetricTable> tables;
  tables.push_back(compute_metrics(vanilla, record("x", {"a", "b", "c"}, {50, 44, 25})));
  tables.push_back(compute_metrics(vanilla, record("x", {"c", "a", "b"}, {22, 55, 36})));
  tables.push_back(compute_metrics(vanilla, record("x", {"b", "c", "a"}, {40, 30, 45})));
  const AggregateRow row = aggregate_orders(tables);
  // Direct averaging oracle.
  const double o1 = (10.0 + 25.0) / 2, o2 = (10.0 - 10.0) / 2, o3 = (50.0 - 10.0) / 2;
  CHECK(row.overall == doctest::Approx((o1 + o2 + o3) / 3));
  REQUIRE(row.task_ids == std::vector<std::string>{"a", "b", "c"});
  // a is first in order 1 only; b first in order 3; c first in order 2.
  CHECK(*row.transfer[0] == doctest::Approx((10.0 - 10.0) / 2));
  CHECK(*row.score[0] == doctest::Approx((55.0 + 45.0) / 2));
  CHECK(*row.transfer[1] == doctest::Approx((10.0 - 10.0) / 2));
  CHECK(*row.transfer[2] == doctest::Approx((25.0 + 50.0) / 2));
  const std::string csv = aggregate_csv(std::span(&row, 1));
  CHECK(csv.find("method,a,b,c,overall") == 0);
  CHECK(csv.find("0.00 [50.00]") != std::string::npos);
}

TEST_CASE("distillation decay and phase-three gain") {
  CHECK(distillation_decay(70.0, 70.0) == 0.0);
  CHECK(distillation_decay(50.0, 45.0) == 10.0);
  CHECK_THROWS_AS(distillation_decay(0.0, 1.0), MetricError);
  const std::vector<std::pair<double, double>> none{{30, 30}, {40, 40}};
  CHECK(phase3_gain(none) == 0.0);
  const std::vector<std::pair<double, double>> pairs{{50, 55}, {40, 44}};
  CHECK(phase3_gain(pairs) == doctest::Approx(10.0));
  const std::vector<std::pair<double, double>> zero{{0, 5}};
  CHECK_THROWS_AS(phase3_gain(zero), MetricError);
  CHECK_THROWS_AS(phase3_gain(std::vector<std::pair<double, double>>{}), MetricError);
}

TEST_CASE("metric tables") {
  const CLRunRecord vanilla = record("vanilla", {"a", "b"}, {50, 40});
  SUBCASE("candidate equal to vanilla gives zeros") {
    const MetricTable m = compute_metrics(vanilla, vanilla);
    CHECK_FALSE(m.transfer[0].has_value());
    CHECK(*m.transfer[1] == 0.0);
    CHECK(m.overall == 0.0);
    CHECK_FALSE(m.phase3_gain.has_value());
  }
  SUBCASE("mismatched task sets are rejected") {
    CHECK_THROWS_AS(compute_metrics(vanilla, record("x", {"a", "z"}, {1, 2})), MetricError);
  }
  SUBCASE("a one-task schedule has no table") {
    CHECK_THROWS_AS(compute_metrics(record("vanilla", {"a"}, {5}), record("x", {"a"}, {5})),
                    MetricError);
  }
  SUBCASE("I2I phase scores feed decay and gain") {
    CLRunRecord i2i = record("i2i", {"a", "b"}, {50, 48});
    i2i.variant = "FF";
    i2i.tasks[1].phase_scores = {{"improvise", 40.0}, {"initialize", 36.0}, {"train", 48.0}};
    const MetricTable m = compute_metrics(vanilla, i2i);
    CHECK(m.method == "i2i_FF");
    CHECK(*m.decay[1] == doctest::Approx(10.0));
    CHECK(*m.phase3_gain == doctest::Approx(100.0 / 3.0));
    CHECK(*m.transfer[1] == doctest::Approx(20.0));
    const std::string csv = m.to_csv();
    CHECK(csv.find("method,task,step,score,transfer,decay\n") == 0);
    CHECK(csv.find("i2i_FF,b,2,48.00,20.00,10.00\n") != std::string::npos);
    CHECK(csv.find("i2i_FF,overall,,,20.00,33.33\n") != std::string::npos);
  }
}
