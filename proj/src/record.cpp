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

#include "i2i/record.hpp"

#include <fstream>
#include <iterator>
#include <stdexcept>

#include "i2i/digest.hpp"

namespace i2i {

using nlohmann::json;

namespace {

json trace_json(const PhaseTrace& p) {
  json j{{"phase", p.phase},         {"examples", p.examples}, {"steps", p.steps},
         {"loss", p.loss},           {"val_score", p.val_score}, {"score", p.score},
         {"digest", p.digest}};
  if (p.distill_initial) j["distill_initial"] = *p.distill_initial;
  if (p.distill_final) j["distill_final"] = *p.distill_final;
  return j;
}

PhaseTrace trace_from(const json& j) {
  PhaseTrace p;
  p.phase = j.at("phase").get<std::string>();
  p.examples = j.at("examples").get<std::size_t>();
  p.steps = j.at("steps").get<std::size_t>();
  p.loss = j.at("loss").get<std::vector<double>>();
  p.val_score = j.at("val_score").get<std::vector<double>>();
  p.score = j.at("score").get<double>();
  p.digest = j.at("digest").get<std::string>();
  if (j.contains("distill_initial")) p.distill_initial = j.at("distill_initial").get<double>();
  if (j.contains("distill_final")) p.distill_final = j.at("distill_final").get<double>();
  return p;
}

json task_json(const TaskRecord& t) {
  json phases = json::array();
  for (const auto& p : t.phases) phases.push_back(trace_json(p));
  json j{{"task_id", t.task_id},
         {"step", t.step},
         {"score", t.score},
         {"phase_scores", t.phase_scores},
         {"phases", phases},
         {"params",
          {{"training_forward", t.params.training_forward},
           {"inference", t.params.inference},
           {"total", t.params.total}}},
         {"digests", t.digests},
         {"audited", t.audited}};
  if (t.initialized_from) j["initialized_from"] = *t.initialized_from;
  if (!t.similarities.empty()) j["similarities"] = t.similarities;
  return j;
}

TaskRecord task_from(const json& j) {
  TaskRecord t;
  t.task_id = j.at("task_id").get<std::string>();
  t.step = j.at("step").get<std::size_t>();
  t.score = j.at("score").get<double>();
  t.phase_scores = j.at("phase_scores").get<std::map<std::string, double>>();
  for (const auto& p : j.at("phases")) t.phases.push_back(trace_from(p));
  const json& params = j.at("params");
  t.params = {params.at("training_forward").get<std::size_t>(),
              params.at("inference").get<std::size_t>(), params.at("total").get<std::size_t>()};
  t.digests = j.at("digests").get<std::map<std::string, std::string>>();
  t.audited = j.at("audited").get<std::size_t>();
  if (j.contains("initialized_from"))
    t.initialized_from = j.at("initialized_from").get<std::string>();
  if (j.contains("similarities")) t.similarities = j.at("similarities").get<std::vector<double>>();
  return t;
}

}  // namespace

const TaskRecord& CLRunRecord::task(const std::string& id) const {
  for (const auto& t : tasks)
    if (t.task_id == id) return t;
  throw std::out_of_range("record has no task '" + id + "'");
}

json to_json(const CLRunRecord& r) {
  json tasks = json::array();
  for (const auto& t : r.tasks) tasks.push_back(task_json(t));
  return json{{"schema_version", r.schema_version},
              {"algorithm", r.algorithm},
              {"variant", r.variant},
              {"seed", r.seed},
              {"order", r.order},
              {"backbone_digest", r.backbone_digest},
              {"config_digest", r.config_digest},
              {"hyper", r.hyper},
              {"tasks", tasks}};
}

std::string CLRunRecord::digest() const { return to_hex(fnv1a64(canonical_dump(to_json(*this)))); }

CLRunRecord record_from_json(const json& j) {
  CLRunRecord r;
  r.schema_version = j.at("schema_version").get<int>();
  if (r.schema_version != kRecordSchemaVersion)
    throw std::runtime_error("unsupported record schema version " +
                             std::to_string(r.schema_version));
  r.algorithm = j.at("algorithm").get<std::string>();
  r.variant = j.at("variant").get<std::string>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.order = j.at("order").get<std::vector<std::string>>();
  r.backbone_digest = j.at("backbone_digest").get<std::string>();
  r.config_digest = j.at("config_digest").get<std::string>();
  r.hyper = j.at("hyper");
  for (const auto& t : j.at("tasks")) r.tasks.push_back(task_from(t));
  if (j.contains("digest") && j.at("digest").get<std::string>() != r.digest())
    throw std::runtime_error("record digest mismatch");
  return r;
}

std::string canonical_dump(const json& j) { return j.dump(2) + "\n"; }

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  return {std::istreambuf_iterator<char>(in), {}};
}

void write_record(const std::filesystem::path& path, const CLRunRecord& record) {
  json j = to_json(record);
  j["digest"] = record.digest();
  write_text(path, canonical_dump(j));
}

CLRunRecord read_record(const std::filesystem::path& path) {
  return record_from_json(json::parse(read_text(path)));
}

}  // namespace i2i
