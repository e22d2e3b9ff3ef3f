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

#include "i2i/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <set>
#include <sstream>

namespace i2i {

namespace {

std::string fixed2(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

std::string cell(const std::optional<double>& v) { return v ? fixed2(*v) : ""; }

std::string method_name(const CLRunRecord& r) {
  return r.variant.empty() ? r.algorithm : r.algorithm + "_" + r.variant;
}

}  // namespace

double knowledge_transfer(double s_f, double s_a) {
  if (s_a == 0.0) throw MetricError("knowledge transfer undefined for S_A = 0");
  return 100.0 * (s_f - s_a) / s_a;
}

double mean_of(std::span<const double> values) {
  if (values.empty()) throw MetricError("mean of an empty list");
  double total = 0.0;
  for (double v : values) total += v;
  return total / static_cast<double>(values.size());
}

double overall_transfer(std::span<const double> per_task) {
  if (per_task.empty()) throw MetricError("overall transfer needs at least one task after T_1");
  return mean_of(per_task);
}

double distillation_decay(double s_f, double s_phi) {
  if (s_f == 0.0) throw MetricError("distillation decay undefined for S_F = 0");
  return 100.0 * (s_f - s_phi) / s_f;
}

double phase3_gain(std::span<const std::pair<double, double>> pairs) {
  if (pairs.empty()) throw MetricError("phase-three gain needs at least one task after T_1");
  std::vector<double> gains;
  for (const auto& [after2, after3] : pairs) {
    if (after2 == 0.0) throw MetricError("phase-three gain undefined for a zero phase-two score");
    gains.push_back(100.0 * (after3 - after2) / after2);
  }
  return mean_of(gains);
}

std::vector<std::optional<double>> decay_per_task(const CLRunRecord& record) {
  std::vector<std::optional<double>> out;
  for (const auto& t : record.tasks) {
    const auto f = t.phase_scores.find("improvise");
    const auto phi = t.phase_scores.find("initialize");
    if (t.step >= 2 && f != t.phase_scores.end() && phi != t.phase_scores.end())
      out.push_back(distillation_decay(f->second, phi->second));
    else
      out.push_back(std::nullopt);
  }
  return out;
}

std::optional<double> run_phase3_gain(const CLRunRecord& record) {
  std::vector<std::pair<double, double>> pairs;
  for (const auto& t : record.tasks) {
    const auto two = t.phase_scores.find("initialize");
    const auto three = t.phase_scores.find("train");
    if (t.step >= 2 && two != t.phase_scores.end() && three != t.phase_scores.end())
      pairs.emplace_back(two->second, three->second);
  }
  if (pairs.empty()) return std::nullopt;
  return phase3_gain(pairs);
}

MetricTable compute_metrics(const CLRunRecord& vanilla, const CLRunRecord& candidate) {
  if (candidate.tasks.size() < 2) throw MetricError("metrics need a schedule of at least 2 tasks");
  std::set<std::string> a, b;
  for (const auto& t : vanilla.tasks) a.insert(t.task_id);
  for (const auto& t : candidate.tasks) b.insert(t.task_id);
  if (a != b) throw MetricError("vanilla and candidate records cover different task sets");

  MetricTable m;
  m.method = method_name(candidate);
  std::vector<double> later;
  for (const auto& t : candidate.tasks) {
    m.task_ids.push_back(t.task_id);
    m.scores.push_back(t.score);
    if (t.step == 1) {
      m.transfer.push_back(std::nullopt);
      continue;
    }
    const double tr = knowledge_transfer(t.score, vanilla.task(t.task_id).score);
    m.transfer.push_back(tr);
    later.push_back(tr);
  }
  m.overall = overall_transfer(later);
  m.decay = decay_per_task(candidate);
  m.phase3_gain = run_phase3_gain(candidate);
  return m;
}

std::string MetricTable::to_csv() const {
  std::ostringstream os;
  os << "method,task,step,score,transfer,decay\n";
  for (std::size_t i = 0; i < task_ids.size(); ++i) {
    os << method << ',' << task_ids[i] << ',' << i + 1 << ',' << fixed2(scores[i]) << ','
       << cell(transfer[i]) << ',' << (i < decay.size() ? cell(decay[i]) : "") << '\n';
  }
  os << method << ",overall,,," << fixed2(overall) << ',' << cell(phase3_gain) << '\n';
  return os.str();
}

AggregateRow aggregate_orders(std::span<const MetricTable> per_order) {
  if (per_order.empty()) throw MetricError("aggregate over zero task orders");
  AggregateRow row;
  row.method = per_order[0].method;
  row.task_ids = per_order[0].task_ids;
  std::sort(row.task_ids.begin(), row.task_ids.end());
  std::vector<double> overall;
  for (const auto& table : per_order) overall.push_back(table.overall);
  row.overall = mean_of(overall);
  for (const auto& id : row.task_ids) {
    std::vector<double> transfers, scores;
    for (const auto& table : per_order) {
      const auto it = std::find(table.task_ids.begin(), table.task_ids.end(), id);
      if (it == table.task_ids.end()) throw MetricError("task orders cover different task sets");
      const auto i = static_cast<std::size_t>(it - table.task_ids.begin());
      if (!table.transfer[i]) continue;
      transfers.push_back(*table.transfer[i]);
      scores.push_back(table.scores[i]);
    }
    row.transfer.push_back(transfers.empty() ? std::nullopt
                                             : std::optional<double>(mean_of(transfers)));
    row.score.push_back(scores.empty() ? std::nullopt : std::optional<double>(mean_of(scores)));
  }
  return row;
}

std::string aggregate_csv(std::span<const AggregateRow> rows) {
  if (rows.empty()) throw MetricError("no rows to tabulate");
  std::ostringstream os;
  os << "method";
  for (const auto& id : rows[0].task_ids) os << ',' << id;
  os << ",overall\n";
  for (const auto& r : rows) {
    if (r.task_ids != rows[0].task_ids) throw MetricError("rows cover different task sets");
    os << r.method;
    for (std::size_t i = 0; i < r.task_ids.size(); ++i) {
      os << ',';
      if (r.transfer[i]) os << fixed2(*r.transfer[i]) << " [" << fixed2(*r.score[i]) << ']';
    }
    os << ',' << fixed2(r.overall) << '\n';
  }
  return os.str();
}

}  // namespace i2i
