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

#include "i2i/harness.hpp"

#include <chrono>
#include <set>
#include <sstream>

#include "i2i/digest.hpp"

namespace i2i {

using nlohmann::json;

namespace {

std::string fmt_score(double v) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(2);
  os << v;
  return os.str();
}

PhaseTrace trace_of(const std::string& phase, std::size_t examples, const TrainTrace& t,
                    double score, std::string digest) {
  PhaseTrace p;
  p.phase = phase;
  p.examples = examples;
  p.steps = t.steps;
  p.loss = t.loss;
  p.val_score = t.val_score;
  p.score = score;
  p.digest = std::move(digest);
  return p;
}

std::string pair_digest(const AdapterParams& adapter, const TaskHead& head) {
  auto named = adapter.named_parameters();
  for (auto& nt : head.named_parameters()) named.push_back(nt);
  return params_digest(named);
}

std::size_t fusion_size(const BackboneConfig& config, std::size_t n_adapters) {
  Rng shape_only(0);
  return count_params(init_fusion(config, n_adapters, shape_only));
}

}  // namespace

std::string_view to_string(Algorithm algorithm) {
  switch (algorithm) {
    case Algorithm::Vanilla: return "vanilla";
    case Algorithm::AdapterFusion: return "adapterfusion";
    case Algorithm::ClosestTaskInit: return "closest_task_init";
    case Algorithm::I2I: return "i2i";
  }
  return "unknown";
}

Algorithm parse_algorithm(std::string_view name) {
  for (Algorithm a : {Algorithm::Vanilla, Algorithm::AdapterFusion, Algorithm::ClosestTaskInit,
                      Algorithm::I2I})
    if (name == to_string(a)) return a;
  throw ConfigError("unknown algorithm '" + std::string(name) +
                    "' (expected vanilla, adapterfusion, closest_task_init or i2i)");
}

void Hyperparameters::validate() const {
  if (bottleneck == 0) throw ConfigError("bottleneck must be at least 1");
  for (const PhaseHyper* h : {&adapter, &fusion, &improvise, &initialize, &train}) h->validate();
}

json to_json(const PhaseHyper& h) {
  return {{"epochs", h.epochs},
          {"batch_size", h.batch_size},
          {"learning_rate", h.learning_rate},
          {"patience", h.patience}};
}

PhaseHyper phase_hyper_from_json(const json& j) {
  static const std::set<std::string> known = {"epochs", "batch_size", "learning_rate",
                                              "patience"};
  for (const auto& [key, _] : j.items())
    if (!known.contains(key)) throw ConfigError("unknown phase key '" + key + "'");
  PhaseHyper h;
  h.epochs = j.value("epochs", h.epochs);
  h.batch_size = j.value("batch_size", h.batch_size);
  h.learning_rate = j.value("learning_rate", h.learning_rate);
  h.patience = j.value("patience", h.patience);
  h.validate();
  return h;
}

json to_json(const Hyperparameters& h) {
  return {{"bottleneck", h.bottleneck},       {"adapter", to_json(h.adapter)},
          {"fusion", to_json(h.fusion)},      {"improvise", to_json(h.improvise)},
          {"initialize", to_json(h.initialize)}, {"train", to_json(h.train)}};
}

Hyperparameters hyperparameters_from_json(const json& j) {
  Hyperparameters h;
  for (const auto& [key, value] : j.items()) {
    if (key == "bottleneck") h.bottleneck = value.get<std::size_t>();
    else if (key == "adapter") h.adapter = phase_hyper_from_json(value);
    else if (key == "fusion") h.fusion = phase_hyper_from_json(value);
    else if (key == "improvise") h.improvise = phase_hyper_from_json(value);
    else if (key == "initialize") h.initialize = phase_hyper_from_json(value);
    else if (key == "train") h.train = phase_hyper_from_json(value);
    else throw ConfigError("unknown hyper key '" + key + "'");
  }
  h.validate();
  return h;
}

void CLSchedule::validate() const {
  if (order.empty()) throw ConfigError("schedule has no tasks");
  std::set<std::string> seen;
  for (const auto& id : order)
    if (!seen.insert(id).second) throw ConfigError("task '" + id + "' appears twice");
  if ((algorithm == Algorithm::I2I) != variant.has_value())
    throw ConfigError(algorithm == Algorithm::I2I ? "i2i requires a variant"
                                                  : "a variant is only valid with i2i");
  if (variant) variant->validate();
  hyper.validate();
}

std::uint64_t phase_seed(std::uint64_t run_seed, const std::string& task_id,
                         std::string_view label) {
  return derive_seed(run_seed, task_id + "/" + std::string(label));
}

// --- data firewall -----------------------------------------------------------

TaskDataHandle::TaskDataHandle(std::string id, std::shared_ptr<const TaskData> data,
                               std::shared_ptr<const bool> revoked)
    : id_(std::move(id)), data_(std::move(data)), revoked_(std::move(revoked)) {}

std::span<const Example> TaskDataHandle::train() const {
  if (*revoked_)
    throw DataAccessError("training data of task '" + id_ + "' was read after the task closed");
  return data_->train.examples;
}

std::span<const Example> TaskDataHandle::val() const { return data_->val.examples; }

void DataVault::add(const std::string& id, std::shared_ptr<const TaskData> data) {
  entries_[id] = {std::move(data), std::make_shared<bool>(false)};
}

bool DataVault::contains(const std::string& id) const { return entries_.contains(id); }

TaskDataHandle DataVault::open(const std::string& id) {
  const auto it = entries_.find(id);
  if (it == entries_.end()) throw ConfigError("no data for task '" + id + "'");
  if (*it->second.revoked)
    throw DataAccessError("task '" + id + "' is closed; its training data cannot be reopened");
  return {id, it->second.data, it->second.revoked};
}

void DataVault::close(const std::string& id) { *entries_.at(id).revoked = true; }

std::span<const Example> DataVault::val(const std::string& id) const {
  return entries_.at(id).data->val.examples;
}

// --- model store -------------------------------------------------------------

void ModelStore::add(StoredTask task) { tasks_.push_back(std::move(task)); }

void ModelStore::set_score(std::size_t index, double score) { tasks_.at(index).score = score; }

const StoredTask& ModelStore::find(const std::string& id) const {
  for (const auto& t : tasks_)
    if (t.id == id) return t;
  throw std::out_of_range("store has no task '" + id + "'");
}

std::vector<const AdapterParams*> ModelStore::adapters(std::size_t count) const {
  std::vector<const AdapterParams*> out;
  for (std::size_t j = 0; j < count; ++j) out.push_back(&tasks_.at(j).adapter);
  return out;
}

AdapterRouting ModelStore::routing(std::size_t index) const {
  const StoredTask& t = tasks_.at(index);
  if (!t.fusion) return AdapterRouting::single(t.adapter);
  return {adapters(t.fusion->n_adapters), &*t.fusion};
}

bool ModelStore::has_fusion() const {
  for (const auto& t : tasks_)
    if (t.fusion) return true;
  return false;
}

std::vector<CheckpointBlock> ModelStore::blocks() const {
  std::vector<CheckpointBlock> out;
  auto append = [&out](std::vector<CheckpointBlock> more) {
    for (auto& b : more) out.push_back(std::move(b));
  };
  for (const auto& t : tasks_) {
    const std::string prefix = "task/" + t.id + "/";
    append(to_blocks(t.adapter.named_parameters(), prefix + "adapter/"));
    append(to_blocks(t.head.named_parameters(), prefix + "head/"));
    if (t.fusion) append(to_blocks(t.fusion->named_parameters(), prefix + "fusion/"));
    if (!t.representation.empty())
      out.push_back({prefix + "representation", {t.representation.size()}, t.representation});
    out.push_back({prefix + "score", {1}, {t.score}});
  }
  return out;
}

ModelStore ModelStore::from_checkpoint(const Checkpoint& ckpt, const BackboneConfig& config) {
  if (ckpt.config_digest != config.digest())
    throw CheckpointError("store was written for a different backbone config");
  std::vector<std::string> ids;
  for (const auto& b : ckpt.blocks) {
    if (b.name.compare(0, 5, "task/") != 0) throw CheckpointError("unexpected block " + b.name);
    const std::string id = b.name.substr(5, b.name.find('/', 5) - 5);
    if (ids.empty() || ids.back() != id) ids.push_back(id);
  }
  ModelStore store;
  Rng shape_only(0);
  for (const auto& id : ids) {
    const std::string prefix = "task/" + id + "/";
    StoredTask t;
    t.id = id;
    const std::size_t r = ckpt.block(prefix + "adapter/point0.down").shape.at(1);
    t.adapter = init_adapter(config, r, shape_only);
    load_blocks(ckpt.blocks, t.adapter.named_parameters(), prefix + "adapter/");
    t.head = init_task_head(config, shape_only);
    load_blocks(ckpt.blocks, t.head.named_parameters(), prefix + "head/");
    if (ckpt.contains(prefix + "fusion/point0.query")) {
      t.fusion = init_fusion(config, store.size() + 1, shape_only);
      load_blocks(ckpt.blocks, t.fusion->named_parameters(), prefix + "fusion/");
      t.fusion->freeze();
    }
    if (ckpt.contains(prefix + "representation"))
      t.representation = ckpt.block(prefix + "representation").data;
    t.score = ckpt.block(prefix + "score").data.at(0);
    t.adapter.freeze();
    t.head.freeze();
    store.add(std::move(t));
  }
  return store;
}

void save_store(const std::filesystem::path& path, const BackboneConfig& config,
                const ModelStore& store) {
  write_checkpoint(path, config.digest(), store.blocks());
}

// --- parameter accounting ----------------------------------------------------

ParamCounts param_report(Algorithm algorithm, const BackboneParams& backbone,
                         const ModelStore& store, std::size_t step) {
  if (step == 0 || step > store.size()) throw std::out_of_range("param_report: step out of range");
  const std::size_t base = count_params(backbone);
  ParamCounts c;
  c.total = base;
  for (std::size_t j = 0; j < step; ++j) {
    const StoredTask& t = store.at(j);
    c.total += count_params(t.adapter) + count_params(t.head);
    if (t.fusion) c.total += count_params(*t.fusion);
  }
  const std::size_t k = step - 1;
  const StoredTask& current = store.at(k);
  const AdapterRouting routing = store.routing(k);
  c.inference = base + count_params(current.head);
  for (const AdapterParams* a : routing.adapters) c.inference += count_params(*a);
  if (routing.fusion != nullptr) c.inference += count_params(*routing.fusion);
  c.training_forward = c.inference;
  if (algorithm == Algorithm::I2I && step >= 3) {
    std::size_t improvise = base + count_params(current.head) +
                            fusion_size(backbone.config, step - 1);
    for (std::size_t j = 0; j + 1 < step; ++j) improvise += count_params(store.at(j).adapter);
    c.training_forward = std::max(c.training_forward, improvise);
  }
  return c;
}

std::string param_report_csv(std::span<const ParamReportRow> rows) {
  std::ostringstream os;
  os << "task_step,algo,training_forward,inference,total\n";
  for (const auto& r : rows)
    os << r.step << ',' << r.algorithm << ',' << r.counts.training_forward << ','
       << r.counts.inference << ',' << r.counts.total << '\n';
  return os.str();
}

std::vector<ParamReportRow> param_report_rows(const CLRunRecord& record) {
  std::vector<ParamReportRow> rows;
  const std::string algo =
      record.variant.empty() ? record.algorithm : record.algorithm + "_" + record.variant;
  for (const auto& t : record.tasks) rows.push_back({t.step, algo, t.params});
  return rows;
}

// --- vanilla cache -----------------------------------------------------------

std::optional<AdapterOutcome> VanillaCache::get(const std::string& key) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  const AdapterOutcome& o = it->second;
  return AdapterOutcome{o.adapter.clone(), o.head.clone(), o.score, o.trace};
}

void VanillaCache::put(const std::string& key, const AdapterOutcome& outcome) {
  entries_[key] = {outcome.adapter.clone(), outcome.head.clone(), outcome.score, outcome.trace};
}

AdapterOutcome cached_vanilla(const BackboneParams& backbone, const TaskHead& psi0,
                              const std::string& task_id, std::span<const Example> train,
                              std::span<const Example> val, const Hyperparameters& hyper,
                              std::uint64_t run_seed, VanillaCache* cache) {
  const std::string key = task_id + "|" + std::to_string(run_seed) + "|" +
                          to_json(hyper.adapter).dump() + "|" + std::to_string(hyper.bottleneck);
  if (cache != nullptr)
    if (auto hit = cache->get(key)) return std::move(*hit);
  AdapterOutcome out = train_vanilla(backbone, psi0, train, val, hyper.bottleneck, hyper.adapter,
                                     phase_seed(run_seed, task_id, "adapter"));
  if (cache != nullptr) cache->put(key, out);
  return out;
}

json RunTiming::to_json() const {
  json tasks = json::object();
  for (const auto& [id, seconds] : task_seconds) tasks[id] = seconds;
  return {{"tasks", tasks}, {"total_seconds", total_seconds}};
}

// --- schedule ----------------------------------------------------------------

RunResult run_schedule(const CLSchedule& schedule, RunContext& ctx) {
  schedule.validate();
  const auto t_start = std::chrono::steady_clock::now();
  const BackboneParams& m = ctx.backbone;
  const Hyperparameters& hp = schedule.hyper;
  auto log = [&ctx](const std::string& msg) {
    if (ctx.log) ctx.log(msg);
  };

  RunResult result;
  CLRunRecord& rec = result.record;
  rec.algorithm = std::string(to_string(schedule.algorithm));
  rec.variant = schedule.variant ? schedule.variant->name : "";
  rec.seed = schedule.seed;
  rec.order = schedule.order;
  rec.backbone_digest = params_digest(m.named_parameters());
  rec.config_digest = m.config.digest();
  rec.hyper = to_json(hp);
  ModelStore& store = result.store;

  for (std::size_t k = 1; k <= schedule.order.size(); ++k) {
    const auto t_task = std::chrono::steady_clock::now();
    const std::string& id = schedule.order[k - 1];
    const TaskDataHandle data = ctx.vault.open(id);
    const auto train = data.train();
    const auto val = data.val();
    TaskRecord tr;
    tr.task_id = id;
    tr.step = k;
    StoredTask st;
    st.id = id;
    std::optional<std::size_t> live_training_forward;

    auto vanilla_phase = [&] {
      AdapterOutcome out =
          cached_vanilla(m, ctx.psi0, id, train, val, hp, schedule.seed, ctx.cache);
      tr.phases.push_back(trace_of("adapter", train.size(), out.trace, out.score,
                                   pair_digest(out.adapter, out.head)));
      tr.phase_scores["adapter"] = out.score;
      return out;
    };

    const auto previous = store.adapters(k - 1);
    if (k == 1 || schedule.algorithm == Algorithm::Vanilla) {
      AdapterOutcome out = vanilla_phase();
      st.adapter = std::move(out.adapter);
      st.head = std::move(out.head);
    } else if (schedule.algorithm == Algorithm::AdapterFusion) {
      FusionOutcome out = train_adapterfusion(
          m, ctx.psi0, previous, train, val, hp.bottleneck, hp.adapter, hp.fusion,
          phase_seed(schedule.seed, id, "adapter"), phase_seed(schedule.seed, id, "fusion"),
          vanilla_phase());
      auto named = out.fusion.named_parameters();
      for (auto& nt : out.head.named_parameters()) named.push_back(nt);
      tr.phases.push_back(
          trace_of("fusion", train.size(), out.trace, out.score, params_digest(named)));
      tr.phase_scores["fusion"] = out.score;
      st.adapter = std::move(out.extraction.adapter);
      st.head = std::move(out.head);
      st.fusion = std::move(out.fusion);
    } else if (schedule.algorithm == Algorithm::ClosestTaskInit) {
      std::vector<const TaskHead*> heads;
      std::vector<std::vector<double>> reps;
      for (std::size_t j = 0; j + 1 < k; ++j) {
        heads.push_back(&store.at(j).head);
        reps.push_back(store.at(j).representation);
      }
      ClosestTaskOutcome out =
          closest_task_init(m, ctx.psi0, previous, heads, reps, train, val, hp.adapter,
                            phase_seed(schedule.seed, id, "adapter"));
      tr.initialized_from = store.at(out.selected).id;
      tr.similarities = out.similarities;
      tr.phases.push_back(trace_of("adapter", train.size(), out.trained.trace, out.trained.score,
                                   pair_digest(out.trained.adapter, out.trained.head)));
      tr.phase_scores["adapter"] = out.trained.score;
      st.adapter = std::move(out.trained.adapter);
      st.head = std::move(out.trained.head);
      st.representation = std::move(out.representation);
    } else {
      const I2IVariant& variant = *schedule.variant;
      const std::uint64_t sub_seed = phase_seed(schedule.seed, id, "subsample");
      const auto improvise_set = subsample(train, variant.improvise_fraction, sub_seed);
      const auto initialize_set = subsample(train, variant.initialize_fraction, sub_seed);

      ImproviseOutcome imp = improvise(k, m, ctx.psi0, previous, improvise_set, val, hp.improvise,
                                       phase_seed(schedule.seed, id, "improvise"));
      std::size_t live = count_params(m) + count_params(imp.head);
      for (const AdapterParams* a : previous) live += count_params(*a);
      auto named = imp.head.named_parameters();
      if (imp.fusion) {
        live += count_params(*imp.fusion);
        for (auto& nt : imp.fusion->named_parameters()) named.push_back(nt);
      }
      live_training_forward = live;
      tr.phases.push_back(trace_of("improvise", improvise_set.size(), imp.trace, imp.score,
                                   params_digest(named)));
      tr.phase_scores["improvise"] = imp.score;

      InitializeOutcome ini =
          initialize(k, m, previous, imp, initialize_set, val, hp.bottleneck, hp.initialize,
                     phase_seed(schedule.seed, id, "initialize"));
      PhaseTrace p2;
      p2.phase = "initialize";
      p2.examples = k == 2 ? 0 : initialize_set.size();
      p2.steps = ini.trace.steps;
      p2.loss = ini.trace.loss;
      p2.score = ini.score;
      p2.digest = pair_digest(ini.adapter, ini.head);
      p2.distill_initial = ini.trace.initial_loss;
      p2.distill_final = ini.trace.final_loss;
      tr.phases.push_back(p2);
      tr.phase_scores["initialize"] = ini.score;
      tr.digests["initialize_adapter"] = params_digest(ini.adapter.named_parameters());

      AdapterOutcome fin = train_adapter(m, ini, train, val, hp.train,
                                         phase_seed(schedule.seed, id, "train"));
      tr.phases.push_back(trace_of("train", train.size(), fin.trace, fin.score,
                                   pair_digest(fin.adapter, fin.head)));
      tr.phase_scores["train"] = fin.score;
      st.adapter = std::move(fin.adapter);
      st.head = std::move(fin.head);
    }

    st.adapter.freeze();
    st.head.freeze();
    if (st.fusion) st.fusion->freeze();
    if (schedule.algorithm == Algorithm::ClosestTaskInit && st.representation.empty())
      st.representation = encode_pooled(m, st.head, train);
    tr.digests["adapter"] = params_digest(st.adapter.named_parameters());
    tr.digests["head"] = params_digest(st.head.named_parameters());
    if (st.fusion) tr.digests["fusion"] = params_digest(st.fusion->named_parameters());
    store.add(std::move(st));
    tr.score = evaluate_score(m, store.at(k - 1).head, store.routing(k - 1), val);
    store.set_score(k - 1, tr.score);
    ctx.vault.close(id);

    // Zero-forgetting audit over every earlier task.
    for (std::size_t j = 0; j + 1 < k; ++j) {
      const StoredTask& prior = store.at(j);
      const double again =
          evaluate_score(m, prior.head, store.routing(j), ctx.vault.val(prior.id));
      if (again != prior.score)
        throw AuditError("task '" + prior.id + "' scored " + fmt_score(again) + " after step " +
                         std::to_string(k) + ", recorded " + fmt_score(prior.score));
      ++tr.audited;
    }

    tr.params = param_report(schedule.algorithm, m, store, k);
    if (live_training_forward && *live_training_forward != tr.params.training_forward)
      throw AuditError("live training-forward count differs from the store enumeration");
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_task).count();
    result.timing.task_seconds.emplace_back(id, seconds);
    log(rec.algorithm + (rec.variant.empty() ? "" : "_" + rec.variant) + " seed " +
        std::to_string(schedule.seed) + " step " + std::to_string(k) + " " + id + ": score " +
        fmt_score(tr.score) + " (" + fmt_score(seconds) + " s)");
    rec.tasks.push_back(std::move(tr));
  }

  if (params_digest(m.named_parameters()) != rec.backbone_digest)
    throw AuditError("backbone parameters changed during the run");
  result.timing.total_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return result;
}

RunResult run_i2i(std::vector<std::string> order, const I2IVariant& variant,
                  const Hyperparameters& hyper, std::uint64_t seed, RunContext& context) {
  CLSchedule schedule{std::move(order), Algorithm::I2I, variant, hyper, seed};
  if (schedule.order.size() < 2) throw ConfigError("run_i2i needs at least two tasks");
  return run_schedule(schedule, context);
}

}  // namespace i2i
