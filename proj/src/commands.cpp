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

#include "i2i/commands.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <set>
#include <sstream>

#include "i2i/checkpoint.hpp"
#include "i2i/digest.hpp"
#include "i2i/record.hpp"

namespace i2i {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

void check_keys(const json& j, std::initializer_list<const char*> known, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (const char* k : known) ok = ok || key == k;
    if (!ok) throw ConfigError(where + ": unknown key '" + key + "'");
  }
}

template <typename T>
void read_into(const json& j, const char* key, T& field, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    field = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

json backbone_json(const BackboneConfig& c) {
  return {{"d_model", c.d_model},         {"n_heads", c.n_heads},
          {"n_enc_layers", c.n_enc_layers}, {"n_dec_layers", c.n_dec_layers},
          {"d_ff", c.d_ff},               {"vocab_size", c.vocab_size},
          {"max_src_len", c.max_src_len}, {"max_tgt_len", c.max_tgt_len},
          {"feature_dim", c.feature_dim}, {"dropout", c.dropout}};
}

BackboneConfig backbone_from(const json& j) {
  check_keys(j, {"d_model", "n_heads", "n_enc_layers", "n_dec_layers", "d_ff", "vocab_size",
                 "max_src_len", "max_tgt_len", "feature_dim", "dropout"},
             "backbone");
  BackboneConfig c;
  read_into(j, "d_model", c.d_model, "backbone");
  read_into(j, "n_heads", c.n_heads, "backbone");
  read_into(j, "n_enc_layers", c.n_enc_layers, "backbone");
  read_into(j, "n_dec_layers", c.n_dec_layers, "backbone");
  read_into(j, "d_ff", c.d_ff, "backbone");
  read_into(j, "vocab_size", c.vocab_size, "backbone");
  read_into(j, "max_src_len", c.max_src_len, "backbone");
  read_into(j, "max_tgt_len", c.max_tgt_len, "backbone");
  read_into(j, "feature_dim", c.feature_dim, "backbone");
  read_into(j, "dropout", c.dropout, "backbone");
  return c;
}

json scene_json(const SceneSpace& s) {
  return {{"n_slots", s.n_slots},   {"n_colors", s.n_colors},       {"n_shapes", s.n_shapes},
          {"n_sizes", s.n_sizes},   {"feature_dim", s.feature_dim}, {"noise_fraction", s.noise_fraction}};
}

SceneSpace scene_from(const json& j) {
  check_keys(j, {"n_slots", "n_colors", "n_shapes", "n_sizes", "feature_dim", "noise_fraction"},
             "scene");
  SceneSpace s;
  read_into(j, "n_slots", s.n_slots, "scene");
  read_into(j, "n_colors", s.n_colors, "scene");
  read_into(j, "n_shapes", s.n_shapes, "scene");
  read_into(j, "n_sizes", s.n_sizes, "scene");
  read_into(j, "feature_dim", s.feature_dim, "scene");
  read_into(j, "noise_fraction", s.noise_fraction, "scene");
  return s;
}

json task_json(const QATask& t) {
  return {{"id", t.id},
          {"type", std::string(to_string(t.type))},
          {"args", t.args},
          {"train_size", t.train_size},
          {"val_size", t.val_size},
          {"seed", t.seed}};
}

QATask task_from(const json& j) {
  check_keys(j, {"id", "type", "args", "train_size", "val_size", "seed"}, "suite.tasks[]");
  QATask t;
  read_into(j, "id", t.id, "suite.tasks[]");
  std::string type;
  read_into(j, "type", type, "suite.tasks[]");
  try {
    t.type = parse_query_type(type);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("suite.tasks[]: ") + e.what());
  }
  read_into(j, "args", t.args, "suite.tasks[]");
  read_into(j, "train_size", t.train_size, "suite.tasks[]");
  read_into(j, "val_size", t.val_size, "suite.tasks[]");
  read_into(j, "seed", t.seed, "suite.tasks[]");
  return t;
}

json suite_json(const SuiteConfig& s) {
  json tasks = json::array();
  for (const auto& t : s.tasks) tasks.push_back(task_json(t));
  return {{"codebook_seed", s.codebook_seed},
          {"suite_seed", s.suite_seed},
          {"train_size", s.train_size},
          {"val_size", s.val_size},
          {"tasks", tasks}};
}

SuiteConfig suite_from(const json& j) {
  check_keys(j, {"codebook_seed", "suite_seed", "train_size", "val_size", "tasks"}, "suite");
  SuiteConfig s;
  read_into(j, "codebook_seed", s.codebook_seed, "suite");
  read_into(j, "suite_seed", s.suite_seed, "suite");
  read_into(j, "train_size", s.train_size, "suite");
  read_into(j, "val_size", s.val_size, "suite");
  if (j.contains("tasks")) {
    if (!j.at("tasks").is_array()) throw ConfigError("suite.tasks: expected an array");
    for (const auto& t : j.at("tasks")) s.tasks.push_back(task_from(t));
  }
  return s;
}

json pretrain_json(const PretrainConfig& p) {
  return {{"per_type", p.per_type},
          {"corpus_seed", p.corpus_seed},
          {"seed", p.seed},
          {"hyper", to_json(p.hyper)}};
}

PretrainConfig pretrain_from(const json& j) {
  check_keys(j, {"per_type", "corpus_seed", "seed", "hyper"}, "pretrain");
  PretrainConfig p;
  read_into(j, "per_type", p.per_type, "pretrain");
  read_into(j, "corpus_seed", p.corpus_seed, "pretrain");
  read_into(j, "seed", p.seed, "pretrain");
  if (j.contains("hyper")) {
    // Pretraining has no validation split, so early stopping stays off.
    PhaseHyper defaults = p.hyper;
    json h = j.at("hyper");
    if (!h.is_object()) throw ConfigError("pretrain.hyper: expected an object");
    if (!h.contains("patience")) h["patience"] = defaults.patience;
    p.hyper = phase_hyper_from_json(h);
  }
  return p;
}

// Shape of the generated data; the manifest is stamped with its digest.
json suite_identity(const RunConfig& c) {
  json tasks = json::array();
  for (const auto& t : c.suite.resolved_tasks()) tasks.push_back(task_json(t));
  return {{"scene", scene_json(c.scene)},
          {"codebook_seed", c.suite.codebook_seed},
          {"tasks", tasks},
          {"pretrain_per_type", c.pretrain.per_type},
          {"pretrain_corpus_seed", c.pretrain.corpus_seed}};
}

const char* kManifest = "manifest.json";
const char* kCorpusFile = "pretrain.jsonl";

fs::path split_path(const std::string& id, const char* split) {
  return fs::path(id) / (std::string(split) + ".jsonl");
}

std::string fixed(double v, int digits = 2) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

}  // namespace

// --- configuration -------------------------------------------------------------

std::vector<QATask> SuiteConfig::resolved_tasks() const {
  return tasks.empty() ? default_tasks(suite_seed, train_size, val_size) : tasks;
}

void RunConfig::validate() const {
  backbone.validate();
  scene.validate();
  if (scene.feature_dim != backbone.feature_dim)
    throw ConfigError("scene.feature_dim must equal backbone.feature_dim");
  pretrain.hyper.validate();
  hyper.validate();
  if (pretrain.per_type == 0) throw ConfigError("pretrain.per_type must be >= 1");
  if (order < 1 || order > 3) throw ConfigError("order must be 1, 2 or 3");
  if (algorithm == Algorithm::I2I && !variant)
    throw ConfigError("algorithm i2i needs a variant (FF, FL or LL)");
  if (algorithm != Algorithm::I2I && variant)
    throw ConfigError("variant is only valid with algorithm i2i");
  if (variant) variant->validate();
  const auto tasks = suite.resolved_tasks();
  std::set<std::string> ids;
  for (const auto& t : tasks) {
    if (t.id.empty() || t.id.find('/') != std::string::npos || t.id.find(',') != std::string::npos)
      throw ConfigError("task id '" + t.id + "' must be non-empty without '/' or ','");
    if (!ids.insert(t.id).second) throw ConfigError("duplicate task id '" + t.id + "'");
    if (t.train_size == 0 || t.val_size == 0) throw ConfigError("task '" + t.id + "' has an empty split");
  }
  if (tasks.empty()) throw ConfigError("suite has no tasks");
}

fs::path RunConfig::out_root() const {
  if (!out.empty()) return out;
  if (const char* env = std::getenv(kOutputRootEnv); env && *env) return env;
  return "runs";
}

std::string RunConfig::method_name() const {
  std::string name(to_string(algorithm));
  if (variant) name += "_" + variant->name;
  return name;
}

fs::path RunConfig::run_dir() const {
  return out_root() / "runs" / method_name() / ("seed" + std::to_string(seed)) /
         ("order" + std::to_string(order));
}

json to_json(const RunConfig& c) {
  return {{"backbone", backbone_json(c.backbone)},
          {"scene", scene_json(c.scene)},
          {"suite", suite_json(c.suite)},
          {"pretrain", pretrain_json(c.pretrain)},
          {"algorithm", std::string(to_string(c.algorithm))},
          {"variant", c.variant ? json(c.variant->name) : json(nullptr)},
          {"hyper", to_json(c.hyper)},
          {"seed", c.seed},
          {"order", c.order},
          {"out", c.out}};
}

RunConfig run_config_from_json(const json& j) {
  check_keys(j, {"backbone", "scene", "suite", "pretrain", "algorithm", "variant", "hyper", "seed",
                 "order", "out"},
             "config");
  RunConfig c;
  if (j.contains("backbone")) c.backbone = backbone_from(j.at("backbone"));
  if (j.contains("scene")) c.scene = scene_from(j.at("scene"));
  if (j.contains("suite")) c.suite = suite_from(j.at("suite"));
  if (j.contains("pretrain")) c.pretrain = pretrain_from(j.at("pretrain"));
  if (j.contains("algorithm")) {
    std::string name;
    read_into(j, "algorithm", name, "config");
    c.algorithm = parse_algorithm(name);
    // Non-i2i algorithms carry no variant unless one is given explicitly.
    if (c.algorithm != Algorithm::I2I) c.variant.reset();
  }
  if (j.contains("variant")) {
    if (j.at("variant").is_null()) {
      c.variant.reset();
    } else {
      std::string name;
      read_into(j, "variant", name, "config");
      c.variant = I2IVariant::parse(name);
    }
  }
  if (j.contains("hyper")) c.hyper = hyperparameters_from_json(j.at("hyper"));
  read_into(j, "seed", c.seed, "config");
  read_into(j, "order", c.order, "config");
  read_into(j, "out", c.out, "config");
  return c;
}

void apply_override(json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ConfigError("override '" + assignment + "' is not key=value");
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(text);
  } catch (const json::parse_error&) {
    value = text;
  }
  json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? dot : dot - start);
    if (part.empty()) throw ConfigError("override key '" + key + "' has an empty component");
    if (!node->is_object()) throw ConfigError("override key '" + key + "' descends into a non-object");
    if (dot == std::string::npos) {
      (*node)[part] = value;
      return;
    }
    node = &(*node)[part];
    if (node->is_null()) *node = json::object();
    start = dot + 1;
  }
}

RunConfig load_run_config(const fs::path& path, std::span<const std::string> overrides) {
  json doc = json::object();
  if (!path.empty()) {
    std::string text;
    try {
      text = read_text(path);
    } catch (const std::exception& e) {
      throw ConfigError(e.what());
    }
    try {
      doc = json::parse(text);
    } catch (const json::parse_error& e) {
      throw ConfigError(path.string() + ": " + e.what());
    }
  }
  for (const auto& o : overrides) apply_override(doc, o);
  RunConfig c = run_config_from_json(doc);
  c.validate();
  return c;
}

std::vector<std::string> task_order(const RunConfig& config, int k) {
  if (k < 1 || k > 3) throw ConfigError("order must be 1, 2 or 3");
  std::vector<std::string> ids;
  for (const auto& t : config.suite.resolved_tasks()) ids.push_back(t.id);
  Rng rng(derive_seed(config.suite.suite_seed, "order/" + std::to_string(k)));
  rng.shuffle(ids);
  return ids;
}

// --- gen ---------------------------------------------------------------------------

GenStatus cmd_gen(const RunConfig& config) {
  const fs::path dir = config.data_dir();
  const json identity = suite_identity(config);
  const std::string identity_digest = to_hex(fnv1a64(identity.dump()));
  const fs::path manifest_path = dir / kManifest;

  if (fs::exists(manifest_path)) {
    const json manifest = json::parse(read_text(manifest_path));
    if (manifest.at("suite_digest").get<std::string>() != identity_digest)
      throw DigestMismatchError(dir.string() + " holds data for a different suite");
    for (const auto& [name, digest] : manifest.at("files").items()) {
      const fs::path file = dir / name;
      if (!fs::exists(file)) throw DigestMismatchError("missing data file " + file.string());
      if (file_digest(file) != digest.get<std::string>())
        throw DigestMismatchError("digest mismatch for " + file.string());
    }
    return GenStatus::UpToDate;
  }

  const Codebook codebook(config.scene, config.suite.codebook_seed);
  json files = json::object();
  for (const auto& task : config.suite.resolved_tasks()) {
    const TaskData data = generate_task(task, codebook);
    for (const auto& [split, examples] :
         {std::pair{"train", &data.train.examples}, std::pair{"val", &data.val.examples}}) {
      const fs::path rel = split_path(task.id, split);
      fs::create_directories((dir / rel).parent_path());
      write_examples(dir / rel, *examples);
      files[rel.generic_string()] = file_digest(dir / rel);
    }
  }
  const auto corpus = pretrain_corpus(codebook, config.pretrain.per_type, config.pretrain.corpus_seed);
  write_examples(dir / kCorpusFile, corpus);
  files[kCorpusFile] = file_digest(dir / kCorpusFile);

  const json manifest{{"suite", identity},
                      {"suite_digest", identity_digest},
                      {"codebook_digest", codebook.digest()},
                      {"files", files}};
  write_text(manifest_path, canonical_dump(manifest));
  return GenStatus::Created;
}

namespace {

json verified_manifest(const RunConfig& config) {
  const fs::path manifest_path = config.data_dir() / kManifest;
  if (!fs::exists(manifest_path))
    throw std::runtime_error("no generated data under " + config.data_dir().string() +
                             "; run the gen command first");
  const json manifest = json::parse(read_text(manifest_path));
  if (manifest.at("suite_digest").get<std::string>() !=
      to_hex(fnv1a64(suite_identity(config).dump())))
    throw DigestMismatchError(config.data_dir().string() + " holds data for a different suite");
  return manifest;
}

std::vector<Example> read_verified(const RunConfig& config, const json& manifest,
                                   const std::string& rel) {
  const fs::path file = config.data_dir() / rel;
  const auto& files = manifest.at("files");
  if (!files.contains(rel)) throw DigestMismatchError("manifest does not list " + rel);
  if (file_digest(file) != files.at(rel).get<std::string>())
    throw DigestMismatchError("digest mismatch for " + file.string());
  return read_examples(file);
}

}  // namespace

std::map<std::string, std::shared_ptr<const TaskData>> load_suite(const RunConfig& config) {
  const json manifest = verified_manifest(config);
  std::map<std::string, std::shared_ptr<const TaskData>> out;
  for (const auto& task : config.suite.resolved_tasks()) {
    auto data = std::make_shared<TaskData>();
    data->train.examples = read_verified(config, manifest, split_path(task.id, "train").generic_string());
    data->val.examples = read_verified(config, manifest, split_path(task.id, "val").generic_string());
    out.emplace(task.id, std::move(data));
  }
  return out;
}

// --- pretrain ----------------------------------------------------------------------

PretrainResult cmd_pretrain(const RunConfig& config) {
  const fs::path ckpt = config.backbone_path();
  if (fs::exists(ckpt))
    throw OutputExistsError(ckpt.string() + " already exists; remove it to pretrain again");
  const json manifest = verified_manifest(config);
  const auto corpus = read_verified(config, manifest, kCorpusFile);
  PretrainResult result =
      pretrain_backbone(config.backbone, corpus, config.pretrain.hyper, config.pretrain.seed);
  save_backbone(ckpt, result.backbone, result.psi0);
  const json summary{{"config_digest", config.backbone.digest()},
                     {"backbone_digest", params_digest(result.backbone.named_parameters())},
                     {"checkpoint_digest", file_digest(ckpt)},
                     {"corpus_examples", corpus.size()},
                     {"loss", result.loss},
                     {"mixture_score", result.mixture_score},
                     {"majority_rate", result.majority_rate},
                     {"hyper", to_json(config.pretrain.hyper)},
                     {"seed", config.pretrain.seed}};
  write_text(config.out_root() / "backbone.json", canonical_dump(summary));
  return result;
}

// --- run ---------------------------------------------------------------------------

RunOutputs cmd_run(const RunConfig& config, VanillaCache* cache) {
  const auto suite = load_suite(config);
  if (!fs::exists(config.backbone_path()))
    throw std::runtime_error("no backbone checkpoint at " + config.backbone_path().string() +
                             "; run the pretrain command first");
  auto [backbone, psi0] = load_backbone(config.backbone_path(), config.backbone);

  DataVault vault;
  for (const auto& [id, data] : suite) vault.add(id, data);
  RunContext ctx{backbone, psi0, vault, cache,
                 [](const std::string& line) { std::cerr << line << '\n'; }};
  CLSchedule schedule{task_order(config, config.order), config.algorithm, config.variant,
                      config.hyper, config.seed};
  RunResult result = run_schedule(schedule, ctx);

  const fs::path dir = config.run_dir();
  fs::create_directories(dir);
  write_record(dir / "record.json", result.record);
  save_store(dir / "store.ckpt", config.backbone, result.store);
  const auto rows = param_report_rows(result.record);
  write_text(dir / "params.csv", param_report_csv(rows));
  write_text(dir / "config.json", canonical_dump(to_json(config)));
  write_text(dir / "timing.json", canonical_dump(result.timing.to_json()));
  return {std::move(result), dir};
}

// --- metrics -----------------------------------------------------------------------

std::string cmd_metrics(const fs::path& vanilla_path, std::span<const fs::path> candidates) {
  if (candidates.empty()) throw MetricError("no candidate records given");
  const CLRunRecord vanilla = read_record(vanilla_path);
  if (vanilla.algorithm != "vanilla")
    throw MetricError(vanilla_path.string() + " is not a vanilla record");
  std::ostringstream os;
  std::map<std::string, std::vector<MetricTable>> by_method;
  for (const auto& path : candidates) {
    const MetricTable table = compute_metrics(vanilla, read_record(path));
    os << table.to_csv() << '\n';
    by_method[table.method].push_back(table);
  }
  std::vector<AggregateRow> rows;
  for (const auto& [method, tables] : by_method)
    if (tables.size() > 1) rows.push_back(aggregate_orders(tables));
  if (!rows.empty()) os << aggregate_csv(rows);
  return os.str();
}

// --- gradcheck ---------------------------------------------------------------------

bool GradCheckReport::passed() const {
  if (cases.empty()) return false;
  return std::all_of(cases.begin(), cases.end(),
                     [&](const GradCheckCase& c) { return c.result.max_rel_error < tolerance; });
}

std::string GradCheckReport::text() const {
  std::ostringstream os;
  for (const auto& c : cases) {
    char line[160];
    std::snprintf(line, sizeof(line), "%-22s %6zu coords  max rel err %.3e  %s\n", c.name.c_str(),
                  c.result.coordinates, c.result.max_rel_error,
                  c.result.max_rel_error < tolerance ? "ok" : "FAIL");
    os << line;
  }
  os << (passed() ? "gradcheck passed" : "gradcheck FAILED") << '\n';
  return os.str();
}

GradCheckReport cmd_gradcheck(std::uint64_t seed) { return {gradcheck_suite(seed), 1e-4}; }

// --- plot --------------------------------------------------------------------------

namespace {

std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::size_t start = 0;
    while (true) {
      const auto comma = line.find(',', start);
      cells.push_back(line.substr(start, comma == std::string::npos ? comma : comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    rows.push_back(std::move(cells));
  }
  return rows;
}

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                          "#ff7f0e", "#8c564b", "#e377c2", "#17becf"};

std::string svg_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '&') out += "&amp;";
    else if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else out += c;
  }
  return out;
}

struct Series {
  std::string name;
  std::vector<std::pair<double, double>> points;
};

void axes(std::ostringstream& os, double x0, double y0, double w, double h, double ymin,
          double ymax, const std::string& title) {
  os << "<g font-family=\"sans-serif\" font-size=\"10\">\n";
  os << "<text x=\"" << fixed(x0 + w / 2, 1) << "\" y=\"" << fixed(y0 - 8, 1)
     << "\" text-anchor=\"middle\" font-size=\"12\">" << svg_escape(title) << "</text>\n";
  os << "<rect x=\"" << fixed(x0, 1) << "\" y=\"" << fixed(y0, 1) << "\" width=\"" << fixed(w, 1)
     << "\" height=\"" << fixed(h, 1) << "\" fill=\"none\" stroke=\"#444\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double v = ymin + (ymax - ymin) * i / 4.0;
    const double y = y0 + h - h * i / 4.0;
    os << "<line x1=\"" << fixed(x0, 1) << "\" y1=\"" << fixed(y, 1) << "\" x2=\"" << fixed(x0 + w, 1)
       << "\" y2=\"" << fixed(y, 1) << "\" stroke=\"#ddd\"/>\n";
    os << "<text x=\"" << fixed(x0 - 4, 1) << "\" y=\"" << fixed(y + 3, 1)
       << "\" text-anchor=\"end\">" << fixed(v, std::abs(ymax - ymin) >= 100 ? 0 : 1) << "</text>\n";
  }
  os << "</g>\n";
}

void legend(std::ostringstream& os, const std::vector<std::string>& names, double x, double y) {
  os << "<g font-family=\"sans-serif\" font-size=\"10\">\n";
  for (std::size_t i = 0; i < names.size(); ++i) {
    const double yy = y + 14.0 * static_cast<double>(i);
    os << "<rect x=\"" << fixed(x, 1) << "\" y=\"" << fixed(yy - 8, 1)
       << "\" width=\"10\" height=\"10\" fill=\"" << kPalette[i % 8] << "\"/>\n";
    os << "<text x=\"" << fixed(x + 14, 1) << "\" y=\"" << fixed(yy + 1, 1) << "\">"
       << svg_escape(names[i]) << "</text>\n";
  }
  os << "</g>\n";
}

std::string plot_param_report(const std::vector<std::vector<std::string>>& rows) {
  // rows: task_step, algo, training_forward, inference, total
  const char* titles[] = {"training forward", "inference", "total size"};
  std::vector<std::string> algos;
  std::map<std::string, std::array<Series, 3>> series;
  double max_step = 1.0;
  for (const auto& r : rows) {
    if (r.size() != 5) throw std::runtime_error("malformed parameter report row");
    const double step = std::stod(r[0]);
    max_step = std::max(max_step, step);
    if (!series.contains(r[1])) algos.push_back(r[1]);
    auto& s = series[r[1]];
    for (int k = 0; k < 3; ++k) s[k].points.emplace_back(step, std::stod(r[2 + k]));
  }
  const double pw = 240, ph = 180, left = 70, top = 30, gap = 90;
  std::ostringstream os;
  const double width = left + 3 * pw + 2 * gap + 130;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fixed(width, 0)
     << "\" height=\"" << fixed(top + ph + 50, 0) << "\" viewBox=\"0 0 " << fixed(width, 0) << ' '
     << fixed(top + ph + 50, 0) << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (int k = 0; k < 3; ++k) {
    double lo = 1e300, hi = -1e300;
    for (const auto& [_, s] : series)
      for (const auto& [x, y] : s[k].points) lo = std::min(lo, y), hi = std::max(hi, y);
    if (hi <= lo) hi = lo + 1.0;
    const double pad = 0.05 * (hi - lo);
    lo -= pad;
    hi += pad;
    const double x0 = left + k * (pw + gap);
    axes(os, x0, top, pw, ph, lo, hi, titles[k]);
    os << "<g font-family=\"sans-serif\" font-size=\"10\">\n";
    for (int step = 1; step <= static_cast<int>(max_step); ++step) {
      const double x = x0 + pw * (max_step == 1 ? 0.5 : (step - 1) / (max_step - 1));
      os << "<text x=\"" << fixed(x, 1) << "\" y=\"" << fixed(top + ph + 14, 1)
         << "\" text-anchor=\"middle\">" << step << "</text>\n";
    }
    os << "<text x=\"" << fixed(x0 + pw / 2, 1) << "\" y=\"" << fixed(top + ph + 30, 1)
       << "\" text-anchor=\"middle\">task step</text>\n</g>\n";
    for (std::size_t a = 0; a < algos.size(); ++a) {
      auto points = series[algos[a]][k].points;
      std::sort(points.begin(), points.end());
      os << "<polyline fill=\"none\" stroke=\"" << kPalette[a % 8] << "\" stroke-width=\"1.5\" points=\"";
      for (std::size_t i = 0; i < points.size(); ++i) {
        const auto [sx, sy] = points[i];
        const double x = x0 + pw * (max_step == 1 ? 0.5 : (sx - 1) / (max_step - 1));
        const double y = top + ph - ph * (sy - lo) / (hi - lo);
        os << (i ? " " : "") << fixed(x, 1) << ',' << fixed(y, 1);
      }
      os << "\"/>\n";
    }
  }
  legend(os, algos, left + 3 * pw + 2 * gap + 10, top + 10);
  os << "</svg>\n";
  return os.str();
}

std::string plot_metric_table(const std::vector<std::vector<std::string>>& rows) {
  // rows: method, task, step, score, transfer, decay
  std::vector<std::string> methods, tasks;
  std::map<std::pair<std::string, std::string>, std::vector<double>> values;
  for (const auto& r : rows) {
    if (r.size() < 5) throw std::runtime_error("malformed metric table row");
    if (r[1] == "overall" || r[4].empty()) continue;
    if (std::find(methods.begin(), methods.end(), r[0]) == methods.end()) methods.push_back(r[0]);
    if (std::find(tasks.begin(), tasks.end(), r[1]) == tasks.end()) tasks.push_back(r[1]);
    values[{r[0], r[1]}].push_back(std::stod(r[4]));
  }
  if (values.empty()) throw std::runtime_error("metric table has no transfer values to plot");
  std::sort(tasks.begin(), tasks.end());
  double lo = 0.0, hi = 0.0;
  std::map<std::pair<std::string, std::string>, double> mean;
  for (const auto& [key, v] : values) {
    double s = 0.0;
    for (double x : v) s += x;
    mean[key] = s / static_cast<double>(v.size());
    lo = std::min(lo, mean[key]);
    hi = std::max(hi, mean[key]);
  }
  if (hi <= lo) hi = lo + 1.0;
  const double pad = 0.05 * (hi - lo);
  lo -= pad;
  hi += pad;
  const double left = 70, top = 30, ph = 220;
  const double group = 24.0 * static_cast<double>(methods.size()) + 24.0;
  const double pw = group * static_cast<double>(tasks.size());
  const double width = left + pw + 170;
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fixed(width, 0) << "\" height=\""
     << fixed(top + ph + 70, 0) << "\" viewBox=\"0 0 " << fixed(width, 0) << ' '
     << fixed(top + ph + 70, 0) << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  axes(os, left, top, pw, ph, lo, hi, "knowledge transfer (%)");
  const auto ypos = [&](double v) { return top + ph - ph * (v - lo) / (hi - lo); };
  os << "<line x1=\"" << fixed(left, 1) << "\" y1=\"" << fixed(ypos(0), 1) << "\" x2=\""
     << fixed(left + pw, 1) << "\" y2=\"" << fixed(ypos(0), 1) << "\" stroke=\"#444\"/>\n";
  os << "<g font-family=\"sans-serif\" font-size=\"10\">\n";
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    const double gx = left + group * static_cast<double>(t) + 12.0;
    for (std::size_t m = 0; m < methods.size(); ++m) {
      const auto it = mean.find({methods[m], tasks[t]});
      if (it == mean.end()) continue;
      const double y0 = ypos(0), y1 = ypos(it->second);
      os << "<rect x=\"" << fixed(gx + 24.0 * static_cast<double>(m), 1) << "\" y=\""
         << fixed(std::min(y0, y1), 1) << "\" width=\"20\" height=\"" << fixed(std::abs(y1 - y0), 1)
         << "\" fill=\"" << kPalette[m % 8] << "\"/>\n";
    }
    os << "<text x=\"" << fixed(gx + group / 2 - 12.0, 1) << "\" y=\"" << fixed(top + ph + 14, 1)
       << "\" text-anchor=\"middle\">" << svg_escape(tasks[t]) << "</text>\n";
  }
  os << "</g>\n";
  legend(os, methods, left + pw + 16, top + 10);
  os << "</svg>\n";
  return os.str();
}

}  // namespace

std::string render_plot(std::span<const std::string> csv_inputs) {
  std::string kind;
  std::vector<std::vector<std::string>> rows;
  for (const auto& text : csv_inputs) {
    bool skipping = false;
    for (const auto& r : parse_csv(text)) {
      if (r.empty() || (r[0] != "task_step" && r[0] != "method")) {
        if (!skipping) rows.push_back(r);
        continue;
      }
      std::string k;
      if (r == std::vector<std::string>{"task_step", "algo", "training_forward", "inference", "total"})
        k = "params";
      else if (r == std::vector<std::string>{"method", "task", "step", "score", "transfer", "decay"})
        k = "metrics";
      // Any other header starts a cross-order aggregate block, which is not plotted.
      skipping = k.empty();
      if (skipping) continue;
      if (!kind.empty() && kind != k) throw std::runtime_error("plot inputs mix table kinds");
      kind = k;
    }
  }
  if (kind.empty() || rows.empty()) throw std::runtime_error("nothing to plot");
  return kind == "params" ? plot_param_report(rows) : plot_metric_table(rows);
}

void cmd_plot(std::span<const fs::path> inputs, const fs::path& output) {
  if (inputs.empty()) throw std::runtime_error("plot needs at least one input table");
  std::vector<std::string> texts;
  for (const auto& p : inputs) texts.push_back(read_text(p));
  write_text(output, render_plot(texts));
}

}  // namespace i2i
