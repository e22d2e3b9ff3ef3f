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

#include "i2i/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include "json.hpp"

#include "i2i/config.hpp"
#include "i2i/digest.hpp"

namespace i2i {

namespace {

constexpr std::size_t kMaxTries = 200000;
constexpr int kMaxCountAnswer = 3;

std::vector<double> gaussian_vector(std::size_t n, Rng& rng) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.normal();
  return v;
}

double distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

int count_color(const Scene& s, int c) {
  return static_cast<int>(std::count_if(s.slots.begin(), s.slots.end(),
                                        [c](const Slot& x) { return x.color == c; }));
}

int count_shape(const Scene& s, int sh) {
  return static_cast<int>(std::count_if(s.slots.begin(), s.slots.end(),
                                        [sh](const Slot& x) { return x.shape == sh; }));
}

Scene random_scene(const SceneSpace& space, Rng& rng) {
  Scene s;
  s.slots.resize(space.n_slots);
  for (Slot& slot : s.slots) {
    slot.color = static_cast<int>(rng.below(space.n_colors));
    slot.shape = static_cast<int>(rng.below(space.n_shapes));
    slot.size = static_cast<int>(rng.below(space.n_sizes));
  }
  return s;
}

std::string discrete_key(const Scene& scene, std::span<const int> question) {
  std::string key;
  for (const Slot& s : scene.slots) {
    key += std::to_string(s.color) + "," + std::to_string(s.shape) + "," + std::to_string(s.size) + ";";
  }
  key += "|";
  for (int q : question) key += std::to_string(q) + ",";
  return key;
}

Example render_example(const Scene& scene, std::vector<int> question, std::vector<int> answer,
                       const Codebook& codebook, Rng& rng) {
  Example e;
  for (const Slot& s : scene.slots) e.scene_features.push_back(codebook.render_noisy(s, rng));
  e.question = std::move(question);
  e.answer = std::move(answer);
  return e;
}

// Samples a scene whose answer equals `target`.
Scene sample_for_answer(QueryType type, std::span<const int> args, const std::vector<int>& target,
                        const SceneSpace& space, Rng& rng,
                        const std::set<std::string>* excluded, std::span<const int> question) {
  for (std::size_t tries = 0; tries < kMaxTries; ++tries) {
    Scene s = random_scene(space, rng);
    auto ans = evaluate_query(type, args, s, space);
    if (!ans || *ans != target) continue;
    if (excluded != nullptr && excluded->count(discrete_key(s, question)) > 0) continue;
    return s;
  }
  std::string name;
  for (int t : target) name += vocab::token_name(t) + " ";
  throw InfeasibleBalanceError("cannot balance " + std::string(to_string(type)) +
                               ": answer '" + name + "' not reachable in this scene space");
}

void validate_args(QueryType type, std::span<const int> args, const SceneSpace& space) {
  auto check_color = [&](int c) {
    if (c < 0 || static_cast<std::size_t>(c) >= space.n_colors)
      throw ConfigError("color argument out of range");
  };
  auto check_shape = [&](int s) {
    if (s < 0 || static_cast<std::size_t>(s) >= space.n_shapes)
      throw ConfigError("shape argument out of range");
  };
  switch (type) {
    case QueryType::Count:
      if (args.size() != 1) throw ConfigError("COUNT takes one color");
      check_color(args[0]);
      break;
    case QueryType::Compare:
      if (args.size() != 2 || args[0] == args[1]) throw ConfigError("COMPARE takes two distinct colors");
      check_color(args[0]);
      check_color(args[1]);
      break;
    default:
      if (args.size() != 1) throw ConfigError(std::string(to_string(type)) + " takes one shape");
      check_shape(args[0]);
  }
}

Split generate_split(const QATask& task, std::size_t n, const Codebook& codebook, Rng& rng,
                     const std::set<std::string>* excluded) {
  const SceneSpace& space = codebook.space();
  const auto answers = answer_vocabulary(task.type, space);
  const auto question = question_tokens(task.type, task.args);
  Split split;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& target = answers[i % answers.size()];
    Scene s = sample_for_answer(task.type, task.args, target, space, rng, excluded, question);
    split.examples.push_back(render_example(s, question, target, codebook, rng));
    split.scenes.push_back(std::move(s));
  }
  // Shuffle examples and scenes together.
  const auto perm = rng.permutation(n);
  Split shuffled;
  for (std::size_t i : perm) {
    shuffled.examples.push_back(std::move(split.examples[i]));
    shuffled.scenes.push_back(std::move(split.scenes[i]));
  }
  return shuffled;
}

}  // namespace

std::string_view to_string(QueryType type) {
  switch (type) {
    case QueryType::Count: return "COUNT";
    case QueryType::Exist: return "EXIST";
    case QueryType::MaxSizeColor: return "MAX-SIZE-COLOR";
    case QueryType::Parity: return "PARITY";
    case QueryType::Compare: return "COMPARE";
  }
  return "?";
}

QueryType parse_query_type(std::string_view name) {
  for (QueryType t : kAllQueryTypes)
    if (to_string(t) == name) return t;
  throw ConfigError("unknown query type: " + std::string(name));
}

namespace vocab {

int query(QueryType type) {
  for (std::size_t i = 0; i < std::size(kAllQueryTypes); ++i)
    if (kAllQueryTypes[i] == type) return kQueryBase + static_cast<int>(i);
  return kQueryBase;
}

std::string token_name(int id) {
  static const char* const kColors[] = {"red", "blue", "green", "yellow",
                                        "purple", "orange", "gray", "brown"};
  static const char* const kShapes[] = {"circle", "square", "triangle", "star", "hexagon", "cross"};
  switch (id) {
    case 0: return "<pad>";
    case 1: return "<bos>";
    case 2: return "<eos>";
    case kQuestionMark: return "?";
    case kYes: return "yes";
    case kNo: return "no";
    case kEven: return "even";
    case kOdd: return "odd";
    case kMore: return "more";
    case kLess: return "less";
    case kSame: return "same";
    default: break;
  }
  if (id >= kDigitBase && id <= kDigitBase + kMaxDigit) return std::to_string(id - kDigitBase);
  if (id >= kColorBase && id < kShapeBase) return kColors[id - kColorBase];
  if (id >= kShapeBase && id < kQueryBase) return kShapes[id - kShapeBase];
  if (id >= kQueryBase && id < kSize) return std::string(to_string(kAllQueryTypes[id - kQueryBase]));
  return "<" + std::to_string(id) + ">";
}

}  // namespace vocab

void SceneSpace::validate() const {
  if (n_slots == 0 || n_colors == 0 || n_shapes == 0 || n_sizes == 0 || feature_dim == 0)
    throw ConfigError("scene space dimensions must be >= 1");
  if (n_colors > 8 || n_shapes > 6) throw ConfigError("scene space exceeds the closed vocabulary");
  if (!(noise_fraction >= 0.0 && noise_fraction < 0.5))
    throw ConfigError("noise_fraction must be in [0, 0.5)");
}

Codebook::Codebook(const SceneSpace& space, std::uint64_t seed) : space_(space) {
  space_.validate();
  Rng rng = Rng(seed).split("codebook");
  for (std::size_t i = 0; i < space_.n_colors; ++i) colors_.push_back(gaussian_vector(space_.feature_dim, rng));
  for (std::size_t i = 0; i < space_.n_shapes; ++i) shapes_.push_back(gaussian_vector(space_.feature_dim, rng));
  for (std::size_t i = 0; i < space_.n_sizes; ++i) sizes_.push_back(gaussian_vector(space_.feature_dim, rng));
  std::vector<std::vector<double>> codes;
  for (std::size_t c = 0; c < space_.n_colors; ++c)
    for (std::size_t s = 0; s < space_.n_shapes; ++s)
      for (std::size_t z = 0; z < space_.n_sizes; ++z)
        codes.push_back(render({static_cast<int>(c), static_cast<int>(s), static_cast<int>(z)}));
  min_distance_ = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < codes.size(); ++i)
    for (std::size_t j = i + 1; j < codes.size(); ++j)
      min_distance_ = std::min(min_distance_, distance(codes[i], codes[j]));
  if (codes.size() == 1) min_distance_ = 1.0;
}

std::vector<double> Codebook::render(const Slot& slot) const {
  std::vector<double> v(space_.feature_dim);
  for (std::size_t i = 0; i < v.size(); ++i)
    v[i] = colors_.at(static_cast<std::size_t>(slot.color))[i] +
           shapes_.at(static_cast<std::size_t>(slot.shape))[i] +
           sizes_.at(static_cast<std::size_t>(slot.size))[i];
  return v;
}

std::vector<double> Codebook::render_noisy(const Slot& slot, Rng& rng) const {
  std::vector<double> v = render(slot);
  std::vector<double> dir = gaussian_vector(space_.feature_dim, rng);
  double norm = 0.0;
  for (double x : dir) norm += x * x;
  norm = std::sqrt(norm);
  const double radius = noise_radius() * rng.uniform();
  if (norm > 0.0)
    for (std::size_t i = 0; i < v.size(); ++i) v[i] += dir[i] / norm * radius;
  return v;
}

Slot Codebook::decode(std::span<const double> features) const {
  Slot best;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < space_.n_colors; ++c)
    for (std::size_t s = 0; s < space_.n_shapes; ++s)
      for (std::size_t z = 0; z < space_.n_sizes; ++z) {
        const Slot cand{static_cast<int>(c), static_cast<int>(s), static_cast<int>(z)};
        const double d = distance(features, render(cand));
        if (d < best_d) {
          best_d = d;
          best = cand;
        }
      }
  return best;
}

std::string Codebook::digest() const {
  Fnv1a h;
  for (const auto* group : {&colors_, &shapes_, &sizes_})
    for (const auto& v : *group) h.update(std::span<const double>(v));
  return h.hex();
}

std::vector<std::vector<int>> answer_vocabulary(QueryType type, const SceneSpace& space) {
  std::vector<std::vector<int>> out;
  switch (type) {
    case QueryType::Count:
      for (int n = 0; n <= kMaxCountAnswer; ++n) out.push_back({vocab::digit(n)});
      break;
    case QueryType::Exist:
      out = {{vocab::kYes}, {vocab::kNo}};
      break;
    case QueryType::MaxSizeColor:
      for (std::size_t c = 0; c < space.n_colors; ++c) out.push_back({vocab::color(static_cast<int>(c))});
      break;
    case QueryType::Parity:
      out = {{vocab::kEven}, {vocab::kOdd}};
      break;
    case QueryType::Compare:
      out = {{vocab::kMore}, {vocab::kLess}, {vocab::kSame}};
      break;
  }
  return out;
}

std::vector<int> question_tokens(QueryType type, std::span<const int> args) {
  switch (type) {
    case QueryType::Count: return {vocab::query(type), vocab::color(args[0]), vocab::kQuestionMark};
    case QueryType::Compare: return {vocab::query(type), vocab::color(args[0]), vocab::color(args[1])};
    default: return {vocab::query(type), vocab::shape(args[0]), vocab::kQuestionMark};
  }
}

std::optional<std::vector<int>> evaluate_query(QueryType type, std::span<const int> args,
                                               const Scene& scene, const SceneSpace& space) {
  (void)space;
  switch (type) {
    case QueryType::Count: {
      const int n = count_color(scene, args[0]);
      if (n > kMaxCountAnswer) return std::nullopt;
      return std::vector<int>{vocab::digit(n)};
    }
    case QueryType::Exist:
      return std::vector<int>{count_shape(scene, args[0]) > 0 ? vocab::kYes : vocab::kNo};
    case QueryType::MaxSizeColor: {
      int best_size = -1, best_color = -1, ties = 0;
      for (const Slot& s : scene.slots) {
        if (s.shape != args[0]) continue;
        if (s.size > best_size) {
          best_size = s.size;
          best_color = s.color;
          ties = 1;
        } else if (s.size == best_size) {
          ++ties;
        }
      }
      if (best_size < 0 || ties != 1) return std::nullopt;
      return std::vector<int>{vocab::color(best_color)};
    }
    case QueryType::Parity:
      return std::vector<int>{count_shape(scene, args[0]) % 2 == 0 ? vocab::kEven : vocab::kOdd};
    case QueryType::Compare: {
      const int a = count_color(scene, args[0]);
      const int b = count_color(scene, args[1]);
      return std::vector<int>{a > b ? vocab::kMore : a < b ? vocab::kLess : vocab::kSame};
    }
  }
  return std::nullopt;
}

TaskData generate_task(const QATask& task, const Codebook& codebook) {
  validate_args(task.type, task.args, codebook.space());
  if (task.train_size == 0 || task.val_size == 0) throw ConfigError("task splits must be non-empty");
  Rng rng = Rng(task.seed).split("generate:" + task.id);
  TaskData data;
  data.train = generate_split(task, task.train_size, codebook, rng, nullptr);
  std::set<std::string> seen;
  for (std::size_t i = 0; i < data.train.scenes.size(); ++i)
    seen.insert(discrete_key(data.train.scenes[i], data.train.examples[i].question));
  data.val = generate_split(task, task.val_size, codebook, rng, &seen);
  return data;
}

ArgumentSet pretrain_arguments(const SceneSpace& space) {
  ArgumentSet a;
  for (std::size_t c = 2; c < space.n_colors; ++c) a.colors.push_back(static_cast<int>(c));
  for (std::size_t s = 3; s < space.n_shapes; ++s) a.shapes.push_back(static_cast<int>(s));
  return a;
}

ArgumentSet task_arguments(std::span<const QATask> tasks) {
  ArgumentSet a;
  for (const QATask& t : tasks) {
    auto& dst = (t.type == QueryType::Count || t.type == QueryType::Compare) ? a.colors : a.shapes;
    dst.insert(dst.end(), t.args.begin(), t.args.end());
  }
  for (auto* v : {&a.colors, &a.shapes}) {
    std::sort(v->begin(), v->end());
    v->erase(std::unique(v->begin(), v->end()), v->end());
  }
  return a;
}

std::vector<QATask> default_tasks(std::uint64_t suite_seed, std::size_t train_size,
                                  std::size_t val_size) {
  std::vector<QATask> tasks = {
      {"count_red", QueryType::Count, {0}, train_size, val_size, 0},
      {"exist_circle", QueryType::Exist, {0}, train_size, val_size, 0},
      {"maxsize_square", QueryType::MaxSizeColor, {1}, train_size, val_size, 0},
      {"parity_triangle", QueryType::Parity, {2}, train_size, val_size, 0},
      {"compare_red_blue", QueryType::Compare, {0, 1}, train_size, val_size, 0},
  };
  for (QATask& t : tasks) t.seed = derive_seed(suite_seed, "task:" + t.id);
  return tasks;
}

std::vector<Example> pretrain_corpus(const Codebook& codebook, std::size_t per_type,
                                     std::uint64_t seed) {
  const SceneSpace& space = codebook.space();
  const ArgumentSet args = pretrain_arguments(space);
  if (args.colors.size() < 2 || args.shapes.empty())
    throw ConfigError("scene space too small for disjoint pretraining arguments");
  Rng rng = Rng(seed).split("pretrain-corpus");
  std::vector<Example> corpus;
  for (QueryType type : kAllQueryTypes) {
    std::vector<std::vector<int>> arg_lists;
    if (type == QueryType::Count) {
      for (int c : args.colors) arg_lists.push_back({c});
    } else if (type == QueryType::Compare) {
      for (std::size_t i = 0; i < args.colors.size(); ++i)
        for (std::size_t j = 0; j < args.colors.size(); ++j)
          if (i != j) arg_lists.push_back({args.colors[i], args.colors[j]});
    } else {
      for (int s : args.shapes) arg_lists.push_back({s});
    }
    const auto answers = answer_vocabulary(type, space);
    for (std::size_t i = 0; i < per_type; ++i) {
      const auto& target = answers[i % answers.size()];
      const auto& a = arg_lists[(i / answers.size()) % arg_lists.size()];
      const auto question = question_tokens(type, a);
      Scene s = sample_for_answer(type, a, target, space, rng, nullptr, question);
      corpus.push_back(render_example(s, question, target, codebook, rng));
    }
  }
  rng.shuffle(corpus);
  return corpus;
}

double score_exact_match(std::span<const std::vector<int>> predictions,
                         std::span<const std::vector<int>> references) {
  if (predictions.size() != references.size())
    throw std::invalid_argument("score_exact_match: length mismatch");
  if (predictions.empty()) throw std::invalid_argument("score_exact_match: no predictions");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) hits += predictions[i] == references[i];
  return 100.0 * static_cast<double>(hits) / static_cast<double>(predictions.size());
}

double majority_answer_rate(std::span<const Example> examples) {
  if (examples.empty()) return 0.0;
  std::map<std::vector<int>, std::size_t> counts;
  for (const Example& e : examples) ++counts[e.answer];
  std::size_t best = 0;
  for (const auto& [answer, n] : counts) best = std::max(best, n);
  return 100.0 * static_cast<double>(best) / static_cast<double>(examples.size());
}

void write_examples(const std::filesystem::path& path, std::span<const Example> examples) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (const Example& e : examples) {
    nlohmann::json j;
    j["scene_features"] = e.scene_features;
    j["question_ids"] = e.question;
    j["answer_ids"] = e.answer;
    out << j.dump() << '\n';
  }
}

std::vector<Example> read_examples(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::vector<Example> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    Example e;
    e.scene_features = j.at("scene_features").get<std::vector<std::vector<double>>>();
    e.question = j.at("question_ids").get<std::vector<int>>();
    e.answer = j.at("answer_ids").get<std::vector<int>>();
    out.push_back(std::move(e));
  }
  return out;
}

std::string file_digest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return to_hex(fnv1a64(ss.str()));
}

}  // namespace i2i
