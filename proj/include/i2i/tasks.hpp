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

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "i2i/example.hpp"
#include "i2i/rng.hpp"

namespace i2i {

enum class QueryType { Count, Exist, MaxSizeColor, Parity, Compare };

inline constexpr QueryType kAllQueryTypes[] = {QueryType::Count, QueryType::Exist,
                                               QueryType::MaxSizeColor, QueryType::Parity,
                                               QueryType::Compare};

std::string_view to_string(QueryType type);
QueryType parse_query_type(std::string_view name);

/// Closed token vocabulary shared by every task.
namespace vocab {
inline constexpr int kQuestionMark = 3;
inline constexpr int kDigitBase = 4;  // "0".."6"
inline constexpr int kMaxDigit = 6;
inline constexpr int kYes = 11;
inline constexpr int kNo = 12;
inline constexpr int kEven = 13;
inline constexpr int kOdd = 14;
inline constexpr int kMore = 15;
inline constexpr int kLess = 16;
inline constexpr int kSame = 17;
inline constexpr int kColorBase = 18;  // 8 colors
inline constexpr int kShapeBase = 26;  // 6 shapes
inline constexpr int kQueryBase = 32;  // 5 query types
inline constexpr int kSize = 37;

inline constexpr int digit(int n) { return kDigitBase + n; }
inline constexpr int color(int c) { return kColorBase + c; }
inline constexpr int shape(int s) { return kShapeBase + s; }
int query(QueryType type);
std::string token_name(int id);
}  // namespace vocab

struct SceneSpace {
  std::size_t n_slots = 6;
  std::size_t n_colors = 8;
  std::size_t n_shapes = 6;
  std::size_t n_sizes = 3;
  std::size_t feature_dim = 16;
  /// Noise radius as a fraction of the minimum codebook distance; < 0.5.
  double noise_fraction = 0.4;

  void validate() const;
};

struct Slot {
  int color = 0;
  int shape = 0;
  int size = 0;
  bool operator==(const Slot&) const = default;
};

struct Scene {
  std::vector<Slot> slots;
  bool operator==(const Scene&) const = default;
};

/// Seeded attribute codebook. A slot renders as the sum of its color, shape and
/// size vectors plus noise strictly inside half the minimum distance between
/// distinct slot codes, so nearest-code decoding always recovers the slot.
class Codebook {
 public:
  Codebook(const SceneSpace& space, std::uint64_t seed);

  const SceneSpace& space() const { return space_; }
  std::vector<double> render(const Slot& slot) const;
  std::vector<double> render_noisy(const Slot& slot, Rng& rng) const;
  Slot decode(std::span<const double> features) const;
  double min_distance() const { return min_distance_; }
  double noise_radius() const { return space_.noise_fraction * min_distance_; }
  std::string digest() const;

 private:
  SceneSpace space_;
  std::vector<std::vector<double>> colors_, shapes_, sizes_;
  double min_distance_ = 0.0;
};

/// One continual-learning task: a single query type with fixed arguments.
struct QATask {
  std::string id;
  QueryType type = QueryType::Count;
  std::vector<int> args;  // color ids for Count/Compare, shape id otherwise
  std::size_t train_size = 2000;
  std::size_t val_size = 500;
  std::uint64_t seed = 0;
};

class InfeasibleBalanceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Split {
  std::vector<Example> examples;
  std::vector<Scene> scenes;  // discrete ground truth, parallel to examples
};

struct TaskData {
  Split train;
  Split val;
};

/// Every answer the query can produce (the balancing classes).
std::vector<std::vector<int>> answer_vocabulary(QueryType type, const SceneSpace& space);
std::vector<int> question_tokens(QueryType type, std::span<const int> args);
/// Brute-force evaluation of the query on discrete slots; nullopt when the
/// scene is not admissible for this query (e.g. ambiguous maximum).
std::optional<std::vector<int>> evaluate_query(QueryType type, std::span<const int> args,
                                               const Scene& scene, const SceneSpace& space);

/// Deterministic, answer-balanced train/val generation. Throws
/// InfeasibleBalanceError when some answer cannot be produced.
TaskData generate_task(const QATask& task, const Codebook& codebook);

/// Arguments reserved for pretraining; disjoint from default_tasks() arguments.
struct ArgumentSet {
  std::vector<int> colors;
  std::vector<int> shapes;
};
ArgumentSet pretrain_arguments(const SceneSpace& space);
ArgumentSet task_arguments(std::span<const QATask> tasks);

/// The five default CL tasks, one per query type.
std::vector<QATask> default_tasks(std::uint64_t suite_seed, std::size_t train_size = 2000,
                                  std::size_t val_size = 500);

/// Equal-share mixture over all query types using only pretraining arguments.
std::vector<Example> pretrain_corpus(const Codebook& codebook, std::size_t per_type,
                                     std::uint64_t seed);

double score_exact_match(std::span<const std::vector<int>> predictions,
                         std::span<const std::vector<int>> references);

/// Frequency (percent) of the most common answer sequence.
double majority_answer_rate(std::span<const Example> examples);

// Line-delimited JSON records: {"scene_features": [[...]], "question_ids": [...], "answer_ids": [...]}
void write_examples(const std::filesystem::path& path, std::span<const Example> examples);
std::vector<Example> read_examples(const std::filesystem::path& path);
std::string file_digest(const std::filesystem::path& path);

}  // namespace i2i
