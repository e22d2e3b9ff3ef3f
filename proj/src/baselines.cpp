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

#include "i2i/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace i2i {

namespace {

std::vector<Tensor> joined(std::vector<Tensor> a, const std::vector<Tensor>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

}  // namespace

AdapterOutcome train_adapter_from(const BackboneParams& backbone, AdapterParams adapter,
                                  TaskHead head, std::span<const Example> train,
                                  std::span<const Example> val, const PhaseHyper& hyper,
                                  std::uint64_t seed) {
  adapter.set_trainable(true);
  head.set_trainable(true);
  std::vector<Tensor> trainable = joined(adapter.parameters(), head.parameters());
  TrainTrace trace = fit_supervised(backbone, head, AdapterRouting::single(adapter), trainable,
                                    train, val, hyper, seed);
  adapter.set_trainable(false);
  head.set_trainable(false);
  const double score = trace.best_score;
  return {std::move(adapter), std::move(head), score, std::move(trace)};
}

AdapterOutcome train_vanilla(const BackboneParams& backbone, const TaskHead& psi0,
                             std::span<const Example> train, std::span<const Example> val,
                             std::size_t bottleneck, const PhaseHyper& hyper, std::uint64_t seed) {
  Rng rng(seed);
  Rng init_rng = rng.split("init");
  AdapterParams adapter = init_adapter(backbone.config, bottleneck, init_rng);
  return train_adapter_from(backbone, std::move(adapter), psi0.clone(), train, val, hyper,
                            rng.split("fit").seed());
}

FusionOutcome train_adapterfusion(const BackboneParams& backbone, const TaskHead& psi0,
                                  std::span<const AdapterParams* const> previous,
                                  std::span<const Example> train, std::span<const Example> val,
                                  std::size_t bottleneck, const PhaseHyper& adapter_hyper,
                                  const PhaseHyper& fusion_hyper, std::uint64_t extraction_seed,
                                  std::uint64_t fusion_seed,
                                  std::optional<AdapterOutcome> extraction) {
  if (previous.empty()) throw std::invalid_argument("adapterfusion needs k >= 2");
  FusionOutcome out;
  out.extraction = extraction ? std::move(*extraction)
                              : train_vanilla(backbone, psi0, train, val, bottleneck,
                                              adapter_hyper, extraction_seed);
  out.extraction.adapter.freeze();

  std::vector<const AdapterParams*> adapters(previous.begin(), previous.end());
  adapters.push_back(&out.extraction.adapter);
  Rng rng(fusion_seed);
  Rng init_rng = rng.split("init");
  out.fusion = init_fusion(backbone.config, adapters.size(), init_rng);
  out.head = out.extraction.head.clone();
  out.fusion.set_trainable(true);
  out.head.set_trainable(true);
  std::vector<Tensor> trainable = joined(out.fusion.parameters(), out.head.parameters());
  const AdapterRouting routing{adapters, &out.fusion};
  out.trace = fit_supervised(backbone, out.head, routing, trainable, train, val, fusion_hyper,
                             rng.split("fit").seed());
  out.fusion.set_trainable(false);
  out.head.set_trainable(false);
  out.score = out.trace.best_score;
  return out;
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("cosine_similarity: length mismatch");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  // sqrt(fl(x * x)) == x, so identical vectors give exactly 1.
  return std::clamp(dot / std::sqrt(na * nb), -1.0, 1.0);
}

std::size_t select_closest(std::span<const double> similarities) {
  std::optional<std::size_t> best;
  for (std::size_t j = 0; j < similarities.size(); ++j) {
    if (std::isnan(similarities[j])) continue;
    if (!best || similarities[j] > similarities[*best]) best = j;
  }
  if (!best) throw std::invalid_argument("select_closest: no prior tasks");
  return *best;
}

std::size_t select_closest(std::span<const double> candidate,
                           std::span<const std::vector<double>> priors) {
  std::vector<double> sims;
  sims.reserve(priors.size());
  for (const auto& p : priors) sims.push_back(cosine_similarity(candidate, p));
  return select_closest(sims);
}

TaskSimilarityMatrix TaskSimilarityMatrix::build(
    std::vector<std::string> ids, std::span<const std::vector<double>> representations) {
  if (ids.size() != representations.size())
    throw std::invalid_argument("similarity matrix: ids and representations differ in count");
  TaskSimilarityMatrix m;
  m.task_ids = std::move(ids);
  const std::size_t n = representations.size();
  m.values.assign(n, std::vector<double>(n, std::numeric_limits<double>::quiet_NaN()));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      m.values[i][j] = m.values[j][i] = cosine_similarity(representations[i], representations[j]);
  return m;
}

std::string TaskSimilarityMatrix::to_csv() const {
  std::ostringstream os;
  os << "task";
  for (const auto& id : task_ids) os << ',' << id;
  os << '\n' << std::fixed << std::setprecision(4);
  for (std::size_t i = 0; i < task_ids.size(); ++i) {
    os << task_ids[i];
    for (std::size_t j = 0; j < task_ids.size(); ++j) {
      os << ',';
      if (i != j) os << values[i][j];
    }
    os << '\n';
  }
  return os.str();
}

ClosestTaskOutcome closest_task_init(const BackboneParams& backbone, const TaskHead& psi0,
                                     std::span<const AdapterParams* const> prior_adapters,
                                     std::span<const TaskHead* const> prior_heads,
                                     std::span<const std::vector<double>> prior_representations,
                                     std::span<const Example> train, std::span<const Example> val,
                                     const PhaseHyper& hyper, std::uint64_t seed) {
  if (prior_adapters.empty()) throw std::invalid_argument("closest_task_init needs k >= 2");
  if (prior_adapters.size() != prior_heads.size() ||
      prior_adapters.size() != prior_representations.size())
    throw std::invalid_argument("closest_task_init: prior stores are inconsistent");
  ClosestTaskOutcome out;
  const std::vector<double> h_k = encode_pooled(backbone, psi0, train);
  for (const auto& h_j : prior_representations)
    out.similarities.push_back(cosine_similarity(h_k, h_j));
  out.selected = select_closest(out.similarities);
  out.trained = train_adapter_from(backbone, prior_adapters[out.selected]->clone(),
                                   prior_heads[out.selected]->clone(), train, val, hyper, seed);
  out.representation = encode_pooled(backbone, out.trained.head, train);
  return out;
}

HeadOutcome knowledge_free(const BackboneParams& backbone, const TaskHead& psi0,
                           std::span<const Example> train, std::span<const Example> val,
                           const PhaseHyper& hyper, std::uint64_t seed) {
  HeadOutcome out{psi0.clone(), 0.0, {}};
  out.head.set_trainable(true);
  std::vector<Tensor> trainable = out.head.parameters();
  out.trace = fit_supervised(backbone, out.head, AdapterRouting::none(), trainable, train, val,
                             hyper, seed);
  out.head.set_trainable(false);
  out.score = out.trace.best_score;
  return out;
}

FinetuneOutcome full_finetune(const BackboneParams& backbone, const TaskHead& psi0,
                              std::span<const Example> train, std::span<const Example> val,
                              const PhaseHyper& hyper, std::uint64_t seed) {
  BackboneParams copy = backbone.clone();
  TaskHead head = psi0.clone();
  copy.set_trainable(true);
  head.set_trainable(true);
  std::vector<Tensor> trainable = joined(copy.parameters(), head.parameters());
  FinetuneOutcome out;
  out.trace = fit_supervised(copy, head, AdapterRouting::none(), trainable, train, val, hyper,
                             seed);
  out.score = out.trace.best_score;
  return out;
}

}  // namespace i2i
