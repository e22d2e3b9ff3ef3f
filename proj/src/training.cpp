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

#include "i2i/training.hpp"

#include <algorithm>
#include <stdexcept>

#include "i2i/tasks.hpp"

namespace i2i {

namespace {

using Snapshot = std::vector<std::vector<double>>;

Snapshot snapshot(std::span<const Tensor> params) {
  Snapshot out;
  out.reserve(params.size());
  for (const Tensor& t : params) out.emplace_back(t.data().begin(), t.data().end());
  return out;
}

void restore(std::span<Tensor> params, const Snapshot& values) {
  for (std::size_t i = 0; i < params.size(); ++i)
    std::copy(values[i].begin(), values[i].end(), params[i].mutable_data().begin());
}

std::vector<const Example*> pointers(std::span<const Example> examples,
                                     std::span<const std::size_t> order, std::size_t begin,
                                     std::size_t end) {
  std::vector<const Example*> out;
  out.reserve(end - begin);
  for (std::size_t i = begin; i < end; ++i) out.push_back(&examples[order[i]]);
  return out;
}

/// One shuffled pass; `step_loss` builds the scalar loss for a batch.
template <typename LossFn>
double run_epoch(std::span<const Example> examples, std::span<Tensor> trainable,
                 AdamState& adam, std::size_t batch_size, Rng& rng, std::size_t& steps,
                 LossFn&& step_loss) {
  const std::vector<std::size_t> order = rng.permutation(examples.size());
  double total = 0.0;
  std::size_t batches = 0;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t end = std::min(order.size(), start + batch_size);
    const auto group = pointers(examples, order, start, end);
    {
      Tape tape;
      const Tensor loss = step_loss(group);
      total += loss.item();
      tape.backward(loss);
    }
    adam_step(trainable, adam);
    zero_grads(trainable);
    ++steps;
    ++batches;
  }
  return batches == 0 ? 0.0 : total / static_cast<double>(batches);
}

void check_layout(std::span<const Example> inputs) {
  for (const Example& e : inputs)
    if (e.scene_features.size() != inputs[0].scene_features.size() ||
        e.question.size() != inputs[0].question.size() ||
        e.answer.size() != inputs[0].answer.size())
      throw ShapeError("distillation inputs must share one source and target layout");
}

}  // namespace

void PhaseHyper::validate() const {
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
}

double evaluate_score(const BackboneParams& backbone, const TaskHead& head,
                      const AdapterRouting& routing, std::span<const Example> examples) {
  if (examples.empty()) throw std::invalid_argument("evaluate_score: no examples");
  const auto predictions = generate(backbone, head, routing, examples);
  std::vector<std::vector<int>> references;
  references.reserve(examples.size());
  for (const Example& e : examples) references.push_back(e.answer);
  return score_exact_match(predictions, references);
}

TrainTrace fit_supervised(const BackboneParams& backbone, const TaskHead& head,
                          const AdapterRouting& routing, std::span<Tensor> trainable,
                          std::span<const Example> train, std::span<const Example> val,
                          const PhaseHyper& hyper, std::uint64_t seed) {
  hyper.validate();
  if (hyper.epochs > 0 && train.empty()) throw std::invalid_argument("fit_supervised: no data");
  TrainTrace trace;
  trace.best_score = evaluate_score(backbone, head, routing, val);
  trace.val_score.push_back(trace.best_score);
  if (hyper.epochs == 0) return trace;

  Rng rng(seed);
  Rng dropout_rng = rng.split("dropout");
  AdamState adam(trainable, {.learning_rate = hyper.learning_rate});
  Snapshot best = snapshot(trainable);
  std::size_t since_best = 0;
  const ForwardOptions options{.training = true, .dropout_rng = &dropout_rng};
  for (std::size_t epoch = 1; epoch <= hyper.epochs; ++epoch) {
    const double loss = run_epoch(
        train, trainable, adam, hyper.batch_size, rng, trace.steps,
        [&](std::span<const Example* const> group) {
          const Batch batch = make_batch(group, backbone.config);
          const ForwardOutput out = forward(backbone, head, routing, batch, options);
          return cross_entropy(out.logits, batch.targets, kIgnoreIndex);
        });
    trace.loss.push_back(loss);
    const double score = evaluate_score(backbone, head, routing, val);
    trace.val_score.push_back(score);
    if (score > trace.best_score) {
      trace.best_score = score;
      trace.best_epoch = epoch;
      best = snapshot(trainable);
      since_best = 0;
    } else if (hyper.patience > 0 && ++since_best >= hyper.patience) {
      break;
    }
  }
  restore(trainable, best);
  return trace;
}

TeacherStates teacher_states(const BackboneParams& backbone, const TaskHead& head,
                             const AdapterRouting& routing, std::span<const Example> inputs) {
  if (inputs.empty()) throw std::invalid_argument("teacher_states: no inputs");
  check_layout(inputs);
  NoGradGuard no_grad;
  TeacherStates states;
  states.d_model = backbone.config.d_model;
  constexpr std::size_t kChunk = 128;
  for (std::size_t start = 0; start < inputs.size(); start += kChunk) {
    const std::size_t end = std::min(inputs.size(), start + kChunk);
    std::vector<const Example*> group;
    for (std::size_t i = start; i < end; ++i) group.push_back(&inputs[i]);
    const Batch batch = make_batch(group, backbone.config);
    const ForwardOutput out = forward(backbone, head, routing, batch);
    states.src_len = batch.src_len();
    states.tgt_len = batch.target_len;
    const auto e = out.encoder_hidden.data();
    const auto d = out.decoder_hidden.data();
    states.encoder.insert(states.encoder.end(), e.begin(), e.end());
    states.decoder.insert(states.decoder.end(), d.begin(), d.end());
  }
  return states;
}

double distillation_loss(const BackboneParams& backbone, const TaskHead& student_head,
                         const AdapterRouting& student, std::span<const Example> inputs,
                         const TeacherStates& teacher) {
  const TeacherStates s = teacher_states(backbone, student_head, student, inputs);
  if (s.encoder.size() != teacher.encoder.size() || s.decoder.size() != teacher.decoder.size())
    throw ShapeError("distillation_loss: teacher states do not match the inputs");
  auto mean_sq = [](const std::vector<double>& a, const std::vector<double>& b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += (a[i] - b[i]) * (a[i] - b[i]);
    return acc / static_cast<double>(a.size());
  };
  return mean_sq(s.encoder, teacher.encoder) + mean_sq(s.decoder, teacher.decoder);
}

DistillTrace distill(const BackboneParams& backbone, const TeacherStates& teacher,
                     const TaskHead& student_head, const AdapterRouting& student,
                     std::span<Tensor> trainable, std::span<const Example> inputs,
                     const PhaseHyper& hyper, std::uint64_t seed) {
  hyper.validate();
  if (inputs.empty()) throw std::invalid_argument("distill: no inputs");
  const std::size_t d = teacher.d_model;
  const std::size_t enc_rows = teacher.src_len, dec_rows = teacher.tgt_len;
  if (teacher.encoder.size() != inputs.size() * enc_rows * d)
    throw ShapeError("distill: teacher states do not match the inputs");

  DistillTrace trace;
  trace.initial_loss = distillation_loss(backbone, student_head, student, inputs, teacher);
  Rng rng(seed);
  Rng dropout_rng = rng.split("dropout");
  AdamState adam(trainable, {.learning_rate = hyper.learning_rate});
  const ForwardOptions options{.training = true, .dropout_rng = &dropout_rng};
  const Example* base = inputs.data();
  for (std::size_t epoch = 1; epoch <= hyper.epochs; ++epoch) {
    const double loss = run_epoch(
        inputs, trainable, adam, hyper.batch_size, rng, trace.steps,
        [&](std::span<const Example* const> group) {
          std::vector<double> te, td;
          te.reserve(group.size() * enc_rows * d);
          td.reserve(group.size() * dec_rows * d);
          for (const Example* e : group) {
            const std::size_t i = static_cast<std::size_t>(e - base);
            te.insert(te.end(), teacher.encoder.begin() + i * enc_rows * d,
                      teacher.encoder.begin() + (i + 1) * enc_rows * d);
            td.insert(td.end(), teacher.decoder.begin() + i * dec_rows * d,
                      teacher.decoder.begin() + (i + 1) * dec_rows * d);
          }
          const Batch batch = make_batch(group, backbone.config);
          const ForwardOutput out = forward(backbone, student_head, student, batch, options);
          const Tensor target_e = Tensor::from({group.size() * enc_rows, d}, std::move(te));
          const Tensor target_d = Tensor::from({group.size() * dec_rows, d}, std::move(td));
          return add(mse(out.encoder_hidden, target_e), mse(out.decoder_hidden, target_d));
        });
    trace.loss.push_back(loss);
  }
  trace.final_loss = hyper.epochs == 0
                         ? trace.initial_loss
                         : distillation_loss(backbone, student_head, student, inputs, teacher);
  return trace;
}

PretrainResult pretrain_backbone(const BackboneConfig& config, std::span<const Example> corpus,
                                 const PhaseHyper& hyper, std::uint64_t seed) {
  config.validate();
  hyper.validate();
  if (corpus.empty()) throw std::invalid_argument("pretrain_backbone: empty corpus");
  Rng rng(seed);
  Rng init_rng = rng.split("init");
  PretrainResult result{init_backbone(config, init_rng), init_task_head(config, init_rng), {},
                        0.0, majority_answer_rate(corpus)};
  if (hyper.epochs > 0) {
    result.backbone.set_trainable(true);
    result.psi0.set_trainable(true);
    std::vector<Tensor> trainable = result.backbone.parameters();
    for (const Tensor& t : result.psi0.parameters()) trainable.push_back(t);
    Rng order_rng = rng.split("order");
    Rng dropout_rng = rng.split("dropout");
    AdamState adam(trainable, {.learning_rate = hyper.learning_rate});
    const ForwardOptions options{.training = true, .dropout_rng = &dropout_rng};
    std::size_t steps = 0;
    for (std::size_t epoch = 0; epoch < hyper.epochs; ++epoch) {
      result.loss.push_back(run_epoch(
          corpus, trainable, adam, hyper.batch_size, order_rng, steps,
          [&](std::span<const Example* const> group) {
            const Batch batch = make_batch(group, config);
            const ForwardOutput out =
                forward(result.backbone, result.psi0, AdapterRouting::none(), batch, options);
            return cross_entropy(out.logits, batch.targets, kIgnoreIndex);
          }));
    }
    result.backbone.set_trainable(false);
    result.psi0.set_trainable(false);
  }
  result.backbone.freeze();
  result.psi0.freeze();
  result.mixture_score =
      evaluate_score(result.backbone, result.psi0, AdapterRouting::none(), corpus);
  return result;
}

}  // namespace i2i
