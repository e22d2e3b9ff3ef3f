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

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "i2i/checkpoint.hpp"
#include "i2i/commands.hpp"

namespace {

enum Exit { kOk = 0, kConfigError = 1, kRuntimeError = 2, kAuditFailure = 3 };

struct ConfigFlags {
  std::string config;
  std::string algo;
  std::string variant;
  int order = 0;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::vector<std::string> sets;

  void attach(CLI::App* cmd, bool run_flags) {
    cmd->add_option("--config", config, "JSON run configuration")->check(CLI::ExistingFile);
    cmd->add_option("--out", out, "Output root (default: $I2I_OUT, else ./runs)");
    cmd->add_option("--set", sets, "Override a config key: dotted.key=value (repeatable)");
    if (!run_flags) return;
    cmd->add_option("--algo", algo, "vanilla | adapterfusion | closest_task_init | i2i");
    cmd->add_option("--variant", variant, "I2I variant: FF | FL | LL");
    cmd->add_option("--order", order, "Task order 1, 2 or 3");
    cmd->add_option("--seed", seed, "Run seed");
  }

  i2i::RunConfig load() const {
    std::vector<std::string> all = sets;
    if (!algo.empty()) {
      all.push_back("algorithm=\"" + algo + "\"");
      if (variant.empty() && algo != "i2i") all.push_back("variant=null");
    }
    if (!variant.empty()) all.push_back("variant=\"" + variant + "\"");
    if (order != 0) all.push_back("order=" + std::to_string(order));
    if (seed) all.push_back("seed=" + std::to_string(*seed));
    if (!out.empty()) all.push_back("out=\"" + out + "\"");
    return i2i::load_run_config(config, all);
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Continual-learning lab: synthetic VQA tasks, adapters and the I2I procedure"};
  app.require_subcommand(1);

  ConfigFlags gen_flags, pretrain_flags, run_flags, config_flags;

  auto* gen = app.add_subcommand("gen", "Generate the task suite and pretraining corpus");
  gen_flags.attach(gen, false);

  auto* pretrain = app.add_subcommand("pretrain", "Pretrain and freeze the backbone");
  pretrain_flags.attach(pretrain, false);

  auto* run = app.add_subcommand("run", "Run one continual-learning schedule");
  run_flags.attach(run, true);

  auto* config = app.add_subcommand("config", "Print the resolved configuration");
  config_flags.attach(config, true);

  std::string vanilla_record;
  std::vector<std::string> candidate_records;
  std::string metrics_out;
  auto* metrics = app.add_subcommand("metrics", "Knowledge-transfer tables against a vanilla run");
  metrics->add_option("--vanilla", vanilla_record, "Vanilla record.json")
      ->required()
      ->check(CLI::ExistingFile);
  metrics->add_option("candidates", candidate_records, "Candidate record.json files")
      ->required()
      ->check(CLI::ExistingFile);
  metrics->add_option("--out", metrics_out, "Write the CSV here instead of stdout");

  std::uint64_t gradcheck_seed = 0;
  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference check of every primitive");
  gradcheck->add_option("--seed", gradcheck_seed, "Seed of the random inputs");

  std::vector<std::string> plot_inputs;
  std::string plot_out;
  auto* plot = app.add_subcommand("plot", "Render a parameter report or metric table as SVG");
  plot->add_option("inputs", plot_inputs, "params.csv or metrics CSV files")
      ->required()
      ->check(CLI::ExistingFile);
  plot->add_option("--out", plot_out, "Output .svg")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (*gen) {
      const auto cfg = gen_flags.load();
      const auto status = i2i::cmd_gen(cfg);
      std::cout << (status == i2i::GenStatus::Created ? "created " : "up-to-date ")
                << cfg.data_dir().string() << '\n';
    } else if (*pretrain) {
      const auto cfg = pretrain_flags.load();
      const auto result = i2i::cmd_pretrain(cfg);
      std::printf("pretrained %s: mixture exact match %.2f%% (majority answer %.2f%%)\n",
                  cfg.backbone_path().c_str(), result.mixture_score, result.majority_rate);
    } else if (*run) {
      const auto cfg = run_flags.load();
      const auto outputs = i2i::cmd_run(cfg);
      for (const auto& t : outputs.result.record.tasks)
        std::printf("%zu %-18s %6.2f\n", t.step, t.task_id.c_str(), t.score);
      std::cout << "wrote " << outputs.dir.string() << '\n';
    } else if (*config) {
      std::cout << i2i::canonical_dump(i2i::to_json(config_flags.load()));
    } else if (*metrics) {
      std::vector<std::filesystem::path> paths(candidate_records.begin(), candidate_records.end());
      const std::string csv = i2i::cmd_metrics(vanilla_record, paths);
      if (metrics_out.empty())
        std::cout << csv;
      else
        i2i::write_text(metrics_out, csv);
    } else if (*gradcheck) {
      const auto report = i2i::cmd_gradcheck(gradcheck_seed);
      std::cout << report.text();
      return report.passed() ? kOk : kAuditFailure;
    } else if (*plot) {
      std::vector<std::filesystem::path> paths(plot_inputs.begin(), plot_inputs.end());
      i2i::cmd_plot(paths, plot_out);
      std::cout << "wrote " << plot_out << '\n';
    }
  } catch (const i2i::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const i2i::MetricError& e) {
    std::cerr << "metric error: " << e.what() << '\n';
    return kConfigError;
  } catch (const i2i::AuditError& e) {
    std::cerr << "audit failure: " << e.what() << '\n';
    return kAuditFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntimeError;
  }
  return kOk;
}
