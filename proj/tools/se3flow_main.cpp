// Copyright (C) 2026 The se3flow authors
// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end. Every command is reproducible from its flags,
// config file, and seeds alone; flags override config-file values (generic
// --set overrides are applied last). Exit codes: 0 success, 1 usage,
// 2 configuration or input-file problem, 3 numeric failure, 4 evaluation
// finished with excluded runs.
#include <cstdint>
#include <exception>
#include <filesystem>
#include <iostream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "se3flow/errors.hpp"
#include "se3flow/experiment.hpp"

namespace {

using namespace se3flow;

using Overrides = std::vector<std::pair<std::string, std::string>>;

ExperimentConfig make_config(const std::string& config_path,
                             const Overrides& flag_overrides,
                             const std::vector<std::string>& sets) {
  ExperimentConfig cfg = config_path.empty()
                             ? default_experiment_config()
                             : parse_experiment_config(config_path);
  for (const auto& [key, value] : flag_overrides) {
    apply_config_override(cfg, key, value);
  }
  for (const std::string& item : sets) {
    const std::size_t eq = item.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("--set expects section.key=value, got: " + item);
    }
    apply_config_override(cfg, item.substr(0, eq), item.substr(eq + 1));
  }
  return cfg;
}

std::vector<int> parse_steps_list(const std::string& text) {
  std::vector<int> steps;
  std::string item;
  std::istringstream is(text);
  while (std::getline(is, item, ',')) {
    std::size_t pos = 0;
    int v = 0;
    try {
      v = std::stoi(item, &pos);
    } catch (const std::logic_error&) {
      pos = std::string::npos;
    }
    if (pos != item.size() || v < 1) {
      throw ConfigError("--steps expects positive integers, got: " + text);
    }
    steps.push_back(v);
  }
  if (steps.empty()) {
    throw ConfigError("--steps expects at least one budget");
  }
  return steps;
}

template <typename Fn>
int run_guarded(Fn&& fn) {
  try {
    return fn();
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const FormatError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const IntegrationFailure& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "failure: " << e.what() << "\n";
    return kExitNumeric;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "se3flow: rectified-flow action policies on SE(3) — synthetic task "
      "generation, two-stage flow training, geometric ODE inference, and "
      "geodesic-error evaluation"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "se3flow 1.0.0");

  // ---- generate -----------------------------------------------------------
  auto* gen = app.add_subcommand(
      "generate", "Generate a train/test demonstration dataset");
  std::string gen_task = "rotating_triangle";
  int gen_n = -1;
  std::uint64_t gen_seed = 3407;
  std::string gen_out;
  bool gen_json = false;
  gen->add_option("--task", gen_task,
                  "Task: rotating_triangle, door_opening, painting")
      ->capture_default_str();
  gen->add_option("--n", gen_n,
                  "Demonstration count (default: the task's standard count)");
  gen->add_option("--seed", gen_seed, "Generation seed")
      ->capture_default_str();
  gen->add_option("--out", gen_out,
                  "Output directory (default: $SE3FLOW_OUTPUT_ROOT or .)");
  gen->add_flag("--json", gen_json, "Also export JSON copies");

  // ---- shared config plumbing --------------------------------------------
  struct ConfigFlags {
    std::string config;
    std::vector<std::string> sets;
    std::string task;
    std::string train_dataset;
    std::string test_dataset;
    std::string out;
  };
  auto add_config_flags = [](CLI::App* cmd, ConfigFlags& flags) {
    cmd->add_option("--config", flags.config,
                    "Experiment config file (sectioned key = value)");
    cmd->add_option("--set", flags.sets,
                    "Override a config entry: section.key=value (repeatable, "
                    "applied last)");
    cmd->add_option("--task", flags.task, "Override experiment.task");
    cmd->add_option("--train-dataset", flags.train_dataset,
                    "Override experiment.train_dataset");
    cmd->add_option("--test-dataset", flags.test_dataset,
                    "Override experiment.test_dataset");
    cmd->add_option("--out", flags.out, "Override experiment.output_dir");
  };
  auto collect = [](const ConfigFlags& flags) {
    Overrides overrides;
    if (!flags.task.empty()) overrides.emplace_back("experiment.task", flags.task);
    if (!flags.train_dataset.empty()) {
      overrides.emplace_back("experiment.train_dataset", flags.train_dataset);
    }
    if (!flags.test_dataset.empty()) {
      overrides.emplace_back("experiment.test_dataset", flags.test_dataset);
    }
    if (!flags.out.empty()) {
      overrides.emplace_back("experiment.output_dir", flags.out);
    }
    return overrides;
  };

  // ---- train --------------------------------------------------------------
  auto* train = app.add_subcommand(
      "train", "Train stage 1 (demonstration flow) or stage 2 (straightened "
               "flow warm-started from stage 1)");
  ConfigFlags train_flags;
  int train_stage = 1;
  std::string train_epochs, train_seed, train_lr, train_flow1_ckpt,
      train_flow2_ckpt, train_reflow;
  add_config_flags(train, train_flags);
  train->add_option("--stage", train_stage, "Flow stage: 1 or 2")
      ->required();
  train->add_option("--epochs", train_epochs,
                    "Override the stage's epoch count");
  train->add_option("--seed", train_seed, "Override the stage's seed");
  train->add_option("--lr", train_lr, "Override the stage's learning rate");
  train->add_option("--flow1-checkpoint", train_flow1_ckpt,
                    "Override experiment.flow1_checkpoint");
  train->add_option("--flow2-checkpoint", train_flow2_ckpt,
                    "Override experiment.flow2_checkpoint");
  train->add_option("--reflow-pairs", train_reflow,
                    "Override experiment.reflow_pairs (stage 2 input)");

  // ---- synthesize-reflow ---------------------------------------------------
  auto* synth = app.add_subcommand(
      "synthesize-reflow",
      "Integrate the stage-1 flow from fresh noise and keep the endpoints as "
      "a synthesized pair file");
  ConfigFlags synth_flags;
  std::string synth_flow1_ckpt, synth_pairs, synth_count, synth_seed;
  add_config_flags(synth, synth_flags);
  synth->add_option("--flow1-checkpoint", synth_flow1_ckpt,
                    "Override experiment.flow1_checkpoint");
  synth->add_option("--pairs", synth_pairs,
                    "Override experiment.reflow_pairs (output path)");
  synth->add_option("--count", synth_count,
                    "Override experiment.reflow_count");
  synth->add_option("--seed", synth_seed, "Override flow2.seed");

  // ---- eval ----------------------------------------------------------------
  auto* eval = app.add_subcommand(
      "eval", "Evaluate a checkpoint on a held-out dataset (geodesic pose "
              "error per action step)");
  ConfigFlags eval_flags;
  std::string eval_ckpt, eval_steps, eval_seeds;
  add_config_flags(eval, eval_flags);
  eval->add_option("--checkpoint", eval_ckpt, "Checkpoint to evaluate")
      ->required();
  eval->add_option("--steps", eval_steps,
                   "Comma-separated step budgets (1 becomes a single Euler "
                   "step); default: the [solver] section");
  eval->add_option("--seeds", eval_seeds, "Override eval.seeds");

  // ---- ablate ---------------------------------------------------------------
  auto* ablate = app.add_subcommand(
      "ablate", "Sweep the evaluation across eval.steps_list budgets");
  ConfigFlags ablate_flags;
  std::string ablate_ckpt, ablate_seeds, ablate_steps;
  add_config_flags(ablate, ablate_flags);
  ablate->add_option("--checkpoint", ablate_ckpt, "Checkpoint to evaluate")
      ->required();
  ablate->add_option("--steps", ablate_steps, "Override eval.steps_list");
  ablate->add_option("--seeds", ablate_seeds, "Override eval.seeds");

  // ---- import-external -------------------------------------------------------
  auto* import = app.add_subcommand(
      "import-external",
      "Import externally reported trajectory means and render a side-by-side "
      "table");
  ConfigFlags import_flags;
  std::string import_results, import_with;
  add_config_flags(import, import_flags);
  import->add_option("--results", import_results,
                     "CSV with header task,model,steps,trajectory_mean")
      ->required();
  import->add_option("--with", import_with,
                     "Internal aggregate CSV to place alongside the imported "
                     "rows");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  if (gen->parsed()) {
    return run_guarded([&] {
      const Task task = task_from_name(gen_task);
      const int n = gen_n < 0 ? default_demo_count(task) : gen_n;
      const std::string out =
          gen->count("--out") ? gen_out : default_experiment_config().output_dir;
      return cmd_generate(task, n, gen_seed, out, gen_json, std::cout);
    });
  }
  if (train->parsed()) {
    return run_guarded([&] {
      Overrides overrides = collect(train_flags);
      const std::string stage_section = train_stage == 2 ? "flow2" : "flow1";
      if (!train_epochs.empty()) {
        overrides.emplace_back(stage_section + ".epochs", train_epochs);
      }
      if (!train_seed.empty()) {
        overrides.emplace_back(stage_section + ".seed", train_seed);
      }
      if (!train_lr.empty()) {
        overrides.emplace_back(stage_section + ".learning_rate", train_lr);
      }
      if (!train_flow1_ckpt.empty()) {
        overrides.emplace_back("experiment.flow1_checkpoint",
                               train_flow1_ckpt);
      }
      if (!train_flow2_ckpt.empty()) {
        overrides.emplace_back("experiment.flow2_checkpoint",
                               train_flow2_ckpt);
      }
      if (!train_reflow.empty()) {
        overrides.emplace_back("experiment.reflow_pairs", train_reflow);
      }
      const ExperimentConfig cfg =
          make_config(train_flags.config, overrides, train_flags.sets);
      return cmd_train(cfg, train_stage, std::cout);
    });
  }
  if (synth->parsed()) {
    return run_guarded([&] {
      Overrides overrides = collect(synth_flags);
      if (!synth_flow1_ckpt.empty()) {
        overrides.emplace_back("experiment.flow1_checkpoint",
                               synth_flow1_ckpt);
      }
      if (!synth_pairs.empty()) {
        overrides.emplace_back("experiment.reflow_pairs", synth_pairs);
      }
      if (!synth_count.empty()) {
        overrides.emplace_back("experiment.reflow_count", synth_count);
      }
      if (!synth_seed.empty()) {
        overrides.emplace_back("flow2.seed", synth_seed);
      }
      const ExperimentConfig cfg =
          make_config(synth_flags.config, overrides, synth_flags.sets);
      return cmd_synthesize_reflow(cfg, std::cout);
    });
  }
  if (eval->parsed()) {
    return run_guarded([&] {
      Overrides overrides = collect(eval_flags);
      if (!eval_seeds.empty()) {
        overrides.emplace_back("eval.seeds", eval_seeds);
      }
      const ExperimentConfig cfg =
          make_config(eval_flags.config, overrides, eval_flags.sets);
      const std::vector<int> steps =
          eval_steps.empty() ? std::vector<int>{} : parse_steps_list(eval_steps);
      return cmd_eval(cfg, eval_ckpt, steps, std::cout);
    });
  }
  if (ablate->parsed()) {
    return run_guarded([&] {
      Overrides overrides = collect(ablate_flags);
      if (!ablate_steps.empty()) {
        overrides.emplace_back("eval.steps_list", ablate_steps);
      }
      if (!ablate_seeds.empty()) {
        overrides.emplace_back("eval.seeds", ablate_seeds);
      }
      const ExperimentConfig cfg =
          make_config(ablate_flags.config, overrides, ablate_flags.sets);
      return cmd_ablate(cfg, ablate_ckpt, std::cout);
    });
  }
  if (import->parsed()) {
    return run_guarded([&] {
      const ExperimentConfig cfg = make_config(
          import_flags.config, collect(import_flags), import_flags.sets);
      return cmd_import_external(cfg, import_results, import_with, std::cout);
    });
  }
  return kExitUsage;
}
