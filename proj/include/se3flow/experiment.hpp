// Copyright (C) 2026 The se3flow authors
// SPDX-License-Identifier: Apache-2.0
//
// Experiment plumbing: a flat sectioned key=value config that fully
// determines a run, dotted-key overrides for command-line flags, an
// effective-config sidecar written next to every output, persistence for
// synthesized pair sets, and the command implementations behind the CLI.
#pragma once

#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "se3flow/checkpoint.hpp"
#include "se3flow/evaluation.hpp"
#include "se3flow/flow_training.hpp"
#include "se3flow/integrator.hpp"
#include "se3flow/tasks.hpp"

namespace se3flow {

// A problem with the requested run (missing inputs, incompatible tags,
// malformed option values) as opposed to a malformed file or a numeric
// failure. The CLI maps it to its own exit code.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Exit-code contract shared by every command.
inline constexpr int kExitSuccess = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNumeric = 3;
inline constexpr int kExitPartialEval = 4;

// Environment variable consulted (only) for the default output directory.
inline constexpr const char* kOutputRootEnv = "SE3FLOW_OUTPUT_ROOT";

struct ExperimentConfig {
  // [experiment]
  Task task = Task::rotating_triangle;
  std::string train_dataset;
  std::string test_dataset;
  std::string flow1_checkpoint;
  std::string flow2_checkpoint;
  std::string reflow_pairs;
  std::string output_dir;  // default: $SE3FLOW_OUTPUT_ROOT or "."
  int pairs_per_action = 1;
  int reflow_count = 200;
  // [flow1] / [flow2]
  TrainConfig flow1 = flow1_defaults();
  TrainConfig flow2 = flow2_defaults();
  // [solver]
  SolverSpec solver;
  // [eval]
  std::vector<int> steps_list{1, 2, 10, 50, 100};
  std::vector<std::uint64_t> seeds = default_eval_seeds();
  ChainMode chain_mode = ChainMode::autoregressive;
};

// Defaults, with output_dir resolved from the environment.
ExperimentConfig default_experiment_config();

// Parses the sectioned key=value format ('#'/';' comments, blank lines
// allowed). Unknown sections, unknown keys, and unparsable values raise
// FormatError naming the line.
ExperimentConfig parse_experiment_config(const std::string& path);

// Applies one "section.key=value" pair (e.g. "flow1.epochs", "42"): the same
// keys the file format accepts. Bad keys or values raise ConfigError.
void apply_config_override(ExperimentConfig& cfg, const std::string& key,
                           const std::string& value);

// Deterministic full rendering of a config; parsing it back reproduces the
// config exactly.
std::string serialize_experiment_config(const ExperimentConfig& cfg);

// Writes serialize_experiment_config(cfg) to <dir>/effective_config.ini and
// returns the path.
std::string write_effective_config(const ExperimentConfig& cfg);

// Persistence for synthesized pair sets. Observations are not copied; pairs
// rebind to their source demonstration (by index) when loaded against the
// dataset, which must carry the same task tag.
void save_reflow_pairs(const std::string& path,
                       const std::vector<TrainingPair>& pairs, Task task,
                       std::uint64_t seed);
std::vector<TrainingPair> load_reflow_pairs(const std::string& path,
                                            const Dataset& dataset);

// Command implementations. Each returns an exit code from the contract
// above, prints human-readable progress to `log`, and leaves machine-
// readable outputs (datasets, checkpoints, CSVs, the effective config) in
// the configured paths. Errors are thrown (ConfigError, FormatError,
// NumericError, std::invalid_argument) and mapped by the CLI.
int cmd_generate(Task task, int n, std::uint64_t seed,
                 const std::string& out_dir, bool also_json,
                 std::ostream& log);
int cmd_train(const ExperimentConfig& cfg, int stage, std::ostream& log);
int cmd_synthesize_reflow(const ExperimentConfig& cfg, std::ostream& log);
int cmd_eval(const ExperimentConfig& cfg, const std::string& checkpoint_path,
             const std::vector<int>& steps_list, std::ostream& log);
int cmd_ablate(const ExperimentConfig& cfg,
               const std::string& checkpoint_path, std::ostream& log);
int cmd_import_external(const ExperimentConfig& cfg,
                        const std::string& results_csv,
                        const std::string& internal_aggregate_csv,
                        std::ostream& log);

}  // namespace se3flow
