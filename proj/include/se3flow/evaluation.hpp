// Copyright (C) 2026 The se3flow authors
// SPDX-License-Identifier: Apache-2.0
//
// Evaluation protocol: geodesic pose error per action step, trajectory-level
// means, multi-seed aggregation (mean and sample standard deviation), step
// budget ablations, error-reduction summaries, import of externally reported
// results, and byte-stable report rendering.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "se3flow/checkpoint.hpp"
#include "se3flow/geometry.hpp"
#include "se3flow/integrator.hpp"
#include "se3flow/tasks.hpp"

namespace se3flow {

struct TrajectoryError {
  std::vector<double> per_action;
  double trajectory_mean = 0.0;
};

// per_action[k] = d_geo(pred[k], truth[k]); trajectory_mean is their average.
// Throws std::invalid_argument on length mismatch or empty trajectories.
TrajectoryError evaluate_trajectory(const std::vector<Pose>& pred,
                                    const std::vector<Pose>& truth);

// One evaluation run: a single seed swept over every test demonstration.
// per_action[k] is the mean geodesic error at action index k across the
// demonstrations; trajectory_mean is the mean of per_action. Imported
// external results carry only a trajectory mean (per_action empty).
struct EvalRun {
  std::string model;
  Task task = Task::rotating_triangle;
  int steps = 0;  // fixed-step budget; 0 marks an adaptive solver
  std::uint64_t seed = 0;
  double noise_scale = 0.0;  // start-pose sampling scale used for the run
  std::vector<double> per_action;
  double trajectory_mean = 0.0;
  bool external = false;
};

struct EvalReport {
  std::vector<EvalRun> runs;
  int failed_runs = 0;  // seeds excluded because integration gave up
  std::vector<std::uint64_t> failed_seeds;
};

// The standard ten seeds 3407..3416.
std::vector<std::uint64_t> default_eval_seeds();

// How successive action steps of a rollout are anchored: autoregressive
// chains each start off the previous *predicted* pose; joint anchors every
// start on the true previous pose (independent per-step flows, for
// ablations).
enum class ChainMode { autoregressive, joint };

// Evaluates the checkpointed model on a held-out set. Per seed, all start
// noise is drawn upfront from mt19937_64(seed) (demonstration-major, action-
// minor order); each demonstration is then rolled out per the chain mode —
// the start for action k is its anchor composed with noise (the first anchor
// is always the true initial pose) — and each start is transported through
// the flow with the given solver. Runs where the solver gives up
// (IntegrationFailure) or the rollout reaches a pose whose canonical
// logarithm is undefined (CutLocusError) are excluded and counted. Throws
// std::invalid_argument on task mismatch, empty test set, or empty seed
// list.
EvalReport run_eval(const Checkpoint& ckpt, const Dataset& test,
                    const SolverSpec& solver,
                    const std::vector<std::uint64_t>& seeds,
                    const std::string& model_id = "",
                    ChainMode mode = ChainMode::autoregressive);

struct AggregateReport {
  Task task = Task::rotating_triangle;
  std::string model;
  int steps = 0;
  bool external = false;
  double mean = 0.0;
  double std_dev = 0.0;  // sample standard deviation; 0 when n_seeds == 1
  int n_seeds = 0;
};

// Groups runs by (external flag, task, model, steps) — imported results never
// share a group with internal runs — and reports mean and sample standard
// deviation (n-1 denominator) of the trajectory means. Output is sorted by
// the group key. Throws std::invalid_argument on an empty input.
std::vector<AggregateReport> aggregate(const std::vector<EvalRun>& runs);

// 100 * (baseline - ours) / baseline. Requires baseline > 0.
double error_reduction(double baseline, double ours);

// A budget of 1 becomes a single Euler step; larger budgets use rk4.
SolverSpec normalized_step_solver(int steps);

struct StepAblation {
  std::vector<EvalRun> runs;
  std::vector<AggregateReport> table;  // one row per step budget
  int failed_runs = 0;
};

// Runs the evaluation at every budget in steps_list (normalized as above).
StepAblation step_ablation(const Checkpoint& ckpt, const Dataset& test,
                           const std::vector<int>& steps_list,
                           const std::vector<std::uint64_t>& seeds,
                           const std::string& model_id = "",
                           ChainMode mode = ChainMode::autoregressive);

// Reads externally reported trajectory means from a CSV with header
// task,model,steps,trajectory_mean. An empty (or header-only) file yields an
// empty list; malformed rows raise FormatError naming the line number.
std::vector<EvalRun> import_external_results(const std::string& path);

// Mean straightness of the model's flow paths: starts are drawn exactly like
// training pairs (true previous pose composed with seeded noise, drawn
// upfront), so two models given the same seed integrate from identical
// endpoints. Paths whose integration fails (solver gave up or the rollout
// left the logarithm's domain) are skipped.
double mean_flow_straightness(const Checkpoint& ckpt, const Dataset& test,
                              const SolverSpec& solver, std::uint64_t seed);

// Long-format per-action rows: task,model,steps,seed,action_index,d_geo.
void write_per_action_csv(const std::string& path,
                          const std::vector<EvalRun>& runs);
// Aggregate rows: task,model,steps,mean,std,n.
void write_aggregate_csv(const std::string& path,
                         const std::vector<AggregateReport>& reports);
// Parses rows written by write_aggregate_csv back into internal reports;
// malformed rows raise FormatError naming the line number.
std::vector<AggregateReport> read_aggregate_csv(const std::string& path);

// Fixed-width side-by-side table of aggregate rows (three-decimal values),
// sorted internally so equal inputs render byte-identically.
std::string render_side_by_side(const std::vector<AggregateReport>& reports);

}  // namespace se3flow
