// Copyright (C) 2026 The se3flow authors
// SPDX-License-Identifier: Apache-2.0
//
// Two-stage rectified-flow training: stage one regresses the drift field onto
// straight geodesic paths between noisy starts and demonstrated actions;
// stage two warm-starts from stage one and mixes in pairs synthesized by
// integrating the stage-one flow, straightening the learned transport.
#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "se3flow/drift_model.hpp"
#include "se3flow/geometry.hpp"
#include "se3flow/integrator.hpp"
#include "se3flow/tasks.hpp"

namespace se3flow {

enum class PairSource { original, reflow };
enum class LrSchedule { cosine, constant };

// Most draws accept immediately; a pair or noise sample that cannot satisfy
// its rotation bound within this many attempts is a hard error rather than a
// silent distribution shift.
inline constexpr int kMaxRejectionAttempts = 100;

struct TrainConfig {
  double learning_rate = 2e-4;
  int batch_size = 1;
  int epochs = 5000;
  // Fixed-step budget used when integrating the stage-one flow to synthesize
  // pairs (stage two doubles it).
  int rectified_step_budget = 100;
  double mix_ratio = 0.5;  // probability a stage-two draw is reflow-sourced
  std::uint64_t seed = 0;
  LrSchedule lr_schedule = LrSchedule::cosine;
  double noise_scale = 0.5;  // std-dev of the start-pose twist components
  double grad_clip = 0.0;    // clip gradient norm to this when positive
  StepConvention convention = StepConvention::spatial;
};

TrainConfig flow1_defaults();
TrainConfig flow2_defaults();

// One supervised endpoint pair. The observation cache is shared between all
// pairs drawn from the same demonstration.
struct TrainingPair {
  Pose h0;      // start sample
  Pose h1;      // target action
  Pose anchor;  // pose the start noise was composed onto
  std::shared_ptr<const PointCloud> cloud;
  std::shared_ptr<const ObsContext> ctx;
  PairSource source = PairSource::original;
  int demo_index = 0;
  int action_index = 0;
};

struct LossReport {
  int epoch = 0;
  double mean_loss = 0.0;
  double lr = 0.0;
  double wall_time = 0.0;  // seconds since training started
};

struct TrainResult {
  std::vector<LossReport> reports;
  long long original_draws = 0;
  long long reflow_draws = 0;
  long long rejected_samples = 0;  // cut-locus rejections during training
};

// Isotropic Gaussian twist with std-dev `scale` per component; the angular
// part is resampled until its norm is at most 0.9*pi so the exponential is
// invertible. Angular components are drawn before translational ones.
Twist sample_noise_twist(std::mt19937_64& rng, double scale);
Pose sample_noise_pose(std::mt19937_64& rng, double scale);

// The regression target: the twist that carries h0 to h1 along the geodesic,
// expressed per the integration convention.
Vec6 flow_target(const Pose& h0, const Pose& h1, StepConvention convention);

// Builds the stage-one pair set: for every demonstration action, the start is
// the previous trajectory pose (the action itself at step zero) perturbed by
// sampled noise, re-drawn until the pair rotation bound holds.
std::vector<TrainingPair> build_training_pairs(const Dataset& dataset,
                                               double noise_scale,
                                               int pairs_per_action,
                                               std::uint64_t seed);

// Squared residual between the pair's target twist and the drift prediction
// at the geodesic interpolant; accumulates parameter gradients into `tape`
// when non-null. Propagates CutLocusError for rejectable samples.
double flow1_loss(const DriftModel& model, const TrainingPair& pair, double t,
                  StepConvention convention, GradientTape* tape = nullptr);

// Mean flow1_loss over the pairs with one uniform t drawn per pair from a
// dedicated stream.
double dataset_mean_loss(const DriftModel& model,
                         const std::vector<TrainingPair>& pairs,
                         StepConvention convention, std::uint64_t seed);

// Stage one: per-epoch shuffled passes of plain SGD with the configured
// learning-rate schedule. Throws NumericError naming epoch and sample on
// non-finite losses.
TrainResult train_flow1(DriftModel& model,
                        const std::vector<TrainingPair>& pairs,
                        const TrainConfig& cfg);

struct ReflowSynthesis {
  std::vector<TrainingPair> pairs;
  // Skipped: the solver gave up, or the rollout reached a pose whose
  // canonical logarithm is undefined (rotation at pi).
  int integration_failures = 0;
  int bound_rejections = 0;  // skipped: endpoint rotation bound violated
};

// Draws n fresh starts (an observation anchor from `sources` plus noise),
// transports each through the stage-one flow, and keeps the endpoints as new
// pairs. Every synthesized pair uses an RNG stream derived from (seed, pair
// index), so the loop could run in parallel without changing output.
ReflowSynthesis synthesize_reflow_pairs(const DriftModel& model,
                                        const std::vector<TrainingPair>& sources,
                                        int n, const TrainConfig& cfg,
                                        const SolverSpec& solver);

// Convenience form: fixed-step solver at the config's step budget.
ReflowSynthesis synthesize_reflow_pairs(const DriftModel& model,
                                        const std::vector<TrainingPair>& sources,
                                        int n, const TrainConfig& cfg,
                                        SolverKind solver = SolverKind::rk4);

// Stage two: the caller passes the warm-started model (a copy of stage one's
// parameters). Each drawn sample is reflow-sourced with probability
// cfg.mix_ratio; epochs iterate over the combined pool size.
TrainResult train_flow2(DriftModel& model,
                        const std::vector<TrainingPair>& original,
                        const std::vector<TrainingPair>& reflow,
                        const TrainConfig& cfg);

// Columns: epoch,mean_loss,lr (full-precision).
void write_loss_csv(const std::string& path,
                    const std::vector<LossReport>& reports);

}  // namespace se3flow
