// Copyright (C) 2026 The se3flow authors
// SPDX-License-Identifier: Apache-2.0
#include "se3flow/flow_training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

#include "se3flow/errors.hpp"

namespace se3flow {
namespace {

double cosine_or_constant(const TrainConfig& cfg, int epoch) {
  if (cfg.lr_schedule == LrSchedule::constant) return cfg.learning_rate;
  return cfg.learning_rate *
         (1.0 + std::cos(std::numbers::pi * epoch / cfg.epochs)) / 2.0;
}

void validate_config(const TrainConfig& cfg) {
  if (!(cfg.learning_rate > 0.0)) {
    throw std::invalid_argument("learning_rate must be positive");
  }
  if (cfg.batch_size < 1) {
    throw std::invalid_argument("batch_size must be positive");
  }
  if (cfg.epochs < 0) throw std::invalid_argument("epochs must be nonnegative");
  if (cfg.rectified_step_budget < 1) {
    throw std::invalid_argument("rectified_step_budget must be positive");
  }
  if (!(cfg.mix_ratio >= 0.0 && cfg.mix_ratio <= 1.0)) {
    throw std::invalid_argument("mix_ratio must lie in [0, 1]");
  }
  if (!(cfg.noise_scale > 0.0)) {
    throw std::invalid_argument("noise_scale must be positive");
  }
  if (cfg.grad_clip < 0.0) {
    throw std::invalid_argument("grad_clip must be nonnegative");
  }
}

void sgd_step(DriftModel& model, const GradientTape& tape, double lr) {
  for (std::size_t l = 0; l < model.weights.size(); ++l) {
    model.weights[l].noalias() -= lr * tape.d_weights[l];
    model.biases[l].noalias() -= lr * tape.d_biases[l];
  }
}

double relative_rotation(const Pose& a, const Pose& b) {
  return rotation_angle(b.rotation * a.rotation.inverse());
}

// Averages the accumulated batch gradient, clips, and applies one SGD step.
void apply_batch(DriftModel& model, GradientTape& tape, const TrainConfig& cfg,
                 double lr, long long batch) {
  if (batch > 1) tape.scale(1.0 / double(batch));
  if (cfg.grad_clip > 0.0) {
    const double norm = std::sqrt(tape.squared_norm());
    if (norm > cfg.grad_clip) tape.scale(cfg.grad_clip / norm);
  }
  sgd_step(model, tape, lr);
  tape.set_zero();
}

// Shared SGD loop; the sampler yields the pair for draw index s of an epoch.
template <typename Sampler>
TrainResult run_sgd(DriftModel& model, const TrainConfig& cfg,
                    long long samples_per_epoch, std::mt19937_64& rng,
                    Sampler&& sampler) {
  TrainResult result;
  const auto start = std::chrono::steady_clock::now();
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  GradientTape tape = GradientTape::zeros_like(model);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = cosine_or_constant(cfg, epoch);
    double loss_sum = 0.0;
    long long used = 0;
    long long in_batch = 0;
    tape.set_zero();
    for (long long s = 0; s < samples_per_epoch; ++s) {
      const TrainingPair& pair = sampler(epoch, s, result);
      const double t = unit(rng);
      double loss;
      try {
        loss = flow1_loss(model, pair, t, cfg.convention, &tape);
      } catch (const CutLocusError&) {
        ++result.rejected_samples;
        continue;
      } catch (const NumericError& e) {
        std::ostringstream os;
        os << "training aborted at epoch " << epoch << ", sample " << s
           << " (demo " << pair.demo_index << ", action " << pair.action_index
           << "): " << e.what();
        throw NumericError(os.str());
      }
      if (!std::isfinite(loss)) {
        std::ostringstream os;
        os << "training aborted at epoch " << epoch << ", sample " << s
           << ": non-finite loss";
        throw NumericError(os.str());
      }
      loss_sum += loss;
      ++used;
      ++in_batch;
      if (in_batch == cfg.batch_size) {
        apply_batch(model, tape, cfg, lr, in_batch);
        in_batch = 0;
      }
    }
    if (in_batch > 0) {
      apply_batch(model, tape, cfg, lr, in_batch);
      in_batch = 0;
    }
    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
            .count();
    result.reports.push_back(
        LossReport{epoch, used > 0 ? loss_sum / double(used) : 0.0, lr,
                   elapsed});
  }
  return result;
}

}  // namespace

TrainConfig flow1_defaults() {
  TrainConfig cfg;
  cfg.learning_rate = 2e-4;
  cfg.batch_size = 1;
  cfg.epochs = 5000;
  cfg.rectified_step_budget = 100;
  cfg.mix_ratio = 0.0;
  return cfg;
}

TrainConfig flow2_defaults() {
  TrainConfig cfg;
  cfg.learning_rate = 8e-5;
  cfg.batch_size = 1;
  cfg.epochs = 3000;
  cfg.rectified_step_budget = 200;
  cfg.mix_ratio = 0.5;
  return cfg;
}

Twist sample_noise_twist(std::mt19937_64& rng, double scale) {
  if (!(scale > 0.0)) throw std::invalid_argument("noise scale must be > 0");
  std::normal_distribution<double> gauss(0.0, scale);
  Vec3 omega;
  for (int attempt = 0;; ++attempt) {
    if (attempt >= kMaxRejectionAttempts) {
      throw NumericError(
          "noise rotation exceeded 0.9*pi on every draw; scale too large");
    }
    omega = Vec3(gauss(rng), gauss(rng), gauss(rng));
    if (omega.norm() <= kMaxStepRotation) break;
  }
  const Vec3 rho(gauss(rng), gauss(rng), gauss(rng));
  return Twist(omega, rho);
}

Pose sample_noise_pose(std::mt19937_64& rng, double scale) {
  return exp_map(sample_noise_twist(rng, scale));
}

Vec6 flow_target(const Pose& h0, const Pose& h1, StepConvention convention) {
  if (convention == StepConvention::spatial) {
    return geodesic_diff(h1, h0).vector();
  }
  return log_map(compose(inverse(h0), h1)).vector();
}

std::vector<TrainingPair> build_training_pairs(const Dataset& dataset,
                                               double noise_scale,
                                               int pairs_per_action,
                                               std::uint64_t seed) {
  if (pairs_per_action < 1) {
    throw std::invalid_argument("pairs_per_action must be positive");
  }
  std::mt19937_64 rng(seed);
  std::vector<TrainingPair> pairs;
  pairs.reserve(dataset.demonstrations.size() * kTrajectoryLength *
                std::size_t(pairs_per_action));
  for (int di = 0; di < int(dataset.demonstrations.size()); ++di) {
    const Demonstration& demo = dataset.demonstrations[di];
    auto cloud = std::make_shared<const PointCloud>(demo.cloud);
    auto ctx = std::make_shared<const ObsContext>(make_obs_context(*cloud));
    for (int k = 0; k < int(demo.trajectory.size()); ++k) {
      const Pose& anchor = demo.trajectory[std::max(k - 1, 0)];
      const Pose& target = demo.trajectory[k];
      for (int rep = 0; rep < pairs_per_action; ++rep) {
        Pose h0;
        bool accepted = false;
        for (int attempt = 0; attempt < kMaxRejectionAttempts; ++attempt) {
          h0 = compose(anchor, sample_noise_pose(rng, noise_scale));
          if (relative_rotation(h0, target) <= kMaxStepRotation) {
            accepted = true;
            break;
          }
        }
        if (!accepted) {
          std::ostringstream os;
          os << "could not satisfy the pair rotation bound for demo " << di
             << " action " << k << " after " << kMaxRejectionAttempts
             << " draws";
          throw NumericError(os.str());
        }
        TrainingPair pair;
        pair.h0 = h0;
        pair.h1 = target;
        pair.anchor = anchor;
        pair.cloud = cloud;
        pair.ctx = ctx;
        pair.source = PairSource::original;
        pair.demo_index = di;
        pair.action_index = k;
        pairs.push_back(std::move(pair));
      }
    }
  }
  return pairs;
}

double flow1_loss(const DriftModel& model, const TrainingPair& pair, double t,
                  StepConvention convention, GradientTape* tape) {
  const Vec6 target = flow_target(pair.h0, pair.h1, convention);
  const Pose z_t = geodesic_interp(pair.h0, pair.h1, t);
  const DriftTrace trace = drift_forward(model, z_t, t, *pair.ctx);
  const Vec6 residual = trace.output.vector() - target;
  if (tape != nullptr) {
    drift_backward(model, trace, *pair.ctx, Vec6(2.0 * residual), *tape);
  }
  return residual.squaredNorm();
}

double dataset_mean_loss(const DriftModel& model,
                         const std::vector<TrainingPair>& pairs,
                         StepConvention convention, std::uint64_t seed) {
  if (pairs.empty()) throw std::invalid_argument("no pairs to evaluate");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  double sum = 0.0;
  long long used = 0;
  for (const TrainingPair& pair : pairs) {
    const double t = unit(rng);
    try {
      sum += flow1_loss(model, pair, t, convention, nullptr);
      ++used;
    } catch (const CutLocusError&) {
      // Rejected exactly as the training loop would reject it.
    }
  }
  return used > 0 ? sum / double(used) : 0.0;
}

TrainResult train_flow1(DriftModel& model,
                        const std::vector<TrainingPair>& pairs,
                        const TrainConfig& cfg) {
  validate_config(cfg);
  if (pairs.empty()) throw std::invalid_argument("no training pairs");
  std::mt19937_64 rng(cfg.seed);
  std::vector<int> order(pairs.size());
  for (int i = 0; i < int(order.size()); ++i) order[i] = i;
  int shuffled_epoch = -1;
  auto sampler = [&](int epoch, long long s,
                     TrainResult& result) -> const TrainingPair& {
    if (epoch != shuffled_epoch) {
      std::shuffle(order.begin(), order.end(), rng);
      shuffled_epoch = epoch;
    }
    ++result.original_draws;
    return pairs[order[std::size_t(s)]];
  };
  return run_sgd(model, cfg, (long long)pairs.size(), rng, sampler);
}

ReflowSynthesis synthesize_reflow_pairs(const DriftModel& model,
                                        const std::vector<TrainingPair>& sources,
                                        int n, const TrainConfig& cfg,
                                        SolverKind solver) {
  SolverSpec spec;
  spec.kind = solver;
  spec.steps = cfg.rectified_step_budget;
  return synthesize_reflow_pairs(model, sources, n, cfg, spec);
}

ReflowSynthesis synthesize_reflow_pairs(const DriftModel& model,
                                        const std::vector<TrainingPair>& sources,
                                        int n, const TrainConfig& cfg,
                                        const SolverSpec& spec) {
  validate_config(cfg);
  if (n < 0) throw std::invalid_argument("pair count must be nonnegative");
  if (n > 0 && sources.empty()) {
    throw std::invalid_argument("reflow synthesis needs source pairs");
  }
  ReflowSynthesis out;
  out.pairs.reserve(n);
  for (int i = 0; i < n; ++i) {
    std::seed_seq seq{std::uint32_t(cfg.seed), std::uint32_t(cfg.seed >> 32),
                      std::uint32_t(i)};
    std::mt19937_64 rng(seq);
    const std::size_t src_idx = std::uniform_int_distribution<std::size_t>(
        0, sources.size() - 1)(rng);
    const TrainingPair& src = sources[src_idx];
    const Pose z0 = compose(src.anchor, sample_noise_pose(rng, cfg.noise_scale));
    Pose z1;
    try {
      z1 = integrate(model, z0, *src.ctx, spec, cfg.convention).poses.back();
    } catch (const IntegrationFailure&) {
      ++out.integration_failures;
      continue;
    } catch (const CutLocusError&) {
      // The rollout reached a pose whose canonical logarithm is undefined
      // (rotation at pi), so the drift field cannot be evaluated there.
      // Skip the sample exactly like a solver failure.
      ++out.integration_failures;
      continue;
    }
    if (relative_rotation(z0, z1) > kMaxStepRotation) {
      ++out.bound_rejections;
      continue;
    }
    TrainingPair pair;
    pair.h0 = z0;
    pair.h1 = z1;
    pair.anchor = src.anchor;
    pair.cloud = src.cloud;
    pair.ctx = src.ctx;
    pair.source = PairSource::reflow;
    pair.demo_index = src.demo_index;
    pair.action_index = src.action_index;
    out.pairs.push_back(std::move(pair));
  }
  return out;
}

TrainResult train_flow2(DriftModel& model,
                        const std::vector<TrainingPair>& original,
                        const std::vector<TrainingPair>& reflow,
                        const TrainConfig& cfg) {
  validate_config(cfg);
  if (cfg.mix_ratio > 0.0 && reflow.empty()) {
    throw std::invalid_argument("mix_ratio > 0 requires reflow pairs");
  }
  if (cfg.mix_ratio < 1.0 && original.empty()) {
    throw std::invalid_argument("mix_ratio < 1 requires original pairs");
  }
  std::mt19937_64 rng(cfg.seed);
  std::bernoulli_distribution pick_reflow(cfg.mix_ratio);
  auto sampler = [&](int, long long, TrainResult& result) -> const TrainingPair& {
    if (pick_reflow(rng)) {
      ++result.reflow_draws;
      return reflow[std::uniform_int_distribution<std::size_t>(
          0, reflow.size() - 1)(rng)];
    }
    ++result.original_draws;
    return original[std::uniform_int_distribution<std::size_t>(
        0, original.size() - 1)(rng)];
  };
  const long long per_epoch = (long long)(original.size() + reflow.size());
  return run_sgd(model, cfg, per_epoch, rng, sampler);
}

void write_loss_csv(const std::string& path,
                    const std::vector<LossReport>& reports) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("cannot open loss CSV for write: " + path);
  out << "epoch,mean_loss,lr\n";
  char buf[96];
  for (const LossReport& r : reports) {
    std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g\n", r.epoch, r.mean_loss,
                  r.lr);
    out << buf;
  }
  if (!out) throw FormatError("write failed for loss CSV: " + path);
}

}  // namespace se3flow
