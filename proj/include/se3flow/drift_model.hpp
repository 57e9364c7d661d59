// Copyright (C) 2026 The se3flow authors
// SPDX-License-Identifier: Apache-2.0
//
// The learned drift field: a small tanh MLP evaluated in a canonical frame
// derived from the observation cloud, with its output transported back to the
// world frame through the adjoint. Gradients are hand-rolled reverse mode.
#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "se3flow/geometry.hpp"
#include "se3flow/point_cloud.hpp"

namespace se3flow {

inline constexpr int kCloudFeatureBins = 16;
// Hard cap on the predicted twist norm; exceeding it raises NumericError.
inline constexpr double kDriftNormCap = 1e3;
// Relative rank tolerance below which the PCA frame falls back to identity.
inline constexpr double kFrameRankTol = 1e-9;
// Third moments smaller than this are treated as sign ties.
inline constexpr double kMomentTieTol = 1e-9;

// Canonical observation frame: local = inverse(frame) * world.
struct ObservationFrame {
  Pose frame;
  bool degenerate = false;
};

// PCA frame of a cloud: centroid translation, principal axes ordered by
// descending variance, each axis signed so the third moment of projections is
// nonnegative (lexicographic sign on ties), third axis = first x second.
// Clouds with fewer than 4 points or a rank-deficient spectrum fall back to
// (identity rotation, centroid). Throws std::invalid_argument on empty clouds.
ObservationFrame observation_frame(const PointCloud& cloud);

// Pose of z expressed in the cloud's canonical frame, plus the frame itself.
std::pair<Pose, ObservationFrame> canonicalize(const Pose& z,
                                               const PointCloud& cloud);

// Rigid-invariant cloud descriptor: a soft (linearly interpolated) histogram
// of centroid distances over kCloudFeatureBins bins spanning [0, r_max],
// normalized to total mass 1. An all-coincident cloud maps to bin 0.
Eigen::VectorXd cloud_features(const PointCloud& cloud);

struct GradientTape;

// Fully connected network with tanh hidden activations and a linear head.
// Input: 6 twist coordinates of the canonicalized pose, sin/cos time
// embeddings, and the cloud features. Output: a 6D twist in canonical
// coordinates, transported to the world frame by the frame's adjoint.
struct DriftModel {
  std::vector<int> layer_sizes;             // {input, hidden..., 6}
  std::vector<Eigen::MatrixXd> weights;     // weights[l] is sizes[l+1] x sizes[l]
  std::vector<Eigen::VectorXd> biases;      // biases[l] is sizes[l+1]
  std::vector<double> time_freqs{1.0, 2.0, 4.0, 8.0};

  static int input_width(int n_freqs) {
    return 6 + 2 * n_freqs + kCloudFeatureBins;
  }

  // Seeded initialization: weights per layer uniform in (-s, s) with
  // s = sqrt(6 / (n_in + n_out)), drawn row-major layer by layer; biases
  // zero; final-layer weights scaled by 0.01. Bit-identical per seed.
  static DriftModel init(const std::vector<int>& hidden_sizes, uint64_t seed,
                         const std::vector<double>& freqs = {1.0, 2.0, 4.0,
                                                             8.0});

  int parameter_count() const;
  void set_zero();
  // Throws std::invalid_argument if shapes are inconsistent.
  void validate() const;
};

// Parameter-shaped gradient accumulator.
struct GradientTape {
  std::vector<Eigen::MatrixXd> d_weights;
  std::vector<Eigen::VectorXd> d_biases;

  static GradientTape zeros_like(const DriftModel& model);
  void set_zero();
  void scale(double s);
  void add(const GradientTape& other, double s = 1.0);
  double squared_norm() const;
};

// Per-observation cache: canonical frame, its adjoint, and cloud features.
// Reused across drift evaluations that share a cloud.
struct ObsContext {
  ObservationFrame frame;
  Pose frame_inverse;
  Mat6 ad_frame;
  Eigen::VectorXd features;
};

ObsContext make_obs_context(const PointCloud& cloud);

// Forward-pass record kept for the backward pass.
struct DriftTrace {
  Eigen::VectorXd input;
  std::vector<Eigen::VectorXd> activations;  // post-tanh, per hidden layer
  Vec6 canonical_out;
  Twist output;
};

// Forward evaluation. Throws NumericError (naming the layer) on non-finite
// intermediates and on outputs beyond kDriftNormCap; CutLocusError if the
// canonicalized pose falls on the cut locus.
DriftTrace drift_forward(const DriftModel& model, const Pose& z, double t,
                         const ObsContext& ctx);

// Accumulates d(upstream . output)/d(parameters) into the tape.
void drift_backward(const DriftModel& model, const DriftTrace& trace,
                    const ObsContext& ctx, const Vec6& upstream,
                    GradientTape& tape);

Twist drift(const DriftModel& model, const Pose& z, double t,
            const ObsContext& ctx);
Twist drift(const DriftModel& model, const Pose& z, double t,
            const PointCloud& cloud);

std::pair<Twist, GradientTape> drift_with_grad(const DriftModel& model,
                                               const Pose& z, double t,
                                               const ObsContext& ctx,
                                               const Vec6& upstream);
std::pair<Twist, GradientTape> drift_with_grad(const DriftModel& model,
                                               const Pose& z, double t,
                                               const PointCloud& cloud,
                                               const Vec6& upstream);

}  // namespace se3flow
