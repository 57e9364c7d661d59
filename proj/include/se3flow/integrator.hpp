// Copyright (C) 2026 The se3flow authors
// SPDX-License-Identifier: Apache-2.0
//
// Geometric ODE integration of drift fields on SE(3). Fixed-step Euler and
// RK4 evaluate stage twists in local exponential coordinates frozen at the
// step's start pose; RK45 (Dormand-Prince) adapts its step on the 6D local
// coordinate increment and reconstructs the pose through the exponential map.
#pragma once

#include <filesystem>
#include <functional>
#include <vector>

#include "se3flow/drift_model.hpp"
#include "se3flow/geometry.hpp"

namespace se3flow {

enum class SolverKind { euler, rk4, rk45 };

// Which side of the pose the per-step exponential multiplies on. The spatial
// convention (exp on the left) is the default: the geodesic-interpolation
// training target is exactly the constant spatial velocity of the path. The
// body convention composes on the right; training and inference must agree
// (the choice is recorded in checkpoints and validated at load time).
enum class StepConvention { spatial, body };

struct SolverSpec {
  SolverKind kind = SolverKind::rk4;
  int steps = 100;          // fixed-step budget (euler/rk4)
  double rtol = 1e-6;       // rk45 relative tolerance
  double atol = 1e-8;       // rk45 absolute tolerance
  int max_steps = 10000;    // rk45 accepted-step cap
};

// An integration path: strictly increasing times from 0 to 1, one pose per
// node.
struct FlowPath {
  std::vector<double> times;
  std::vector<Pose> poses;
};

// Raised when rk45 exceeds max_steps or the step size underflows (h < 1e-12).
// Carries the partial path up to the failure.
class IntegrationFailure : public std::runtime_error {
 public:
  IntegrationFailure(const std::string& what, FlowPath partial_path,
                     int steps_taken)
      : std::runtime_error(what),
        partial(std::move(partial_path)),
        steps(steps_taken) {}

  FlowPath partial;
  int steps;
};

// A drift field: twist as a function of pose and flow time.
using DriftField = std::function<Twist(const Pose&, double)>;

// One exponential step: exp(h xi) * z (spatial) or z * exp(h xi) (body).
Pose step_exp(const Pose& z, const Twist& xi, double h,
              StepConvention convention = StepConvention::spatial);

// Integrates the field from t=0 to t=1 starting at z0.
FlowPath integrate_field(const DriftField& field, const Pose& z0,
                         const SolverSpec& spec,
                         StepConvention convention = StepConvention::spatial);

// Model-backed integration; the observation context is computed once (or
// passed in when shared across calls).
FlowPath integrate(const DriftModel& model, const Pose& z0,
                   const ObsContext& ctx, const SolverSpec& spec,
                   StepConvention convention = StepConvention::spatial);
FlowPath integrate(const DriftModel& model, const Pose& z0,
                   const PointCloud& cloud, const SolverSpec& spec,
                   StepConvention convention = StepConvention::spatial);

// Maximum geodesic deviation of interior nodes from the geodesic chord
// between the path's endpoints, at matching interpolation times. Paths with
// fewer than 3 nodes score 0 by convention.
double straightness(const FlowPath& path);

// Writes one row per node: t plus the 16 row-major homogeneous pose entries.
void write_flow_path_csv(const std::filesystem::path& path,
                         const FlowPath& flow);

}  // namespace se3flow
