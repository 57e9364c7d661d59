// Copyright (C) 2026 The se3flow authors
// SPDX-License-Identifier: Apache-2.0

#include "se3flow/integrator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace se3flow {

namespace {

constexpr double kMinStep = 1e-12;

void validate_spec(const SolverSpec& spec) {
  if (spec.kind != SolverKind::rk45 && spec.steps < 1) {
    throw std::invalid_argument("SolverSpec: fixed-step budget must be >= 1");
  }
  if (spec.kind == SolverKind::rk45 &&
      (!(spec.rtol > 0.0) || !(spec.atol > 0.0) || spec.max_steps < 1)) {
    throw std::invalid_argument("SolverSpec: rk45 needs rtol, atol > 0 and max_steps >= 1");
  }
}

// Pose reached by moving xi (already scaled) away from z in local
// exponential coordinates.
Pose local_offset(const Pose& z, const Vec6& u, StepConvention convention) {
  const Pose e = exp_map(Twist::from_vector(u));
  return convention == StepConvention::spatial ? compose(e, z) : compose(z, e);
}

// se(3) bracket [u, v] in (omega, rho) coordinates.
Vec6 se3_bracket(const Vec6& u, const Vec6& v) {
  const Vec3 uw = u.head<3>(), ur = u.tail<3>();
  const Vec3 vw = v.head<3>(), vr = v.tail<3>();
  Vec6 out;
  out.head<3>() = uw.cross(vw);
  out.tail<3>() = ur.cross(vw) + uw.cross(vr);
  return out;
}

// Inverse differential of exp at chart coordinate u, truncated after the
// fourth bracket (the cubic Bernoulli term vanishes) -- enough for the
// fifth-order pair. Stage twists must pass through this so the local
// coordinate ODE is equivalent to the manifold ODE at the scheme's order.
Vec6 dexpinv(const Vec6& u, const Vec6& v) {
  const Vec6 a1 = se3_bracket(u, v);
  const Vec6 a2 = se3_bracket(u, a1);
  const Vec6 a4 = se3_bracket(u, se3_bracket(u, a2));
  return v - 0.5 * a1 + (1.0 / 12.0) * a2 - (1.0 / 720.0) * a4;
}

// The chart for the body convention is z * exp(u); its trivialized
// derivative flips the sign of u inside dexpinv.
Vec6 stage_twist(const DriftField& field, const Pose& z, const Vec6& u,
                 double t, StepConvention convention) {
  const Vec6 xi = field(local_offset(z, u, convention), t).vector();
  return dexpinv(convention == StepConvention::spatial ? u : Vec6(-u), xi);
}

FlowPath integrate_fixed(const DriftField& field, const Pose& z0,
                         const SolverSpec& spec, StepConvention convention) {
  const int n = spec.steps;
  const double h = 1.0 / n;
  FlowPath path;
  path.times.reserve(n + 1);
  path.poses.reserve(n + 1);
  path.times.push_back(0.0);
  path.poses.push_back(z0);

  Pose z = z0;
  for (int k = 0; k < n; ++k) {
    const double t = double(k) / n;
    Vec6 u;
    if (spec.kind == SolverKind::euler) {
      u = h * field(z, t).vector();
    } else {
      const Vec6 k1 = field(z, t).vector();
      const Vec6 k2 = stage_twist(field, z, Vec6(0.5 * h * k1), t + 0.5 * h,
                                  convention);
      const Vec6 k3 = stage_twist(field, z, Vec6(0.5 * h * k2), t + 0.5 * h,
                                  convention);
      const Vec6 k4 = stage_twist(field, z, Vec6(h * k3), t + h, convention);
      u = (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    z = local_offset(z, u, convention);
    path.times.push_back(double(k + 1) / n);
    path.poses.push_back(z);
  }
  path.times.back() = 1.0;
  return path;
}

FlowPath integrate_rk45(const DriftField& field, const Pose& z0,
                        const SolverSpec& spec, StepConvention convention) {
  // Dormand-Prince 5(4) tableau.
  static const double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
  static const double a21 = 1.0 / 5;
  static const double a31 = 3.0 / 40, a32 = 9.0 / 40;
  static const double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  static const double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187,
                      a53 = 64448.0 / 6561, a54 = -212.0 / 729;
  static const double a61 = 9017.0 / 3168, a62 = -355.0 / 33,
                      a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                      a65 = -5103.0 / 18656;
  static const double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192,
                      b5 = -2187.0 / 6784, b6 = 11.0 / 84;
  static const double e1 = 5179.0 / 57600, e3 = 7571.0 / 16695,
                      e4 = 393.0 / 640, e5 = -92097.0 / 339200,
                      e6 = 187.0 / 2100, e7 = 1.0 / 40;

  FlowPath path;
  path.times.push_back(0.0);
  path.poses.push_back(z0);

  Pose z = z0;
  double t = 0.0;
  double h = 0.05;
  int attempts = 0;
  auto fail = [&](const std::string& why) {
    std::ostringstream os;
    os << "rk45: " << why << " at t = " << t << " after " << attempts
       << " step attempts";
    throw IntegrationFailure(os.str(), path, attempts);
  };

  auto eval = [&](const Vec6& u, double tau) {
    return stage_twist(field, z, u, tau, convention);
  };

  while (t < 1.0) {
    if (++attempts > spec.max_steps) fail("exceeded max_steps");
    if (h < kMinStep) fail("step size underflow");
    h = std::min(h, 1.0 - t);

    const Vec6 k1 = eval(Vec6::Zero(), t);
    const Vec6 k2 = eval(Vec6(h * a21 * k1), t + c2 * h);
    const Vec6 k3 = eval(Vec6(h * (a31 * k1 + a32 * k2)), t + c3 * h);
    const Vec6 k4 = eval(Vec6(h * (a41 * k1 + a42 * k2 + a43 * k3)), t + c4 * h);
    const Vec6 k5 = eval(
        Vec6(h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4)), t + c5 * h);
    const Vec6 k6 = eval(
        Vec6(h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5)),
        t + h);
    const Vec6 u5 = h * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
    const Vec6 k7 = eval(u5, t + h);
    const Vec6 u4 =
        h * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);

    double err = 0.0;
    for (int i = 0; i < 6; ++i) {
      const double scale = spec.atol + spec.rtol * std::abs(u5[i]);
      err = std::max(err, std::abs(u5[i] - u4[i]) / scale);
    }

    if (err <= 1.0) {
      z = local_offset(z, u5, convention);
      t = (1.0 - t <= h * (1.0 + 1e-12)) ? 1.0 : t + h;
      path.times.push_back(t);
      path.poses.push_back(z);
    }
    const double factor =
        err > 0.0 ? 0.9 * std::pow(err, -0.2) : 5.0;
    h *= std::clamp(factor, 0.2, 5.0);
  }
  return path;
}

}  // namespace

Pose step_exp(const Pose& z, const Twist& xi, double h,
              StepConvention convention) {
  return local_offset(z, Vec6(h * xi.vector()), convention);
}

FlowPath integrate_field(const DriftField& field, const Pose& z0,
                         const SolverSpec& spec, StepConvention convention) {
  validate_spec(spec);
  if (spec.kind == SolverKind::rk45) {
    return integrate_rk45(field, z0, spec, convention);
  }
  return integrate_fixed(field, z0, spec, convention);
}

FlowPath integrate(const DriftModel& model, const Pose& z0,
                   const ObsContext& ctx, const SolverSpec& spec,
                   StepConvention convention) {
  const DriftField field = [&model, &ctx](const Pose& z, double t) {
    return drift(model, z, t, ctx);
  };
  return integrate_field(field, z0, spec, convention);
}

FlowPath integrate(const DriftModel& model, const Pose& z0,
                   const PointCloud& cloud, const SolverSpec& spec,
                   StepConvention convention) {
  return integrate(model, z0, make_obs_context(cloud), spec, convention);
}

double straightness(const FlowPath& path) {
  if (path.poses.size() < 3) return 0.0;
  const Pose& z0 = path.poses.front();
  const Pose& z1 = path.poses.back();
  const double t0 = path.times.front();
  const double span = path.times.back() - t0;
  double worst = 0.0;
  for (size_t i = 1; i + 1 < path.poses.size(); ++i) {
    const double tau = (path.times[i] - t0) / span;
    worst = std::max(worst, d_geo(path.poses[i], geodesic_interp(z0, z1, tau)));
  }
  return worst;
}

void write_flow_path_csv(const std::filesystem::path& path,
                         const FlowPath& flow) {
  std::ofstream out(path);
  if (!out) {
    throw FormatError("write_flow_path_csv: cannot open " + path.string());
  }
  out << "t";
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) {
      out << ",m" << r << c;
    }
  }
  out << "\n";
  char buf[32];
  for (size_t i = 0; i < flow.poses.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.17g", flow.times[i]);
    out << buf;
    const Mat4 m = flow.poses[i].homogeneous();
    for (int r = 0; r < 4; ++r) {
      for (int c = 0; c < 4; ++c) {
        std::snprintf(buf, sizeof(buf), "%.17g", m(r, c));
        out << ',' << buf;
      }
    }
    out << "\n";
  }
}

}  // namespace se3flow
