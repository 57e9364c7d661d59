// Copyright (C) 2026 The se3flow authors
// SPDX-License-Identifier: Apache-2.0
//
// Geometry kernel tests. Closed-form expectations are derived in-test from
// independent routes: Eigen's dense matrix exponential/logarithm, axis-angle
// construction, and hand-derived analytic cases.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include <unsupported/Eigen/MatrixFunctions>

#include "se3flow/geometry.hpp"

using namespace se3flow;

namespace {

std::mt19937_64 rng(20260814ULL);

Vec3 random_unit(std::mt19937_64& g) {
  std::normal_distribution<double> n(0.0, 1.0);
  Vec3 v(n(g), n(g), n(g));
  while (v.norm() < 1e-6) v = Vec3(n(g), n(g), n(g));
  return v.normalized();
}

Twist random_twist(std::mt19937_64& g, double max_angle) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const Vec3 omega = random_unit(g) * (u(g) * max_angle);
  const Vec3 rho = Vec3(2.0 * u(g) - 1.0, 2.0 * u(g) - 1.0, 2.0 * u(g) - 1.0);
  return Twist(omega, rho);
}

Pose random_pose(std::mt19937_64& g, double max_angle = M_PI - 0.1) {
  return exp_map(random_twist(g, max_angle));
}

Rotation rot_z(double angle) {
  return so3_exp(Vec3(0.0, 0.0, angle));
}

}  // namespace

TEST_CASE("hat places components in the documented cells") {
  const Twist x(Vec3(0, 0, 1), Vec3::Zero());
  const Mat4 m = hat(x).matrix();
  CHECK(m(0, 1) == -1.0);
  CHECK(m(1, 0) == 1.0);
  CHECK(m(0, 0) == 0.0);
  CHECK(m.row(3).norm() == 0.0);

  const Twist y(Vec3(1, 2, 3), Vec3(4, 5, 6));
  const Mat4 h = hat(y).matrix();
  CHECK(h(2, 1) == 1.0);
  CHECK(h(0, 2) == 2.0);
  CHECK(h(1, 0) == 3.0);
  CHECK(h(0, 3) == 4.0);
  CHECK(h(1, 3) == 5.0);
  CHECK(h(2, 3) == 6.0);
}

TEST_CASE("hat/vee round-trip is exact") {
  for (int i = 0; i < 100; ++i) {
    const Twist x = random_twist(rng, 3.0);
    const Twist back = vee(hat(x));
    CHECK((back.vector() - x.vector()).norm() == 0.0);
  }
}

TEST_CASE("TwistMatrix rejects skew violations and nonzero bottom rows") {
  Mat4 m = hat(Twist(Vec3(0.3, -0.2, 0.9), Vec3(1, 2, 3))).matrix();
  m(0, 1) += 1e-3;
  CHECK_THROWS_AS(TwistMatrix{m}, std::invalid_argument);

  Mat4 ok = hat(Twist(Vec3(0.3, -0.2, 0.9), Vec3(1, 2, 3))).matrix();
  ok(3, 3) = 1e-15;
  CHECK_THROWS_AS(TwistMatrix{ok}, std::invalid_argument);
}

TEST_CASE("Rotation constructor validates orthonormality and handedness") {
  Mat3 m = rot_z(0.7).matrix();
  CHECK_NOTHROW(Rotation{m});
  m(0, 0) += 1e-6;
  CHECK_THROWS_AS(Rotation{m}, std::invalid_argument);

  Mat3 reflect = Mat3::Identity();
  reflect(2, 2) = -1.0;
  CHECK_THROWS_AS(Rotation{reflect}, std::invalid_argument);
}

TEST_CASE("exp_map quarter turn about z") {
  const Pose p = exp_map(Twist(Vec3(0, 0, M_PI / 2), Vec3::Zero()));
  Mat3 expected;
  expected << 0, -1, 0,
              1,  0, 0,
              0,  0, 1;
  CHECK((p.rotation.matrix() - expected).cwiseAbs().maxCoeff() < 1e-15);
  CHECK(p.translation.norm() == 0.0);
}

TEST_CASE("exp_map agrees with the dense matrix exponential") {
  for (int i = 0; i < 200; ++i) {
    const Twist x = random_twist(rng, 6.0);  // also beyond one turn: total map
    const Mat4 direct = exp_map(x).homogeneous();
    const Mat4 oracle = hat(x).matrix().exp();
    CHECK((direct - oracle).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("log_map agrees with the dense matrix logarithm") {
  for (int i = 0; i < 200; ++i) {
    const Pose p = random_pose(rng, M_PI - 0.2);
    const Vec6 direct = log_map(p).vector();
    const Mat4 oracle = p.homogeneous().log();
    const Mat3 top = oracle.topLeftCorner<3, 3>();
    const Mat3 anti = 0.5 * (top - top.transpose());
    Vec6 o;
    o << anti(2, 1), anti(0, 2), anti(1, 0), oracle.topRightCorner<3, 1>();
    CHECK((direct - o).norm() < 1e-10);
  }
}

TEST_CASE("exp/log round-trip within 1e-9 up to pi - 0.1") {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const Twist x = random_twist(rng, M_PI - 0.1);
    const Twist back = log_map(exp_map(x));
    worst = std::max(worst, (back.vector() - x.vector()).norm());
  }
  CHECK(worst < 1e-9);
}

TEST_CASE("round-trip stays accurate approaching the cut locus guard") {
  for (double angle : {3.0, 3.1, M_PI - 1e-4, M_PI - 2e-6}) {
    const Vec3 axis = random_unit(rng);
    const Rotation r(Eigen::AngleAxisd(angle, axis).toRotationMatrix());
    const Rotation back = so3_exp(so3_log(r));
    CHECK((back.matrix() - r.matrix()).cwiseAbs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("small-angle branch is smooth and exact at zero") {
  CHECK(log_map(Pose::identity()).vector().norm() == 0.0);
  for (double angle : {1e-12, 1e-9, 1e-8, 1e-7, 1e-5}) {
    const Twist x(random_unit(rng) * angle, Vec3(0.2, -0.4, 0.1));
    const Twist back = log_map(exp_map(x));
    CHECK((back.vector() - x.vector()).norm() < 1e-12);
  }
}

TEST_CASE("log_map throws CutLocusError within 1e-6 of pi") {
  const Vec3 axis = random_unit(rng);
  const Rotation at_pi(Eigen::AngleAxisd(M_PI, axis).toRotationMatrix());
  CHECK_THROWS_AS(log_map(Pose(at_pi, Vec3::Zero())), CutLocusError);

  const Rotation inside(
      Eigen::AngleAxisd(M_PI - 1e-7, axis).toRotationMatrix());
  CHECK_THROWS_AS(so3_log(inside), CutLocusError);

  const Rotation outside(
      Eigen::AngleAxisd(M_PI - 1e-5, axis).toRotationMatrix());
  CHECK_NOTHROW(so3_log(outside));
}

TEST_CASE("left Jacobian inverse actually inverts the left Jacobian") {
  for (int i = 0; i < 100; ++i) {
    const Vec3 omega = random_unit(rng) * (0.001 + 3.0 * i / 100.0);
    const Mat3 prod = so3_left_jacobian_inverse(omega) * so3_left_jacobian(omega);
    CHECK((prod - Mat3::Identity()).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("compose/inverse satisfy the group laws") {
  for (int i = 0; i < 100; ++i) {
    const Pose a = random_pose(rng), b = random_pose(rng), c = random_pose(rng);
    const Mat4 lhs = compose(compose(a, b), c).homogeneous();
    const Mat4 rhs = compose(a, compose(b, c)).homogeneous();
    CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-13);

    const Mat4 id = compose(a, inverse(a)).homogeneous();
    CHECK((id - Mat4::Identity()).cwiseAbs().maxCoeff() < 1e-13);
  }
}

TEST_CASE("geodesic_diff of a pure translation") {
  const Pose x(Rotation::identity(), Vec3(1, 0, 0));
  const Twist d = geodesic_diff(x, Pose::identity());
  Vec6 expected;
  expected << 0, 0, 0, 1, 0, 0;
  CHECK((d.vector() - expected).norm() == 0.0);
}

TEST_CASE("geodesic_diff recovers the relative transform") {
  for (int i = 0; i < 100; ++i) {
    const Pose x = random_pose(rng), y = random_pose(rng);
    if (rotation_angle(x.rotation * y.rotation.inverse()) > M_PI - 1e-3) {
      continue;
    }
    const Twist d = geodesic_diff(x, y);
    const Mat4 rebuilt = compose(exp_map(d), y).homogeneous();
    CHECK((rebuilt - x.homogeneous()).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("geodesic_interp endpoints, fractions, and domain") {
  const Pose h0 = Pose::identity();
  const Pose h1(rot_z(M_PI / 2), Vec3::Zero());

  const Pose third = geodesic_interp(h0, h1, 1.0 / 3.0);
  CHECK((third.rotation.matrix() - rot_z(M_PI / 6).matrix())
            .cwiseAbs()
            .maxCoeff() < 1e-12);

  CHECK(d_geo(geodesic_interp(h0, h1, 0.0), h0) < 1e-15);
  CHECK(d_geo(geodesic_interp(h0, h1, 1.0), h1) < 1e-12);
  CHECK_THROWS_AS(geodesic_interp(h0, h1, 1.5), std::invalid_argument);
  CHECK_THROWS_AS(geodesic_interp(h0, h1, -0.1), std::invalid_argument);

  const Pose at_pi(so3_exp(Vec3(0, 0, M_PI)), Vec3::Zero());
  CHECK_THROWS_AS(geodesic_interp(h0, at_pi, 0.5), CutLocusError);
}

TEST_CASE("geodesic_interp spaces nodes equally") {
  for (int i = 0; i < 20; ++i) {
    const Pose h0 = random_pose(rng, 1.0);
    const Pose h1 = compose(exp_map(random_twist(rng, 2.0)), h0);
    const int n = 6;
    double first = -1.0;
    for (int k = 0; k + 1 < n; ++k) {
      const Pose a = geodesic_interp(h0, h1, double(k) / (n - 1));
      const Pose b = geodesic_interp(h0, h1, double(k + 1) / (n - 1));
      const double step = d_geo(a, b);
      if (first < 0.0) {
        first = step;
      } else {
        CHECK(step == doctest::Approx(first).epsilon(1e-9));
      }
    }
  }
}

TEST_CASE("adjoint of a pure rotation is block diagonal") {
  const Rotation r = rot_z(0.8);
  const Mat6 ad = adjoint(Pose(r, Vec3::Zero()));
  CHECK((ad.topLeftCorner<3, 3>() - r.matrix()).cwiseAbs().maxCoeff() == 0.0);
  CHECK((ad.bottomRightCorner<3, 3>() - r.matrix()).cwiseAbs().maxCoeff() ==
        0.0);
  CHECK(ad.topRightCorner<3, 3>().cwiseAbs().maxCoeff() == 0.0);
  CHECK(ad.bottomLeftCorner<3, 3>().cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("adjoint satisfies hat(Ad x) = p hat(x) p^-1") {
  for (int i = 0; i < 100; ++i) {
    const Pose p = random_pose(rng);
    const Twist x = random_twist(rng, 2.0);
    const Mat4 lhs = hat(Twist::from_vector(adjoint(p) * x.vector())).matrix();
    const Mat4 rhs =
        p.homogeneous() * hat(x).matrix() * inverse(p).homogeneous();
    CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("d_geo analytic cases") {
  const Pose a = Pose::identity();
  CHECK(d_geo(a, a) == 0.0);

  const Pose b(rot_z(M_PI / 2), Vec3(3, 4, 0));
  const double expected = std::sqrt(M_PI * M_PI / 4.0 + 25.0);
  CHECK(std::abs(d_geo(a, b) - expected) < 1e-9);

  const Pose rot_only(rot_z(M_PI / 2), Vec3::Zero());
  CHECK(std::abs(d_geo(a, rot_only) - M_PI / 2) < 1e-12);

  const Pose trans_only(Rotation::identity(), Vec3(3, 4, 0));
  CHECK(std::abs(d_geo(a, trans_only) - 5.0) < 1e-12);
}

TEST_CASE("d_geo is symmetric, total at pi, and left invariant") {
  for (int i = 0; i < 100; ++i) {
    const Pose x = random_pose(rng), y = random_pose(rng);
    CHECK(d_geo(x, y) == doctest::Approx(d_geo(y, x)).epsilon(1e-12));

    const Pose g = random_pose(rng);
    CHECK(std::abs(d_geo(compose(g, x), compose(g, y)) - d_geo(x, y)) < 1e-9);
  }
  // The distance (unlike the log) is well defined at rotation angle pi.
  const Pose at_pi(so3_exp(Vec3(M_PI, 0, 0)), Vec3(1, 0, 0));
  CHECK(std::abs(d_geo(Pose::identity(), at_pi) -
                 std::sqrt(M_PI * M_PI + 1.0)) < 1e-9);
}

TEST_CASE("Pose homogeneous round-trip and bottom-row validation") {
  const Pose p = random_pose(rng);
  const Pose back = Pose::from_homogeneous(p.homogeneous());
  CHECK((back.homogeneous() - p.homogeneous()).cwiseAbs().maxCoeff() == 0.0);

  Mat4 bad = p.homogeneous();
  bad(3, 0) = 1e-12;
  CHECK_THROWS_AS(Pose::from_homogeneous(bad), std::invalid_argument);
}

TEST_CASE("exp_map rejects non-finite input but accepts huge twists") {
  Twist bad(Vec3(0, 0, std::nan("")), Vec3::Zero());
  CHECK_THROWS_AS(exp_map(bad), std::invalid_argument);

  const Twist huge(Vec3(40.0, -3.0, 11.0), Vec3(100, -50, 2));
  const Pose p = exp_map(huge);
  CHECK((p.rotation.matrix().transpose() * p.rotation.matrix() -
         Mat3::Identity())
            .cwiseAbs()
            .maxCoeff() < 1e-12);
}
