// Copyright (C) 2026 The se3flow authors
// SPDX-License-Identifier: Apache-2.0
//
// Exact SE(3) Lie-group kernel: rotations, poses, twists, hat/vee, the
// exponential and logarithm maps, geodesic difference/interpolation, the
// adjoint, and the geodesic pose distance used throughout evaluation.
#pragma once

#include <Eigen/Dense>

#include "se3flow/errors.hpp"

namespace se3flow {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat6 = Eigen::Matrix<double, 6, 6>;

// Rotation angle below which closed-form Rodrigues/Jacobian coefficients are
// replaced by their two-term Taylor expansions.
inline constexpr double kSmallAngle = 1e-8;
// Rotations within this margin of pi are treated as on the cut locus.
inline constexpr double kCutLocusMargin = 1e-6;
// Tolerance for validating orthonormality / skew-symmetry of raw matrices.
inline constexpr double kMatrixCheckTol = 1e-9;

// A 3x3 rotation matrix, validated orthonormal with det +1 on construction.
class Rotation {
 public:
  Rotation() : m_(Mat3::Identity()) {}
  // Validates m^T m = I and det(m) = 1 within kMatrixCheckTol; throws
  // std::invalid_argument otherwise.
  explicit Rotation(const Mat3& m);

  static Rotation identity() { return Rotation(); }

  const Mat3& matrix() const { return m_; }
  Rotation inverse() const;
  Rotation operator*(const Rotation& rhs) const;
  Vec3 operator*(const Vec3& v) const { return m_ * v; }

 private:
  struct Unchecked {};
  Rotation(const Mat3& m, Unchecked) : m_(m) {}

  Mat3 m_;

  friend Rotation so3_exp(const Vec3& omega);
};

// A twist (omega, rho): angular part first, translational part second.
struct Twist {
  Vec3 omega = Vec3::Zero();
  Vec3 rho = Vec3::Zero();

  Twist() = default;
  Twist(const Vec3& w, const Vec3& r) : omega(w), rho(r) {}

  static Twist from_vector(const Vec6& v) {
    return Twist(v.head<3>(), v.tail<3>());
  }
  Vec6 vector() const {
    Vec6 v;
    v << omega, rho;
    return v;
  }
  double norm() const { return vector().norm(); }
  bool finite() const { return vector().allFinite(); }
};

inline Twist operator*(double s, const Twist& x) {
  return Twist(s * x.omega, s * x.rho);
}
inline Twist operator+(const Twist& a, const Twist& b) {
  return Twist(a.omega + b.omega, a.rho + b.rho);
}
inline Twist operator-(const Twist& a, const Twist& b) {
  return Twist(a.omega - b.omega, a.rho - b.rho);
}

// The 4x4 matrix form of a twist: [[omega]x, rho; 0, 0]. Construction from a
// raw matrix validates the skew block (within kMatrixCheckTol) and the
// exactly-zero bottom row.
class TwistMatrix {
 public:
  explicit TwistMatrix(const Mat4& m);
  const Mat4& matrix() const { return m_; }

 private:
  struct Unchecked {};
  TwistMatrix(const Mat4& m, Unchecked) : m_(m) {}

  Mat4 m_;

  friend TwistMatrix hat(const Twist& x);
};

// A rigid transform (rotation, translation).
struct Pose {
  Rotation rotation;
  Vec3 translation = Vec3::Zero();

  Pose() = default;
  Pose(const Rotation& r, const Vec3& t) : rotation(r), translation(t) {}

  static Pose identity() { return Pose(); }

  // 4x4 homogeneous matrix with bottom row exactly (0, 0, 0, 1).
  Mat4 homogeneous() const;
  // Validates the bottom row is exactly (0, 0, 0, 1) and the rotation block
  // is orthonormal; throws std::invalid_argument otherwise.
  static Pose from_homogeneous(const Mat4& m);

  Vec3 operator*(const Vec3& p) const {
    return rotation * p + translation;
  }
};

// Group composition a then... (a * b means "apply b first, then a").
Pose compose(const Pose& a, const Pose& b);
inline Pose operator*(const Pose& a, const Pose& b) { return compose(a, b); }
Pose inverse(const Pose& p);

// [v]x, the skew-symmetric cross-product matrix.
Mat3 skew(const Vec3& v);

// SO(3) exponential (Rodrigues); total on finite inputs.
Rotation so3_exp(const Vec3& omega);
// SO(3) logarithm. Throws CutLocusError within kCutLocusMargin of angle pi.
Vec3 so3_log(const Rotation& r);
// Rotation angle in [0, pi]; total (well defined even at the cut locus).
double rotation_angle(const Rotation& r);

// Left Jacobian of SO(3) and its inverse (used by the SE(3) exp/log).
Mat3 so3_left_jacobian(const Vec3& omega);
Mat3 so3_left_jacobian_inverse(const Vec3& omega);

TwistMatrix hat(const Twist& x);
Twist vee(const TwistMatrix& m);

// SE(3) exponential map; total on finite twists.
Pose exp_map(const Twist& x);
// SE(3) logarithm map. Throws CutLocusError near rotation angle pi.
Twist log_map(const Pose& p);

// Geodesic difference x (-) y = vee(log(x * y^-1)).
Twist geodesic_diff(const Pose& x, const Pose& y);
// Geodesic interpolation exp(t * log(h1 * h0^-1)) * h0 for t in [0, 1].
// Throws std::invalid_argument for t outside [0, 1].
Pose geodesic_interp(const Pose& h0, const Pose& h1, double t);

// Adjoint of p = (R, t) acting on (omega, rho)-ordered twists:
//   [ R       0 ]
//   [ [t]x R  R ]
// satisfying hat(adjoint(p) * x) = p * hat(x) * p^-1.
Mat6 adjoint(const Pose& p);

// Geodesic pose distance: sqrt(angle(R^T Rhat)^2 + |that - t|^2). Total.
double d_geo(const Pose& t, const Pose& t_hat);

}  // namespace se3flow
