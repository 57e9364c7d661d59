// Copyright (C) 2026 The se3flow authors
// SPDX-License-Identifier: Apache-2.0

#include "se3flow/geometry.hpp"

#include <cmath>
#include <sstream>

namespace se3flow {

namespace {

void check_finite(const Twist& x, const char* where) {
  if (!x.finite()) {
    throw std::invalid_argument(std::string(where) + ": non-finite twist");
  }
}

// Extracts v from the skew part of m, assuming m is (close to) skew.
Vec3 unskew(const Mat3& m) {
  return Vec3(m(2, 1), m(0, 2), m(1, 0));
}

}  // namespace

Rotation::Rotation(const Mat3& m) : m_(m) {
  if (!m.allFinite()) {
    throw std::invalid_argument("Rotation: non-finite matrix");
  }
  const double ortho = (m.transpose() * m - Mat3::Identity()).cwiseAbs().maxCoeff();
  if (ortho > kMatrixCheckTol) {
    std::ostringstream os;
    os << "Rotation: matrix not orthonormal (|R^T R - I|_max = " << ortho << ")";
    throw std::invalid_argument(os.str());
  }
  const double det = m.determinant();
  if (std::abs(det - 1.0) > kMatrixCheckTol) {
    std::ostringstream os;
    os << "Rotation: determinant " << det << " != +1";
    throw std::invalid_argument(os.str());
  }
}

Rotation Rotation::inverse() const {
  return Rotation(Mat3(m_.transpose()), Unchecked{});
}

Rotation Rotation::operator*(const Rotation& rhs) const {
  return Rotation(Mat3(m_ * rhs.m_), Unchecked{});
}

TwistMatrix::TwistMatrix(const Mat4& m) : m_(m) {
  if (!m.allFinite()) {
    throw std::invalid_argument("TwistMatrix: non-finite matrix");
  }
  const Mat3 top = m.topLeftCorner<3, 3>();
  const double sym = (top + top.transpose()).cwiseAbs().maxCoeff();
  if (sym > kMatrixCheckTol) {
    std::ostringstream os;
    os << "TwistMatrix: top-left block not skew-symmetric (|S + S^T|_max = "
       << sym << ")";
    throw std::invalid_argument(os.str());
  }
  if (m(3, 0) != 0.0 || m(3, 1) != 0.0 || m(3, 2) != 0.0 || m(3, 3) != 0.0) {
    throw std::invalid_argument("TwistMatrix: bottom row must be exactly zero");
  }
}

Mat4 Pose::homogeneous() const {
  Mat4 m = Mat4::Zero();
  m.topLeftCorner<3, 3>() = rotation.matrix();
  m.topRightCorner<3, 1>() = translation;
  m(3, 3) = 1.0;
  return m;
}

Pose Pose::from_homogeneous(const Mat4& m) {
  if (m(3, 0) != 0.0 || m(3, 1) != 0.0 || m(3, 2) != 0.0 || m(3, 3) != 1.0) {
    throw std::invalid_argument(
        "Pose: bottom row of homogeneous matrix must be exactly (0, 0, 0, 1)");
  }
  return Pose(Rotation(Mat3(m.topLeftCorner<3, 3>())),
              Vec3(m.topRightCorner<3, 1>()));
}

Pose compose(const Pose& a, const Pose& b) {
  return Pose(a.rotation * b.rotation,
              a.rotation * b.translation + a.translation);
}

Pose inverse(const Pose& p) {
  const Rotation rinv = p.rotation.inverse();
  return Pose(rinv, -(rinv * p.translation));
}

Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
      -v.y(), v.x(), 0.0;
  return m;
}

Rotation so3_exp(const Vec3& omega) {
  if (!omega.allFinite()) {
    throw std::invalid_argument("so3_exp: non-finite input");
  }
  const double theta2 = omega.squaredNorm();
  const double theta = std::sqrt(theta2);
  const Mat3 w = skew(omega);
  double a;  // sin(theta) / theta
  double b;  // (1 - cos(theta)) / theta^2
  if (theta < kSmallAngle) {
    a = 1.0 - theta2 / 6.0;
    b = 0.5 - theta2 / 24.0;
  } else {
    a = std::sin(theta) / theta;
    const double half_sin = std::sin(0.5 * theta);
    b = 2.0 * half_sin * half_sin / theta2;
  }
  const Mat3 r = Mat3::Identity() + a * w + b * (w * w);
  return Rotation(r, Rotation::Unchecked{});
}

double rotation_angle(const Rotation& r) {
  const Mat3& m = r.matrix();
  const Vec3 s = unskew(0.5 * (m - m.transpose()));
  const double cos_theta = 0.5 * (m.trace() - 1.0);
  return std::atan2(s.norm(), cos_theta);
}

Vec3 so3_log(const Rotation& r) {
  const Mat3& m = r.matrix();
  const Vec3 s = unskew(0.5 * (m - m.transpose()));  // sin(theta) * axis
  const double sin_norm = s.norm();
  const double cos_theta = 0.5 * (m.trace() - 1.0);
  const double theta = std::atan2(sin_norm, cos_theta);

  if (theta >= M_PI - kCutLocusMargin) {
    std::ostringstream os;
    os << "so3_log: rotation angle " << theta
       << " is on the cut locus (within " << kCutLocusMargin << " of pi)";
    throw CutLocusError(os.str());
  }
  if (theta < kSmallAngle) {
    return s * (1.0 + theta * theta / 6.0);
  }
  if (theta > 3.0) {
    // Near pi the skew part is tiny; recover the axis from the symmetric
    // part, where u u^T = (R + R^T - 2 cos(theta) I) / (2 (1 - cos(theta))),
    // and take the sign from the skew part (sin(theta) > 0 below pi).
    const Mat3 uut =
        (m + m.transpose() - 2.0 * cos_theta * Mat3::Identity()) /
        (2.0 * (1.0 - cos_theta));
    int col = 0;
    uut.diagonal().maxCoeff(&col);
    Vec3 u = uut.col(col).normalized();
    if (u.dot(s) < 0.0) u = -u;
    return theta * u;
  }
  return s * (theta / sin_norm);
}

Mat3 so3_left_jacobian(const Vec3& omega) {
  const double theta2 = omega.squaredNorm();
  const double theta = std::sqrt(theta2);
  const Mat3 w = skew(omega);
  double b;  // (1 - cos(theta)) / theta^2
  double c;  // (theta - sin(theta)) / theta^3
  if (theta < kSmallAngle) {
    b = 0.5 - theta2 / 24.0;
    c = 1.0 / 6.0 - theta2 / 120.0;
  } else {
    const double half_sin = std::sin(0.5 * theta);
    b = 2.0 * half_sin * half_sin / theta2;
    c = (theta - std::sin(theta)) / (theta2 * theta);
  }
  return Mat3::Identity() + b * w + c * (w * w);
}

Mat3 so3_left_jacobian_inverse(const Vec3& omega) {
  const double theta2 = omega.squaredNorm();
  const double theta = std::sqrt(theta2);
  const Mat3 w = skew(omega);
  double d;  // (1 - theta/(2 tan(theta/2))) / theta^2
  if (theta < kSmallAngle) {
    d = 1.0 / 12.0 + theta2 / 720.0;
  } else {
    const double half = 0.5 * theta;
    d = (1.0 - half * std::cos(half) / std::sin(half)) / theta2;
  }
  return Mat3::Identity() - 0.5 * w + d * (w * w);
}

TwistMatrix hat(const Twist& x) {
  check_finite(x, "hat");
  Mat4 m = Mat4::Zero();
  m.topLeftCorner<3, 3>() = skew(x.omega);
  m.topRightCorner<3, 1>() = x.rho;
  return TwistMatrix(m, TwistMatrix::Unchecked{});
}

Twist vee(const TwistMatrix& m) {
  const Mat4& h = m.matrix();
  const Mat3 top = h.topLeftCorner<3, 3>();
  return Twist(unskew(0.5 * (top - top.transpose())),
               Vec3(h.topRightCorner<3, 1>()));
}

Pose exp_map(const Twist& x) {
  check_finite(x, "exp_map");
  return Pose(so3_exp(x.omega), so3_left_jacobian(x.omega) * x.rho);
}

Twist log_map(const Pose& p) {
  const Vec3 omega = so3_log(p.rotation);
  return Twist(omega, so3_left_jacobian_inverse(omega) * p.translation);
}

Twist geodesic_diff(const Pose& x, const Pose& y) {
  return log_map(compose(x, inverse(y)));
}

Pose geodesic_interp(const Pose& h0, const Pose& h1, double t) {
  if (!(t >= 0.0 && t <= 1.0)) {
    std::ostringstream os;
    os << "geodesic_interp: t = " << t << " outside [0, 1]";
    throw std::invalid_argument(os.str());
  }
  const Twist delta = log_map(compose(h1, inverse(h0)));
  return compose(exp_map(t * delta), h0);
}

Mat6 adjoint(const Pose& p) {
  const Mat3& r = p.rotation.matrix();
  Mat6 ad = Mat6::Zero();
  ad.topLeftCorner<3, 3>() = r;
  ad.bottomRightCorner<3, 3>() = r;
  ad.bottomLeftCorner<3, 3>() = skew(p.translation) * r;
  return ad;
}

double d_geo(const Pose& t, const Pose& t_hat) {
  const double ang = rotation_angle(t.rotation.inverse() * t_hat.rotation);
  const double trans = (t_hat.translation - t.translation).norm();
  return std::sqrt(ang * ang + trans * trans);
}

}  // namespace se3flow
