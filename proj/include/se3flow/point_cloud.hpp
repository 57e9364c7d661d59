// Copyright (C) 2026 The se3flow authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>

#include "se3flow/geometry.hpp"

namespace se3flow {

// An observation point cloud, one 3D point per row.
struct PointCloud {
  Eigen::Matrix<double, Eigen::Dynamic, 3> points;

  int size() const { return static_cast<int>(points.rows()); }
};

// Applies a rigid transform to every point.
inline PointCloud transform_cloud(const Pose& g, const PointCloud& cloud) {
  PointCloud out;
  out.points = (cloud.points * g.rotation.matrix().transpose()).rowwise() +
               g.translation.transpose();
  return out;
}

}  // namespace se3flow
