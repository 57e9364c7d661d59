// Copyright (C) 2026 The se3flow authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "se3flow/geometry.hpp"
#include "se3flow/point_cloud.hpp"

namespace se3flow {

// Synthetic manipulation tasks: each demonstration is a point-cloud
// observation plus a ten-step end-effector pose trajectory and a gripper
// channel.
enum class Task { painting, door_opening, rotating_triangle };
enum class Split { train, test };

std::string task_name(Task task);
Task task_from_name(const std::string& name);  // FormatError on unknown names
std::string split_name(Split split);
Split split_from_name(const std::string& name);

inline constexpr int kTrajectoryLength = 10;

// Cloud sizes and default demonstration counts per task.
int task_cloud_size(Task task);
int default_demo_count(Task task);

// Largest allowed relative rotation between consecutive trajectory poses
// (and between a training pair's endpoints): keeps log maps away from the
// cut locus with a healthy margin.
inline constexpr double kMaxStepRotation = 0.9 * std::numbers::pi;

struct Demonstration {
  Task task = Task::rotating_triangle;
  PointCloud cloud;
  std::vector<Pose> trajectory;  // length kTrajectoryLength
  std::vector<double> gripper;   // length kTrajectoryLength, values in [0,1]
};

struct Dataset {
  Task task = Task::rotating_triangle;
  Split split = Split::train;
  std::uint64_t seed = 0;
  std::vector<Demonstration> demonstrations;
};

// Generators. Each demonstration draws from its own RNG stream seeded from
// (seed, demo index) so generation order is reproducible and could be
// parallelized without changing output.
Dataset generate_rotating_triangle(std::uint64_t seed, int n);
Dataset generate_door_opening(std::uint64_t seed, int n);
Dataset generate_painting(std::uint64_t seed, int n);
Dataset generate_dataset(Task task, std::uint64_t seed, int n);

// Applies a common rigid transform to the cloud and every trajectory pose.
// Demonstrations are closed under this map.
Demonstration transform_demonstration(const Pose& g, const Demonstration& d);

// Builds a held-out split by re-posing each training demonstration with a
// random rigid offset (rotation at most 60 degrees, translation at most
// 0.3 m) drawn from a stream disjoint from generation.
Dataset make_test_split(const Dataset& train, std::uint64_t seed);

// Throws std::invalid_argument if shapes, gripper range, or the
// consecutive-rotation bound are violated.
void validate_demonstration(const Demonstration& d);

// Versioned little-endian binary container; load(save(ds)) is bit-exact.
// Malformed input raises FormatError naming the byte offset.
void save_dataset(const Dataset& ds, const std::string& path);
Dataset load_dataset(const std::string& path);

// Lossless human-readable export: every number is serialized as a
// full-precision decimal string.
void export_dataset_json(const Dataset& ds, const std::string& path);

}  // namespace se3flow
