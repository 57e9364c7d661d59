// Copyright (C) 2026 The se3flow authors
// SPDX-License-Identifier: Apache-2.0
//
// Task generator tests. Kinematic claims are checked against quantities
// reconstructed purely from the emitted demonstrations (relative rotations,
// circumcircles, polyline lengths), never against generator internals.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <vector>

#include <json.hpp>

#include "se3flow/drift_model.hpp"
#include "se3flow/errors.hpp"
#include "se3flow/tasks.hpp"

using namespace se3flow;
namespace fs = std::filesystem;

namespace {

constexpr double kPi = 3.14159265358979323846;

fs::path temp_file(const char* name) {
  return fs::temp_directory_path() / name;
}

bool demos_identical(const Demonstration& a, const Demonstration& b) {
  if (a.cloud.points != b.cloud.points) return false;
  if (a.trajectory.size() != b.trajectory.size()) return false;
  for (std::size_t k = 0; k < a.trajectory.size(); ++k) {
    if (a.trajectory[k].homogeneous() != b.trajectory[k].homogeneous()) {
      return false;
    }
  }
  return a.gripper == b.gripper;
}

bool datasets_identical(const Dataset& a, const Dataset& b) {
  if (a.task != b.task || a.split != b.split || a.seed != b.seed) return false;
  if (a.demonstrations.size() != b.demonstrations.size()) return false;
  for (std::size_t i = 0; i < a.demonstrations.size(); ++i) {
    if (!demos_identical(a.demonstrations[i], b.demonstrations[i])) {
      return false;
    }
  }
  return true;
}

// Circumcenter of three points on a common circle (any plane).
Vec3 circumcenter(const Vec3& p0, const Vec3& p1, const Vec3& p2) {
  const Vec3 u = p1 - p0, v = p2 - p0;
  const Vec3 w = u.cross(v);
  const double d = 2.0 * w.squaredNorm();
  return p0 + (v.squaredNorm() * w.cross(u) + u.squaredNorm() * v.cross(w)) / d;
}

Pose random_pose(std::mt19937_64& rng, double max_angle, double max_trans) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Vec3 axis(gauss(rng), gauss(rng), gauss(rng));
  axis.normalize();
  const Vec3 t(max_trans * (2.0 * unit(rng) - 1.0),
               max_trans * (2.0 * unit(rng) - 1.0),
               max_trans * (2.0 * unit(rng) - 1.0));
  return Pose(so3_exp(max_angle * unit(rng) * axis), t);
}

}  // namespace

TEST_CASE("task and split names round-trip; shape constants are pinned") {
  for (Task task : {Task::painting, Task::door_opening, Task::rotating_triangle}) {
    CHECK(task_from_name(task_name(task)) == task);
  }
  for (Split split : {Split::train, Split::test}) {
    CHECK(split_from_name(split_name(split)) == split);
  }
  CHECK_THROWS_AS(task_from_name("juggling"), FormatError);
  CHECK_THROWS_AS(split_from_name("validation"), FormatError);
  CHECK(task_cloud_size(Task::painting) == 256);
  CHECK(task_cloud_size(Task::door_opening) == 128);
  CHECK(task_cloud_size(Task::rotating_triangle) == 100);
  CHECK(default_demo_count(Task::painting) == 31);
  CHECK(default_demo_count(Task::door_opening) == 10);
  CHECK(default_demo_count(Task::rotating_triangle) == 500);
  CHECK(kTrajectoryLength == 10);
}

TEST_CASE("generation is deterministic per seed and validates its invariants") {
  for (Task task : {Task::painting, Task::door_opening, Task::rotating_triangle}) {
    const Dataset a = generate_dataset(task, 71, 6);
    const Dataset b = generate_dataset(task, 71, 6);
    CHECK(datasets_identical(a, b));
    const Dataset c = generate_dataset(task, 72, 6);
    CHECK_FALSE(datasets_identical(a, c));
    CHECK(a.task == task);
    CHECK(a.split == Split::train);
    CHECK(a.seed == 71);
    CHECK(int(a.demonstrations.size()) == 6);
    for (const Demonstration& d : a.demonstrations) {
      CHECK_NOTHROW(validate_demonstration(d));
      CHECK(d.cloud.size() == task_cloud_size(task));
    }
  }
  CHECK_THROWS_AS(generate_rotating_triangle(1, 0), std::invalid_argument);
}

TEST_CASE("rotating triangle: equal geodesic spacing about one fixed axis") {
  const Dataset ds = generate_rotating_triangle(2026, 8);
  for (const Demonstration& d : ds.demonstrations) {
    std::vector<double> step_angles;
    std::vector<double> step_dgeo;
    Vec3 first_axis = Vec3::Zero();
    for (int k = 0; k + 1 < kTrajectoryLength; ++k) {
      const Rotation rel =
          d.trajectory[k + 1].rotation * d.trajectory[k].rotation.inverse();
      const Vec3 lg = so3_log(rel);
      step_angles.push_back(lg.norm());
      step_dgeo.push_back(d_geo(d.trajectory[k], d.trajectory[k + 1]));
      if (k == 0) {
        first_axis = lg.normalized();
      } else {
        CHECK((lg.normalized() - first_axis).norm() < 1e-9);
      }
    }
    for (double s : step_dgeo) CHECK(std::abs(s - step_dgeo[0]) < 1e-9);
    // Total rotation equals the sum of per-step rotations (fixed axis).
    const Rotation total_rel = d.trajectory.back().rotation *
                               d.trajectory.front().rotation.inverse();
    double sum = 0.0;
    for (double s : step_angles) sum += s;
    CHECK(std::abs(rotation_angle(total_rel) - sum) < 1e-9);
    CHECK(sum >= kPi / 4.0 - 1e-9);
    CHECK(sum <= 3.0 * kPi / 4.0 + 1e-9);
    // The cloud is exactly planar: third principal variance is zero.
    const ObservationFrame f = observation_frame(d.cloud);
    CHECK_FALSE(f.degenerate);
    const Vec3 normal = f.frame.rotation.matrix().col(2);
    double max_off = 0.0;
    const Vec3 centroid = f.frame.translation;
    for (int i = 0; i < d.cloud.size(); ++i) {
      const Vec3 p = d.cloud.points.row(i).transpose();
      max_off = std::max(max_off, std::abs(normal.dot(p - centroid)));
    }
    CHECK(max_off < 1e-9);
  }
}

TEST_CASE("door opening: trajectory is a circular arc about a fixed hinge") {
  const Dataset ds = generate_door_opening(515, 8);
  for (const Demonstration& d : ds.demonstrations) {
    // Per-step relative rotation: one shared axis, equal angles.
    const Rotation rel0 =
        d.trajectory[1].rotation * d.trajectory[0].rotation.inverse();
    const double step = rotation_angle(rel0);
    const Vec3 axis = so3_log(rel0).normalized();
    for (int k = 0; k + 1 < kTrajectoryLength; ++k) {
      const Rotation rel =
          d.trajectory[k + 1].rotation * d.trajectory[k].rotation.inverse();
      CHECK(std::abs(rotation_angle(rel) - step) < 1e-9);
      CHECK((so3_log(rel).normalized() - axis).norm() < 1e-9);
    }
    const double swing = step * (kTrajectoryLength - 1);
    CHECK(swing >= kPi / 6.0 - 1e-9);
    CHECK(swing <= 4.0 * kPi / 9.0 + 1e-9);

    // Positions all lie on one circle about the hinge axis: project onto the
    // plane orthogonal to the recovered axis and check a common circumcenter.
    std::vector<Vec3> proj;
    for (const Pose& h : d.trajectory) {
      proj.push_back(h.translation - axis.dot(h.translation) * axis);
    }
    const Vec3 center = circumcenter(proj[0], proj[4], proj[9]);
    const double radius = (proj[0] - center).norm();
    CHECK(radius >= 0.5 - 1e-9);
    CHECK(radius <= 0.9 + 1e-9);
    for (const Vec3& q : proj) {
      CHECK(std::abs((q - center).norm() - radius) < 1e-9);
    }
    // Chord length ties translation to rotation: |dp| = 2 r sin(step/2).
    for (int k = 0; k + 1 < kTrajectoryLength; ++k) {
      const double chord =
          (d.trajectory[k + 1].translation - d.trajectory[k].translation)
              .norm();
      CHECK(std::abs(chord - 2.0 * radius * std::sin(step / 2.0)) < 1e-9);
    }
    // Continuous arc length swept by the handle.
    CHECK(std::abs(radius * swing - radius * step * 9.0) < 1e-9);
  }
}

TEST_CASE("painting: fixed orientation, in-bounds serpentine of length 0.8") {
  const Dataset ds = generate_painting(88, 8);
  for (const Demonstration& d : ds.demonstrations) {
    for (int k = 1; k < kTrajectoryLength; ++k) {
      const Rotation rel =
          d.trajectory[k].rotation * d.trajectory[0].rotation.inverse();
      CHECK(rotation_angle(rel) < 1e-9);
    }
    double length = 0.0;
    for (int k = 0; k + 1 < kTrajectoryLength; ++k) {
      length +=
          (d.trajectory[k + 1].translation - d.trajectory[k].translation)
              .norm();
    }
    CHECK(std::abs(length - 0.8) < 1e-6);

    // Stroke positions stay within the canvas footprint (+1 cm margin),
    // reconstructed from the cloud's own principal frame.
    const ObservationFrame f = observation_frame(d.cloud);
    CHECK_FALSE(f.degenerate);
    const Mat3 axes = f.frame.rotation.matrix();
    for (const Pose& h : d.trajectory) {
      const Vec3 rel = h.translation - f.frame.translation;
      CHECK(std::abs(axes.col(0).dot(rel)) <= 0.2 + 0.01);
      CHECK(std::abs(axes.col(1).dot(rel)) <= 0.15 + 0.01);
      CHECK(std::abs(axes.col(2).dot(rel)) <= 0.03);
    }
  }
}

TEST_CASE("demonstrations are closed under common rigid transforms") {
  std::mt19937_64 rng(11);
  const Dataset ds = generate_door_opening(99, 3);
  for (const Demonstration& d : ds.demonstrations) {
    const Pose g = random_pose(rng, 3.0, 2.0);
    const Demonstration moved = transform_demonstration(g, d);
    CHECK_NOTHROW(validate_demonstration(moved));
    // Relative geometry is untouched.
    for (int k = 0; k + 1 < kTrajectoryLength; ++k) {
      CHECK(std::abs(d_geo(moved.trajectory[k], moved.trajectory[k + 1]) -
                     d_geo(d.trajectory[k], d.trajectory[k + 1])) < 1e-9);
    }
    // And the map is exactly the claimed one.
    for (int k = 0; k < kTrajectoryLength; ++k) {
      CHECK(d_geo(moved.trajectory[k], compose(g, d.trajectory[k])) < 1e-12);
    }
    CHECK((moved.cloud.points - transform_cloud(g, d.cloud).points).norm() ==
          0.0);
  }
}

TEST_CASE("test split re-poses each demonstration within the offset bounds") {
  const Dataset train = generate_rotating_triangle(123, 5);
  const Dataset test = make_test_split(train, 456);
  CHECK(test.split == Split::test);
  CHECK(test.task == train.task);
  CHECK(test.seed == 456);
  REQUIRE(test.demonstrations.size() == train.demonstrations.size());
  for (std::size_t i = 0; i < test.demonstrations.size(); ++i) {
    const Demonstration& a = train.demonstrations[i];
    const Demonstration& b = test.demonstrations[i];
    CHECK_NOTHROW(validate_demonstration(b));
    // Recover the offset from the first pose and confirm it maps everything.
    const Pose g = compose(b.trajectory[0], inverse(a.trajectory[0]));
    CHECK(rotation_angle(g.rotation) <= kPi / 3.0 + 1e-9);
    CHECK(g.translation.norm() <= 0.3 + 1e-9);
    for (int k = 0; k < kTrajectoryLength; ++k) {
      CHECK(d_geo(b.trajectory[k], compose(g, a.trajectory[k])) < 1e-9);
    }
    CHECK((b.cloud.points - transform_cloud(g, a.cloud).points).cwiseAbs()
              .maxCoeff() < 1e-12);
    // The offset is non-trivial (held-out pose, not a copy).
    CHECK(d_geo(b.trajectory[0], a.trajectory[0]) > 1e-6);
  }
  // Same seed reproduces the same split; another seed does not.
  CHECK(datasets_identical(test, make_test_split(train, 456)));
  CHECK_FALSE(datasets_identical(test, make_test_split(train, 457)));
}

TEST_CASE("binary round-trip is bit-exact for every task") {
  const fs::path path = temp_file("se3flow_tasks_roundtrip.bin");
  for (Task task : {Task::painting, Task::door_opening, Task::rotating_triangle}) {
    Dataset ds = generate_dataset(task, 2024, 4);
    ds.split = Split::test;
    save_dataset(ds, path.string());
    const Dataset back = load_dataset(path.string());
    CHECK(datasets_identical(ds, back));
  }
  fs::remove(path);
}

TEST_CASE("malformed dataset files raise FormatError with a byte offset") {
  const fs::path path = temp_file("se3flow_tasks_malformed.bin");
  const Dataset ds = generate_door_opening(7, 2);
  save_dataset(ds, path.string());
  const auto full_size = fs::file_size(path);

  auto write_bytes = [&](const std::string& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), std::streamsize(bytes.size()));
  };
  std::string raw;
  {
    std::ifstream in(path, std::ios::binary);
    raw.assign(std::istreambuf_iterator<char>(in), {});
  }
  REQUIRE(raw.size() == full_size);

  SUBCASE("bad magic") {
    std::string bad = raw;
    bad[0] = 'X';
    write_bytes(bad);
    CHECK_THROWS_WITH_AS(load_dataset(path.string()),
                         doctest::Contains("magic"), FormatError);
  }
  SUBCASE("unsupported version") {
    std::string bad = raw;
    bad[8] = 99;
    write_bytes(bad);
    CHECK_THROWS_WITH_AS(load_dataset(path.string()),
                         doctest::Contains("version"), FormatError);
  }
  SUBCASE("truncated header") {
    write_bytes(raw.substr(0, 20));
    CHECK_THROWS_WITH_AS(load_dataset(path.string()),
                         doctest::Contains("truncated at byte"), FormatError);
  }
  SUBCASE("body shorter than header claims") {
    write_bytes(raw.substr(0, raw.size() - 16));
    CHECK_THROWS_WITH_AS(load_dataset(path.string()),
                         doctest::Contains("truncated at byte"), FormatError);
  }
  SUBCASE("trailing bytes") {
    write_bytes(raw + "zz");
    CHECK_THROWS_WITH_AS(load_dataset(path.string()),
                         doctest::Contains("trailing"), FormatError);
  }
  SUBCASE("corrupted pose block") {
    std::string bad = raw;
    // First pose entry of the first demonstration: after the 40-byte header
    // and the 128*3 doubles of cloud data.
    const std::size_t pose_at = 40 + 128 * 3 * 8;
    for (int i = 0; i < 8; ++i) bad[pose_at + i] = char(0x7f);
    write_bytes(bad);
    CHECK_THROWS_WITH_AS(load_dataset(path.string()),
                         doctest::Contains("invalid pose"), FormatError);
  }
  fs::remove(path);
}

TEST_CASE("JSON export is lossless full-precision text") {
  const fs::path path = temp_file("se3flow_tasks_export.json");
  const Dataset ds = generate_painting(5, 2);
  export_dataset_json(ds, path.string());
  std::ifstream in(path);
  REQUIRE(in.good());
  nlohmann::json root;
  in >> root;
  CHECK(root["format"] == "se3flow-dataset");
  CHECK(root["task"] == "painting");
  CHECK(root["split"] == "train");
  CHECK(root["seed"] == "5");
  REQUIRE(root["demonstrations"].size() == 2);
  const auto& demo = root["demonstrations"][0];
  REQUIRE(demo["cloud"].size() == 256);
  REQUIRE(demo["trajectory"].size() == kTrajectoryLength);
  REQUIRE(demo["gripper"].size() == kTrajectoryLength);
  // Parsing the decimal strings recovers the doubles exactly.
  const Demonstration& d0 = ds.demonstrations[0];
  for (int i = 0; i < 5; ++i) {
    for (int j = 0; j < 3; ++j) {
      const double parsed =
          std::stod(demo["cloud"][i][j].get<std::string>());
      CHECK(parsed == d0.cloud.points(i, j));
    }
  }
  const Mat4 m0 = d0.trajectory[0].homogeneous();
  for (int i = 0; i < 16; ++i) {
    const double parsed =
        std::stod(demo["trajectory"][0][i].get<std::string>());
    CHECK(parsed == m0(i / 4, i % 4));
  }
  fs::remove(path);
}
