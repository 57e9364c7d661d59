// Copyright (C) 2026 The se3flow authors
// SPDX-License-Identifier: Apache-2.0
#include "se3flow/tasks.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

#include "se3flow/drift_model.hpp"
#include "se3flow/errors.hpp"

namespace se3flow {
namespace {

constexpr double kPi = std::numbers::pi;

std::uint64_t demo_stream_seed(std::uint64_t seed, int index) {
  // splitmix64 over (seed ^ golden-ratio-scrambled index): cheap, collision
  // resistant, and independent of how many demos precede this one.
  std::uint64_t x = seed ^ (0x9e3779b97f4a7c15ULL * (std::uint64_t(index) + 1));
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

Vec3 random_unit(std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  Vec3 v;
  do {
    v = Vec3(gauss(rng), gauss(rng), gauss(rng));
  } while (v.norm() < 1e-6);
  return v.normalized();
}

// Uniform random rotation via uniformly distributed unit quaternions.
Rotation random_rotation(std::mt19937_64& rng) {
  const double u1 = uniform(rng, 0.0, 1.0);
  const double u2 = uniform(rng, 0.0, 2.0 * kPi);
  const double u3 = uniform(rng, 0.0, 2.0 * kPi);
  const double a = std::sqrt(1.0 - u1), b = std::sqrt(u1);
  const Eigen::Quaterniond q(a * std::sin(u2), a * std::cos(u2),
                             b * std::sin(u3), b * std::cos(u3));
  return Rotation(q.toRotationMatrix());
}

// Random scene placement shared by the generators.
Pose random_scene_pose(std::mt19937_64& rng) {
  const Rotation r = random_rotation(rng);
  const Vec3 t(uniform(rng, -0.5, 0.5), uniform(rng, -0.5, 0.5),
               uniform(rng, -0.5, 0.5));
  return Pose(r, t);
}

Demonstration rotating_triangle_demo(std::mt19937_64& rng) {
  // Random non-degenerate triangle.
  const Vec3 center(uniform(rng, -0.4, 0.4), uniform(rng, -0.4, 0.4),
                    uniform(rng, -0.4, 0.4));
  Vec3 a, b, c;
  for (int attempt = 0;; ++attempt) {
    if (attempt >= 100) {
      throw NumericError("rotating_triangle: failed to draw a triangle");
    }
    auto vertex = [&]() -> Vec3 {
      return center + Vec3(uniform(rng, -0.25, 0.25), uniform(rng, -0.25, 0.25),
                           uniform(rng, -0.25, 0.25));
    };
    a = vertex();
    b = vertex();
    c = vertex();
    if (0.5 * ((b - a).cross(c - a)).norm() > 0.01) break;
  }
  const Vec3 e1 = (b - a).normalized();
  const Vec3 normal = ((b - a).cross(c - a)).normalized();
  const Vec3 e2 = normal.cross(e1);

  // 100 surface samples with in-plane jitter (sigma = 2 mm); the cloud stays
  // exactly planar.
  Demonstration d;
  d.task = Task::rotating_triangle;
  d.cloud.points.resize(100, 3);
  std::normal_distribution<double> jitter(0.0, 0.002);
  for (int i = 0; i < 100; ++i) {
    double u = uniform(rng, 0.0, 1.0), v = uniform(rng, 0.0, 1.0);
    if (u + v > 1.0) {
      u = 1.0 - u;
      v = 1.0 - v;
    }
    const Vec3 p = a + u * (b - a) + v * (c - a) + jitter(rng) * e1 +
                   jitter(rng) * e2;
    d.cloud.points.row(i) = p.transpose();
  }

  // Ten poses rotating about the triangle normal through the centroid,
  // geodesically equally spaced; the gripper keeps a lateral offset so the
  // positions sweep a circle. The grasp orientation starts aligned with the
  // cloud's own canonical frame (whose third axis is the plane normal), so
  // canonicalized rotations sweep exactly [0, total] and stay well clear of
  // the logarithm's domain boundary at pi.
  const ObservationFrame f = observation_frame(d.cloud);
  const Mat3 axes = f.frame.rotation.matrix();
  const Vec3 lateral = axes.col(0);
  const Vec3 plane_normal = axes.col(2);
  const Vec3 centroid = f.frame.translation;
  const Pose start(f.frame.rotation,
                   centroid + 0.1 * lateral + 0.03 * plane_normal);
  const double total = uniform(rng, kPi / 4.0, 3.0 * kPi / 4.0);
  for (int k = 0; k < kTrajectoryLength; ++k) {
    const double theta = total * k / (kTrajectoryLength - 1);
    const Rotation rot = so3_exp(theta * plane_normal);
    const Pose about_axis(rot, centroid - rot * centroid);
    d.trajectory.push_back(compose(about_axis, start));
  }
  d.gripper.assign(kTrajectoryLength, 1.0);
  return d;
}

Demonstration door_opening_demo(std::mt19937_64& rng) {
  const double width = uniform(rng, 0.5, 0.9);
  const double height = 1.0;
  const double swing = uniform(rng, kPi / 6.0, 4.0 * kPi / 9.0);  // 30..80 deg
  const Pose scene = random_scene_pose(rng);

  // Door panel in the local y=0 plane (hinge along z), frame panel in the
  // perpendicular x=0 plane: two non-coplanar rectangles, 64 points each.
  Demonstration d;
  d.task = Task::door_opening;
  d.cloud.points.resize(128, 3);
  for (int i = 0; i < 64; ++i) {
    const Vec3 p(uniform(rng, 0.0, width), 0.0, uniform(rng, 0.0, height));
    d.cloud.points.row(i) = (scene * p).transpose();
  }
  for (int i = 0; i < 64; ++i) {
    const Vec3 p(0.0, uniform(rng, 0.0, 0.3), uniform(rng, 0.0, height));
    d.cloud.points.row(64 + i) = (scene * p).transpose();
  }

  // Handle rides the door edge: a circular arc of radius `width` about the
  // local z axis, orientation turning with the door. The grasp starts at the
  // cloud's canonical frame so canonicalized rotations sweep exactly
  // [0, swing], well clear of the logarithm's domain boundary at pi.
  const ObservationFrame f = observation_frame(d.cloud);
  const Vec3 hinge = scene.rotation.matrix().col(2);
  const Vec3 handle(width, 0.0, 0.5 * height);
  for (int k = 0; k < kTrajectoryLength; ++k) {
    const double theta = swing * k / (kTrajectoryLength - 1);
    const Rotation local_rot = so3_exp(Vec3(0.0, 0.0, theta));
    const Rotation world_rot = so3_exp(theta * hinge);
    d.trajectory.push_back(
        Pose(world_rot * f.frame.rotation, scene * (local_rot * handle)));
  }
  d.gripper.assign(kTrajectoryLength, 1.0);
  return d;
}

Demonstration painting_demo(std::mt19937_64& rng) {
  const Pose scene = random_scene_pose(rng);

  // 0.4 x 0.3 canvas in the local z=0 plane (sides deliberately unequal so
  // the cloud's principal axes are well separated).
  Demonstration d;
  d.task = Task::painting;
  d.cloud.points.resize(256, 3);
  for (int i = 0; i < 256; ++i) {
    const Vec3 p(uniform(rng, -0.2, 0.2), uniform(rng, -0.15, 0.15), 0.0);
    d.cloud.points.row(i) = (scene * p).transpose();
  }

  // Two-row serpentine stroke, tool hovering 2 cm above the canvas with a
  // fixed orientation aligned to the canvas's own canonical frame (the
  // canonicalized tool rotation is then the identity, far from the
  // logarithm's domain boundary). Polyline length: 8 * 0.09 + 0.08 = 0.8.
  const ObservationFrame f = observation_frame(d.cloud);
  const Rotation tool = f.frame.rotation;
  for (int k = 0; k < kTrajectoryLength; ++k) {
    const int row = k / 5;
    const int col = row == 0 ? k : 9 - k;  // serpentine: reverse second row
    const Vec3 p(-0.18 + 0.09 * col, row == 0 ? -0.04 : 0.04, 0.02);
    d.trajectory.push_back(Pose(tool, scene * p));
  }
  d.gripper.assign(kTrajectoryLength, 1.0);
  return d;
}

Dataset generate(Task task, std::uint64_t seed, int n,
                 Demonstration (*make)(std::mt19937_64&)) {
  if (n < 1) throw std::invalid_argument("dataset size must be positive");
  Dataset ds;
  ds.task = task;
  ds.split = Split::train;
  ds.seed = seed;
  ds.demonstrations.reserve(n);
  for (int i = 0; i < n; ++i) {
    std::mt19937_64 rng(demo_stream_seed(seed, i));
    ds.demonstrations.push_back(make(rng));
  }
  return ds;
}

std::string fmt17(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

// ---- binary container -----------------------------------------------------

constexpr char kMagic[8] = {'S', 'E', '3', 'F', 'D', 'A', 'T', 'A'};
constexpr std::uint32_t kDatasetVersion = 1;

void put_bytes(std::ostream& os, const void* p, std::size_t n) {
  os.write(static_cast<const char*>(p), std::streamsize(n));
}

template <typename T>
void put(std::ostream& os, T v) {
  put_bytes(os, &v, sizeof v);
}

struct Reader {
  std::ifstream in;
  std::uint64_t offset = 0;
  explicit Reader(const std::string& path)
      : in(path, std::ios::binary) {
    if (!in) throw FormatError("cannot open dataset file: " + path);
  }
  void read(void* p, std::size_t n, const char* what) {
    in.read(static_cast<char*>(p), std::streamsize(n));
    if (std::size_t(in.gcount()) != n) {
      std::ostringstream os;
      os << "dataset file truncated at byte " << offset + std::size_t(in.gcount())
         << " while reading " << what;
      throw FormatError(os.str());
    }
    offset += n;
  }
  template <typename T>
  T get(const char* what) {
    T v;
    read(&v, sizeof v, what);
    return v;
  }
};

}  // namespace

std::string task_name(Task task) {
  switch (task) {
    case Task::painting: return "painting";
    case Task::door_opening: return "door_opening";
    case Task::rotating_triangle: return "rotating_triangle";
  }
  throw std::invalid_argument("unknown task enum value");
}

Task task_from_name(const std::string& name) {
  if (name == "painting") return Task::painting;
  if (name == "door_opening") return Task::door_opening;
  if (name == "rotating_triangle") return Task::rotating_triangle;
  throw FormatError("unknown task name: " + name);
}

std::string split_name(Split split) {
  return split == Split::train ? "train" : "test";
}

Split split_from_name(const std::string& name) {
  if (name == "train") return Split::train;
  if (name == "test") return Split::test;
  throw FormatError("unknown split name: " + name);
}

int task_cloud_size(Task task) {
  switch (task) {
    case Task::painting: return 256;
    case Task::door_opening: return 128;
    case Task::rotating_triangle: return 100;
  }
  throw std::invalid_argument("unknown task enum value");
}

int default_demo_count(Task task) {
  switch (task) {
    case Task::painting: return 31;
    case Task::door_opening: return 10;
    case Task::rotating_triangle: return 500;
  }
  throw std::invalid_argument("unknown task enum value");
}

Dataset generate_rotating_triangle(std::uint64_t seed, int n) {
  return generate(Task::rotating_triangle, seed, n, rotating_triangle_demo);
}

Dataset generate_door_opening(std::uint64_t seed, int n) {
  return generate(Task::door_opening, seed, n, door_opening_demo);
}

Dataset generate_painting(std::uint64_t seed, int n) {
  return generate(Task::painting, seed, n, painting_demo);
}

Dataset generate_dataset(Task task, std::uint64_t seed, int n) {
  switch (task) {
    case Task::painting: return generate_painting(seed, n);
    case Task::door_opening: return generate_door_opening(seed, n);
    case Task::rotating_triangle: return generate_rotating_triangle(seed, n);
  }
  throw std::invalid_argument("unknown task enum value");
}

Demonstration transform_demonstration(const Pose& g, const Demonstration& d) {
  Demonstration out;
  out.task = d.task;
  out.cloud = transform_cloud(g, d.cloud);
  out.trajectory.reserve(d.trajectory.size());
  for (const Pose& h : d.trajectory) out.trajectory.push_back(compose(g, h));
  out.gripper = d.gripper;
  return out;
}

Dataset make_test_split(const Dataset& train, std::uint64_t seed) {
  Dataset out;
  out.task = train.task;
  out.split = Split::test;
  out.seed = seed;
  out.demonstrations.reserve(train.demonstrations.size());
  for (int i = 0; i < int(train.demonstrations.size()); ++i) {
    std::mt19937_64 rng(demo_stream_seed(seed, i));
    const Vec3 axis = random_unit(rng);
    const double angle = uniform(rng, 0.0, kPi / 3.0);
    const Vec3 dir = random_unit(rng);
    const double dist = uniform(rng, 0.0, 0.3);
    const Pose g(so3_exp(angle * axis), dist * dir);
    out.demonstrations.push_back(
        transform_demonstration(g, train.demonstrations[i]));
  }
  return out;
}

void validate_demonstration(const Demonstration& d) {
  const int n = task_cloud_size(d.task);
  if (d.cloud.size() != n) {
    throw std::invalid_argument("demonstration cloud size " +
                                std::to_string(d.cloud.size()) +
                                " does not match task size " +
                                std::to_string(n));
  }
  if (!d.cloud.points.allFinite()) {
    throw std::invalid_argument("demonstration cloud has non-finite points");
  }
  if (int(d.trajectory.size()) != kTrajectoryLength ||
      int(d.gripper.size()) != kTrajectoryLength) {
    throw std::invalid_argument("demonstration trajectory/gripper length != " +
                                std::to_string(kTrajectoryLength));
  }
  for (double gval : d.gripper) {
    if (!(gval >= 0.0 && gval <= 1.0)) {
      throw std::invalid_argument("gripper value outside [0, 1]");
    }
  }
  for (int k = 0; k + 1 < kTrajectoryLength; ++k) {
    const Rotation rel =
        d.trajectory[k + 1].rotation * d.trajectory[k].rotation.inverse();
    if (rotation_angle(rel) > kMaxStepRotation) {
      throw std::invalid_argument(
          "consecutive trajectory rotation exceeds the 0.9*pi bound at step " +
          std::to_string(k));
    }
  }
}

void save_dataset(const Dataset& ds, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open dataset file for write: " + path);
  const int n = task_cloud_size(ds.task);
  put_bytes(out, kMagic, sizeof kMagic);
  put<std::uint32_t>(out, kDatasetVersion);
  put<std::uint32_t>(out, std::uint32_t(ds.task));
  put<std::uint32_t>(out, std::uint32_t(ds.split));
  put<std::uint64_t>(out, ds.seed);
  put<std::uint32_t>(out, std::uint32_t(ds.demonstrations.size()));
  put<std::uint32_t>(out, std::uint32_t(n));
  put<std::uint32_t>(out, std::uint32_t(kTrajectoryLength));
  for (const Demonstration& d : ds.demonstrations) {
    if (d.cloud.size() != n || int(d.trajectory.size()) != kTrajectoryLength ||
        int(d.gripper.size()) != kTrajectoryLength) {
      throw FormatError("demonstration shape disagrees with dataset header");
    }
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < 3; ++j) put<double>(out, d.cloud.points(i, j));
    }
    for (const Pose& h : d.trajectory) {
      const Mat4 m = h.homogeneous();
      for (int i = 0; i < 4; ++i) {
        for (int j = 0; j < 4; ++j) put<double>(out, m(i, j));
      }
    }
    for (double gval : d.gripper) put<double>(out, gval);
  }
  if (!out) throw FormatError("write failed for dataset file: " + path);
}

Dataset load_dataset(const std::string& path) {
  Reader r(path);
  char magic[8];
  r.read(magic, sizeof magic, "magic");
  if (std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
    throw FormatError("bad dataset magic at byte 0");
  }
  const auto version = r.get<std::uint32_t>("version");
  if (version != kDatasetVersion) {
    throw FormatError("unsupported dataset version " + std::to_string(version) +
                      " at byte 8");
  }
  const auto task_id = r.get<std::uint32_t>("task id");
  if (task_id > 2) {
    throw FormatError("invalid task id " + std::to_string(task_id) +
                      " at byte 12");
  }
  const auto split_id = r.get<std::uint32_t>("split id");
  if (split_id > 1) {
    throw FormatError("invalid split id " + std::to_string(split_id) +
                      " at byte 16");
  }
  Dataset ds;
  ds.task = Task(task_id);
  ds.split = Split(split_id);
  ds.seed = r.get<std::uint64_t>("seed");
  const auto count = r.get<std::uint32_t>("demo count");
  const auto cloud_n = r.get<std::uint32_t>("cloud size");
  const auto traj_len = r.get<std::uint32_t>("trajectory length");
  if (int(cloud_n) != task_cloud_size(ds.task)) {
    throw FormatError("cloud size " + std::to_string(cloud_n) +
                      " does not match task at byte 32");
  }
  if (int(traj_len) != kTrajectoryLength) {
    throw FormatError("trajectory length " + std::to_string(traj_len) +
                      " unsupported at byte 36");
  }
  ds.demonstrations.reserve(count);
  for (std::uint32_t di = 0; di < count; ++di) {
    Demonstration d;
    d.task = ds.task;
    d.cloud.points.resize(cloud_n, 3);
    for (std::uint32_t i = 0; i < cloud_n; ++i) {
      for (int j = 0; j < 3; ++j) {
        d.cloud.points(i, j) = r.get<double>("cloud point");
      }
    }
    for (std::uint32_t k = 0; k < traj_len; ++k) {
      Mat4 m;
      const std::uint64_t at = r.offset;
      for (int i = 0; i < 4; ++i) {
        for (int j = 0; j < 4; ++j) m(i, j) = r.get<double>("pose entry");
      }
      try {
        d.trajectory.push_back(Pose::from_homogeneous(m));
      } catch (const std::invalid_argument& e) {
        std::ostringstream os;
        os << "invalid pose for demonstration " << di << " step " << k
           << " at byte " << at << ": " << e.what();
        throw FormatError(os.str());
      }
    }
    for (std::uint32_t k = 0; k < traj_len; ++k) {
      d.gripper.push_back(r.get<double>("gripper value"));
    }
    ds.demonstrations.push_back(std::move(d));
  }
  char extra;
  r.in.read(&extra, 1);
  if (r.in.gcount() != 0) {
    throw FormatError("trailing data after demonstration " +
                      std::to_string(count) + " at byte " +
                      std::to_string(r.offset));
  }
  return ds;
}

void export_dataset_json(const Dataset& ds, const std::string& path) {
  nlohmann::ordered_json root;
  root["format"] = "se3flow-dataset";
  root["version"] = std::to_string(kDatasetVersion);
  root["task"] = task_name(ds.task);
  root["split"] = split_name(ds.split);
  root["seed"] = std::to_string(ds.seed);
  nlohmann::ordered_json demos = nlohmann::ordered_json::array();
  for (const Demonstration& d : ds.demonstrations) {
    nlohmann::ordered_json jd;
    nlohmann::ordered_json cloud = nlohmann::ordered_json::array();
    for (int i = 0; i < d.cloud.size(); ++i) {
      cloud.push_back({fmt17(d.cloud.points(i, 0)), fmt17(d.cloud.points(i, 1)),
                       fmt17(d.cloud.points(i, 2))});
    }
    jd["cloud"] = std::move(cloud);
    nlohmann::ordered_json traj = nlohmann::ordered_json::array();
    for (const Pose& h : d.trajectory) {
      const Mat4 m = h.homogeneous();
      nlohmann::ordered_json row = nlohmann::ordered_json::array();
      for (int i = 0; i < 4; ++i) {
        for (int j = 0; j < 4; ++j) row.push_back(fmt17(m(i, j)));
      }
      traj.push_back(std::move(row));
    }
    jd["trajectory"] = std::move(traj);
    nlohmann::ordered_json grip = nlohmann::ordered_json::array();
    for (double gval : d.gripper) grip.push_back(fmt17(gval));
    jd["gripper"] = std::move(grip);
    demos.push_back(std::move(jd));
  }
  root["demonstrations"] = std::move(demos);
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("cannot open JSON export for write: " + path);
  out << root.dump(1) << "\n";
  if (!out) throw FormatError("write failed for JSON export: " + path);
}

}  // namespace se3flow
