// Copyright (C) 2026 The se3flow authors
// SPDX-License-Identifier: Apache-2.0

#include "se3flow/drift_model.hpp"

#include <cmath>
#include <random>
#include <sstream>

namespace se3flow {

namespace {

// Flips v so the first component larger than kMomentTieTol in magnitude is
// positive. Used only when the third-moment sign rule ties.
Vec3 lexicographic_sign(const Vec3& v) {
  for (int i = 0; i < 3; ++i) {
    if (std::abs(v[i]) > kMomentTieTol) {
      return v[i] > 0.0 ? v : Vec3(-v);
    }
  }
  return v;
}

Vec3 moment_sign(const Eigen::Matrix<double, Eigen::Dynamic, 3>& centered,
                 const Vec3& axis) {
  const Eigen::VectorXd proj = centered * axis;
  const double m3 = proj.array().cube().mean();
  if (std::abs(m3) <= kMomentTieTol) {
    return lexicographic_sign(axis);
  }
  return m3 > 0.0 ? axis : Vec3(-axis);
}

Eigen::VectorXd time_embedding(double t, const std::vector<double>& freqs) {
  Eigen::VectorXd e(2 * freqs.size());
  for (size_t i = 0; i < freqs.size(); ++i) {
    e[2 * i] = std::sin(2.0 * M_PI * freqs[i] * t);
    e[2 * i + 1] = std::cos(2.0 * M_PI * freqs[i] * t);
  }
  return e;
}

}  // namespace

ObservationFrame observation_frame(const PointCloud& cloud) {
  const int n = cloud.size();
  if (n == 0) {
    throw std::invalid_argument("observation_frame: empty cloud");
  }
  const Vec3 centroid = cloud.points.colwise().mean().transpose();
  if (n < 4) {
    return ObservationFrame{Pose(Rotation::identity(), centroid), true};
  }

  Eigen::Matrix<double, Eigen::Dynamic, 3> centered =
      cloud.points.rowwise() - centroid.transpose();
  const Mat3 cov = centered.transpose() * centered / double(n);
  Eigen::SelfAdjointEigenSolver<Mat3> eig(cov);
  // Eigen orders eigenvalues ascending; we want descending variance.
  const Vec3 evals = eig.eigenvalues().reverse();
  if (!(evals[1] > kFrameRankTol * std::max(evals[0], 1e-300))) {
    return ObservationFrame{Pose(Rotation::identity(), centroid), true};
  }

  const Vec3 v1 = moment_sign(centered, eig.eigenvectors().col(2));
  const Vec3 v2 = moment_sign(centered, eig.eigenvectors().col(1));
  const Vec3 v3 = v1.cross(v2);
  Mat3 axes;
  axes.col(0) = v1;
  axes.col(1) = v2;
  axes.col(2) = v3;
  return ObservationFrame{Pose(Rotation(axes), centroid), false};
}

std::pair<Pose, ObservationFrame> canonicalize(const Pose& z,
                                               const PointCloud& cloud) {
  const ObservationFrame frame = observation_frame(cloud);
  return {compose(inverse(frame.frame), z), frame};
}

Eigen::VectorXd cloud_features(const PointCloud& cloud) {
  const int n = cloud.size();
  if (n == 0) {
    throw std::invalid_argument("cloud_features: empty cloud");
  }
  const Vec3 centroid = cloud.points.colwise().mean().transpose();
  const Eigen::VectorXd radii =
      (cloud.points.rowwise() - centroid.transpose()).rowwise().norm();
  Eigen::VectorXd bins = Eigen::VectorXd::Zero(kCloudFeatureBins);
  const double r_max = radii.maxCoeff();
  if (r_max < 1e-12) {
    bins[0] = 1.0;
    return bins;
  }
  // Soft histogram: each radius splits its mass linearly between the two
  // nearest bin centers, so features vary smoothly with the geometry.
  for (int i = 0; i < n; ++i) {
    const double u = radii[i] / r_max * kCloudFeatureBins - 0.5;
    const int lo = static_cast<int>(std::floor(u));
    const double w = u - lo;
    if (lo < 0) {
      bins[0] += 1.0;
    } else if (lo >= kCloudFeatureBins - 1) {
      bins[kCloudFeatureBins - 1] += 1.0;
    } else {
      bins[lo] += 1.0 - w;
      bins[lo + 1] += w;
    }
  }
  return bins / double(n);
}

DriftModel DriftModel::init(const std::vector<int>& hidden_sizes,
                            uint64_t seed, const std::vector<double>& freqs) {
  DriftModel m;
  m.time_freqs = freqs;
  m.layer_sizes.push_back(input_width(static_cast<int>(freqs.size())));
  for (int h : hidden_sizes) m.layer_sizes.push_back(h);
  m.layer_sizes.push_back(6);

  std::mt19937_64 rng(seed);
  const size_t n_layers = m.layer_sizes.size() - 1;
  for (size_t l = 0; l < n_layers; ++l) {
    const int n_in = m.layer_sizes[l];
    const int n_out = m.layer_sizes[l + 1];
    const double s = std::sqrt(6.0 / double(n_in + n_out));
    std::uniform_real_distribution<double> u(-s, s);
    Eigen::MatrixXd w(n_out, n_in);
    for (int r = 0; r < n_out; ++r) {
      for (int c = 0; c < n_in; ++c) {
        w(r, c) = u(rng);
      }
    }
    if (l + 1 == n_layers) w *= 0.01;
    m.weights.push_back(std::move(w));
    m.biases.push_back(Eigen::VectorXd::Zero(n_out));
  }
  m.validate();
  return m;
}

int DriftModel::parameter_count() const {
  int count = 0;
  for (size_t l = 0; l < weights.size(); ++l) {
    count += static_cast<int>(weights[l].size() + biases[l].size());
  }
  return count;
}

void DriftModel::set_zero() {
  for (auto& w : weights) w.setZero();
  for (auto& b : biases) b.setZero();
}

void DriftModel::validate() const {
  if (layer_sizes.size() < 2 || weights.size() != layer_sizes.size() - 1 ||
      biases.size() != weights.size()) {
    throw std::invalid_argument("DriftModel: inconsistent layer bookkeeping");
  }
  if (layer_sizes.front() !=
      input_width(static_cast<int>(time_freqs.size()))) {
    throw std::invalid_argument(
        "DriftModel: input width does not match the feature layout");
  }
  if (layer_sizes.back() != 6) {
    throw std::invalid_argument("DriftModel: output width must be 6");
  }
  for (size_t l = 0; l < weights.size(); ++l) {
    if (weights[l].rows() != layer_sizes[l + 1] ||
        weights[l].cols() != layer_sizes[l] ||
        biases[l].size() != layer_sizes[l + 1]) {
      std::ostringstream os;
      os << "DriftModel: layer " << l << " has mismatched shapes";
      throw std::invalid_argument(os.str());
    }
  }
}

GradientTape GradientTape::zeros_like(const DriftModel& model) {
  GradientTape t;
  for (size_t l = 0; l < model.weights.size(); ++l) {
    t.d_weights.emplace_back(
        Eigen::MatrixXd::Zero(model.weights[l].rows(), model.weights[l].cols()));
    t.d_biases.emplace_back(Eigen::VectorXd::Zero(model.biases[l].size()));
  }
  return t;
}

void GradientTape::set_zero() {
  for (auto& w : d_weights) w.setZero();
  for (auto& b : d_biases) b.setZero();
}

void GradientTape::scale(double s) {
  for (auto& w : d_weights) w *= s;
  for (auto& b : d_biases) b *= s;
}

void GradientTape::add(const GradientTape& other, double s) {
  for (size_t l = 0; l < d_weights.size(); ++l) {
    d_weights[l] += s * other.d_weights[l];
    d_biases[l] += s * other.d_biases[l];
  }
}

double GradientTape::squared_norm() const {
  double total = 0.0;
  for (const auto& w : d_weights) total += w.squaredNorm();
  for (const auto& b : d_biases) total += b.squaredNorm();
  return total;
}

ObsContext make_obs_context(const PointCloud& cloud) {
  ObsContext ctx;
  ctx.frame = observation_frame(cloud);
  ctx.frame_inverse = inverse(ctx.frame.frame);
  ctx.ad_frame = adjoint(ctx.frame.frame);
  ctx.features = cloud_features(cloud);
  return ctx;
}

DriftTrace drift_forward(const DriftModel& model, const Pose& z, double t,
                         const ObsContext& ctx) {
  const Pose local = compose(ctx.frame_inverse, z);
  const Twist local_twist = log_map(local);

  DriftTrace trace;
  trace.input.resize(model.layer_sizes.front());
  trace.input << local_twist.vector(), time_embedding(t, model.time_freqs),
      ctx.features;

  const size_t n_layers = model.weights.size();
  Eigen::VectorXd a = trace.input;
  for (size_t l = 0; l + 1 < n_layers; ++l) {
    a = (model.weights[l] * a + model.biases[l]).array().tanh();
    if (!a.allFinite()) {
      std::ostringstream os;
      os << "drift: non-finite activation at layer " << l;
      throw NumericError(os.str());
    }
    trace.activations.push_back(a);
  }
  const Eigen::VectorXd out =
      model.weights[n_layers - 1] * a + model.biases[n_layers - 1];
  if (!out.allFinite()) {
    std::ostringstream os;
    os << "drift: non-finite output at layer " << (n_layers - 1);
    throw NumericError(os.str());
  }
  trace.canonical_out = out;
  trace.output = Twist::from_vector(ctx.ad_frame * trace.canonical_out);
  const double norm = trace.output.norm();
  if (norm > kDriftNormCap) {
    std::ostringstream os;
    os << "drift: output norm " << norm << " exceeds cap " << kDriftNormCap;
    throw NumericError(os.str());
  }
  return trace;
}

void drift_backward(const DriftModel& model, const DriftTrace& trace,
                    const ObsContext& ctx, const Vec6& upstream,
                    GradientTape& tape) {
  const size_t n_layers = model.weights.size();
  // Transport is linear: d(upstream . Ad y)/dy = Ad^T upstream.
  Eigen::VectorXd delta = ctx.ad_frame.transpose() * upstream;
  for (size_t l = n_layers; l-- > 0;) {
    const Eigen::VectorXd& below =
        (l == 0) ? trace.input : trace.activations[l - 1];
    tape.d_weights[l].noalias() += delta * below.transpose();
    tape.d_biases[l] += delta;
    if (l > 0) {
      delta = model.weights[l].transpose() * delta;
      delta.array() *=
          (1.0 - trace.activations[l - 1].array().square());
    }
  }
}

Twist drift(const DriftModel& model, const Pose& z, double t,
            const ObsContext& ctx) {
  return drift_forward(model, z, t, ctx).output;
}

Twist drift(const DriftModel& model, const Pose& z, double t,
            const PointCloud& cloud) {
  return drift(model, z, t, make_obs_context(cloud));
}

std::pair<Twist, GradientTape> drift_with_grad(const DriftModel& model,
                                               const Pose& z, double t,
                                               const ObsContext& ctx,
                                               const Vec6& upstream) {
  const DriftTrace trace = drift_forward(model, z, t, ctx);
  GradientTape tape = GradientTape::zeros_like(model);
  drift_backward(model, trace, ctx, upstream, tape);
  return {trace.output, std::move(tape)};
}

std::pair<Twist, GradientTape> drift_with_grad(const DriftModel& model,
                                               const Pose& z, double t,
                                               const PointCloud& cloud,
                                               const Vec6& upstream) {
  return drift_with_grad(model, z, t, make_obs_context(cloud), upstream);
}

}  // namespace se3flow
