// Copyright (C) 2026 The se3flow authors
// SPDX-License-Identifier: Apache-2.0
#include "se3flow/checkpoint.hpp"

#include <cmath>
#include <cstddef>
#include <fstream>
#include <sstream>

#include "se3flow/errors.hpp"

namespace se3flow {
namespace {

constexpr char kMagic[8] = {'S', 'E', '3', 'F', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kCheckpointVersion = 1;
// Guards against absurd allocations when reading a corrupt header.
constexpr std::uint32_t kMaxLayers = 64;
constexpr std::uint32_t kMaxLayerWidth = 1u << 20;
constexpr std::uint32_t kMaxFreqs = 64;

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
  explicit Reader(const std::string& path) : in(path, std::ios::binary) {
    if (!in) throw FormatError("cannot open checkpoint file: " + path);
  }
  void read(void* p, std::size_t n, const char* what) {
    in.read(static_cast<char*>(p), std::streamsize(n));
    if (std::size_t(in.gcount()) != n) {
      std::ostringstream os;
      os << "checkpoint file truncated at byte "
         << offset + std::size_t(in.gcount()) << " while reading " << what;
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

[[noreturn]] void bad_field(const char* what, std::uint64_t value,
                            std::uint64_t end_offset, std::size_t width) {
  std::ostringstream os;
  os << "invalid " << what << " " << value << " at byte "
     << end_offset - width;
  throw FormatError(os.str());
}

std::uint32_t checked_u32(Reader& r, const char* what, std::uint32_t lo,
                          std::uint32_t hi) {
  const std::uint32_t v = r.get<std::uint32_t>(what);
  if (v < lo || v > hi) bad_field(what, v, r.offset, sizeof v);
  return v;
}

double checked_f64(Reader& r, const char* what) {
  const double v = r.get<double>(what);
  if (!std::isfinite(v)) {
    std::ostringstream os;
    os << "non-finite " << what << " at byte " << r.offset - sizeof v;
    throw FormatError(os.str());
  }
  return v;
}

}  // namespace

std::string flow_stage_name(FlowStage stage) {
  switch (stage) {
    case FlowStage::flow1: return "flow1";
    case FlowStage::flow2: return "flow2";
  }
  throw std::invalid_argument("unknown flow stage enum value");
}

FlowStage flow_stage_from_name(const std::string& name) {
  if (name == "flow1") return FlowStage::flow1;
  if (name == "flow2") return FlowStage::flow2;
  throw FormatError("unknown flow stage name: " + name);
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  ckpt.model.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open checkpoint file for write: " + path);

  put_bytes(out, kMagic, sizeof kMagic);
  put(out, kCheckpointVersion);
  put(out, static_cast<std::uint32_t>(ckpt.stage));
  put(out, static_cast<std::uint32_t>(ckpt.task));
  put(out, static_cast<std::uint32_t>(ckpt.config.convention));
  put(out, static_cast<std::uint32_t>(ckpt.config.lr_schedule));
  put(out, ckpt.config.learning_rate);
  put(out, static_cast<std::uint32_t>(ckpt.config.batch_size));
  put(out, static_cast<std::uint32_t>(ckpt.config.epochs));
  put(out, static_cast<std::uint32_t>(ckpt.config.rectified_step_budget));
  put(out, ckpt.config.mix_ratio);
  put(out, static_cast<std::uint64_t>(ckpt.config.seed));
  put(out, ckpt.config.noise_scale);
  put(out, ckpt.config.grad_clip);

  put(out, static_cast<std::uint32_t>(ckpt.model.layer_sizes.size()));
  for (int s : ckpt.model.layer_sizes) put(out, static_cast<std::uint32_t>(s));
  put(out, static_cast<std::uint32_t>(ckpt.model.time_freqs.size()));
  for (double f : ckpt.model.time_freqs) put(out, f);

  put(out, static_cast<std::uint64_t>(ckpt.model.parameter_count()));
  for (std::size_t l = 0; l + 1 < ckpt.model.layer_sizes.size(); ++l) {
    const Eigen::MatrixXd& w = ckpt.model.weights[l];
    for (Eigen::Index i = 0; i < w.rows(); ++i)
      for (Eigen::Index j = 0; j < w.cols(); ++j) put(out, w(i, j));
    const Eigen::VectorXd& b = ckpt.model.biases[l];
    for (Eigen::Index i = 0; i < b.size(); ++i) put(out, b(i));
  }
  out.flush();
  if (!out) throw FormatError("failed writing checkpoint file: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  Reader r(path);

  char magic[8];
  r.read(magic, sizeof magic, "magic");
  if (!std::equal(magic, magic + 8, kMagic)) {
    throw FormatError("bad magic at byte 0: not a checkpoint file");
  }
  const auto version = r.get<std::uint32_t>("format version");
  if (version != kCheckpointVersion) {
    std::ostringstream os;
    os << "unsupported checkpoint format version " << version << " at byte "
       << r.offset - 4 << " (expected " << kCheckpointVersion << ")";
    throw FormatError(os.str());
  }

  Checkpoint ckpt;
  ckpt.stage = static_cast<FlowStage>(checked_u32(r, "flow stage", 1, 2));
  ckpt.task = static_cast<Task>(checked_u32(r, "task id", 0, 2));
  ckpt.config.convention =
      static_cast<StepConvention>(checked_u32(r, "step convention", 0, 1));
  ckpt.config.lr_schedule =
      static_cast<LrSchedule>(checked_u32(r, "learning-rate schedule", 0, 1));
  ckpt.config.learning_rate = checked_f64(r, "learning rate");
  ckpt.config.batch_size = int(r.get<std::uint32_t>("batch size"));
  ckpt.config.epochs = int(r.get<std::uint32_t>("epoch count"));
  ckpt.config.rectified_step_budget =
      int(r.get<std::uint32_t>("rectified step budget"));
  ckpt.config.mix_ratio = checked_f64(r, "mix ratio");
  ckpt.config.seed = r.get<std::uint64_t>("seed");
  ckpt.config.noise_scale = checked_f64(r, "noise scale");
  ckpt.config.grad_clip = checked_f64(r, "gradient clip");

  const std::uint32_t n_layers =
      checked_u32(r, "layer count", 2, kMaxLayers);
  ckpt.model.layer_sizes.resize(n_layers);
  for (std::uint32_t i = 0; i < n_layers; ++i) {
    ckpt.model.layer_sizes[i] = int(checked_u32(r, "layer size", 1,
                                                kMaxLayerWidth));
  }
  const std::uint32_t n_freqs =
      checked_u32(r, "time-frequency count", 0, kMaxFreqs);
  ckpt.model.time_freqs.resize(n_freqs);
  for (std::uint32_t i = 0; i < n_freqs; ++i) {
    ckpt.model.time_freqs[i] = checked_f64(r, "time-embedding frequency");
  }

  ckpt.model.weights.resize(n_layers - 1);
  ckpt.model.biases.resize(n_layers - 1);
  std::uint64_t expected = 0;
  for (std::uint32_t l = 0; l + 1 < n_layers; ++l) {
    const std::uint64_t rows = std::uint64_t(ckpt.model.layer_sizes[l + 1]);
    const std::uint64_t cols = std::uint64_t(ckpt.model.layer_sizes[l]);
    expected += rows * cols + rows;
  }
  const auto param_count = r.get<std::uint64_t>("parameter count");
  if (param_count != expected) {
    std::ostringstream os;
    os << "parameter count " << param_count << " at byte " << r.offset - 8
       << " does not match the declared architecture (" << expected << ")";
    throw FormatError(os.str());
  }
  for (std::uint32_t l = 0; l + 1 < n_layers; ++l) {
    Eigen::MatrixXd& w = ckpt.model.weights[l];
    w.resize(ckpt.model.layer_sizes[l + 1], ckpt.model.layer_sizes[l]);
    for (Eigen::Index i = 0; i < w.rows(); ++i)
      for (Eigen::Index j = 0; j < w.cols(); ++j)
        w(i, j) = checked_f64(r, "parameter");
    Eigen::VectorXd& b = ckpt.model.biases[l];
    b.resize(ckpt.model.layer_sizes[l + 1]);
    for (Eigen::Index i = 0; i < b.size(); ++i)
      b(i) = checked_f64(r, "parameter");
  }

  char extra;
  r.in.read(&extra, 1);
  if (r.in.gcount() != 0) {
    std::ostringstream os;
    os << "trailing data after checkpoint payload at byte " << r.offset;
    throw FormatError(os.str());
  }

  try {
    ckpt.model.validate();
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("checkpoint architecture invalid: ") +
                      e.what());
  }
  return ckpt;
}

}  // namespace se3flow
