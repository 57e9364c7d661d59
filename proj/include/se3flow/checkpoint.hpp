// Copyright (C) 2026 The se3flow authors
// SPDX-License-Identifier: Apache-2.0
//
// Versioned binary persistence for trained drift models. A checkpoint stores
// the flow stage, the task it was trained on, the step convention (so
// inference cannot silently disagree with training), the network architecture,
// an echo of the training configuration, and the raw parameter blob. Saving
// is bit-deterministic: identical models and metadata produce identical files.
#pragma once

#include <cstdint>
#include <string>

#include "se3flow/drift_model.hpp"
#include "se3flow/flow_training.hpp"
#include "se3flow/tasks.hpp"

namespace se3flow {

enum class FlowStage : std::uint32_t { flow1 = 1, flow2 = 2 };

std::string flow_stage_name(FlowStage stage);
FlowStage flow_stage_from_name(const std::string& name);  // FormatError

struct Checkpoint {
  FlowStage stage = FlowStage::flow1;
  Task task = Task::rotating_triangle;
  // Training-config echo; config.convention is the authoritative step
  // convention for any inference with this model.
  TrainConfig config;
  DriftModel model;
};

// Little-endian layout (byte offsets; see README for the full table):
//   0   magic "SE3FCKPT" (8 bytes)
//   8   u32 format version (1)
//   12  u32 flow stage (1 or 2)
//   16  u32 task id
//   20  u32 step convention (0 spatial, 1 body)
//   24  u32 learning-rate schedule (0 cosine, 1 constant)
//   28  f64 learning_rate        36 u32 batch_size      40 u32 epochs
//   44  u32 rectified_step_budget    48 f64 mix_ratio   56 u64 seed
//   64  f64 noise_scale          72 f64 grad_clip
//   80  u32 layer count NL, then NL u32 layer sizes
//   ..  u32 frequency count NF, then NF f64 time-embedding frequencies
//   ..  u64 parameter count P, then P f64 parameters
//       (per layer: weight matrix row-major, then bias)
// Throws FormatError on unwritable paths; std::invalid_argument if the model
// fails its own shape validation.
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);

// Validates magic, version, every enum tag, architecture bounds, the
// parameter count, parameter finiteness, and the absence of trailing bytes;
// FormatError messages carry the byte offset of the violation.
Checkpoint load_checkpoint(const std::string& path);

}  // namespace se3flow
