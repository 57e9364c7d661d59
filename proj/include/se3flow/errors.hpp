// Copyright (C) 2026 The se3flow authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace se3flow {

// Thrown when a rotation reaches the cut locus (angle within 1e-6 of pi),
// where the logarithm has no unique preimage.
class CutLocusError : public std::domain_error {
 public:
  explicit CutLocusError(const std::string& what) : std::domain_error(what) {}
};

// Thrown when a numeric computation produces non-finite values or violates a
// hard magnitude cap. The message identifies where (e.g. layer index, epoch).
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

// Thrown on malformed serialized inputs (datasets, checkpoints, CSV imports).
// The message carries a byte offset or line number.
class FormatError : public std::runtime_error {
 public:
  explicit FormatError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace se3flow
