// Copyright 2026 The lalcs Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace lal {

// Each category maps to a distinct CLI exit code (see tools/lal_main.cpp).

/// Malformed input file or a record that violates a data invariant.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Two artifacts that should share a schema (tensor names, shapes, ids) do not.
class SchemaError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A file could not be opened, read, or written.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// CTC target cannot be emitted within the available frames.
class InfeasibleAlignment : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Training produced a non-finite loss.
class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(const std::string& what, long batch) : std::runtime_error(what), batch_(batch) {}
  long batch() const { return batch_; }

 private:
  long batch_;
};

}  // namespace lal
