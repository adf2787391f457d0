// Copyright 2026 The lalcs Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "lal/model.hpp"

namespace lal {

struct Checkpoint {
  ModelConfig config;
  ModelParams params;
  std::int64_t step = 0;
  double validation_loss = 0.0;
  /// Extra key=value pairs stored alongside the model config (e.g. the
  /// effective training configuration).
  std::map<std::string, std::string> extra;
};

// Layout (all integers u64 LE, all reals f64 LE):
//   "LALC" | config text length | config text (key=value lines)
//   | tensor count | per tensor: name length, name, rank, dims..., values
//   | step (i64) | validation loss
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::string config_to_text(const ModelConfig& cfg, const std::map<std::string, std::string>& extra = {});
ModelConfig config_from_text(const std::string& text, std::map<std::string, std::string>* extra = nullptr);

/// Element-wise mean of identically shaped parameter sets.
ModelParams average_params(const std::vector<const ModelParams*>& sets);
/// Loads every path, keeps the k lowest validation losses (ties by path
/// order) and averages them.
Checkpoint average_checkpoints(const std::vector<std::filesystem::path>& paths, std::size_t k = 10);

}  // namespace lal
