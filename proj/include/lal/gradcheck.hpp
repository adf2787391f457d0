// Copyright 2026 The lalcs Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "lal/autodiff.hpp"

namespace lal {

struct GradCheckOptions {
  int configs = 50;
  std::uint64_t seed = 1;
  double step = 1e-6;
  double tolerance = 1e-4;
  int samples_per_tensor = 6;  // entries perturbed per parameter tensor
};

struct GradCheckItem {
  std::string name;  // e.g. "cfg3/decoder_logits/dec.0.cross.q.weight"
  double rel_error = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckItem> items;
  double max_rel_error = 0.0;
  std::string worst;
  bool passed = true;
};

/// ||a - n|| / max(||a||, ||n||, floor). The floor keeps round-off noise on
/// near-zero gradients from dominating.
double relative_error(const Matrix& analytic, const Matrix& numeric, double floor = 1e-3);

/// Central difference of f at every entry of x.
Matrix numeric_gradient(const std::function<double(const Matrix&)>& f, const Matrix& x, double step);

/// Loss functions and every model output, on random small configurations.
GradCheckReport run_gradcheck(const GradCheckOptions& opts);

}  // namespace lal
