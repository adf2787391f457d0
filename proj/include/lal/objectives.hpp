// Copyright 2026 The lalcs Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <span>

#include "lal/autodiff.hpp"
#include "lal/vocab.hpp"

namespace lal {

/// Per-class weights of the language alignment loss, indexed by Lang.
using LangWeights = std::array<double, kNumLangs>;

struct LossWeights {
  double alpha = 0.3;  // CTC share of the ASR loss
  double beta = 0.0;   // language alignment loss weight
  double label_smoothing = 0.1;
  LangWeights lang_weights{1.0, 1.0, 1.0};

  void validate() const;
};

/// A scalar loss and its gradient w.r.t. the matrix it was computed from.
struct LossAndGrad {
  double loss = 0.0;
  Matrix grad;
};

/// -log p_ctc(tokens | X) by the log-space forward recursion; the gradient is
/// w.r.t. the per-frame log-probabilities (T' x V), treated as free inputs.
/// Throws InfeasibleAlignment when T' < N + (number of adjacent repeats).
LossAndGrad ctc_loss(const Matrix& log_probs, std::span<const int> tokens, int blank);

/// Minimum number of frames needed to emit `tokens` under CTC.
int ctc_min_frames(std::span<const int> tokens);

/// Label-smoothed cross-entropy, averaged over positions. The smoothed target
/// puts 1 - eps on the target and eps / (V - 1) on every other class. The
/// gradient is w.r.t. the raw logits (N x V).
LossAndGrad att_ce_loss(const Matrix& logits, std::span<const int> targets, double smoothing);

/// Weighted frame-level cross-entropy against pseudo-language labels:
/// -(1/T') sum_t w[y_t] log softmax(logits_t)[y_t]. Gradient w.r.t. logits.
LossAndGrad lal_loss(const Matrix& lid_logits, std::span<const int> labels, const LangWeights& weights);

/// Initial class weights from training-set token counts. OTHER is fixed to 1,
/// w_A / w_B = rate_factor * count_B / count_A, and the smaller of the two is 1.
LangWeights init_lang_weights(long count_a, long count_b, double rate_factor = 1.0);

/// alpha * ctc + (1 - alpha) * att + beta * lal.
double total_loss(double ctc, double att, double lal, const LossWeights& w);

/// log(exp(a) + exp(b)) that tolerates -inf operands.
double log_add(double a, double b);

}  // namespace lal
