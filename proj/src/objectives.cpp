// Copyright 2026 The lalcs Authors
// SPDX-License-Identifier: Apache-2.0

#include "lal/objectives.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "lal/error.hpp"

namespace lal {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
}

void LossWeights::validate() const {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("alpha must lie in [0, 1]");
  if (!(beta >= 0.0)) throw std::invalid_argument("beta must be >= 0");
  if (!(label_smoothing >= 0.0 && label_smoothing < 1.0)) throw std::invalid_argument("label smoothing must lie in [0, 1)");
  for (double w : lang_weights)
    if (!(w >= 0.0)) throw std::invalid_argument("language weights must be >= 0");
}

double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  return a > b ? a + std::log1p(std::exp(b - a)) : b + std::log1p(std::exp(a - b));
}

int ctc_min_frames(std::span<const int> tokens) {
  int n = static_cast<int>(tokens.size());
  for (std::size_t i = 1; i < tokens.size(); ++i) n += tokens[i] == tokens[i - 1];
  return n;
}

LossAndGrad ctc_loss(const Matrix& log_probs, std::span<const int> tokens, int blank) {
  const int frames = static_cast<int>(log_probs.rows());
  const int vocab = static_cast<int>(log_probs.cols());
  if (blank < 0 || blank >= vocab) throw std::invalid_argument("ctc_loss: blank id out of range");
  for (int t : tokens)
    if (t < 0 || t >= vocab || t == blank) throw std::invalid_argument("ctc_loss: invalid target token");
  const int need = ctc_min_frames(tokens);
  if (frames < need || frames == 0)
    throw InfeasibleAlignment("ctc_loss: " + std::to_string(frames) + " frames cannot emit a target needing " +
                              std::to_string(need));

  // Blank-augmented label sequence: blank, w1, blank, w2, ..., wN, blank.
  const int states = 2 * static_cast<int>(tokens.size()) + 1;
  std::vector<int> label(states, blank);
  for (std::size_t n = 0; n < tokens.size(); ++n) label[2 * n + 1] = tokens[n];
  auto can_skip = [&](int s) { return s >= 2 && label[s] != blank && label[s] != label[s - 2]; };

  Matrix alpha = Matrix::Constant(frames, states, kNegInf);
  alpha(0, 0) = log_probs(0, label[0]);
  if (states > 1) alpha(0, 1) = log_probs(0, label[1]);
  for (int t = 1; t < frames; ++t) {
    for (int s = 0; s < states; ++s) {
      double a = alpha(t - 1, s);
      if (s >= 1) a = log_add(a, alpha(t - 1, s - 1));
      if (can_skip(s)) a = log_add(a, alpha(t - 1, s - 2));
      if (a != kNegInf) alpha(t, s) = a + log_probs(t, label[s]);
    }
  }
  // beta(t, s): log-prob of emitting the rest of the labels from frames
  // t+1.. given state s at frame t (emission at t excluded).
  Matrix beta = Matrix::Constant(frames, states, kNegInf);
  beta(frames - 1, states - 1) = 0.0;
  if (states > 1) beta(frames - 1, states - 2) = 0.0;
  for (int t = frames - 2; t >= 0; --t) {
    for (int s = 0; s < states; ++s) {
      double b = beta(t + 1, s) + log_probs(t + 1, label[s]);
      if (s + 1 < states) b = log_add(b, beta(t + 1, s + 1) + log_probs(t + 1, label[s + 1]));
      if (s + 2 < states && can_skip(s + 2)) b = log_add(b, beta(t + 1, s + 2) + log_probs(t + 1, label[s + 2]));
      beta(t, s) = b;
    }
  }
  double log_p = alpha(frames - 1, states - 1);
  if (states > 1) log_p = log_add(log_p, alpha(frames - 1, states - 2));
  if (log_p == kNegInf) throw InfeasibleAlignment("ctc_loss: target has zero probability");

  LossAndGrad out;
  out.loss = -log_p;
  out.grad = Matrix::Zero(frames, vocab);
  for (int t = 0; t < frames; ++t)
    for (int s = 0; s < states; ++s) {
      const double occ = alpha(t, s) + beta(t, s) - log_p;
      if (occ != kNegInf) out.grad(t, label[s]) -= std::exp(occ);
    }
  return out;
}

namespace {

Matrix log_softmax(const Matrix& x) {
  Matrix out(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double m = x.row(r).maxCoeff();
    const double lse = m + std::log((x.row(r).array() - m).exp().sum());
    out.row(r) = x.row(r).array() - lse;
  }
  return out;
}

}  // namespace

LossAndGrad att_ce_loss(const Matrix& logits, std::span<const int> targets, double smoothing) {
  const auto n = logits.rows(), v = logits.cols();
  if (static_cast<std::size_t>(n) != targets.size()) throw std::invalid_argument("att_ce_loss: target count mismatch");
  if (!(smoothing >= 0.0 && smoothing < 1.0)) throw std::invalid_argument("att_ce_loss: smoothing must lie in [0, 1)");
  if (n == 0) return {0.0, Matrix::Zero(0, v)};
  if (v < 2 && smoothing > 0) throw std::invalid_argument("att_ce_loss: smoothing needs at least two classes");
  const Matrix lp = log_softmax(logits);
  const double off = v > 1 ? smoothing / static_cast<double>(v - 1) : 0.0;
  LossAndGrad out;
  out.grad = Matrix(n, v);
  for (Eigen::Index i = 0; i < n; ++i) {
    const int y = targets[i];
    if (y < 0 || y >= v) throw std::invalid_argument("att_ce_loss: target out of range");
    double row = 0.0;
    for (Eigen::Index c = 0; c < v; ++c) {
      const double q = c == y ? 1.0 - smoothing : off;
      if (q > 0) row -= q * lp(i, c);
      out.grad(i, c) = std::exp(lp(i, c)) - q;
    }
    out.loss += row;
  }
  out.loss /= static_cast<double>(n);
  out.grad /= static_cast<double>(n);
  return out;
}

LossAndGrad lal_loss(const Matrix& lid_logits, std::span<const int> labels, const LangWeights& weights) {
  const auto frames = lid_logits.rows();
  if (static_cast<std::size_t>(frames) != labels.size()) throw std::invalid_argument("lal_loss: label count mismatch");
  if (lid_logits.cols() != kNumLangs) throw std::invalid_argument("lal_loss: expected 3 language classes");
  LossAndGrad out;
  out.grad = Matrix::Zero(frames, kNumLangs);
  if (frames == 0) return out;
  const Matrix lp = log_softmax(lid_logits);
  for (Eigen::Index t = 0; t < frames; ++t) {
    const int y = labels[t];
    if (y < 0 || y >= kNumLangs) throw std::invalid_argument("lal_loss: label out of range");
    const double w = weights[y];
    out.loss -= w * lp(t, y);
    for (int c = 0; c < kNumLangs; ++c) out.grad(t, c) = w * (std::exp(lp(t, c)) - (c == y ? 1.0 : 0.0));
  }
  out.loss /= static_cast<double>(frames);
  out.grad /= static_cast<double>(frames);
  return out;
}

LangWeights init_lang_weights(long count_a, long count_b, double rate_factor) {
  if (count_a <= 0 || count_b <= 0) throw std::invalid_argument("init_lang_weights: token counts must be positive");
  if (!(rate_factor > 0.0)) throw std::invalid_argument("init_lang_weights: rate factor must be positive");
  const double ratio = rate_factor * static_cast<double>(count_b) / static_cast<double>(count_a);  // w_A / w_B
  LangWeights w{1.0, 1.0, 1.0};
  if (ratio >= 1.0)
    w[kLangA] = ratio;
  else
    w[kLangB] = 1.0 / ratio;
  return w;
}

double total_loss(double ctc, double att, double lal, const LossWeights& w) {
  return w.alpha * ctc + (1.0 - w.alpha) * att + w.beta * lal;
}

}  // namespace lal
