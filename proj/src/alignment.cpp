// Copyright 2026 The lalcs Authors
// SPDX-License-Identifier: Apache-2.0

#include "lal/alignment.hpp"

#include <cmath>
#include <stdexcept>

namespace lal {

PseudoLabelSeq pseudo_labels(const Matrix& atten, std::span<const int> token_langs, int source_layer) {
  if (static_cast<std::size_t>(atten.cols()) != token_langs.size())
    throw std::invalid_argument("pseudo_labels: attention has " + std::to_string(atten.cols()) + " token columns but " +
                                std::to_string(token_langs.size()) + " token languages were given");
  if (atten.cols() == 0) throw std::invalid_argument("pseudo_labels: no tokens");
  for (int l : token_langs)
    if (l < 0 || l >= kNumLangs) throw std::invalid_argument("pseudo_labels: invalid language id");
  PseudoLabelSeq out;
  out.source_layer = source_layer;
  out.labels.reserve(static_cast<std::size_t>(atten.rows()));
  for (Eigen::Index t = 0; t < atten.rows(); ++t) {
    Eigen::Index best = 0;
    bool tied = false;
    for (Eigen::Index n = 1; n < atten.cols(); ++n) {
      if (atten(t, n) > atten(t, best)) {
        best = n;
        tied = false;
      } else if (atten(t, n) == atten(t, best)) {
        tied = true;
      }
    }
    out.tie_breaks += tied;
    out.labels.push_back(token_langs[best]);
  }
  return out;
}

Matrix frame_lid_posteriors(const Matrix& lid_logits) {
  Matrix out(lid_logits.rows(), lid_logits.cols());
  for (Eigen::Index r = 0; r < lid_logits.rows(); ++r) {
    const double m = lid_logits.row(r).maxCoeff();
    out.row(r) = (lid_logits.row(r).array() - m).exp();
    out.row(r) /= out.row(r).sum();
  }
  return out;
}

UttLangDecision UttLangDecision::monolingual(int lang) {
  UttLangDecision d;
  d.kind = Kind::kMonolingual;
  d.lang = lang;
  d.fractions[lang] = 1.0;
  return d;
}

UttLangDecision UttLangDecision::multilingual() { return UttLangDecision{}; }

UttLangDecision utterance_language_decision(const Matrix& posteriors, double presence_threshold) {
  if (!(presence_threshold > 0.0 && presence_threshold < 0.5))
    throw std::invalid_argument("utterance_language_decision: threshold must lie in (0, 0.5)");
  if (posteriors.cols() != kNumLangs) throw std::invalid_argument("utterance_language_decision: expected 3 classes");
  std::array<long, kNumLangs> wins{};
  for (Eigen::Index t = 0; t < posteriors.rows(); ++t) {
    Eigen::Index arg = 0;
    posteriors.row(t).maxCoeff(&arg);
    ++wins[arg];
  }
  const long speech = wins[kLangA] + wins[kLangB];
  UttLangDecision d;
  if (speech == 0) return d;
  d.fractions[kLangA] = static_cast<double>(wins[kLangA]) / speech;
  d.fractions[kLangB] = static_cast<double>(wins[kLangB]) / speech;
  const bool a = d.fractions[kLangA] >= presence_threshold;
  const bool b = d.fractions[kLangB] >= presence_threshold;
  if (a != b) {
    d.kind = UttLangDecision::Kind::kMonolingual;
    d.lang = a ? kLangA : kLangB;
  }
  return d;
}

UttLangDecision decision_from_token_langs(std::span<const int> token_langs) {
  bool a = false, b = false;
  for (int l : token_langs) {
    a = a || l == kLangA;
    b = b || l == kLangB;
  }
  if (a != b) return UttLangDecision::monolingual(a ? kLangA : kLangB);
  return UttLangDecision::multilingual();
}

}  // namespace lal
