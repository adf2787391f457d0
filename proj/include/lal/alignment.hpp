// Copyright 2026 The lalcs Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <span>
#include <vector>

#include "lal/autodiff.hpp"
#include "lal/vocab.hpp"

namespace lal {

struct PseudoLabelSeq {
  std::vector<int> labels;  // one language id per encoder frame
  int source_layer = -1;
  int tie_breaks = 0;  // rows whose maximum was shared by several tokens
};

/// Frame t is labelled with the language of the token receiving the highest
/// weight in row t of `atten` (T' x N); ties go to the lowest token index.
PseudoLabelSeq pseudo_labels(const Matrix& atten, std::span<const int> token_langs, int source_layer = -1);

/// Row-wise softmax of the language classifier outputs.
Matrix frame_lid_posteriors(const Matrix& lid_logits);

struct UttLangDecision {
  enum class Kind { kMonolingual, kMultilingual };
  Kind kind = Kind::kMultilingual;
  int lang = kOther;  // meaningful only for kMonolingual
  /// Share of non-OTHER frames won by LANG_A and LANG_B (indices kLangA, kLangB).
  std::array<double, kNumLangs> fractions{};

  static UttLangDecision monolingual(int lang);
  static UttLangDecision multilingual();
  bool same_decision(const UttLangDecision& o) const {
    return kind == o.kind && (kind == Kind::kMultilingual || lang == o.lang);
  }
};

/// Per-frame argmax, OTHER frames dropped; a language is present when it
/// wins at least `presence_threshold` of the remaining frames. One present
/// language -> monolingual, otherwise multilingual.
UttLangDecision utterance_language_decision(const Matrix& posteriors, double presence_threshold = 0.1);

/// Ground-truth decision from token languages: multilingual iff both
/// languages occur.
UttLangDecision decision_from_token_langs(std::span<const int> token_langs);

}  // namespace lal
