// Copyright 2026 The lalcs Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include "lal/alignment.hpp"
#include "lal/vocab.hpp"

namespace lal {

struct EditCounts {
  long sub = 0, del = 0, ins = 0;
  long cost() const { return sub + del + ins; }
  bool operator==(const EditCounts&) const = default;
};

struct AlignStep {
  enum class Kind { kMatch, kSub, kDel, kIns };
  Kind kind;
  int ref = -1;  // index into ref, -1 for insertions
  int hyp = -1;  // index into hyp, -1 for deletions
};

struct EditAlignment {
  EditCounts counts;
  std::vector<AlignStep> steps;  // in sequence order
};

/// Unit-cost Levenshtein alignment. Among minimal alignments the backtrace
/// prefers diagonal moves, then deletions, then insertions.
EditAlignment align_edit(std::span<const int> ref, std::span<const int> hyp);

struct Transcript {
  std::string id;
  std::vector<int> tokens;
};

struct LangScore {
  long ref_tokens = 0;
  EditCounts errors;
  double rate = 0.0;
};

struct ScoreReport {
  long utterances = 0;
  long ref_tokens = 0;
  EditCounts errors;
  double sub_rate = 0.0, del_rate = 0.0, ins_rate = 0.0;
  double mer = 0.0;
  /// Indexed by Lang. Substitutions and deletions count against the reference
  /// token's language, insertions against the inserted token's language.
  std::array<LangScore, kNumLangs> per_lang{};
};

/// Scores hypotheses against references matched by utterance id. Special
/// tokens are removed from both sides first. Throws SchemaError when the two
/// id sets differ.
ScoreReport score_corpus(const std::vector<Transcript>& refs, const std::vector<Transcript>& hyps,
                         const Vocabulary& vocab);

/// Aligned plain-text table followed by a key=value block.
std::string format_report(const ScoreReport& report, const Vocabulary& vocab);

struct LidEntry {
  std::string id;
  UttLangDecision decision;
};

/// Fraction of utterances whose predicted decision equals the reference one.
double lid_accuracy(const std::vector<LidEntry>& predicted, const std::vector<LidEntry>& reference);

}  // namespace lal
