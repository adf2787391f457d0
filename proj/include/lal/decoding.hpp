// Copyright 2026 The lalcs Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "lal/model.hpp"
#include "lal/vocab.hpp"

namespace lal {

struct Hypothesis {
  std::vector<int> tokens;  // without sos / eos
  double att_logprob = 0.0;
  double ctc_logprob = 0.0;
  double joint_score = 0.0;
  std::vector<int> token_langs;
};

struct NBestList {
  std::string utt_id;
  std::vector<Hypothesis> hyps;  // joint_score nonincreasing
  Matrix lid_posteriors;         // T' x C
};

struct DecodeOptions {
  int beam = 10;
  double alpha = 0.4;  // CTC share of the joint score
  int max_len = -1;    // < 0: the number of encoder frames
};

/// alpha * ctc + (1 - alpha) * att, where a zero weight drops its term even
/// when that term is -inf.
double joint_score(double alpha, double ctc, double att);

/// Log-probabilities of the next token given a prefix that starts with sos.
using NextTokenScorer = std::function<Eigen::RowVectorXd(std::span<const int> prefix)>;

/// Incremental CTC prefix scores over blank / non-blank path endings.
class CtcPrefixScorer {
 public:
  CtcPrefixScorer(const Matrix& log_probs, int blank);

  struct State {
    std::vector<double> r_nonblank, r_blank;  // per frame, log domain
    int last = -1;                             // last emitted token, -1 for the empty prefix
    double prefix_score = 0.0;                 // log sum over all continuations
  };

  State initial() const;
  /// State of prefix + token; its prefix_score is log p(prefix + token ...).
  State extend(const State& s, int token) const;
  /// log p_ctc(prefix | X) for the completed prefix.
  double final_score(const State& s) const;

 private:
  const Matrix& lp_;
  int blank_;
};

/// Joint beam search given CTC log-probabilities and an attention scorer.
/// Candidate tokens are every id except blank and sos_eos; sos_eos ends a
/// hypothesis and is forced once max_len tokens have been emitted.
std::vector<Hypothesis> beam_search(const Matrix& ctc_log_probs, const NextTokenScorer& att, int vocab_size,
                                    int blank, int sos_eos, const DecodeOptions& opts);

NBestList joint_beam_search(const ModelParams& params, const ModelConfig& cfg, const Matrix& features,
                            const DecodeOptions& opts, const Vocabulary* vocab = nullptr);

/// Drops unk, blank and sos_eos from every hypothesis; scores are untouched
/// and an emptied hypothesis stays in the list.
NBestList nbest_strip_special(const NBestList& nbest, const Vocabulary& vocab);

// N-best file: utt_id \t rank \t joint_score \t token ids
void write_nbest(const std::filesystem::path& path, const std::vector<NBestList>& lists);
std::vector<NBestList> read_nbest(const std::filesystem::path& path, const Vocabulary& vocab);

// LID sidecar: utt_id \t T' \t T' x C posteriors, row-major, full precision
void write_lid_posteriors(const std::filesystem::path& path, const std::vector<NBestList>& lists);
/// Fills lid_posteriors of the lists with matching ids; throws SchemaError
/// when an id is missing from the sidecar.
void read_lid_posteriors(const std::filesystem::path& path, std::vector<NBestList>& lists);

}  // namespace lal
