// Copyright 2026 The lalcs Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "lal/autodiff.hpp"
#include "lal/vocab.hpp"

namespace lal {

struct Utterance {
  std::string id;
  Matrix features;  // T x F
  std::vector<int> tokens;
  std::vector<int> token_langs;

  bool operator==(const Utterance&) const = default;
};

/// Parameters of the synthetic two-language corpus.
///
/// Every token owns a Gaussian cluster in feature space. Cluster centers of
/// the two languages sit `separation` apart along a fixed direction, plus a
/// per-token offset of scale `token_spread`. A token of language l emits
/// frames_per_token[l] +- jitter frames, which models speech-rate differences.
struct SynthSpec {
  int tokens_a = 10;
  int tokens_b = 14;
  std::array<int, 2> frames_per_token{8, 12};  // LANG_A, LANG_B
  int duration_jitter = 2;
  int feature_dim = 8;
  double separation = 4.0;
  double token_spread = 2.0;
  double noise = 1.0;
  /// Probability of switching away from LANG_A / LANG_B after each token.
  std::array<double, 2> switch_prob{0.2, 0.2};
  int min_tokens = 3;
  int max_tokens = 8;
  int train_size = 2000;
  int dev_size = 200;
  int test_size = 200;
  std::uint64_t seed = 1;

  void validate() const;
};

struct SynthSplit {
  std::vector<Utterance> utterances;
  /// Frames emitted per token, parallel to utterances[i].tokens.
  std::vector<std::vector<int>> durations;
};

struct SynthCorpus {
  Vocabulary vocab;
  SynthSplit train, dev, test;
  /// Cluster centers, one row per vocabulary id (special rows are zero).
  Matrix centers;
};

Vocabulary build_vocab(const SynthSpec& spec);
SynthCorpus synth_corpus(const SynthSpec& spec);

/// Per-input-frame language ids implied by token durations.
std::vector<int> frame_languages(const std::vector<int>& token_langs, const std::vector<int>& durations);
/// Language of each subsampled frame, taken at the centre of its pooling window.
std::vector<int> subsampled_languages(const std::vector<int>& frame_langs, int subsample);

/// Linear time resampling to round(T / factor) frames.
Matrix speed_perturb(const Matrix& features, double factor);

struct MaskConfig {
  int time_masks = 2;
  int max_time_width = 40;
  int freq_masks = 2;
  int max_freq_width = 30;
};

/// Zeroes random time spans and frequency bands. Widths are clamped to T / F.
Matrix mask_augment(const Matrix& features, const MaskConfig& cfg, std::uint64_t seed);

/// Per-language token counts over a set of utterances, indexed by Lang.
std::array<long, kNumLangs> count_tokens(const std::vector<Utterance>& utts);

}  // namespace lal
