// Copyright 2026 The lalcs Authors
// SPDX-License-Identifier: Apache-2.0

#include "lal/synth.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace lal {

void SynthSpec::validate() const {
  if (tokens_a < 1 || tokens_b < 1) throw std::invalid_argument("synth: token counts must be >= 1");
  if (frames_per_token[0] < 1 || frames_per_token[1] < 1)
    throw std::invalid_argument("synth: frames per token must be >= 1");
  if (duration_jitter < 0) throw std::invalid_argument("synth: jitter must be >= 0");
  if (feature_dim < 1) throw std::invalid_argument("synth: feature dimension must be >= 1");
  for (double p : switch_prob)
    if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("synth: switch probability outside [0, 1]");
  if (min_tokens < 1 || max_tokens < min_tokens) throw std::invalid_argument("synth: bad utterance length range");
  if (train_size < 0 || dev_size < 0 || test_size < 0) throw std::invalid_argument("synth: negative split size");
  if (noise < 0 || token_spread < 0) throw std::invalid_argument("synth: negative scale");
}

Vocabulary build_vocab(const SynthSpec& spec) { return build_vocab(spec.tokens_a, spec.tokens_b); }

namespace {

// Independent, seed-derived streams for cluster geometry and each split.
std::uint64_t mix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

Matrix make_centers(const SynthSpec& spec, const Vocabulary& vocab) {
  std::mt19937_64 rng(mix(spec.seed));
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::RowVectorXd dir(spec.feature_dim);
  for (int f = 0; f < spec.feature_dim; ++f) dir(f) = normal(rng);
  dir /= dir.norm();
  Matrix centers = Matrix::Zero(vocab.size(), spec.feature_dim);
  for (int id = 0; id < vocab.size(); ++id) {
    const int lang = vocab.lang_of[id];
    if (lang == kOther) continue;
    const double side = lang == kLangA ? 0.5 : -0.5;
    Eigen::RowVectorXd offset(spec.feature_dim);
    for (int f = 0; f < spec.feature_dim; ++f) offset(f) = normal(rng);
    centers.row(id) = side * spec.separation * dir + spec.token_spread * offset;
  }
  return centers;
}

int first_id(const Vocabulary& vocab, int lang) {
  for (int id = 0; id < vocab.size(); ++id)
    if (vocab.lang_of[id] == lang) return id;
  return -1;
}

SynthSplit make_split(const SynthSpec& spec, const Vocabulary& vocab, const Matrix& centers, int count,
                      const std::string& prefix, std::uint64_t stream) {
  SynthSplit split;
  std::mt19937_64 rng(mix(spec.seed ^ mix(stream)));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_int_distribution<int> length(spec.min_tokens, spec.max_tokens);
  std::uniform_int_distribution<int> jitter(-spec.duration_jitter, spec.duration_jitter);

  const double pa = spec.switch_prob[0], pb = spec.switch_prob[1];
  const double start_a = (pa + pb) > 0 ? pb / (pa + pb) : 0.5;
  const std::array<int, 2> base{first_id(vocab, kLangA), first_id(vocab, kLangB)};
  const std::array<int, 2> size{spec.tokens_a, spec.tokens_b};

  for (int u = 0; u < count; ++u) {
    Utterance utt;
    char name[32];
    std::snprintf(name, sizeof(name), "%s-%05d", prefix.c_str(), u);
    utt.id = name;
    const int n = length(rng);
    int lang = unit(rng) < start_a ? 0 : 1;
    int prev = -1;
    std::vector<int> durations;
    for (int i = 0; i < n; ++i) {
      if (i > 0 && unit(rng) < spec.switch_prob[lang]) lang = 1 - lang;
      int tok;
      do {
        tok = base[lang] + std::uniform_int_distribution<int>(0, size[lang] - 1)(rng);
      } while (tok == prev && size[lang] > 1);
      prev = tok;
      utt.tokens.push_back(tok);
      utt.token_langs.push_back(vocab.lang_of[tok]);
      durations.push_back(std::max(1, spec.frames_per_token[lang] + jitter(rng)));
    }
    int total = 0;
    for (int d : durations) total += d;
    utt.features.resize(total, spec.feature_dim);
    int row = 0;
    for (std::size_t i = 0; i < utt.tokens.size(); ++i) {
      for (int k = 0; k < durations[i]; ++k, ++row) {
        for (int f = 0; f < spec.feature_dim; ++f) {
          const double v = centers(utt.tokens[i], f) + spec.noise * normal(rng);
          // Stored at single precision so the feature file round-trips exactly.
          utt.features(row, f) = static_cast<double>(static_cast<float>(v));
        }
      }
    }
    split.utterances.push_back(std::move(utt));
    split.durations.push_back(std::move(durations));
  }
  return split;
}

}  // namespace

SynthCorpus synth_corpus(const SynthSpec& spec) {
  spec.validate();
  SynthCorpus c;
  c.vocab = build_vocab(spec);
  c.centers = make_centers(spec, c.vocab);
  c.train = make_split(spec, c.vocab, c.centers, spec.train_size, "train", 1);
  c.dev = make_split(spec, c.vocab, c.centers, spec.dev_size, "dev", 2);
  c.test = make_split(spec, c.vocab, c.centers, spec.test_size, "test", 3);
  return c;
}

std::vector<int> frame_languages(const std::vector<int>& token_langs, const std::vector<int>& durations) {
  if (token_langs.size() != durations.size()) throw std::invalid_argument("frame_languages: length mismatch");
  std::vector<int> out;
  for (std::size_t i = 0; i < durations.size(); ++i) out.insert(out.end(), durations[i], token_langs[i]);
  return out;
}

std::vector<int> subsampled_languages(const std::vector<int>& frame_langs, int subsample) {
  if (subsample < 1) throw std::invalid_argument("subsampled_languages: subsample < 1");
  std::vector<int> out;
  const std::size_t frames = frame_langs.size() / subsample;
  for (std::size_t t = 0; t < frames; ++t) out.push_back(frame_langs[t * subsample + subsample / 2]);
  return out;
}

Matrix speed_perturb(const Matrix& features, double factor) {
  if (!(factor > 0.0)) throw std::invalid_argument("speed_perturb: factor must be positive");
  const Eigen::Index t_in = features.rows();
  if (factor == 1.0 || t_in == 0) return features;
  const auto t_out = static_cast<Eigen::Index>(std::llround(static_cast<double>(t_in) / factor));
  Matrix out(t_out, features.cols());
  for (Eigen::Index i = 0; i < t_out; ++i) {
    const double src = std::min(static_cast<double>(i) * factor, static_cast<double>(t_in - 1));
    const auto lo = static_cast<Eigen::Index>(std::floor(src));
    const Eigen::Index hi = std::min(lo + 1, t_in - 1);
    const double w = src - static_cast<double>(lo);
    out.row(i) = (1.0 - w) * features.row(lo) + w * features.row(hi);
  }
  return out;
}

Matrix mask_augment(const Matrix& features, const MaskConfig& cfg, std::uint64_t seed) {
  if (cfg.max_time_width < 0 || cfg.max_freq_width < 0 || cfg.time_masks < 0 || cfg.freq_masks < 0)
    throw std::invalid_argument("mask_augment: negative mask setting");
  Matrix out = features;
  std::mt19937_64 rng(mix(seed));
  const int t = static_cast<int>(out.rows()), f = static_cast<int>(out.cols());
  for (int m = 0; m < cfg.time_masks; ++m) {
    const int w = std::uniform_int_distribution<int>(0, std::min(cfg.max_time_width, t))(rng);
    const int start = std::uniform_int_distribution<int>(0, t - w)(rng);
    if (w > 0) out.middleRows(start, w).setZero();
  }
  for (int m = 0; m < cfg.freq_masks; ++m) {
    const int w = std::uniform_int_distribution<int>(0, std::min(cfg.max_freq_width, f))(rng);
    const int start = std::uniform_int_distribution<int>(0, f - w)(rng);
    if (w > 0) out.middleCols(start, w).setZero();
  }
  return out;
}

std::array<long, kNumLangs> count_tokens(const std::vector<Utterance>& utts) {
  std::array<long, kNumLangs> counts{};
  for (const auto& u : utts)
    for (int l : u.token_langs) ++counts.at(l);
  return counts;
}

}  // namespace lal
