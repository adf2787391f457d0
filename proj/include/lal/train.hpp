// Copyright 2026 The lalcs Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "lal/checkpoint.hpp"
#include "lal/model.hpp"
#include "lal/objectives.hpp"
#include "lal/synth.hpp"

namespace lal {

enum class DecayShape { kCosine, kLinear };

/// Linear warmup from 0 to `peak` over `warmup` steps, then decay to 0 at
/// `total`; 0 beyond `total`.
double lr_at(long step, double peak, long warmup, long total, DecayShape shape = DecayShape::kCosine);

struct AdamOptions {
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
};

class Adam {
 public:
  explicit Adam(AdamOptions opts = {}) : opts_(opts) {}
  /// One update. Tensors absent from `grads` are treated as zero gradient.
  void step(ModelParams& params, const ModelParams& grads, double lr);
  long steps() const { return t_; }

 private:
  AdamOptions opts_;
  long t_ = 0;
  std::map<std::string, Matrix> m_, v_;
};

struct TrainConfig {
  ModelConfig model;
  LossWeights loss;
  bool auto_lang_weights = false;  // derive lang_weights from the training corpus
  double rate_factor = 1.0;        // scale for the derived weights

  double lr_peak = 1e-3;
  long warmup = 500;
  DecayShape decay = DecayShape::kCosine;
  int batch = 16;
  int epochs = 20;
  int extra_epochs = 0;
  double grad_clip = 5.0;  // global norm, <= 0 disables
  std::uint64_t seed = 1;
  int threads = 0;  // 0: hardware concurrency

  bool augment = true;
  MaskConfig mask{2, 4, 1, 2};
  std::vector<double> speed_factors{1.0};

  int average_best = 10;
  std::string lora_targets;  // comma list of weight names; when set only the factors train
  int lora_rank = 0;

  // Paths, used by the CLI.
  std::string train_manifest, dev_manifest, vocab_path, out_dir;

  // Evaluation.
  int beam = 10;
  double alpha_dec = 0.4;
  double tau = 0.1;

  void validate() const;
};

/// Applies one `key=value` setting; throws std::invalid_argument for an
/// unknown key or a bad value.
void set_config_value(TrainConfig& cfg, const std::string& key, const std::string& value);
/// Reads a flat key=value file ('#' starts a comment).
void load_config_file(TrainConfig& cfg, const std::filesystem::path& path);
/// Every key with its effective value.
std::map<std::string, std::string> config_values(const TrainConfig& cfg);

struct UttLoss {
  double total = 0.0, ctc = 0.0, att = 0.0, lal = 0.0;
  int tie_breaks = 0;
};

/// Loss of one utterance under teacher forcing. Pseudo-labels come from the
/// last decoder layer's cross-attention unless `fixed_labels` is given. When
/// `grads` is non-null the gradient of `scale * total` is accumulated there.
UttLoss utterance_loss(const ModelParams& params, const ModelConfig& cfg, const Matrix& features,
                       const std::vector<int>& tokens, const std::vector<int>& token_langs, const LossWeights& w, ModelParams* grads = nullptr,
                       double scale = 1.0, const std::vector<int>* fixed_labels = nullptr);

/// Pseudo-labels of one utterance (teacher forcing, eos column dropped).
std::vector<int> training_pseudo_labels(const ModelParams& params, const ModelConfig& cfg, const Matrix& features,
                                        const std::vector<int>& tokens, const std::vector<int>& token_langs);

struct EpochStat {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
};

struct TrainResult {
  Checkpoint final;  // average of the best epochs
  std::vector<Checkpoint> epochs;
  std::vector<EpochStat> stats;
  long steps = 0;
  long skipped = 0;  // utterances too short for their targets
};

/// Mean total loss over a set of utterances, no augmentation.
double evaluate_loss(const ModelParams& params, const ModelConfig& cfg, const std::vector<Utterance>& utts,
                     const LossWeights& w, int threads = 0);

/// Trains from `init` (or fresh parameters when null). Writes per-epoch and
/// averaged checkpoints when cfg.out_dir is set; per-step log lines go to `log`.
TrainResult train(const TrainConfig& cfg, const std::vector<Utterance>& train_set,
                  const std::vector<Utterance>& dev_set, const Vocabulary& vocab, std::ostream* log = nullptr,
                  const ModelParams* init = nullptr);

}  // namespace lal
