// Copyright 2026 The lalcs Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "lal/autodiff.hpp"
#include "lal/vocab.hpp"

namespace lal {

struct ModelConfig {
  int d_model = 32;
  int heads = 2;
  int enc_layers = 2;
  int dec_layers = 2;
  int ffn_width = 64;
  int subsample = 4;
  int vocab_size = 27;
  int num_langs = kNumLangs;
  int feature_dim = 8;
  int blank_id = 0;
  int sos_eos_id = 1;

  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

/// Named parameter tensors. Weights are stored out x in, biases and
/// normalization parameters as 1 x n rows. A LoRA pair adapting weight "W"
/// lives under "W.lora_a" (out x r) and "W.lora_b" (r x in).
struct ModelParams {
  std::map<std::string, Matrix> tensors;

  const Matrix& at(const std::string& name) const;
  bool has(const std::string& name) const { return tensors.count(name) > 0; }
  std::size_t parameter_count() const;
};

/// Names of every tensor the configuration requires (LoRA factors excluded).
std::vector<std::string> parameter_schema(const ModelConfig& cfg);
ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed);
/// Throws SchemaError when a required tensor is missing, misshapen, or non-finite.
void validate_params(const ModelParams& params, const ModelConfig& cfg);

/// Every linear weight that can carry a LoRA pair.
std::vector<std::string> linear_weight_names(const ModelConfig& cfg);
/// Adds LoRA factors to each named weight: A ~ N(0, sigma^2), B = 0.
void add_lora(ModelParams& params, const std::vector<std::string>& targets, int rank, std::uint64_t seed,
              double sigma = 0.02);
bool is_lora_factor(const std::string& name);

/// y = (M0 + A B) x. x is D_in x k.
Matrix lora_apply(const Matrix& m0, const Matrix& a, const Matrix& b, const Matrix& x);

/// Cross-attention weights of one decoding pass, frame-major: record[l][h] is
/// T' x N, entry (t, n) being the weight query token n assigns to frame t.
/// Each column is a softmax over frames and so sums to one.
using AttentionRecord = std::vector<std::vector<Matrix>>;

/// Head-averaged attention of one layer, with every frame row renormalized
/// over tokens. Renormalizing does not move any row's argmax.
Matrix average_cross_attention(const AttentionRecord& record, int layer = -1);

Matrix sinusoidal_positions(int length, int width);

/// Binds parameters into a graph on demand. LoRA-adapted weights are merged
/// as W + A B before use, so a zero B reproduces W bit for bit.
class BoundParams {
 public:
  BoundParams(ad::Graph& graph, const ModelParams& params, bool requires_grad);

  ad::Var get(const std::string& name);
  ad::Var weight(const std::string& name);
  ad::Graph& graph() { return graph_; }
  const std::map<std::string, ad::Var>& bound() const { return vars_; }
  /// Gradients of every bound tensor after graph.backward().
  void collect_grads(ModelParams& into) const;

 private:
  ad::Graph& graph_;
  const ModelParams& params_;
  bool requires_grad_;
  std::map<std::string, ad::Var> vars_;
};

struct DecoderVars {
  ad::Var logits;  // N x V, unnormalized
  AttentionRecord attention;
};

ad::Var encode(BoundParams& p, const ModelConfig& cfg, ad::Var features);
DecoderVars decode(BoundParams& p, const ModelConfig& cfg, ad::Var hidden, std::span<const int> prefix);
ad::Var ctc_log_probs(BoundParams& p, ad::Var hidden);
ad::Var lid_logits(BoundParams& p, ad::Var hidden);

// Value-level conveniences for inference.
Matrix encode(const ModelParams& params, const ModelConfig& cfg, const Matrix& features);
struct DecoderOutput {
  Matrix logits;
  AttentionRecord attention;
};
DecoderOutput decode_forward(const ModelParams& params, const ModelConfig& cfg, const Matrix& hidden,
                             std::span<const int> prefix);
Matrix ctc_log_probs(const ModelParams& params, const Matrix& hidden);
Matrix lid_logits(const ModelParams& params, const Matrix& hidden);

}  // namespace lal
