// Copyright 2026 The lalcs Authors
// SPDX-License-Identifier: Apache-2.0

#include "lal/model.hpp"

#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

#include "lal/error.hpp"

namespace lal {

void ModelConfig::validate() const {
  if (d_model < 1 || heads < 1 || d_model % heads != 0)
    throw std::invalid_argument("model: d_model must be a positive multiple of heads");
  if (enc_layers < 0 || dec_layers < 1) throw std::invalid_argument("model: need >= 0 encoder and >= 1 decoder layers");
  if (ffn_width < 1) throw std::invalid_argument("model: ffn_width < 1");
  if (subsample < 1) throw std::invalid_argument("model: subsample < 1");
  if (num_langs != kNumLangs) throw std::invalid_argument("model: the language classifier has exactly 3 classes");
  if (vocab_size < 2 || feature_dim < 1) throw std::invalid_argument("model: bad vocabulary or feature size");
  if (blank_id < 0 || blank_id >= vocab_size || sos_eos_id < 0 || sos_eos_id >= vocab_size || blank_id == sos_eos_id)
    throw std::invalid_argument("model: bad special token ids");
}

const Matrix& ModelParams::at(const std::string& name) const {
  auto it = tensors.find(name);
  if (it == tensors.end()) throw SchemaError("missing parameter tensor '" + name + "'");
  return it->second;
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [_, t] : tensors) n += static_cast<std::size_t>(t.size());
  return n;
}

namespace {

struct Shape {
  std::string name;
  int rows, cols;
  enum Init { kWeight, kZero, kOne, kEmbed } init;
};

void add_linear(std::vector<Shape>& s, const std::string& base, int out, int in) {
  s.push_back({base + ".weight", out, in, Shape::kWeight});
  s.push_back({base + ".bias", 1, out, Shape::kZero});
}

void add_norm(std::vector<Shape>& s, const std::string& base, int width) {
  s.push_back({base + ".gain", 1, width, Shape::kOne});
  s.push_back({base + ".bias", 1, width, Shape::kZero});
}

void add_attention(std::vector<Shape>& s, const std::string& base, int d) {
  for (const char* p : {".q", ".k", ".v", ".o"}) add_linear(s, base + p, d, d);
}

std::vector<Shape> shapes(const ModelConfig& c) {
  std::vector<Shape> s;
  const int d = c.d_model;
  add_linear(s, "enc.in", d, c.feature_dim);
  for (int l = 0; l < c.enc_layers; ++l) {
    const std::string b = "enc." + std::to_string(l);
    add_norm(s, b + ".ln1", d);
    add_attention(s, b + ".attn", d);
    add_norm(s, b + ".ln2", d);
    add_linear(s, b + ".ff1", c.ffn_width, d);
    add_linear(s, b + ".ff2", d, c.ffn_width);
  }
  add_norm(s, "enc.ln_out", d);
  s.push_back({"dec.embed", c.vocab_size, d, Shape::kEmbed});
  for (int l = 0; l < c.dec_layers; ++l) {
    const std::string b = "dec." + std::to_string(l);
    add_norm(s, b + ".ln1", d);
    add_attention(s, b + ".self", d);
    add_norm(s, b + ".ln2", d);
    add_attention(s, b + ".cross", d);
    add_norm(s, b + ".ln3", d);
    add_linear(s, b + ".ff1", c.ffn_width, d);
    add_linear(s, b + ".ff2", d, c.ffn_width);
  }
  add_norm(s, "dec.ln_out", d);
  add_linear(s, "dec.out", c.vocab_size, d);
  add_linear(s, "ctc", c.vocab_size, d);
  add_linear(s, "lid", c.num_langs, d);
  return s;
}

}  // namespace

std::vector<std::string> parameter_schema(const ModelConfig& cfg) {
  std::vector<std::string> names;
  for (const auto& s : shapes(cfg)) names.push_back(s.name);
  return names;
}

ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  ModelParams p;
  for (const auto& s : shapes(cfg)) {
    Matrix m(s.rows, s.cols);
    switch (s.init) {
      case Shape::kWeight: {
        const double std = 1.0 / std::sqrt(static_cast<double>(s.cols));
        for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = std * normal(rng);
        break;
      }
      case Shape::kEmbed:
        for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
        break;
      case Shape::kZero:
        m.setZero();
        break;
      case Shape::kOne:
        m.setOnes();
        break;
    }
    p.tensors.emplace(s.name, std::move(m));
  }
  return p;
}

void validate_params(const ModelParams& params, const ModelConfig& cfg) {
  for (const auto& s : shapes(cfg)) {
    const Matrix& m = params.at(s.name);
    if (m.rows() != s.rows || m.cols() != s.cols)
      throw SchemaError("tensor '" + s.name + "' has shape " + std::to_string(m.rows()) + "x" +
                        std::to_string(m.cols()) + ", expected " + std::to_string(s.rows) + "x" +
                        std::to_string(s.cols));
    if (!m.allFinite()) throw SchemaError("tensor '" + s.name + "' has non-finite values");
  }
}

std::vector<std::string> linear_weight_names(const ModelConfig& cfg) {
  std::vector<std::string> out;
  for (const auto& s : shapes(cfg))
    if (s.init == Shape::kWeight) out.push_back(s.name);
  return out;
}

bool is_lora_factor(const std::string& name) {
  auto ends_with = [&](const char* suffix) {
    const std::string s(suffix);
    return name.size() > s.size() && name.compare(name.size() - s.size(), s.size(), s) == 0;
  };
  return ends_with(".lora_a") || ends_with(".lora_b");
}

void add_lora(ModelParams& params, const std::vector<std::string>& targets, int rank, std::uint64_t seed,
              double sigma) {
  if (rank < 1) throw std::invalid_argument("add_lora: rank must be >= 1");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, sigma);
  for (const auto& name : targets) {
    const Matrix& w = params.at(name);
    Matrix a(w.rows(), rank);
    for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = normal(rng);
    params.tensors[name + ".lora_a"] = std::move(a);
    params.tensors[name + ".lora_b"] = Matrix::Zero(rank, w.cols());
  }
}

Matrix lora_apply(const Matrix& m0, const Matrix& a, const Matrix& b, const Matrix& x) {
  if (a.cols() < 1) throw std::invalid_argument("lora_apply: rank must be >= 1");
  if (a.rows() != m0.rows() || b.cols() != m0.cols() || a.cols() != b.rows() || x.rows() != m0.cols())
    throw std::invalid_argument("lora_apply: shape mismatch");
  const Matrix merged = m0 + a * b;
  return merged * x;
}

Matrix average_cross_attention(const AttentionRecord& record, int layer) {
  if (record.empty()) throw std::invalid_argument("average_cross_attention: empty record");
  if (layer < 0) layer = static_cast<int>(record.size()) - 1;
  if (layer >= static_cast<int>(record.size()) || record[layer].empty())
    throw std::out_of_range("average_cross_attention: invalid layer " + std::to_string(layer));
  const auto& heads = record[layer];
  Matrix avg = heads[0];
  for (std::size_t h = 1; h < heads.size(); ++h) avg += heads[h];
  avg /= static_cast<double>(heads.size());
  for (Eigen::Index t = 0; t < avg.rows(); ++t) {
    const double s = avg.row(t).sum();
    if (s > 0) avg.row(t) /= s;
  }
  return avg;
}

Matrix sinusoidal_positions(int length, int width) {
  Matrix pe(length, width);
  for (int pos = 0; pos < length; ++pos) {
    for (int i = 0; i < width; ++i) {
      const double rate = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / width);
      pe(pos, i) = (i % 2 == 0) ? std::sin(pos * rate) : std::cos(pos * rate);
    }
  }
  return pe;
}

BoundParams::BoundParams(ad::Graph& graph, const ModelParams& params, bool requires_grad)
    : graph_(graph), params_(params), requires_grad_(requires_grad) {}

ad::Var BoundParams::get(const std::string& name) {
  auto it = vars_.find(name);
  if (it != vars_.end()) return it->second;
  ad::Var v = graph_.external(params_.at(name), requires_grad_);
  vars_.emplace(name, v);
  return v;
}

ad::Var BoundParams::weight(const std::string& name) {
  ad::Var w = get(name);
  const std::string a_name = name + ".lora_a";
  if (!params_.has(a_name)) return w;
  ad::Var delta = ad::matmul(graph_, get(a_name), get(name + ".lora_b"));
  return ad::add(graph_, w, delta);
}

void BoundParams::collect_grads(ModelParams& into) const {
  for (const auto& [name, var] : vars_) {
    Matrix& dst = into.tensors[name];
    if (dst.size() == 0) dst = Matrix::Zero(graph_.value(var).rows(), graph_.value(var).cols());
    if (graph_.has_grad(var)) dst += graph_.grad_of(var.id);
  }
}

namespace {

using ad::Var;

Var affine(BoundParams& p, Var x, const std::string& base) {
  return ad::linear(p.graph(), x, p.weight(base + ".weight"), p.get(base + ".bias"));
}

Var norm(BoundParams& p, Var x, const std::string& base) {
  return ad::layer_norm_rows(p.graph(), x, p.get(base + ".gain"), p.get(base + ".bias"));
}

// Multi-head attention of queries over keys/values. `mask`, when non-empty,
// is added to the pre-softmax scores. Per-head probabilities (Nq x Nk) are
// appended to `probs` when it is non-null.
Var attention(BoundParams& p, const ModelConfig& cfg, Var queries, Var memory, const std::string& base,
              const Matrix* mask, std::vector<Matrix>* probs) {
  ad::Graph& g = p.graph();
  Var q = affine(p, queries, base + ".q");
  Var k = affine(p, memory, base + ".k");
  Var v = affine(p, memory, base + ".v");
  const int dh = cfg.d_model / cfg.heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Var> outs;
  for (int h = 0; h < cfg.heads; ++h) {
    Var qh = ad::slice_cols(g, q, h * dh, dh);
    Var kh = ad::slice_cols(g, k, h * dh, dh);
    Var vh = ad::slice_cols(g, v, h * dh, dh);
    Var scores = ad::scale(g, ad::matmul_nt(g, qh, kh), inv_sqrt);
    if (mask) scores = ad::add_constant(g, scores, *mask);
    Var pr = ad::softmax_rows(g, scores);
    if (probs) probs->push_back(g.value(pr));
    outs.push_back(ad::matmul(g, pr, vh));
  }
  Var cat = outs.size() == 1 ? outs[0] : ad::concat_cols(g, outs);
  return affine(p, cat, base + ".o");
}

Var feed_forward(BoundParams& p, Var x, const std::string& base) {
  return affine(p, ad::silu(p.graph(), affine(p, x, base + ".ff1")), base + ".ff2");
}

}  // namespace

Var encode(BoundParams& p, const ModelConfig& cfg, Var features) {
  ad::Graph& g = p.graph();
  const auto frames = g.value(features).rows();
  if (frames < cfg.subsample)
    throw std::invalid_argument("encode: " + std::to_string(frames) + " frames is fewer than the subsampling factor " +
                                std::to_string(cfg.subsample));
  if (g.value(features).cols() != cfg.feature_dim) throw std::invalid_argument("encode: feature dimension mismatch");
  Var x = ad::mean_pool_rows(g, features, cfg.subsample);
  x = affine(p, x, "enc.in");
  x = ad::add_constant(g, x, sinusoidal_positions(static_cast<int>(g.value(x).rows()), cfg.d_model));
  for (int l = 0; l < cfg.enc_layers; ++l) {
    const std::string b = "enc." + std::to_string(l);
    Var h = norm(p, x, b + ".ln1");
    x = ad::add(g, x, attention(p, cfg, h, h, b + ".attn", nullptr, nullptr));
    x = ad::add(g, x, feed_forward(p, norm(p, x, b + ".ln2"), b));
  }
  return norm(p, x, "enc.ln_out");
}

DecoderVars decode(BoundParams& p, const ModelConfig& cfg, Var hidden, std::span<const int> prefix) {
  if (prefix.empty()) throw std::invalid_argument("decode: empty prefix");
  if (prefix[0] != cfg.sos_eos_id) throw std::invalid_argument("decode: prefix must start with sos");
  ad::Graph& g = p.graph();
  const int n = static_cast<int>(prefix.size());
  Matrix causal = Matrix::Zero(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) causal(i, j) = -std::numeric_limits<double>::infinity();

  DecoderVars out;
  Var x = ad::gather_rows(g, p.get("dec.embed"), prefix);
  x = ad::add_constant(g, x, sinusoidal_positions(n, cfg.d_model));
  for (int l = 0; l < cfg.dec_layers; ++l) {
    const std::string b = "dec." + std::to_string(l);
    Var h = norm(p, x, b + ".ln1");
    x = ad::add(g, x, attention(p, cfg, h, h, b + ".self", &causal, nullptr));
    std::vector<Matrix> probs;
    x = ad::add(g, x, attention(p, cfg, norm(p, x, b + ".ln2"), hidden, b + ".cross", nullptr, &probs));
    x = ad::add(g, x, feed_forward(p, norm(p, x, b + ".ln3"), b));
    std::vector<Matrix> frame_major;
    for (auto& m : probs) frame_major.push_back(m.transpose());
    out.attention.push_back(std::move(frame_major));
  }
  out.logits = affine(p, norm(p, x, "dec.ln_out"), "dec.out");
  return out;
}

Var ctc_log_probs(BoundParams& p, Var hidden) { return ad::log_softmax_rows(p.graph(), affine(p, hidden, "ctc")); }

Var lid_logits(BoundParams& p, Var hidden) { return affine(p, hidden, "lid"); }

Matrix encode(const ModelParams& params, const ModelConfig& cfg, const Matrix& features) {
  ad::Graph g;
  BoundParams p(g, params, false);
  return g.value(encode(p, cfg, g.input(features)));
}

DecoderOutput decode_forward(const ModelParams& params, const ModelConfig& cfg, const Matrix& hidden,
                             std::span<const int> prefix) {
  ad::Graph g;
  BoundParams p(g, params, false);
  DecoderVars d = decode(p, cfg, g.input(hidden), prefix);
  return {g.value(d.logits), std::move(d.attention)};
}

Matrix ctc_log_probs(const ModelParams& params, const Matrix& hidden) {
  ad::Graph g;
  BoundParams p(g, params, false);
  return g.value(ctc_log_probs(p, g.input(hidden)));
}

Matrix lid_logits(const ModelParams& params, const Matrix& hidden) {
  ad::Graph g;
  BoundParams p(g, params, false);
  return g.value(lid_logits(p, g.input(hidden)));
}

}  // namespace lal
