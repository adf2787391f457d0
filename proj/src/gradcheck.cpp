// Copyright 2026 The lalcs Authors
// SPDX-License-Identifier: Apache-2.0

#include "lal/gradcheck.hpp"

#include <algorithm>
#include <random>

#include "lal/model.hpp"
#include "lal/objectives.hpp"
#include "lal/train.hpp"

namespace lal {

double relative_error(const Matrix& analytic, const Matrix& numeric, double floor) {
  const double diff = (analytic - numeric).norm();
  return diff / std::max({analytic.norm(), numeric.norm(), floor});
}

Matrix numeric_gradient(const std::function<double(const Matrix&)>& f, const Matrix& x, double step) {
  Matrix g(x.rows(), x.cols());
  Matrix probe = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double orig = probe.data()[i];
    probe.data()[i] = orig + step;
    const double up = f(probe);
    probe.data()[i] = orig - step;
    const double down = f(probe);
    probe.data()[i] = orig;
    g.data()[i] = (up - down) / (2.0 * step);
  }
  return g;
}

namespace {

Matrix random_matrix(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

Matrix log_softmax(const Matrix& x) {
  Matrix out = x;
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double m = x.row(r).maxCoeff();
    out.row(r).array() -= m + std::log((x.row(r).array() - m).exp().sum());
  }
  return out;
}

class Recorder {
 public:
  explicit Recorder(const GradCheckOptions& o) : opts_(o) {}
  void add(const std::string& name, double err) {
    report_.items.push_back({name, err});
    if (report_.items.size() == 1 || err > report_.max_rel_error) {
      report_.max_rel_error = err;
      report_.worst = name;
    }
    if (!(err <= opts_.tolerance)) report_.passed = false;
  }
  GradCheckReport take() { return std::move(report_); }

 private:
  const GradCheckOptions& opts_;
  GradCheckReport report_;
};

// Compares analytic parameter gradients of `objective` against central
// differences on a sample of entries per tensor.
void check_params(Recorder& rec, const std::string& prefix, ModelParams& params, const ModelParams& analytic,
                  const std::function<double(const ModelParams&)>& objective, const GradCheckOptions& opts,
                  std::mt19937_64& rng) {
  for (const auto& [name, grad] : analytic.tensors) {
    Matrix& w = params.tensors.at(name);
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(w.size()));
    for (Eigen::Index i = 0; i < w.size(); ++i) idx[static_cast<std::size_t>(i)] = i;
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(std::min(idx.size(), static_cast<std::size_t>(opts.samples_per_tensor)));
    Matrix a(1, static_cast<Eigen::Index>(idx.size())), n(1, static_cast<Eigen::Index>(idx.size()));
    for (std::size_t k = 0; k < idx.size(); ++k) {
      const double orig = w.data()[idx[k]];
      w.data()[idx[k]] = orig + opts.step;
      const double up = objective(params);
      w.data()[idx[k]] = orig - opts.step;
      const double down = objective(params);
      w.data()[idx[k]] = orig;
      a(0, static_cast<Eigen::Index>(k)) = grad.data()[idx[k]];
      n(0, static_cast<Eigen::Index>(k)) = (up - down) / (2.0 * opts.step);
    }
    rec.add(prefix + "/" + name, relative_error(a, n));
  }
}

}  // namespace

GradCheckReport run_gradcheck(const GradCheckOptions& opts) {
  Recorder rec(opts);
  std::mt19937_64 rng(opts.seed);
  for (int c = 0; c < opts.configs; ++c) {
    const std::string tag = "cfg" + std::to_string(c);
    std::uniform_int_distribution<int> coin(0, 1);

    ModelConfig cfg;
    cfg.d_model = 8;
    cfg.heads = 2;
    cfg.enc_layers = 1 + coin(rng);
    cfg.dec_layers = 1 + coin(rng);
    cfg.ffn_width = 16;
    cfg.subsample = 2;
    cfg.feature_dim = 4;
    cfg.vocab_size = 7;  // 3 specials, 2 + 2 language tokens
    const int frames = 12, n_tokens = 4;

    std::vector<int> tokens, langs;
    std::uniform_int_distribution<int> tok(3, cfg.vocab_size - 1);
    for (int i = 0; i < n_tokens; ++i) {
      int t;
      do {
        t = tok(rng);
      } while (!tokens.empty() && t == tokens.back());
      tokens.push_back(t);
      langs.push_back(t < 5 ? kLangA : kLangB);
    }
    const int tp = frames / cfg.subsample;

    // Loss functions on free inputs.
    {
      const Matrix lp = log_softmax(random_matrix(rng, tp, cfg.vocab_size));
      const auto analytic = ctc_loss(lp, tokens, cfg.blank_id).grad;
      const auto numeric =
          numeric_gradient([&](const Matrix& x) { return ctc_loss(x, tokens, cfg.blank_id).loss; }, lp, opts.step);
      rec.add(tag + "/ctc_loss", relative_error(analytic, numeric));
    }
    {
      std::vector<int> targets = tokens;
      targets.push_back(cfg.sos_eos_id);
      const Matrix logits = random_matrix(rng, static_cast<Eigen::Index>(targets.size()), cfg.vocab_size);
      const auto analytic = att_ce_loss(logits, targets, 0.1).grad;
      const auto numeric =
          numeric_gradient([&](const Matrix& x) { return att_ce_loss(x, targets, 0.1).loss; }, logits, opts.step);
      rec.add(tag + "/att_ce_loss", relative_error(analytic, numeric));
    }
    {
      std::vector<int> labels;
      std::uniform_int_distribution<int> lab(0, kNumLangs - 1);
      for (int t = 0; t < tp; ++t) labels.push_back(lab(rng));
      const Matrix logits = random_matrix(rng, tp, kNumLangs);
      std::uniform_real_distribution<double> wd(0.5, 4.0);
      for (bool weighted : {false, true}) {
        const LangWeights w = weighted ? LangWeights{wd(rng), wd(rng), wd(rng)} : LangWeights{1.0, 1.0, 1.0};
        const auto analytic = lal_loss(logits, labels, w).grad;
        const auto numeric =
            numeric_gradient([&](const Matrix& x) { return lal_loss(x, labels, w).loss; }, logits, opts.step);
        rec.add(tag + (weighted ? "/lal_loss_weighted" : "/lal_loss"), relative_error(analytic, numeric));
      }
    }

    // Model outputs, each reduced with a fixed random projection.
    ModelParams params = init_params(cfg, rng());
    if (coin(rng)) {
      add_lora(params, {"enc.0.attn.q.weight", "dec.0.cross.v.weight"}, 2, rng());
      // Nonzero B so the low-rank path carries gradient.
      for (auto& [name, m] : params.tensors)
        if (name.ends_with(".lora_b")) m = random_matrix(rng, m.rows(), m.cols(), 0.1);
    }
    const Matrix features = random_matrix(rng, frames, cfg.feature_dim);
    std::vector<int> prefix{cfg.sos_eos_id};
    prefix.insert(prefix.end(), tokens.begin(), tokens.end());

    enum Output { kHidden, kCtc, kDecoder, kLid };
    const char* names[] = {"encoder", "ctc_log_probs", "decoder_logits", "lid_logits"};
    for (int which : {kHidden, kCtc, kDecoder, kLid}) {
      Matrix proj;
      auto forward = [&](const ModelParams& p, ModelParams* grads) {
        ad::Graph g;
        BoundParams bp(g, p, grads != nullptr);
        ad::Var h = encode(bp, cfg, g.input(features));
        ad::Var out = h;
        if (which == kCtc) out = ctc_log_probs(bp, h);
        if (which == kDecoder) out = decode(bp, cfg, h, prefix).logits;
        if (which == kLid) out = lid_logits(bp, h);
        const Matrix& v = g.value(out);
        if (proj.size() == 0) proj = random_matrix(rng, v.rows(), v.cols());
        if (grads) {
          g.seed(out, proj);
          g.backward();
          bp.collect_grads(*grads);
        }
        return v.cwiseProduct(proj).sum();
      };
      ModelParams analytic;
      forward(params, &analytic);
      check_params(rec, tag + "/" + names[which], params, analytic,
                   [&](const ModelParams& p) { return forward(p, nullptr); }, opts, rng);
    }

    // The complete training objective with pseudo-labels held fixed.
    {
      LossWeights w;
      w.alpha = 0.3;
      w.beta = 0.7;
      w.lang_weights = {1.0, 1.5, 2.5};
      const auto labels = training_pseudo_labels(params, cfg, features, tokens, langs);
      ModelParams analytic;
      utterance_loss(params, cfg, features, tokens, langs, w, &analytic, 1.0, &labels);
      check_params(
          rec, tag + "/total_loss", params, analytic,
          [&](const ModelParams& p) { return utterance_loss(p, cfg, features, tokens, langs, w, nullptr, 1.0, &labels).total; },
          opts, rng);
    }
  }
  return rec.take();
}

}  // namespace lal
