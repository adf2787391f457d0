// Copyright 2026 The lalcs Authors
// SPDX-License-Identifier: Apache-2.0

#include "lal/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>

#include "lal/alignment.hpp"
#include "lal/error.hpp"

namespace lal {

double lr_at(long step, double peak, long warmup, long total, DecayShape shape) {
  if (step < 0) throw std::invalid_argument("lr_at: negative step");
  if (warmup < 1) throw std::invalid_argument("lr_at: warmup must be >= 1");
  if (total < warmup) throw std::invalid_argument("lr_at: total < warmup");
  if (step <= warmup) return peak * static_cast<double>(step) / static_cast<double>(warmup);
  if (step >= total) return 0.0;
  const double frac = static_cast<double>(step - warmup) / static_cast<double>(total - warmup);
  if (shape == DecayShape::kLinear) return peak * (1.0 - frac);
  return peak * 0.5 * (1.0 + std::cos(std::numbers::pi * frac));
}

void Adam::step(ModelParams& params, const ModelParams& grads, double lr) {
  ++t_;
  const double bc1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(t_));
  for (auto& [name, w] : params.tensors) {
    auto& m = m_[name];
    auto& v = v_[name];
    if (m.size() == 0) {
      m = Matrix::Zero(w.rows(), w.cols());
      v = Matrix::Zero(w.rows(), w.cols());
    }
    auto git = grads.tensors.find(name);
    if (git != grads.tensors.end() && git->second.size() > 0) {
      m = opts_.beta1 * m + (1.0 - opts_.beta1) * git->second;
      v = opts_.beta2 * v + (1.0 - opts_.beta2) * git->second.cwiseProduct(git->second);
    } else {
      m *= opts_.beta1;
      v *= opts_.beta2;
    }
    w.array() -= lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + opts_.eps);
  }
}

void TrainConfig::validate() const {
  model.validate();
  loss.validate();
  if (warmup < 1) throw std::invalid_argument("config: warmup must be >= 1");
  if (epochs < 1) throw std::invalid_argument("config: epochs must be >= 1");
  if (extra_epochs < 0) throw std::invalid_argument("config: extra_epochs must be >= 0");
  if (batch < 1) throw std::invalid_argument("config: batch must be >= 1");
  if (!(lr_peak > 0.0)) throw std::invalid_argument("config: lr_peak must be positive");
  if (average_best < 1) throw std::invalid_argument("config: average_best must be >= 1");
  if (speed_factors.empty()) throw std::invalid_argument("config: speed_factors is empty");
  for (double f : speed_factors)
    if (!(f > 0.0)) throw std::invalid_argument("config: speed factors must be positive");
  if (!(rate_factor > 0.0)) throw std::invalid_argument("config: rate_factor must be positive");
  if (beam < 1) throw std::invalid_argument("config: beam must be >= 1");
  if (!(alpha_dec >= 0.0 && alpha_dec <= 1.0)) throw std::invalid_argument("config: alpha_dec outside [0, 1]");
  if (!(tau > 0.0 && tau < 0.5)) throw std::invalid_argument("config: tau must lie in (0, 0.5)");
  if (!lora_targets.empty() && lora_rank < 1) throw std::invalid_argument("config: lora_rank must be >= 1");
}

namespace {

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, sep)) out.push_back(item);
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double d = 0;
  try {
    d = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size()) throw std::invalid_argument("config: " + key + ": not a number: '" + v + "'");
  return d;
}

long to_long(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  long d = 0;
  try {
    d = std::stol(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size()) throw std::invalid_argument("config: " + key + ": not an integer: '" + v + "'");
  return d;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true") return true;
  if (v == "0" || v == "false") return false;
  throw std::invalid_argument("config: " + key + ": expected true or false");
}

std::string fmt(double d) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", d);
  return buf;
}

std::string join(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + fmt(v[i]);
  return s;
}

}  // namespace

void set_config_value(TrainConfig& c, const std::string& key, const std::string& v) {
  auto i = [&] { return static_cast<int>(to_long(key, v)); };
  auto d = [&] { return to_double(key, v); };
  if (key == "d_model") c.model.d_model = i();
  else if (key == "heads") c.model.heads = i();
  else if (key == "enc_layers") c.model.enc_layers = i();
  else if (key == "dec_layers") c.model.dec_layers = i();
  else if (key == "ffn_width") c.model.ffn_width = i();
  else if (key == "subsample") c.model.subsample = i();
  else if (key == "alpha_train") c.loss.alpha = d();
  else if (key == "beta") c.loss.beta = d();
  else if (key == "smoothing") c.loss.label_smoothing = d();
  else if (key == "lang_weights") {
    if (v == "auto") {
      c.auto_lang_weights = true;
    } else {
      const auto parts = split(v, ',');
      if (parts.size() != 3) throw std::invalid_argument("config: lang_weights expects a,b,other or auto");
      c.auto_lang_weights = false;
      c.loss.lang_weights[kLangA] = to_double(key, parts[0]);
      c.loss.lang_weights[kLangB] = to_double(key, parts[1]);
      c.loss.lang_weights[kOther] = to_double(key, parts[2]);
    }
  } else if (key == "rate_factor") c.rate_factor = d();
  else if (key == "lr_peak") c.lr_peak = d();
  else if (key == "warmup") c.warmup = to_long(key, v);
  else if (key == "decay") {
    if (v == "cosine") c.decay = DecayShape::kCosine;
    else if (v == "linear") c.decay = DecayShape::kLinear;
    else throw std::invalid_argument("config: decay must be cosine or linear");
  } else if (key == "batch") c.batch = i();
  else if (key == "epochs") c.epochs = i();
  else if (key == "extra_epochs") c.extra_epochs = i();
  else if (key == "grad_clip") c.grad_clip = d();
  else if (key == "seed") c.seed = static_cast<std::uint64_t>(to_long(key, v));
  else if (key == "threads") c.threads = i();
  else if (key == "augment") c.augment = to_bool(key, v);
  else if (key == "time_masks") c.mask.time_masks = i();
  else if (key == "max_time_width") c.mask.max_time_width = i();
  else if (key == "freq_masks") c.mask.freq_masks = i();
  else if (key == "max_freq_width") c.mask.max_freq_width = i();
  else if (key == "speed_factors") {
    c.speed_factors.clear();
    for (const auto& p : split(v, ',')) c.speed_factors.push_back(to_double(key, p));
  } else if (key == "average_best") c.average_best = i();
  else if (key == "lora_targets") c.lora_targets = v;
  else if (key == "lora_rank") c.lora_rank = i();
  else if (key == "train_manifest") c.train_manifest = v;
  else if (key == "dev_manifest") c.dev_manifest = v;
  else if (key == "vocab") c.vocab_path = v;
  else if (key == "out_dir") c.out_dir = v;
  else if (key == "beam") c.beam = i();
  else if (key == "alpha_dec") c.alpha_dec = d();
  else if (key == "tau") c.tau = d();
  else throw std::invalid_argument("config: unknown key '" + key + "'");
}

void load_config_file(TrainConfig& cfg, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError(path.string() + ":" + std::to_string(lineno) + ": expected key=value");
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    try {
      set_config_value(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const std::invalid_argument& e) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

std::map<std::string, std::string> config_values(const TrainConfig& c) {
  std::map<std::string, std::string> m;
  m["d_model"] = std::to_string(c.model.d_model);
  m["heads"] = std::to_string(c.model.heads);
  m["enc_layers"] = std::to_string(c.model.enc_layers);
  m["dec_layers"] = std::to_string(c.model.dec_layers);
  m["ffn_width"] = std::to_string(c.model.ffn_width);
  m["subsample"] = std::to_string(c.model.subsample);
  m["alpha_train"] = fmt(c.loss.alpha);
  m["beta"] = fmt(c.loss.beta);
  m["smoothing"] = fmt(c.loss.label_smoothing);
  m["lang_weights"] = c.auto_lang_weights ? "auto"
                                          : fmt(c.loss.lang_weights[kLangA]) + "," + fmt(c.loss.lang_weights[kLangB]) +
                                                "," + fmt(c.loss.lang_weights[kOther]);
  m["rate_factor"] = fmt(c.rate_factor);
  m["lr_peak"] = fmt(c.lr_peak);
  m["warmup"] = std::to_string(c.warmup);
  m["decay"] = c.decay == DecayShape::kCosine ? "cosine" : "linear";
  m["batch"] = std::to_string(c.batch);
  m["epochs"] = std::to_string(c.epochs);
  m["extra_epochs"] = std::to_string(c.extra_epochs);
  m["grad_clip"] = fmt(c.grad_clip);
  m["seed"] = std::to_string(c.seed);
  m["augment"] = c.augment ? "true" : "false";
  m["time_masks"] = std::to_string(c.mask.time_masks);
  m["max_time_width"] = std::to_string(c.mask.max_time_width);
  m["freq_masks"] = std::to_string(c.mask.freq_masks);
  m["max_freq_width"] = std::to_string(c.mask.max_freq_width);
  m["speed_factors"] = join(c.speed_factors);
  m["average_best"] = std::to_string(c.average_best);
  m["lora_targets"] = c.lora_targets;
  m["lora_rank"] = std::to_string(c.lora_rank);
  m["beam"] = std::to_string(c.beam);
  m["alpha_dec"] = fmt(c.alpha_dec);
  m["tau"] = fmt(c.tau);
  return m;
}

namespace {

std::vector<int> labels_from_record(const AttentionRecord& record, const std::vector<int>& token_langs) {
  const Matrix avg = average_cross_attention(record);
  // The last column belongs to the eos prediction and carries no language.
  const Matrix tokens_only = avg.leftCols(avg.cols() - 1);
  return pseudo_labels(tokens_only, token_langs).labels;
}

}  // namespace

UttLoss utterance_loss(const ModelParams& params, const ModelConfig& cfg, const Matrix& features,
                       const std::vector<int>& tokens, const std::vector<int>& token_langs, const LossWeights& w,
                       ModelParams* grads, double scale, const std::vector<int>* fixed_labels) {
  if (tokens.size() != token_langs.size()) throw std::invalid_argument("utterance_loss: token/language mismatch");
  ad::Graph g;
  BoundParams p(g, params, grads != nullptr);
  ad::Var x = g.input(features);
  ad::Var hidden = encode(p, cfg, x);
  ad::Var lp = ctc_log_probs(p, hidden);

  std::vector<int> prefix{cfg.sos_eos_id};
  prefix.insert(prefix.end(), tokens.begin(), tokens.end());
  std::vector<int> targets = tokens;
  targets.push_back(cfg.sos_eos_id);
  DecoderVars dec = decode(p, cfg, hidden, prefix);

  UttLoss out;
  const LossAndGrad ctc = ctc_loss(g.value(lp), tokens, cfg.blank_id);
  const LossAndGrad att = att_ce_loss(g.value(dec.logits), targets, w.label_smoothing);
  out.ctc = ctc.loss;
  out.att = att.loss;

  std::vector<int> labels;
  if (fixed_labels) {
    labels = *fixed_labels;
  } else {
    const Matrix avg = average_cross_attention(dec.attention);
    const auto seq = pseudo_labels(avg.leftCols(avg.cols() - 1), token_langs);
    labels = seq.labels;
    out.tie_breaks = seq.tie_breaks;
  }
  // The classifier is only built when it contributes, so beta = 0 never touches it.
  const bool with_lal = w.beta > 0.0;
  ad::Var lid;
  if (with_lal || !grads) {
    lid = lid_logits(p, hidden);
    const LossAndGrad lal = lal_loss(g.value(lid), labels, w.lang_weights);
    out.lal = lal.loss;
    if (grads && with_lal) g.seed(lid, (scale * w.beta) * lal.grad);
  }
  out.total = total_loss(out.ctc, out.att, with_lal ? out.lal : 0.0, w);
  if (grads) {
    if (w.alpha > 0.0) g.seed(lp, (scale * w.alpha) * ctc.grad);
    if (w.alpha < 1.0) g.seed(dec.logits, (scale * (1.0 - w.alpha)) * att.grad);
    g.backward();
    p.collect_grads(*grads);
  }
  return out;
}

std::vector<int> training_pseudo_labels(const ModelParams& params, const ModelConfig& cfg, const Matrix& features,
                                        const std::vector<int>& tokens, const std::vector<int>& token_langs) {
  const Matrix hidden = encode(params, cfg, features);
  std::vector<int> prefix{cfg.sos_eos_id};
  prefix.insert(prefix.end(), tokens.begin(), tokens.end());
  return labels_from_record(decode_forward(params, cfg, hidden, prefix).attention, token_langs);
}

namespace {

std::uint64_t mix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

int worker_count(int requested, std::size_t jobs) {
  int n = requested > 0 ? requested : static_cast<int>(std::thread::hardware_concurrency());
  return std::max(1, std::min(n, static_cast<int>(jobs)));
}

// Runs fn(i) for i in [0, n) across `workers` threads; fn must only touch slot i.
template <typename Fn>
void parallel_for(std::size_t n, int workers, Fn fn) {
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = static_cast<std::size_t>(w); i < n; i += static_cast<std::size_t>(workers)) fn(i);
      } catch (...) {
        errors[static_cast<std::size_t>(w)] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

bool feasible(const ModelConfig& cfg, const Matrix& features, const std::vector<int>& tokens) {
  return features.rows() >= cfg.subsample && features.rows() / cfg.subsample >= ctc_min_frames(tokens);
}

}  // namespace

double evaluate_loss(const ModelParams& params, const ModelConfig& cfg, const std::vector<Utterance>& utts,
                     const LossWeights& w, int threads) {
  std::vector<double> losses(utts.size(), 0.0);
  std::vector<char> used(utts.size(), 0);
  parallel_for(utts.size(), worker_count(threads, utts.size()), [&](std::size_t i) {
    const auto& u = utts[i];
    if (!feasible(cfg, u.features, u.tokens)) return;
    losses[i] = utterance_loss(params, cfg, u.features, u.tokens, u.token_langs, w).total;
    used[i] = 1;
  });
  double sum = 0.0;
  long n = 0;
  for (std::size_t i = 0; i < utts.size(); ++i) {
    if (!used[i]) continue;
    sum += losses[i];
    ++n;
  }
  return n > 0 ? sum / static_cast<double>(n) : 0.0;
}

TrainResult train(const TrainConfig& cfg_in, const std::vector<Utterance>& train_set,
                  const std::vector<Utterance>& dev_set, const Vocabulary& vocab, std::ostream* log,
                  const ModelParams* init) {
  TrainConfig cfg = cfg_in;
  cfg.model.vocab_size = vocab.size();
  cfg.model.blank_id = vocab.blank;
  cfg.model.sos_eos_id = vocab.sos_eos;
  if (!train_set.empty()) cfg.model.feature_dim = static_cast<int>(train_set.front().features.cols());
  if (cfg.auto_lang_weights) {
    const auto counts = count_tokens(train_set);
    cfg.loss.lang_weights = init_lang_weights(counts[kLangA], counts[kLangB], cfg.rate_factor);
  }
  cfg.validate();
  if (train_set.empty()) throw std::invalid_argument("train: empty training set");

  ModelParams params = init ? *init : init_params(cfg.model, cfg.seed);
  if (!cfg.lora_targets.empty()) {
    std::vector<std::string> targets;
    std::istringstream in(cfg.lora_targets);
    for (std::string t; std::getline(in, t, ',');)
      if (!params.has(t + ".lora_a")) targets.push_back(t);
    add_lora(params, targets, cfg.lora_rank, mix(cfg.seed ^ 0x10aa));
  }
  validate_params(params, cfg.model);

  std::filesystem::path out_dir = cfg.out_dir;
  if (!out_dir.empty()) std::filesystem::create_directories(out_dir);

  auto extras = config_values(cfg);
  const int total_epochs = cfg.epochs + cfg.extra_epochs;
  const long steps_per_epoch = (static_cast<long>(train_set.size()) + cfg.batch - 1) / cfg.batch;
  const long total_steps = std::max<long>(steps_per_epoch * total_epochs, cfg.warmup);
  const int workers = worker_count(cfg.threads, static_cast<std::size_t>(cfg.batch));

  TrainResult result;
  Adam adam;
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  long step = 0;
  char line[256];

  for (int epoch = 1; epoch <= total_epochs; ++epoch) {
    std::mt19937_64 shuffle_rng(mix(cfg.seed ^ mix(static_cast<std::uint64_t>(epoch))));
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double epoch_loss = 0.0;
    long epoch_count = 0;
    for (long b = 0; b < steps_per_epoch; ++b) {
      const std::size_t begin = static_cast<std::size_t>(b * cfg.batch);
      const std::size_t end = std::min(order.size(), begin + static_cast<std::size_t>(cfg.batch));
      const std::size_t n = end - begin;
      std::vector<ModelParams> grads(n);
      std::vector<UttLoss> losses(n);
      std::vector<char> used(n, 0);
      const double inv_b = 1.0 / static_cast<double>(n);
      parallel_for(n, workers, [&](std::size_t k) {
        const std::size_t idx = order[begin + k];
        const Utterance& u = train_set[idx];
        const std::uint64_t key = mix(cfg.seed ^ mix((static_cast<std::uint64_t>(epoch) << 32) ^ idx));
        Matrix feats = u.features;
        if (cfg.speed_factors.size() > 1 || cfg.speed_factors[0] != 1.0)
          feats = speed_perturb(feats, cfg.speed_factors[key % cfg.speed_factors.size()]);
        if (cfg.augment) feats = mask_augment(feats, cfg.mask, key);
        if (!feasible(cfg.model, feats, u.tokens)) return;
        losses[k] = utterance_loss(params, cfg.model, feats, u.tokens, u.token_langs, cfg.loss, &grads[k], inv_b);
        used[k] = 1;
      });

      ModelParams sum;
      UttLoss mean;
      long count = 0;
      for (std::size_t k = 0; k < n; ++k) {
        if (!used[k]) {
          ++result.skipped;
          continue;
        }
        ++count;
        mean.total += losses[k].total;
        mean.ctc += losses[k].ctc;
        mean.att += losses[k].att;
        mean.lal += losses[k].lal;
        for (auto& [name, g] : grads[k].tensors) {
          auto& dst = sum.tensors[name];
          if (dst.size() == 0) dst = g;
          else dst += g;
        }
      }
      if (count == 0) continue;
      // With adapters the base weights stay frozen.
      if (!cfg.lora_targets.empty())
        std::erase_if(sum.tensors, [](const auto& kv) { return !is_lora_factor(kv.first); });
      const double c = static_cast<double>(count);
      mean.total /= c;
      mean.ctc /= c;
      mean.att /= c;
      mean.lal /= c;
      if (!std::isfinite(mean.total))
        throw TrainingDiverged("non-finite loss in epoch " + std::to_string(epoch) + " batch " + std::to_string(b),
                               step);
      if (cfg.grad_clip > 0.0) {
        double sq = 0.0;
        for (const auto& [name, g] : sum.tensors) sq += g.squaredNorm();
        const double norm = std::sqrt(sq);
        if (!std::isfinite(norm)) throw TrainingDiverged("non-finite gradient in batch " + std::to_string(b), step);
        if (norm > cfg.grad_clip)
          for (auto& [name, g] : sum.tensors) g *= cfg.grad_clip / norm;
      }
      ++step;
      const double lr = lr_at(step, cfg.lr_peak, cfg.warmup, total_steps, cfg.decay);
      adam.step(params, sum, lr);
      epoch_loss += mean.total;
      ++epoch_count;
      if (log) {
        std::snprintf(line, sizeof(line), "%ld %.6f %.6f %.6f %.6f %.6g\n", step, mean.total, mean.ctc, mean.att,
                      mean.lal, lr);
        *log << line;
      }
    }

    EpochStat stat;
    stat.epoch = epoch;
    stat.train_loss = epoch_count ? epoch_loss / static_cast<double>(epoch_count) : 0.0;
    stat.val_loss = dev_set.empty() ? stat.train_loss : evaluate_loss(params, cfg.model, dev_set, cfg.loss, cfg.threads);
    if (!std::isfinite(stat.val_loss))
      throw TrainingDiverged("non-finite validation loss after epoch " + std::to_string(epoch), step);
    result.stats.push_back(stat);

    Checkpoint ck{cfg.model, params, step, stat.val_loss, extras};
    if (!out_dir.empty()) {
      char name[32];
      std::snprintf(name, sizeof(name), "epoch-%03d.ckpt", epoch);
      save_checkpoint(out_dir / name, ck);
    }
    result.epochs.push_back(std::move(ck));
  }

  // Average the best epochs by validation loss; stable so earlier epochs win ties.
  std::vector<std::size_t> rank(result.epochs.size());
  std::iota(rank.begin(), rank.end(), 0);
  std::stable_sort(rank.begin(), rank.end(), [&](std::size_t a, std::size_t b) {
    return result.epochs[a].validation_loss < result.epochs[b].validation_loss;
  });
  rank.resize(std::min(rank.size(), static_cast<std::size_t>(cfg.average_best)));
  std::vector<const ModelParams*> chosen;
  for (std::size_t r : rank) chosen.push_back(&result.epochs[r].params);
  result.final.config = cfg.model;
  result.final.params = average_params(chosen);
  result.final.step = step;
  result.final.extra = extras;
  result.final.validation_loss =
      dev_set.empty() ? 0.0 : evaluate_loss(result.final.params, cfg.model, dev_set, cfg.loss, cfg.threads);
  if (!out_dir.empty()) save_checkpoint(out_dir / "final.ckpt", result.final);
  result.steps = step;
  return result;
}

}  // namespace lal
