// Copyright 2026 The lalcs Authors
// SPDX-License-Identifier: Apache-2.0

#include "lal/decoding.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>

#include "lal/alignment.hpp"
#include "lal/error.hpp"
#include "lal/objectives.hpp"

namespace lal {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
}

double joint_score(double alpha, double ctc, double att) {
  double s = 0.0;
  if (alpha > 0.0) s += alpha * ctc;
  if (alpha < 1.0) s += (1.0 - alpha) * att;
  return s;
}

CtcPrefixScorer::CtcPrefixScorer(const Matrix& log_probs, int blank) : lp_(log_probs), blank_(blank) {
  if (log_probs.rows() < 1) throw std::invalid_argument("CtcPrefixScorer: no frames");
  if (blank < 0 || blank >= log_probs.cols()) throw std::invalid_argument("CtcPrefixScorer: blank out of range");
}

CtcPrefixScorer::State CtcPrefixScorer::initial() const {
  const auto frames = static_cast<std::size_t>(lp_.rows());
  State s;
  s.r_nonblank.assign(frames, kNegInf);
  s.r_blank.resize(frames);
  double acc = 0.0;
  for (std::size_t t = 0; t < frames; ++t) {
    acc += lp_(static_cast<Eigen::Index>(t), blank_);
    s.r_blank[t] = acc;
  }
  return s;
}

CtcPrefixScorer::State CtcPrefixScorer::extend(const State& s, int token) const {
  const auto frames = static_cast<std::size_t>(lp_.rows());
  State h;
  h.last = token;
  h.r_nonblank.assign(frames, kNegInf);
  h.r_blank.assign(frames, kNegInf);
  if (s.last == -1) h.r_nonblank[0] = lp_(0, token);
  double psi = h.r_nonblank[0];
  for (std::size_t t = 1; t < frames; ++t) {
    const auto ti = static_cast<Eigen::Index>(t);
    // Paths that finished the old prefix by frame t-1; a repeated token must
    // be separated by a blank.
    const double before = token == s.last ? s.r_blank[t - 1] : log_add(s.r_blank[t - 1], s.r_nonblank[t - 1]);
    h.r_nonblank[t] = log_add(h.r_nonblank[t - 1], before) + lp_(ti, token);
    h.r_blank[t] = log_add(h.r_blank[t - 1], h.r_nonblank[t - 1]) + lp_(ti, blank_);
    psi = log_add(psi, before + lp_(ti, token));
  }
  h.prefix_score = psi;
  return h;
}

double CtcPrefixScorer::final_score(const State& s) const {
  return log_add(s.r_nonblank.back(), s.r_blank.back());
}

std::vector<Hypothesis> beam_search(const Matrix& ctc_log_probs, const NextTokenScorer& att, int vocab_size,
                                    int blank, int sos_eos, const DecodeOptions& opts) {
  if (opts.beam < 1) throw std::invalid_argument("beam_search: beam must be >= 1");
  if (!(opts.alpha >= 0.0 && opts.alpha <= 1.0)) throw std::invalid_argument("beam_search: alpha must lie in [0, 1]");
  if (ctc_log_probs.rows() < 1) throw std::invalid_argument("beam_search: empty input");
  const CtcPrefixScorer ctc(ctc_log_probs, blank);
  const int max_len = opts.max_len < 0 ? static_cast<int>(ctc_log_probs.rows()) : opts.max_len;

  struct Live {
    std::vector<int> tokens;
    double att = 0.0;
    CtcPrefixScorer::State ctc;
  };
  struct Candidate {
    int parent;
    int token;
    double att, ctc_score, score;
    CtcPrefixScorer::State state;
  };

  std::vector<Live> running{Live{{}, 0.0, ctc.initial()}};
  std::vector<Hypothesis> ended;
  for (int len = 0; !running.empty(); ++len) {
    std::vector<Candidate> cands;
    for (std::size_t i = 0; i < running.size(); ++i) {
      const Live& hyp = running[i];
      std::vector<int> prefix{sos_eos};
      prefix.insert(prefix.end(), hyp.tokens.begin(), hyp.tokens.end());
      const Eigen::RowVectorXd next = att(prefix);
      if (next.size() != vocab_size) throw std::invalid_argument("beam_search: scorer returned wrong width");
      for (int tok = 0; tok < vocab_size; ++tok) {
        if (tok == blank) continue;
        Candidate c{static_cast<int>(i), tok, hyp.att + next(tok), 0.0, 0.0, {}};
        if (tok == sos_eos) {
          c.ctc_score = ctc.final_score(hyp.ctc);
        } else {
          if (len >= max_len) continue;
          c.state = ctc.extend(hyp.ctc, tok);
          c.ctc_score = c.state.prefix_score;
        }
        c.score = joint_score(opts.alpha, c.ctc_score, c.att);
        cands.push_back(std::move(c));
      }
    }
    // Stable: equal scores keep (parent, token id) enumeration order.
    std::stable_sort(cands.begin(), cands.end(),
                     [](const Candidate& a, const Candidate& b) { return a.score > b.score; });
    if (cands.size() > static_cast<std::size_t>(opts.beam)) cands.resize(static_cast<std::size_t>(opts.beam));
    std::vector<Live> next_running;
    for (auto& c : cands) {
      const Live& parent = running[static_cast<std::size_t>(c.parent)];
      if (c.token == sos_eos) {
        Hypothesis h;
        h.tokens = parent.tokens;
        h.att_logprob = c.att;
        h.ctc_logprob = c.ctc_score;
        h.joint_score = c.score;
        ended.push_back(std::move(h));
      } else {
        Live l{parent.tokens, c.att, std::move(c.state)};
        l.tokens.push_back(c.token);
        next_running.push_back(std::move(l));
      }
    }
    running = std::move(next_running);
  }
  std::stable_sort(ended.begin(), ended.end(),
                   [](const Hypothesis& a, const Hypothesis& b) { return a.joint_score > b.joint_score; });
  if (ended.size() > static_cast<std::size_t>(opts.beam)) ended.resize(static_cast<std::size_t>(opts.beam));
  return ended;
}

NBestList joint_beam_search(const ModelParams& params, const ModelConfig& cfg, const Matrix& features,
                            const DecodeOptions& opts, const Vocabulary* vocab) {
  if (features.rows() == 0) throw std::invalid_argument("joint_beam_search: empty input");
  if (opts.beam < 1) throw std::invalid_argument("joint_beam_search: beam must be >= 1");
  const Matrix hidden = encode(params, cfg, features);
  const Matrix ctc_lp = ctc_log_probs(params, hidden);
  NextTokenScorer scorer = [&](std::span<const int> prefix) {
    const Matrix logits = decode_forward(params, cfg, hidden, prefix).logits;
    Eigen::RowVectorXd last = logits.row(logits.rows() - 1);
    const double m = last.maxCoeff();
    const double lse = m + std::log((last.array() - m).exp().sum());
    return Eigen::RowVectorXd(last.array() - lse);
  };
  NBestList out;
  out.hyps = beam_search(ctc_lp, scorer, cfg.vocab_size, cfg.blank_id, cfg.sos_eos_id, opts);
  if (vocab)
    for (auto& h : out.hyps) h.token_langs = t2l(*vocab, h.tokens);
  out.lid_posteriors = frame_lid_posteriors(lid_logits(params, hidden));
  return out;
}

NBestList nbest_strip_special(const NBestList& nbest, const Vocabulary& vocab) {
  NBestList out = nbest;
  for (auto& h : out.hyps) {
    std::vector<int> kept;
    for (int t : h.tokens)
      if (!vocab.is_special(t)) kept.push_back(t);
    h.tokens = std::move(kept);
    h.token_langs = t2l(vocab, h.tokens);
  }
  return out;
}

void write_nbest(const std::filesystem::path& path, const std::vector<NBestList>& lists) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  char score[64];
  for (const auto& list : lists) {
    for (std::size_t r = 0; r < list.hyps.size(); ++r) {
      const auto& h = list.hyps[r];
      std::snprintf(score, sizeof(score), "%.17g", h.joint_score);
      out << list.utt_id << '\t' << r + 1 << '\t' << score << '\t';
      for (std::size_t i = 0; i < h.tokens.size(); ++i) out << (i ? " " : "") << h.tokens[i];
      out << '\n';
    }
  }
  if (!out) throw IoError("write failed for " + path.string());
}

std::vector<NBestList> read_nbest(const std::filesystem::path& path, const Vocabulary& vocab) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<NBestList> lists;
  std::string line;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string where = path.string() + ":" + std::to_string(lineno);
    std::vector<std::string> f;
    std::size_t start = 0;
    while (true) {
      const auto tab = line.find('\t', start);
      f.push_back(line.substr(start, tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    if (f.size() != 4) throw FormatError(where + ": expected 4 fields, got " + std::to_string(f.size()));
    Hypothesis h;
    try {
      h.joint_score = std::stod(f[2]);
    } catch (const std::exception&) {
      throw FormatError(where + ": bad score");
    }
    std::istringstream toks(f[3]);
    int id;
    while (toks >> id) {
      if (id < 0 || id >= vocab.size()) throw FormatError(where + ": token id out of range");
      h.tokens.push_back(id);
    }
    if (!toks.eof()) throw FormatError(where + ": bad token list");
    h.token_langs = t2l(vocab, h.tokens);
    if (lists.empty() || lists.back().utt_id != f[0]) {
      lists.push_back(NBestList{});
      lists.back().utt_id = f[0];
    }
    lists.back().hyps.push_back(std::move(h));
  }
  return lists;
}

void write_lid_posteriors(const std::filesystem::path& path, const std::vector<NBestList>& lists) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  char buf[64];
  for (const auto& list : lists) {
    const Matrix& p = list.lid_posteriors;
    out << list.utt_id << '\t' << p.rows() << '\t';
    for (Eigen::Index i = 0; i < p.size(); ++i) {
      std::snprintf(buf, sizeof(buf), "%.17g", p.data()[i]);
      out << (i ? " " : "") << buf;
    }
    out << '\n';
  }
  if (!out) throw IoError("write failed for " + path.string());
}

void read_lid_posteriors(const std::filesystem::path& path, std::vector<NBestList>& lists) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::map<std::string, Matrix> by_id;
  std::string line;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string where = path.string() + ":" + std::to_string(lineno);
    const auto t1 = line.find('\t');
    const auto t2 = t1 == std::string::npos ? t1 : line.find('\t', t1 + 1);
    if (t2 == std::string::npos) throw FormatError(where + ": expected 3 fields");
    long rows = -1;
    try {
      rows = std::stol(line.substr(t1 + 1, t2 - t1 - 1));
    } catch (const std::exception&) {
    }
    if (rows < 0) throw FormatError(where + ": bad frame count");
    Matrix p(rows, kNumLangs);
    std::istringstream vals(line.substr(t2 + 1));
    for (Eigen::Index i = 0; i < p.size(); ++i)
      if (!(vals >> p.data()[i])) throw FormatError(where + ": too few posterior values");
    std::string extra;
    if (vals >> extra) throw FormatError(where + ": too many posterior values");
    by_id[line.substr(0, t1)] = std::move(p);
  }
  for (auto& list : lists) {
    auto it = by_id.find(list.utt_id);
    if (it == by_id.end()) throw SchemaError(path.string() + ": no posteriors for '" + list.utt_id + "'");
    list.lid_posteriors = it->second;
  }
}

}  // namespace lal
