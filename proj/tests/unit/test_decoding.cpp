// Copyright 2026 The lalcs Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <limits>
#include <map>
#include <random>

#include "lal/decoding.hpp"
#include "oracles.hpp"

using namespace lal;
namespace fs = std::filesystem;

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Deterministic pseudo-random next-token distribution per prefix.
struct TableScorer {
  int vocab;
  std::uint64_t seed;
  mutable std::map<std::vector<int>, Eigen::RowVectorXd> cache;
  Eigen::RowVectorXd operator()(std::span<const int> prefix) const {
    const std::vector<int> key(prefix.begin(), prefix.end());
    auto it = cache.find(key);
    if (it != cache.end()) return it->second;
    std::uint64_t h = seed;
    for (int t : key) h = h * 1000003ULL + static_cast<std::uint64_t>(t) + 1;
    std::mt19937_64 rng(h);
    const Matrix lsm = oracle::log_softmax(oracle::random_matrix(rng, 1, vocab, 2.0));
    Eigen::RowVectorXd row = lsm.row(0);
    cache.emplace(key, row);
    return row;
  }
};

// All sequences over the non-special ids with length <= max_len.
std::vector<std::vector<int>> all_sequences(int vocab, int blank, int eos, int max_len) {
  std::vector<int> symbols;
  for (int v = 0; v < vocab; ++v)
    if (v != blank && v != eos) symbols.push_back(v);
  std::vector<std::vector<int>> out{{}};
  std::vector<std::vector<int>> frontier{{}};
  for (int len = 1; len <= max_len; ++len) {
    std::vector<std::vector<int>> next;
    for (const auto& s : frontier)
      for (int v : symbols) {
        auto e = s;
        e.push_back(v);
        next.push_back(e);
      }
    out.insert(out.end(), next.begin(), next.end());
    frontier = std::move(next);
  }
  return out;
}

double exhaustive_score(const Matrix& lp, const TableScorer& att, const std::vector<int>& w, double alpha,
                        int blank, int eos) {
  const double p = oracle::ctc_prob_bruteforce(lp, w, blank);
  const double ctc = p > 0 ? std::log(p) : kNegInf;
  double a = 0.0;
  std::vector<int> prefix{eos};
  for (std::size_t i = 0; i <= w.size(); ++i) {
    const int next = i < w.size() ? w[i] : eos;
    a += att(prefix)(next);
    prefix.push_back(next);
  }
  return joint_score(alpha, ctc, a);
}

}  // namespace

TEST_CASE("joint score drops zero-weight terms") {
  CHECK(joint_score(0.4, -2.0, -1.0) == doctest::Approx(0.4 * -2.0 + 0.6 * -1.0));
  CHECK(joint_score(0.0, kNegInf, -1.0) == -1.0);
  CHECK(joint_score(1.0, -3.0, kNegInf) == -3.0);
}

TEST_CASE("ctc prefix scores agree with path enumeration") {
  std::mt19937_64 rng(3);
  const int blank = 0;
  for (int trial = 0; trial < 30; ++trial) {
    const int t = 2 + static_cast<int>(rng() % 4), v = 4;
    const Matrix lp = oracle::log_softmax(oracle::random_matrix(rng, t, v));
    // Every frame path with its probability and collapsed labelling.
    std::vector<std::pair<std::vector<int>, double>> paths;
    std::vector<int> path(t, 0);
    while (true) {
      double logp = 0.0;
      for (int f = 0; f < t; ++f) logp += lp(f, path[f]);
      paths.emplace_back(oracle::ctc_collapse(path, blank), std::exp(logp));
      int f = t - 1;
      while (f >= 0 && path[f] == v - 1) path[f--] = 0;
      if (f < 0) break;
      ++path[f];
    }
    CtcPrefixScorer scorer(lp, blank);
    for (const auto& w : all_sequences(v, blank, -1, 3)) {
      auto state = scorer.initial();
      for (int tok : w) state = scorer.extend(state, tok);
      double full = 0.0, prefix_mass = 0.0;
      for (const auto& [labels, p] : paths) {
        if (labels == w) full += p;
        if (labels.size() >= w.size() && std::equal(w.begin(), w.end(), labels.begin())) prefix_mass += p;
      }
      CHECK(std::abs(std::exp(scorer.final_score(state)) - full) < 1e-12);
      if (!w.empty()) CHECK(std::abs(std::exp(state.prefix_score) - prefix_mass) < 1e-12);
    }
  }
}

TEST_CASE("beam search with an unpruned beam finds the exhaustive optimum") {
  const int vocab = 4, blank = 0, eos = 1, max_len = 3;
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 40; ++trial) {
    const Matrix lp = oracle::log_softmax(oracle::random_matrix(rng, 2 + static_cast<int>(rng() % 4), vocab, 1.5));
    const TableScorer att{vocab, rng()};
    for (double alpha : {0.0, 0.4, 1.0}) {
      DecodeOptions opts;
      opts.beam = 64;
      opts.alpha = alpha;
      opts.max_len = max_len;
      const auto hyps = beam_search(lp, att, vocab, blank, eos, opts);
      REQUIRE_FALSE(hyps.empty());
      double best = kNegInf;
      for (const auto& w : all_sequences(vocab, blank, eos, max_len))
        best = std::max(best, exhaustive_score(lp, att, w, alpha, blank, eos));
      CHECK(std::abs(hyps[0].joint_score - best) <= 1e-10);
      CHECK(std::abs(hyps[0].joint_score - exhaustive_score(lp, att, hyps[0].tokens, alpha, blank, eos)) <= 1e-10);
      for (std::size_t i = 1; i < hyps.size(); ++i) CHECK(hyps[i - 1].joint_score >= hyps[i].joint_score);
      for (const auto& h : hyps) CHECK(h.joint_score == joint_score(alpha, h.ctc_logprob, h.att_logprob));
      // No narrower beam can beat the exhaustive optimum.
      for (int beam : {1, 2, 3, 5}) {
        opts.beam = beam;
        const auto narrow = beam_search(lp, att, vocab, blank, eos, opts);
        CHECK(narrow.size() <= static_cast<std::size_t>(beam));
        if (!narrow.empty()) CHECK(narrow[0].joint_score <= best + 1e-12);
      }
    }
  }
}

TEST_CASE("beam search argument checks and length cap") {
  const Matrix lp = oracle::log_softmax(Matrix::Zero(3, 4));
  const TableScorer att{4, 1};
  DecodeOptions opts;
  opts.beam = 0;
  CHECK_THROWS(beam_search(lp, att, 4, 0, 1, opts));
  opts.beam = 3;
  opts.alpha = 1.5;
  CHECK_THROWS(beam_search(lp, att, 4, 0, 1, opts));
  opts.alpha = 0.4;
  CHECK_THROWS(beam_search(Matrix(0, 4), att, 4, 0, 1, opts));
  opts.max_len = 2;
  for (const auto& h : beam_search(lp, att, 4, 0, 1, opts)) CHECK(h.tokens.size() <= 2);
  opts.max_len = -1;  // defaults to the frame count
  for (const auto& h : beam_search(lp, att, 4, 0, 1, opts)) CHECK(h.tokens.size() <= 3);
}

TEST_CASE("joint beam search on a model is deterministic and fills posteriors") {
  ModelConfig c;
  c.d_model = 8;
  c.ffn_width = 16;
  c.vocab_size = 7;
  c.feature_dim = 4;
  const ModelParams p = init_params(c, 2);
  std::mt19937_64 rng(4);
  const Matrix x = oracle::random_matrix(rng, 16, 4);
  DecodeOptions opts;
  opts.beam = 3;
  const Vocabulary vocab = build_vocab(2, 2);
  const auto a = joint_beam_search(p, c, x, opts, &vocab);
  const auto b = joint_beam_search(p, c, x, opts, &vocab);
  REQUIRE(a.hyps.size() == b.hyps.size());
  for (std::size_t i = 0; i < a.hyps.size(); ++i) {
    CHECK(a.hyps[i].tokens == b.hyps[i].tokens);
    CHECK(a.hyps[i].joint_score == b.hyps[i].joint_score);
    CHECK(a.hyps[i].token_langs == t2l(vocab, a.hyps[i].tokens));
  }
  CHECK(a.lid_posteriors.rows() == 4);
  CHECK(a.lid_posteriors.cols() == 3);
  CHECK_THROWS(joint_beam_search(p, c, Matrix(0, 4), opts));
}

TEST_CASE("special tokens are stripped without dropping hypotheses") {
  const Vocabulary v = build_vocab(2, 2);
  NBestList nb;
  nb.hyps.push_back({{3, v.unk, 5}, -1.0, -2.0, -1.5, {}});
  nb.hyps.push_back({{v.unk}, -3.0, -3.0, -3.0, {}});
  nb.hyps.push_back({{4, 6}, -4.0, -4.0, -4.0, {}});
  const auto s = nbest_strip_special(nb, v);
  CHECK(s.hyps[0].tokens == std::vector<int>{3, 5});
  CHECK(s.hyps[0].joint_score == -1.5);
  CHECK(s.hyps[1].tokens.empty());
  CHECK(s.hyps[2].tokens == nb.hyps[2].tokens);
  CHECK(s.hyps[0].token_langs == std::vector<int>{kLangA, kLangB});
}

TEST_CASE("n-best and posterior files round-trip") {
  const fs::path dir = fs::temp_directory_path() / "lal_unit_decoding";
  fs::create_directories(dir);
  const Vocabulary v = build_vocab(2, 2);
  std::vector<NBestList> lists(2);
  lists[0].utt_id = "u1";
  lists[0].hyps = {{{3, 5}, 0, 0, -0.1234567890123456789, {}}, {{}, 0, 0, -7.0, {}}};
  lists[0].lid_posteriors = (Matrix(2, 3) << 0.1, 0.2, 0.7, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0).finished();
  lists[1].utt_id = "u2";
  lists[1].hyps = {{{6}, 0, 0, -2.5, {}}};
  lists[1].lid_posteriors = Matrix::Constant(1, 3, 1.0 / 3.0);
  write_nbest(dir / "nb.txt", lists);
  write_lid_posteriors(dir / "nb.lid", lists);
  auto back = read_nbest(dir / "nb.txt", v);
  REQUIRE(back.size() == 2);
  CHECK(back[0].hyps[0].joint_score == lists[0].hyps[0].joint_score);
  CHECK(back[0].hyps[0].tokens == lists[0].hyps[0].tokens);
  CHECK(back[0].hyps[1].tokens.empty());
  CHECK(back[1].hyps[0].token_langs == std::vector<int>{kLangB});
  read_lid_posteriors(dir / "nb.lid", back);
  CHECK(back[0].lid_posteriors == lists[0].lid_posteriors);
  CHECK(back[1].lid_posteriors == lists[1].lid_posteriors);
}
