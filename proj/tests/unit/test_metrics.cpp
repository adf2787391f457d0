// Copyright 2026 The lalcs Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>

#include "lal/error.hpp"
#include "lal/metrics.hpp"
#include "oracles.hpp"

using namespace lal;

namespace {

std::vector<std::vector<int>> sequences_up_to(int len, int symbols) {
  std::vector<std::vector<int>> out{{}}, frontier{{}};
  for (int l = 1; l <= len; ++l) {
    std::vector<std::vector<int>> next;
    for (const auto& s : frontier)
      for (int v = 0; v < symbols; ++v) {
        auto e = s;
        e.push_back(v);
        next.push_back(e);
      }
    out.insert(out.end(), next.begin(), next.end());
    frontier = std::move(next);
  }
  return out;
}

// Recount the operations of an alignment from its steps.
EditCounts recount(const EditAlignment& a, const std::vector<int>& ref, const std::vector<int>& hyp) {
  EditCounts c;
  std::size_t ri = 0, hi = 0;
  for (const auto& s : a.steps) {
    switch (s.kind) {
      case AlignStep::Kind::kMatch:
        REQUIRE(ref[s.ref] == hyp[s.hyp]);
        ++ri, ++hi;
        break;
      case AlignStep::Kind::kSub:
        REQUIRE(ref[s.ref] != hyp[s.hyp]);
        ++c.sub, ++ri, ++hi;
        break;
      case AlignStep::Kind::kDel:
        ++c.del, ++ri;
        break;
      case AlignStep::Kind::kIns:
        ++c.ins, ++hi;
        break;
    }
  }
  CHECK(ri == ref.size());
  CHECK(hi == hyp.size());
  return c;
}

}  // namespace

TEST_CASE("alignment cost equals the edit distance for all short pairs") {
  const auto seqs = sequences_up_to(4, 3);
  for (const auto& r : seqs)
    for (const auto& h : seqs) {
      const auto a = align_edit(r, h);
      CHECK(a.counts.cost() == oracle::edit_distance(r, h));
      CHECK(recount(a, r, h) == a.counts);
    }
}

TEST_CASE("edit distance is a metric on short sequences") {
  const auto seqs = sequences_up_to(3, 2);
  for (const auto& a : seqs)
    for (const auto& b : seqs) {
      const long ab = align_edit(a, b).counts.cost();
      CHECK(ab == align_edit(b, a).counts.cost());
      CHECK((ab == 0) == (a == b));
      for (const auto& c : seqs) CHECK(ab <= align_edit(a, c).counts.cost() + align_edit(c, b).counts.cost());
    }
}

TEST_CASE("one deletion in a mixed utterance") {
  const Vocabulary v = build_vocab(3, 3);
  const int a0 = 3, a1 = 4, b0 = 6;
  const auto r = score_corpus({{"u", {a0, a1, b0}}}, {{"u", {a0, b0}}}, v);
  CHECK(r.ref_tokens == 3);
  CHECK(r.errors == EditCounts{0, 1, 0});
  CHECK(r.mer == doctest::Approx(1.0 / 3.0));
  CHECK(r.per_lang[kLangA].rate == doctest::Approx(0.5));
  CHECK(r.per_lang[kLangB].rate == 0.0);
}

TEST_CASE("insertions count against the inserted token's language") {
  const Vocabulary v = build_vocab(2, 2);
  const auto r = score_corpus({{"u", {3}}}, {{"u", {3, 5}}}, v);
  CHECK(r.errors == EditCounts{0, 0, 1});
  CHECK(r.per_lang[kLangB].errors.ins == 1);
  CHECK(std::isinf(r.per_lang[kLangB].rate));
  CHECK(r.per_lang[kLangA].rate == 0.0);
  CHECK(r.mer == 1.0);
}

TEST_CASE("empty hypotheses are all deletions") {
  const Vocabulary v = build_vocab(2, 2);
  const auto r = score_corpus({{"u", {3, 4, 5}}, {"w", {6}}}, {{"u", {}}, {"w", {}}}, v);
  CHECK(r.errors == EditCounts{0, 4, 0});
  CHECK(r.mer == 1.0);
  CHECK(r.del_rate == 1.0);
}

TEST_CASE("special tokens are ignored on both sides") {
  const Vocabulary v = build_vocab(2, 2);
  const auto r = score_corpus({{"u", {v.sos_eos, 3, 4, v.sos_eos}}}, {{"u", {v.unk, 3, v.blank, 4}}}, v);
  CHECK(r.errors.cost() == 0);
  CHECK(r.ref_tokens == 2);
}

TEST_CASE("corpus scores do not depend on utterance order") {
  const Vocabulary v = build_vocab(2, 2);
  std::vector<Transcript> refs{{"a", {3, 4}}, {"b", {5, 6, 3}}, {"c", {4}}};
  std::vector<Transcript> hyps{{"a", {3}}, {"b", {5, 5, 3, 4}}, {"c", {6}}};
  const auto r1 = score_corpus(refs, hyps, v);
  std::reverse(hyps.begin(), hyps.end());
  std::rotate(refs.begin(), refs.begin() + 1, refs.end());
  const auto r2 = score_corpus(refs, hyps, v);
  CHECK(r1.errors == r2.errors);
  CHECK(r1.mer == r2.mer);
  for (int l = 0; l < kNumLangs; ++l) CHECK(r1.per_lang[l].errors == r2.per_lang[l].errors);
  // Per-language errors partition the corpus errors.
  EditCounts sum;
  for (const auto& s : r1.per_lang) sum.sub += s.errors.sub, sum.del += s.errors.del, sum.ins += s.errors.ins;
  CHECK(sum == r1.errors);
}

TEST_CASE("mismatched id sets are rejected") {
  const Vocabulary v = build_vocab(2, 2);
  CHECK_THROWS_AS(score_corpus({{"a", {3}}}, {{"b", {3}}}, v), SchemaError);
  CHECK_THROWS_AS(score_corpus({{"a", {3}}}, {{"a", {3}}, {"a", {4}}}, v), SchemaError);
  CHECK_THROWS_AS(score_corpus({{"a", {3}}, {"b", {3}}}, {{"a", {3}}}, v), SchemaError);
}

TEST_CASE("report carries the key=value block") {
  const Vocabulary v = build_vocab(2, 2);
  const auto text = format_report(score_corpus({{"u", {3, 5}}}, {{"u", {3}}}, v), v);
  CHECK(text.find("mer=0.5") != std::string::npos);
  CHECK(text.find("utterances=1") != std::string::npos);
  CHECK(text.find("rate_lang_b=1") != std::string::npos);
}

TEST_CASE("lid accuracy") {
  using D = UttLangDecision;
  const std::vector<LidEntry> ref{{"a", D::monolingual(kLangA)}, {"b", D::multilingual()}};
  CHECK(lid_accuracy(ref, ref) == 1.0);
  const std::vector<LidEntry> pred{{"b", D::multilingual()}, {"a", D::monolingual(kLangB)}};
  CHECK(lid_accuracy(pred, ref) == 0.5);
}
