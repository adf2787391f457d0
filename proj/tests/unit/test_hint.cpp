// Copyright 2026 The lalcs Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "lal/error.hpp"
#include "lal/hint.hpp"

using namespace lal;
namespace fs = std::filesystem;

namespace {

using D = UttLangDecision;

Hypothesis hyp(const Vocabulary& v, std::vector<int> tokens, double score = 0.0) {
  Hypothesis h;
  h.tokens = std::move(tokens);
  h.token_langs = t2l(v, h.tokens);
  h.joint_score = score;
  return h;
}

std::size_t count_of(const std::string& text, const std::string& needle) {
  std::size_t n = 0;
  for (auto pos = text.find(needle); pos != std::string::npos; pos = text.find(needle, pos + 1)) ++n;
  return n;
}

}  // namespace

TEST_CASE("hint sentences") {
  CHECK(monolingual_hint_sentence(kLangA) == "only LANG_A words are included in the transcription");
  CHECK(monolingual_hint_sentence(kLangB) == "only LANG_B words are included in the transcription");
  CHECK(multilingual_hint_sentence() ==
        "The speech is multilingual and LANG_A and LANG_B words are included in the transcription");
  CHECK_THROWS(monolingual_hint_sentence(kOther));
  CHECK(hint_from_lal(D::monolingual(kLangB)).sentence == monolingual_hint_sentence(kLangB));
  CHECK(hint_from_lal(D::multilingual()).sentence == multilingual_hint_sentence());
}

TEST_CASE("hypothesis hints: first and vote") {
  const Vocabulary v = build_vocab(2, 2);
  NBestList nb;
  nb.hyps = {hyp(v, {3, 4}), hyp(v, {3, 5}), hyp(v, {4, 6}), hyp(v, {3}), hyp(v, {5, 4})};
  CHECK(hint_from_hypotheses(nb, HypothesisHintMode::kFirst).decision.same_decision(D::monolingual(kLangA)));
  // Three multilingual against two monolingual LANG_A.
  CHECK(hint_from_hypotheses(nb, HypothesisHintMode::kVote).decision.same_decision(D::multilingual()));
  nb.hyps = {hyp(v, {5}), hyp(v, {3}), hyp(v, {6, 5})};
  CHECK(hint_from_hypotheses(nb, HypothesisHintMode::kVote).decision.same_decision(D::monolingual(kLangB)));
  nb.hyps = {hyp(v, {5}), hyp(v, {3})};
  CHECK(hint_from_hypotheses(nb, HypothesisHintMode::kVote).decision.same_decision(D::multilingual()));
  nb.hyps = {hyp(v, {})};
  CHECK(hint_from_hypotheses(nb, HypothesisHintMode::kFirst).decision.same_decision(D::multilingual()));
  nb.hyps.clear();
  CHECK_THROWS(hint_from_hypotheses(nb, HypothesisHintMode::kVote));
}

TEST_CASE("combining hints") {
  const auto a = hint_from_lal(D::monolingual(kLangA));
  const auto b = hint_from_lal(D::monolingual(kLangB));
  const auto m = hint_from_lal(D::multilingual());
  CHECK(combine_hints(a, a) == a);
  CHECK(combine_hints(a, b) == m);
  CHECK(combine_hints(a, b, 2.0, 1.0) == a);
  CHECK(combine_hints(a, b, 1.0, 2.0) == b);
  CHECK(combine_hints(a, m, 0.0, 1.0) == m);
  CHECK(combine_hints(a, b, 1.0, 0.0) == combine_hints(b, a, 0.0, 1.0));
  CHECK_THROWS(combine_hints(a, b, 0.0, 0.0));
  CHECK_THROWS(combine_hints(a, b, -1.0, 1.0));
}

TEST_CASE("prompt layout") {
  const Vocabulary v = build_vocab(2, 2);
  NBestList nb;
  nb.utt_id = "u";
  nb.hyps = {hyp(v, {3, v.unk, 5}), hyp(v, {3}), hyp(v, {})};
  const auto plain = build_prompt(nb, std::nullopt, v);
  CHECK(plain == build_prompt(nb, std::nullopt, v));
  CHECK(plain.find("LANG_") == std::string::npos);
  CHECK(plain.find("### Hint") == std::string::npos);
  CHECK(plain.find("1. a0 b0\n2. a0\n3.\n") != std::string::npos);
  CHECK(plain.find("<unk>") == std::string::npos);

  for (const auto& d : {D::monolingual(kLangA), D::monolingual(kLangB), D::multilingual()}) {
    const auto hinted = build_prompt(nb, hint_from_lal(d), v);
    CHECK(count_of(hinted, "words are included in the transcription") == 1);
    CHECK(hinted.find("### Hint\n" + hint_from_lal(d).sentence + ".\n") != std::string::npos);
    CHECK(hinted.find("### Hint") < hinted.find("### Hypotheses"));
  }
  CHECK(count_of(build_prompt(nb, std::nullopt, v, 1), "\n2.") == 0);
  CHECK_THROWS(build_prompt(NBestList{}, std::nullopt, v));
}

TEST_CASE("clients") {
  const Vocabulary v = build_vocab(2, 2);
  NBestList nb;
  nb.hyps = {hyp(v, {3, 5})};
  LlmRequest req{"u", build_prompt(nb, std::nullopt, v)};
  EchoFirstClient echo;
  CHECK(normalize_whitespace(echo.complete(req).text) == "a0 b0");

  ScriptedClient scripted(std::map<std::string, std::string>{{"u", "  b1   a1 "}});
  auto c = correct(req, scripted, 2, "x");
  CHECK(c.text == "b1 a1");
  CHECK(c.attempts == 1);
  CHECK_FALSE(c.fell_back);
  req.id = "missing";
  CHECK_THROWS_AS(scripted.complete(req), TransportError);

  FailingClient fail;
  std::ostringstream warn;
  c = correct(req, fail, 3, "a0 b0", &warn);
  CHECK(fail.calls == 4);
  CHECK(c.attempts == 4);
  CHECK(c.fell_back);
  CHECK(c.text == "a0 b0");
  CHECK(warn.str().find("warning") != std::string::npos);

  req.temperature = -1.0;
  CHECK_THROWS(correct(req, echo, 0, ""));
}

TEST_CASE("scripted client file and factory") {
  const fs::path dir = fs::temp_directory_path() / "lal_unit_hint";
  fs::create_directories(dir);
  {
    std::ofstream out(dir / "script.tsv");
    out << "u1\ta0 a1\n\nu2\tb0\n";
  }
  auto client = make_client("scripted:" + (dir / "script.tsv").string());
  CHECK(client->complete({"u2", "p"}).text == "b0");
  CHECK_THROWS_AS(make_client("scripted:" + (dir / "nope.tsv").string()), IoError);
  CHECK_THROWS(make_client("bogus"));
  CHECK(dynamic_cast<EchoFirstClient*>(make_client("echo-first").get()) != nullptr);
  {
    std::ofstream out(dir / "bad.tsv");
    out << "no tab here\n";
  }
  CHECK_THROWS_AS(ScriptedClient::from_file(dir / "bad.tsv"), FormatError);
}

TEST_CASE("whitespace normalization") {
  CHECK(normalize_whitespace("") == "");
  CHECK(normalize_whitespace(" \t\n") == "");
  CHECK(normalize_whitespace("  a \t b\n") == "a b");
  CHECK(normalize_whitespace("a") == "a");
}

TEST_CASE("echo correction leaves transcripts unchanged") {
  const Vocabulary v = build_vocab(3, 3);
  std::vector<NBestList> lists(3);
  lists[0].utt_id = "a";
  lists[0].hyps = {hyp(v, {3, 7, 4}), hyp(v, {3})};
  lists[1].utt_id = "b";
  lists[1].hyps = {hyp(v, {v.unk, 6})};
  lists[2].utt_id = "c";
  for (auto& l : lists) l.lid_posteriors = Matrix::Constant(2, 3, 1.0 / 3.0);
  EchoFirstClient echo;
  for (auto src : {HintSource::kNone, HintSource::kLal, HintSource::kFirst, HintSource::kVote, HintSource::kCombined}) {
    CorrectionOptions opts;
    opts.hint_source = src;
    const auto out = correct_corpus(lists, echo, opts, v);
    REQUIRE(out.size() == 3);
    CHECK(out[0].tokens == std::vector<int>{3, 7, 4});
    CHECK(out[1].tokens == std::vector<int>{6});
    CHECK(out[2].tokens.empty());
    CHECK(out[1].id == "b");
  }
  FailingClient fail;
  CorrectionOptions opts;
  opts.retries = 0;
  const auto fb = correct_corpus(lists, fail, opts, v);
  CHECK(fb[0].tokens == std::vector<int>{3, 7, 4});
  CHECK(fail.calls == 2);
  opts.hint_source = HintSource::kLal;
  lists[0].lid_posteriors.resize(0, 3);
  CHECK_THROWS(correct_corpus(lists, echo, opts, v));
}

TEST_CASE("hint source names and accuracy") {
  CHECK(parse_hint_source("vote") == HintSource::kVote);
  CHECK(parse_hint_source("none") == HintSource::kNone);
  CHECK_THROWS(parse_hint_source("oracle"));
  const std::vector<std::pair<std::string, LinguisticHint>> hints{{"a", hint_from_lal(D::multilingual())},
                                                                   {"b", hint_from_lal(D::monolingual(kLangA))}};
  CHECK(hint_accuracy(hints, {{"a", D::multilingual()}, {"b", D::monolingual(kLangA)}}) == 1.0);
  CHECK(hint_accuracy(hints, {{"a", D::multilingual()}, {"b", D::monolingual(kLangB)}}) == 0.5);
}
