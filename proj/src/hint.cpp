// Copyright 2026 The lalcs Authors
// SPDX-License-Identifier: Apache-2.0

#include "lal/hint.hpp"

#include <cctype>
#include <fstream>
#include <sstream>

#include <httplib.h>
#include <json.hpp>

#include "lal/error.hpp"

namespace lal {

namespace {

const std::array<std::string, kNumLangs> kHintLangNames{"OTHER", "LANG_A", "LANG_B"};

// Instruction wording is this project's own; only the hint sentences follow a
// fixed form.
constexpr const char* kInstruction =
    "Below are the best hypotheses produced by a speech recognizer for one utterance. "
    "Report the most likely true transcription, correcting recognition errors where needed. "
    "Answer with the transcription only.";

// Decision key for voting: 0 multilingual, else the monolingual language id.
int vote_key(const UttLangDecision& d) { return d.kind == UttLangDecision::Kind::kMultilingual ? 0 : d.lang; }

UttLangDecision from_key(int key) {
  return key == 0 ? UttLangDecision::multilingual() : UttLangDecision::monolingual(key);
}

UttLangDecision hypothesis_decision(const Hypothesis& h) {
  bool has_a = false, has_b = false;
  for (int l : h.token_langs) {
    has_a |= l == kLangA;
    has_b |= l == kLangB;
  }
  if (has_a != has_b) return UttLangDecision::monolingual(has_a ? kLangA : kLangB);
  return UttLangDecision::multilingual();
}

}  // namespace

std::string monolingual_hint_sentence(int lang) {
  if (lang != kLangA && lang != kLangB) throw std::invalid_argument("monolingual hint needs LANG_A or LANG_B");
  return "only " + kHintLangNames[lang] + " words are included in the transcription";
}

std::string multilingual_hint_sentence() {
  return "The speech is multilingual and " + kHintLangNames[kLangA] + " and " + kHintLangNames[kLangB] +
         " words are included in the transcription";
}

LinguisticHint LinguisticHint::from_decision(const UttLangDecision& decision) {
  LinguisticHint h;
  if (decision.kind == UttLangDecision::Kind::kMonolingual) {
    h.decision = UttLangDecision::monolingual(decision.lang);
    h.sentence = monolingual_hint_sentence(decision.lang);
  } else {
    h.decision = UttLangDecision::multilingual();
    h.sentence = multilingual_hint_sentence();
  }
  return h;
}

LinguisticHint hint_from_lal(const UttLangDecision& decision) { return LinguisticHint::from_decision(decision); }

LinguisticHint hint_from_hypotheses(const NBestList& nbest, HypothesisHintMode mode) {
  if (nbest.hyps.empty()) throw std::invalid_argument("hint_from_hypotheses: empty N-best list");
  if (mode == HypothesisHintMode::kFirst) return LinguisticHint::from_decision(hypothesis_decision(nbest.hyps[0]));
  std::array<int, kNumLangs> votes{};
  for (const auto& h : nbest.hyps) ++votes[vote_key(hypothesis_decision(h))];
  int best = 0;
  for (int k = 1; k < kNumLangs; ++k)
    if (votes[k] > votes[best]) best = k;
  for (int k = 0; k < kNumLangs; ++k)
    if (k != best && votes[k] == votes[best]) best = 0;
  return LinguisticHint::from_decision(from_key(best));
}

LinguisticHint combine_hints(const LinguisticHint& lal_hint, const LinguisticHint& hyp_hint, double w_lal,
                             double w_hyp) {
  if (!(w_lal >= 0.0) || !(w_hyp >= 0.0)) throw std::invalid_argument("combine_hints: negative weight");
  if (w_lal == 0.0 && w_hyp == 0.0) throw std::invalid_argument("combine_hints: both weights are zero");
  const int a = vote_key(lal_hint.decision), b = vote_key(hyp_hint.decision);
  if (a == b) return LinguisticHint::from_decision(from_key(a));
  if (w_lal > w_hyp) return LinguisticHint::from_decision(from_key(a));
  if (w_hyp > w_lal) return LinguisticHint::from_decision(from_key(b));
  return LinguisticHint::from_decision(UttLangDecision::multilingual());
}

std::string build_prompt(const NBestList& nbest, const std::optional<LinguisticHint>& hint,
                         const Vocabulary& vocab, int max_hypotheses) {
  if (nbest.hyps.empty()) throw std::invalid_argument("build_prompt: empty N-best list");
  if (max_hypotheses < 1) throw std::invalid_argument("build_prompt: max_hypotheses must be >= 1");
  std::ostringstream out;
  out << kInstruction << "\n\n";
  if (hint) out << "### Hint\n" << hint->sentence << ".\n\n";
  out << "### Hypotheses\n";
  const std::size_t n = std::min(nbest.hyps.size(), static_cast<std::size_t>(max_hypotheses));
  for (std::size_t i = 0; i < n; ++i) {
    out << i + 1 << '.';
    for (int t : nbest.hyps[i].tokens)
      if (!vocab.is_special(t)) out << ' ' << vocab.tokens.at(t);
    out << '\n';
  }
  out << "\n### Transcription\n";
  return out.str();
}

void LlmRequest::validate() const {
  if (prompt.empty()) throw std::invalid_argument("LLM request: empty prompt");
  if (!(temperature >= 0.0)) throw std::invalid_argument("LLM request: temperature must be >= 0");
  if (max_tokens < 1) throw std::invalid_argument("LLM request: max_tokens must be >= 1");
}

LlmResponse EchoFirstClient::complete(const LlmRequest& request) {
  std::istringstream in(request.prompt);
  std::string line;
  bool in_list = false;
  while (std::getline(in, line)) {
    if (line == "### Hypotheses") {
      in_list = true;
    } else if (in_list && line.rfind("1.", 0) == 0) {
      return {line.substr(2)};
    }
  }
  throw TransportError("echo-first: prompt has no first hypothesis");
}

ScriptedClient ScriptedClient::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::map<std::string, std::string> script;
  std::string line;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos)
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": expected utt_id<TAB>text");
    script[line.substr(0, tab)] = line.substr(tab + 1);
  }
  return ScriptedClient(std::move(script));
}

LlmResponse ScriptedClient::complete(const LlmRequest& request) {
  auto it = script_.find(request.id);
  if (it == script_.end()) throw TransportError("scripted: no reply for '" + request.id + "'");
  return {it->second};
}

LlmResponse FailingClient::complete(const LlmRequest&) {
  ++calls;
  throw TransportError("fail: client always fails");
}

HttpClient::HttpClient(std::string url, double timeout_seconds) : timeout_(timeout_seconds) {
  const auto scheme = url.find("://");
  if (scheme == std::string::npos) throw std::invalid_argument("http client: URL needs a scheme: " + url);
  const auto slash = url.find('/', scheme + 3);
  base_ = url.substr(0, slash);
  path_ = slash == std::string::npos ? "/" : url.substr(slash);
}

LlmResponse HttpClient::complete(const LlmRequest& request) {
  httplib::Client cli(base_);
  const auto secs = static_cast<time_t>(timeout_);
  cli.set_connection_timeout(secs, 0);
  cli.set_read_timeout(secs, 0);
  const nlohmann::json body{
      {"prompt", request.prompt}, {"temperature", request.temperature}, {"max_tokens", request.max_tokens}};
  auto res = cli.Post(path_, body.dump(), "application/json");
  if (!res) throw TransportError("http: " + httplib::to_string(res.error()));
  if (res->status != 200) throw TransportError("http: status " + std::to_string(res->status));
  try {
    const auto reply = nlohmann::json::parse(res->body);
    return {reply.at("text").get<std::string>()};
  } catch (const nlohmann::json::exception& e) {
    throw TransportError(std::string("http: bad reply: ") + e.what());
  }
}

std::unique_ptr<LlmClient> make_client(const std::string& spec) {
  if (spec == "echo-first") return std::make_unique<EchoFirstClient>();
  if (spec == "fail") return std::make_unique<FailingClient>();
  if (spec.rfind("scripted:", 0) == 0)
    return std::make_unique<ScriptedClient>(ScriptedClient::from_file(spec.substr(9)));
  if (spec.rfind("http:", 0) == 0 || spec.rfind("https:", 0) == 0) {
    // Accept both http:<url> and a bare URL.
    std::string url = spec;
    if (spec.rfind("http:http", 0) == 0) url = spec.substr(5);
    return std::make_unique<HttpClient>(url);
  }
  throw std::invalid_argument("unknown client '" + spec + "'");
}

std::string normalize_whitespace(const std::string& text) {
  std::string out;
  bool pending = false;
  for (unsigned char c : text) {
    if (std::isspace(c)) {
      pending = !out.empty();
    } else {
      if (pending) out += ' ';
      pending = false;
      out += static_cast<char>(c);
    }
  }
  return out;
}

Correction correct(const LlmRequest& request, LlmClient& client, int retries, const std::string& fallback,
                   std::ostream* warn) {
  request.validate();
  if (retries < 0) throw std::invalid_argument("correct: retries must be >= 0");
  Correction c;
  std::string last_error;
  for (int attempt = 0; attempt <= retries; ++attempt) {
    ++c.attempts;
    try {
      c.text = normalize_whitespace(client.complete(request).text);
      return c;
    } catch (const TransportError& e) {
      last_error = e.what();
    }
  }
  c.text = normalize_whitespace(fallback);
  c.fell_back = true;
  if (warn)
    *warn << "warning: " << request.id << ": correction failed after " << c.attempts
          << " attempts (" << last_error << "), keeping 1-best\n";
  return c;
}

HintSource parse_hint_source(const std::string& name) {
  if (name == "none") return HintSource::kNone;
  if (name == "lal") return HintSource::kLal;
  if (name == "first") return HintSource::kFirst;
  if (name == "vote") return HintSource::kVote;
  if (name == "combined") return HintSource::kCombined;
  throw std::invalid_argument("unknown hint source '" + name + "'");
}

std::optional<LinguisticHint> select_hint(const NBestList& nbest, const CorrectionOptions& opts) {
  auto lal = [&] {
    if (nbest.lid_posteriors.rows() == 0)
      throw std::invalid_argument("hint source needs LID posteriors for '" + nbest.utt_id + "'");
    return hint_from_lal(utterance_language_decision(nbest.lid_posteriors, opts.presence_threshold));
  };
  switch (opts.hint_source) {
    case HintSource::kNone:
      return std::nullopt;
    case HintSource::kLal:
      return lal();
    case HintSource::kFirst:
      return hint_from_hypotheses(nbest, HypothesisHintMode::kFirst);
    case HintSource::kVote:
      return hint_from_hypotheses(nbest, HypothesisHintMode::kVote);
    case HintSource::kCombined:
      return combine_hints(lal(), hint_from_hypotheses(nbest, HypothesisHintMode::kVote), opts.w_lal, opts.w_hyp);
  }
  return std::nullopt;
}

std::vector<Transcript> correct_corpus(const std::vector<NBestList>& nbests, LlmClient& client,
                                       const CorrectionOptions& opts, const Vocabulary& vocab,
                                       std::ostream* warn) {
  std::vector<Transcript> out;
  out.reserve(nbests.size());
  for (const auto& nb : nbests) {
    Transcript t{nb.utt_id, {}};
    if (!nb.hyps.empty()) {
      LlmRequest req;
      req.id = nb.utt_id;
      req.prompt = build_prompt(nb, select_hint(nb, opts), vocab, opts.max_hypotheses);
      req.temperature = opts.temperature;
      req.max_tokens = opts.max_tokens;
      std::vector<int> first;
      for (int tok : nb.hyps[0].tokens)
        if (!vocab.is_special(tok)) first.push_back(tok);
      const auto c = correct(req, client, opts.retries, render_tokens(vocab, first), warn);
      t.tokens = parse_tokens(vocab, c.text);
    }
    out.push_back(std::move(t));
  }
  return out;
}

double hint_accuracy(const std::vector<std::pair<std::string, LinguisticHint>>& hints,
                     const std::vector<LidEntry>& reference) {
  std::vector<LidEntry> predicted;
  predicted.reserve(hints.size());
  for (const auto& [id, h] : hints) predicted.push_back({id, h.decision});
  return lid_accuracy(predicted, reference);
}

}  // namespace lal
