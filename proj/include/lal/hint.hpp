// Copyright 2026 The lalcs Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "lal/alignment.hpp"
#include "lal/decoding.hpp"
#include "lal/metrics.hpp"
#include "lal/vocab.hpp"

namespace lal {

struct LinguisticHint {
  UttLangDecision decision;
  std::string sentence;

  static LinguisticHint from_decision(const UttLangDecision& decision);
  bool operator==(const LinguisticHint& o) const {
    return decision.same_decision(o.decision) && sentence == o.sentence;
  }
};

/// "only LANG_A words are included in the transcription" and friends.
std::string monolingual_hint_sentence(int lang);
std::string multilingual_hint_sentence();

LinguisticHint hint_from_lal(const UttLangDecision& decision);

enum class HypothesisHintMode { kFirst, kVote };

/// Decision from hypothesis token languages. A hypothesis without any
/// language tokens counts as multilingual. Vote ties go to multilingual.
LinguisticHint hint_from_hypotheses(const NBestList& nbest, HypothesisHintMode mode);

/// Weighted vote over the two decisions; ties go to multilingual.
LinguisticHint combine_hints(const LinguisticHint& lal_hint, const LinguisticHint& hyp_hint, double w_lal = 1.0,
                             double w_hyp = 1.0);

inline constexpr int kPromptHypotheses = 5;

/// Correction prompt. Without a hint this is the plain N-best template; with
/// one, a hint section precedes the hypothesis list. Special tokens are not
/// rendered.
std::string build_prompt(const NBestList& nbest, const std::optional<LinguisticHint>& hint,
                         const Vocabulary& vocab, int max_hypotheses = kPromptHypotheses);

struct LlmRequest {
  std::string id;  // utterance id, used to match responses
  std::string prompt;
  double temperature = 0.7;
  int max_tokens = 256;
  void validate() const;
};

struct LlmResponse {
  std::string text;
};

/// Raised by clients when a request could not be served.
class TransportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class LlmClient {
 public:
  virtual ~LlmClient() = default;
  virtual LlmResponse complete(const LlmRequest& request) = 0;
};

/// Returns hypothesis 1 of the prompt verbatim.
class EchoFirstClient : public LlmClient {
 public:
  LlmResponse complete(const LlmRequest& request) override;
};

/// Replies from a `utt_id<TAB>text` file; unknown ids are transport failures.
class ScriptedClient : public LlmClient {
 public:
  explicit ScriptedClient(std::map<std::string, std::string> script) : script_(std::move(script)) {}
  static ScriptedClient from_file(const std::filesystem::path& path);
  LlmResponse complete(const LlmRequest& request) override;

 private:
  std::map<std::string, std::string> script_;
};

class FailingClient : public LlmClient {
 public:
  LlmResponse complete(const LlmRequest& request) override;
  int calls = 0;
};

/// POSTs {prompt, temperature, max_tokens} as JSON and reads {text}.
class HttpClient : public LlmClient {
 public:
  explicit HttpClient(std::string url, double timeout_seconds = 60.0);
  LlmResponse complete(const LlmRequest& request) override;

 private:
  std::string base_, path_;
  double timeout_;
};

/// echo-first | fail | scripted:<path> | http:<url>
std::unique_ptr<LlmClient> make_client(const std::string& spec);

/// Trims and collapses internal whitespace runs to single spaces.
std::string normalize_whitespace(const std::string& text);

struct Correction {
  std::string text;
  int attempts = 0;
  bool fell_back = false;
};

/// One initial attempt plus `retries` more; if all fail the fallback text is
/// returned and a warning goes to `warn` when given.
Correction correct(const LlmRequest& request, LlmClient& client, int retries, const std::string& fallback,
                   std::ostream* warn = nullptr);

enum class HintSource { kNone, kLal, kFirst, kVote, kCombined };
HintSource parse_hint_source(const std::string& name);

struct CorrectionOptions {
  HintSource hint_source = HintSource::kNone;
  double w_lal = 1.0, w_hyp = 1.0;
  double presence_threshold = 0.1;
  double temperature = 0.7;
  int max_tokens = 256;
  int retries = 2;
  int max_hypotheses = kPromptHypotheses;
};

/// Hint for one utterance from the configured source. kLal needs lid_posteriors.
std::optional<LinguisticHint> select_hint(const NBestList& nbest, const CorrectionOptions& opts);

/// Corrected transcripts in input order. Utterances with an empty N-best list
/// yield an empty transcript without contacting the client.
std::vector<Transcript> correct_corpus(const std::vector<NBestList>& nbests, LlmClient& client,
                                       const CorrectionOptions& opts, const Vocabulary& vocab,
                                       std::ostream* warn = nullptr);

/// Accuracy of per-utterance hint decisions against references, via lid_accuracy.
double hint_accuracy(const std::vector<std::pair<std::string, LinguisticHint>>& hints,
                     const std::vector<LidEntry>& reference);

}  // namespace lal
