// Copyright 2026 The lalcs Authors
// SPDX-License-Identifier: Apache-2.0

#include "lal/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <limits>
#include <map>
#include <sstream>

#include "lal/error.hpp"

namespace lal {

EditAlignment align_edit(std::span<const int> ref, std::span<const int> hyp) {
  const std::size_t n = ref.size(), m = hyp.size();
  std::vector<long> cost((n + 1) * (m + 1));
  auto at = [&](std::size_t i, std::size_t j) -> long& { return cost[i * (m + 1) + j]; };
  for (std::size_t i = 0; i <= n; ++i) at(i, 0) = static_cast<long>(i);
  for (std::size_t j = 0; j <= m; ++j) at(0, j) = static_cast<long>(j);
  for (std::size_t i = 1; i <= n; ++i)
    for (std::size_t j = 1; j <= m; ++j)
      at(i, j) = std::min({at(i - 1, j - 1) + (ref[i - 1] != hyp[j - 1]), at(i - 1, j) + 1, at(i, j - 1) + 1});

  EditAlignment out;
  std::size_t i = n, j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0 && at(i, j) == at(i - 1, j - 1) + (ref[i - 1] != hyp[j - 1])) {
      const bool same = ref[i - 1] == hyp[j - 1];
      out.steps.push_back({same ? AlignStep::Kind::kMatch : AlignStep::Kind::kSub, static_cast<int>(i - 1),
                           static_cast<int>(j - 1)});
      out.counts.sub += !same;
      --i;
      --j;
    } else if (i > 0 && at(i, j) == at(i - 1, j) + 1) {
      out.steps.push_back({AlignStep::Kind::kDel, static_cast<int>(i - 1), -1});
      ++out.counts.del;
      --i;
    } else {
      out.steps.push_back({AlignStep::Kind::kIns, -1, static_cast<int>(j - 1)});
      ++out.counts.ins;
      --j;
    }
  }
  std::reverse(out.steps.begin(), out.steps.end());
  return out;
}

namespace {

std::vector<int> strip(const std::vector<int>& tokens, const Vocabulary& vocab) {
  std::vector<int> out;
  for (int t : tokens) {
    if (t < 0 || t >= vocab.size()) throw FormatError("token id " + std::to_string(t) + " outside vocabulary");
    if (!vocab.is_special(t)) out.push_back(t);
  }
  return out;
}

double rate(long errors, long total) {
  if (total > 0) return static_cast<double>(errors) / static_cast<double>(total);
  return errors > 0 ? std::numeric_limits<double>::infinity() : 0.0;
}

}  // namespace

ScoreReport score_corpus(const std::vector<Transcript>& refs, const std::vector<Transcript>& hyps,
                         const Vocabulary& vocab) {
  std::map<std::string, const Transcript*> hyp_by_id;
  for (const auto& h : hyps)
    if (!hyp_by_id.emplace(h.id, &h).second) throw SchemaError("duplicate hypothesis id '" + h.id + "'");
  if (hyp_by_id.size() != refs.size()) throw SchemaError("reference and hypothesis utterance counts differ");

  ScoreReport r;
  for (const auto& ref : refs) {
    auto it = hyp_by_id.find(ref.id);
    if (it == hyp_by_id.end()) throw SchemaError("no hypothesis for utterance '" + ref.id + "'");
    const auto ref_toks = strip(ref.tokens, vocab);
    const auto hyp_toks = strip(it->second->tokens, vocab);
    ++r.utterances;
    r.ref_tokens += static_cast<long>(ref_toks.size());
    for (int t : ref_toks) ++r.per_lang[vocab.lang_of[t]].ref_tokens;
    const auto al = align_edit(ref_toks, hyp_toks);
    r.errors.sub += al.counts.sub;
    r.errors.del += al.counts.del;
    r.errors.ins += al.counts.ins;
    for (const auto& s : al.steps) {
      switch (s.kind) {
        case AlignStep::Kind::kSub:
          ++r.per_lang[vocab.lang_of[ref_toks[s.ref]]].errors.sub;
          break;
        case AlignStep::Kind::kDel:
          ++r.per_lang[vocab.lang_of[ref_toks[s.ref]]].errors.del;
          break;
        case AlignStep::Kind::kIns:
          ++r.per_lang[vocab.lang_of[hyp_toks[s.hyp]]].errors.ins;
          break;
        case AlignStep::Kind::kMatch:
          break;
      }
    }
  }
  r.sub_rate = rate(r.errors.sub, r.ref_tokens);
  r.del_rate = rate(r.errors.del, r.ref_tokens);
  r.ins_rate = rate(r.errors.ins, r.ref_tokens);
  r.mer = rate(r.errors.cost(), r.ref_tokens);
  for (auto& l : r.per_lang) l.rate = rate(l.errors.cost(), l.ref_tokens);
  return r;
}

std::string format_report(const ScoreReport& r, const Vocabulary& vocab) {
  std::ostringstream out;
  char line[256];
  std::snprintf(line, sizeof(line), "%-10s %8s %8s %8s %8s %8s\n", "subset", "tokens", "Sub", "Del", "Ins", "ER(%)");
  out << line;
  for (int l : {kLangA, kLangB}) {
    const auto& s = r.per_lang[l];
    std::snprintf(line, sizeof(line), "%-10s %8ld %8ld %8ld %8ld %8.2f\n", vocab.lang_names[l].c_str(), s.ref_tokens,
                  s.errors.sub, s.errors.del, s.errors.ins, 100.0 * s.rate);
    out << line;
  }
  std::snprintf(line, sizeof(line), "%-10s %8ld %8ld %8ld %8ld %8.2f\n", "MER", r.ref_tokens, r.errors.sub,
                r.errors.del, r.errors.ins, 100.0 * r.mer);
  out << line << '\n';
  auto kv = [&](const std::string& k, double v) {
    std::snprintf(line, sizeof(line), "%s=%.6g\n", k.c_str(), v);
    out << line;
  };
  kv("utterances", static_cast<double>(r.utterances));
  kv("ref_tokens", static_cast<double>(r.ref_tokens));
  kv("sub", static_cast<double>(r.errors.sub));
  kv("del", static_cast<double>(r.errors.del));
  kv("ins", static_cast<double>(r.errors.ins));
  kv("sub_rate", r.sub_rate);
  kv("del_rate", r.del_rate);
  kv("ins_rate", r.ins_rate);
  kv("mer", r.mer);
  kv("rate_lang_a", r.per_lang[kLangA].rate);
  kv("rate_lang_b", r.per_lang[kLangB].rate);
  return out.str();
}

double lid_accuracy(const std::vector<LidEntry>& predicted, const std::vector<LidEntry>& reference) {
  std::map<std::string, const UttLangDecision*> ref_by_id;
  for (const auto& r : reference)
    if (!ref_by_id.emplace(r.id, &r.decision).second) throw SchemaError("duplicate reference id '" + r.id + "'");
  if (predicted.size() != reference.size()) throw SchemaError("prediction and reference counts differ");
  if (predicted.empty()) return 0.0;
  long correct = 0;
  for (const auto& p : predicted) {
    auto it = ref_by_id.find(p.id);
    if (it == ref_by_id.end()) throw SchemaError("no reference decision for '" + p.id + "'");
    correct += p.decision.same_decision(*it->second);
  }
  return static_cast<double>(correct) / static_cast<double>(predicted.size());
}

}  // namespace lal
