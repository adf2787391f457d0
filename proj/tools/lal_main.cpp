// Copyright 2026 The lalcs Authors
// SPDX-License-Identifier: Apache-2.0

// Command-line front end: synth, train, decode, score, hint, correct,
// gradcheck, attn-dump.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "lal/alignment.hpp"
#include "lal/checkpoint.hpp"
#include "lal/decoding.hpp"
#include "lal/error.hpp"
#include "lal/gradcheck.hpp"
#include "lal/hint.hpp"
#include "lal/manifest.hpp"
#include "lal/metrics.hpp"
#include "lal/synth.hpp"
#include "lal/train.hpp"

namespace fs = std::filesystem;
using namespace lal;

namespace {

// Exit codes, one per error class.
enum Exit : int {
  kOk = 0,
  kInternal = 1,
  kUsage = 2,
  kMissingFile = 3,
  kBadFormat = 4,
  kSchemaMismatch = 5,
  kInfeasible = 6,
  kDiverged = 7,
  kCheckFailed = 8,
};

class CheckFailed : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void require_file(const std::string& path) {
  if (!fs::exists(path)) throw IoError("no such file: " + path);
}

Vocabulary load_vocab(const std::string& path) {
  require_file(path);
  return read_vocab(path);
}

std::vector<Utterance> load_manifest(const std::string& path, const Vocabulary& vocab) {
  require_file(path);
  return read_manifest(path, features_path_for(path), vocab);
}

Checkpoint load_ckpt(const std::string& path) {
  require_file(path);
  return load_checkpoint(path);
}

void check_vocab(const Checkpoint& ck, const Vocabulary& vocab) {
  if (ck.config.vocab_size != vocab.size())
    throw SchemaError("checkpoint vocabulary size " + std::to_string(ck.config.vocab_size) +
                      " does not match vocabulary file (" + std::to_string(vocab.size()) + ")");
}

// ---------------------------------------------------------------------------

struct SynthArgs {
  std::string out;
  SynthSpec spec;
  double switch_a = 0.2, switch_b = 0.2;
};

int run_synth(SynthArgs& a) {
  a.spec.switch_prob = {a.switch_a, a.switch_b};
  const SynthCorpus c = synth_corpus(a.spec);
  fs::create_directories(a.out);
  const fs::path dir = a.out;
  write_vocab(dir / "vocab.txt", c.vocab);
  for (const auto& [name, split] : {std::pair{"train", &c.train}, {"dev", &c.dev}, {"test", &c.test}}) {
    const fs::path m = dir / (std::string(name) + ".tsv");
    write_manifest(m, features_path_for(m), split->utterances, a.spec.feature_dim);
  }
  const auto counts = count_tokens(c.train.utterances);
  std::printf("wrote %s: vocab %d, train %zu, dev %zu, test %zu, train tokens LANG_A %ld LANG_B %ld\n",
              a.out.c_str(), c.vocab.size(), c.train.utterances.size(), c.dev.utterances.size(),
              c.test.utterances.size(), counts[kLangA], counts[kLangB]);
  return kOk;
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string config_file;
  std::vector<std::string> sets;
  std::map<std::string, std::string> flags;
  std::string init;
};

int run_train(TrainArgs& a) {
  TrainConfig cfg;
  if (!a.config_file.empty()) {
    require_file(a.config_file);
    load_config_file(cfg, a.config_file);
  }
  for (const auto& [k, v] : a.flags) set_config_value(cfg, k, v);
  for (const auto& kv : a.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("--set expects key=value, got '" + kv + "'");
    set_config_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (cfg.train_manifest.empty() || cfg.vocab_path.empty() || cfg.out_dir.empty())
    throw std::invalid_argument("train needs --train, --vocab and --out (or the matching config keys)");
  const Vocabulary vocab = load_vocab(cfg.vocab_path);
  const auto train_set = load_manifest(cfg.train_manifest, vocab);
  const std::vector<Utterance> dev_set =
      cfg.dev_manifest.empty() ? std::vector<Utterance>{} : load_manifest(cfg.dev_manifest, vocab);
  std::optional<ModelParams> init;
  if (!a.init.empty()) init = load_ckpt(a.init).params;

  fs::create_directories(cfg.out_dir);
  std::ofstream log_file(fs::path(cfg.out_dir) / "train.log");
  struct Tee : std::streambuf {
    std::streambuf *a, *b;
    int overflow(int c) override {
      if (c == EOF) return !EOF;
      return (a->sputc(static_cast<char>(c)) == EOF || b->sputc(static_cast<char>(c)) == EOF) ? EOF : c;
    }
    int sync() override { return a->pubsync() | b->pubsync(); }
  } tee;
  tee.a = std::cout.rdbuf();
  tee.b = log_file.rdbuf();
  std::ostream log(&tee);
  log << "# step loss lctc latt llal lr\n";
  const auto result = train(cfg, train_set, dev_set, vocab, &log, init ? &*init : nullptr);
  for (const auto& s : result.stats)
    std::printf("epoch %d train_loss %.6f val_loss %.6f\n", s.epoch, s.train_loss, s.val_loss);
  std::printf("final %s steps %ld skipped %ld val_loss %.6f\n", (fs::path(cfg.out_dir) / "final.ckpt").c_str(),
              result.steps, result.skipped, result.final.validation_loss);
  return kOk;
}

// ---------------------------------------------------------------------------

struct DecodeArgs {
  std::string ckpt, manifest, vocab, out;
  int beam = 10;
  double alpha = 0.4;
  int max_len = -1;
};

int run_decode(DecodeArgs& a) {
  const Vocabulary vocab = load_vocab(a.vocab);
  const Checkpoint ck = load_ckpt(a.ckpt);
  check_vocab(ck, vocab);
  const auto utts = load_manifest(a.manifest, vocab);
  DecodeOptions opts;
  opts.beam = a.beam;
  opts.alpha = a.alpha;
  opts.max_len = a.max_len;
  std::vector<NBestList> lists;
  for (const auto& u : utts) {
    NBestList nb = joint_beam_search(ck.params, ck.config, u.features, opts, &vocab);
    nb.utt_id = u.id;
    lists.push_back(std::move(nb));
  }
  write_nbest(a.out, lists);
  const std::string sidecar = a.out + ".lid";
  write_lid_posteriors(sidecar, lists);
  std::printf("decoded %zu utterances -> %s (LID posteriors in %s)\n", lists.size(), a.out.c_str(),
              sidecar.c_str());
  return kOk;
}

// ---------------------------------------------------------------------------

std::vector<Transcript> first_best(const std::vector<NBestList>& lists) {
  std::vector<Transcript> out;
  for (const auto& l : lists) out.push_back({l.utt_id, l.hyps.empty() ? std::vector<int>{} : l.hyps[0].tokens});
  return out;
}

std::vector<Transcript> references(const std::vector<Utterance>& utts) {
  std::vector<Transcript> out;
  for (const auto& u : utts) out.push_back({u.id, u.tokens});
  return out;
}

struct ScoreArgs {
  std::string ref, nbest, text, vocab;
};

int run_score(ScoreArgs& a) {
  if (a.nbest.empty() == a.text.empty()) throw std::invalid_argument("score needs exactly one of --nbest or --text");
  const Vocabulary vocab = load_vocab(a.vocab);
  require_file(a.ref);
  const auto refs = references(read_manifest_labels(a.ref, vocab));
  std::vector<Transcript> hyps;
  if (!a.nbest.empty()) {
    require_file(a.nbest);
    hyps = first_best(read_nbest(a.nbest, vocab));
  } else {
    require_file(a.text);
    for (const auto& [id, text] : read_text_transcripts(a.text)) hyps.push_back({id, parse_tokens(vocab, text)});
  }
  // Utterances whose N-best list came back empty still count as all-deleted.
  if (!a.nbest.empty()) {
    std::map<std::string, bool> seen;
    for (const auto& h : hyps) seen[h.id] = true;
    for (const auto& r : refs)
      if (!seen.count(r.id)) hyps.push_back({r.id, {}});
  }
  std::fputs(format_report(score_corpus(refs, hyps, vocab), vocab).c_str(), stdout);
  return kOk;
}

// ---------------------------------------------------------------------------

struct HintArgs {
  std::string nbest, lid, vocab, ref, source = "lal";
  double tau = 0.1, w_lal = 1.0, w_hyp = 1.0;
};

std::string describe(const UttLangDecision& d) {
  if (d.kind == UttLangDecision::Kind::kMultilingual) return "multilingual";
  return d.lang == kLangA ? "monolingual:LANG_A" : "monolingual:LANG_B";
}

int run_hint(HintArgs& a) {
  const Vocabulary vocab = load_vocab(a.vocab);
  std::vector<LidEntry> reference;
  if (!a.ref.empty()) {
    require_file(a.ref);
    for (const auto& u : read_manifest_labels(a.ref, vocab))
      reference.push_back({u.id, decision_from_token_langs(u.token_langs)});
  }
  std::vector<std::pair<std::string, LinguisticHint>> hints;
  if (a.source == "groundtruth") {
    if (reference.empty()) throw std::invalid_argument("--source groundtruth needs --ref");
    for (const auto& r : reference) hints.emplace_back(r.id, hint_from_lal(r.decision));
  } else {
    require_file(a.nbest);
    auto lists = read_nbest(a.nbest, vocab);
    CorrectionOptions opts;
    opts.hint_source = parse_hint_source(a.source);
    opts.presence_threshold = a.tau;
    opts.w_lal = a.w_lal;
    opts.w_hyp = a.w_hyp;
    if (opts.hint_source == HintSource::kLal || opts.hint_source == HintSource::kCombined) {
      const std::string lid = a.lid.empty() ? a.nbest + ".lid" : a.lid;
      require_file(lid);
      read_lid_posteriors(lid, lists);
    }
    for (const auto& l : lists) {
      auto h = select_hint(l, opts);
      if (h) hints.emplace_back(l.utt_id, *h);
    }
  }
  for (const auto& [id, h] : hints) std::printf("%s\t%s\t%s\n", id.c_str(), describe(h.decision).c_str(), h.sentence.c_str());
  if (!reference.empty()) std::printf("hint_accuracy=%.6g\n", hint_accuracy(hints, reference));
  return kOk;
}

// ---------------------------------------------------------------------------

struct CorrectArgs {
  std::string nbest, lid, vocab, out, client = "echo-first", hint_source = "none";
  CorrectionOptions opts;
};

int run_correct(CorrectArgs& a) {
  const Vocabulary vocab = load_vocab(a.vocab);
  require_file(a.nbest);
  auto lists = read_nbest(a.nbest, vocab);
  a.opts.hint_source = parse_hint_source(a.hint_source);
  if (a.opts.hint_source == HintSource::kLal || a.opts.hint_source == HintSource::kCombined) {
    const std::string lid = a.lid.empty() ? a.nbest + ".lid" : a.lid;
    require_file(lid);
    read_lid_posteriors(lid, lists);
  }
  auto client = make_client(a.client);
  const auto corrected = correct_corpus(lists, *client, a.opts, vocab, &std::cerr);
  std::vector<std::string> ids, texts;
  for (const auto& t : corrected) {
    ids.push_back(t.id);
    texts.push_back(render_tokens(vocab, t.tokens));
  }
  write_text_transcripts(a.out, ids, texts);
  std::printf("corrected %zu utterances -> %s\n", corrected.size(), a.out.c_str());
  return kOk;
}

// ---------------------------------------------------------------------------

int run_gradcheck(GradCheckOptions& o) {
  const auto r = lal::run_gradcheck(o);
  std::printf("gradcheck: %zu checks, max relative error %.3e (%s), tolerance %.1e\n", r.items.size(),
              r.max_rel_error, r.worst.c_str(), o.tolerance);
  if (!r.passed) throw CheckFailed("gradient check failed");
  return kOk;
}

// ---------------------------------------------------------------------------

struct AttnArgs {
  std::string ckpt, manifest, vocab, utt;
  int layer = -1;
};

int run_attn_dump(AttnArgs& a) {
  const Vocabulary vocab = load_vocab(a.vocab);
  const Checkpoint ck = load_ckpt(a.ckpt);
  check_vocab(ck, vocab);
  const auto utts = load_manifest(a.manifest, vocab);
  const Utterance* u = nullptr;
  for (const auto& x : utts)
    if (a.utt.empty() || x.id == a.utt) {
      u = &x;
      break;
    }
  if (!u) throw SchemaError("utterance '" + a.utt + "' not in " + a.manifest);
  const Matrix hidden = encode(ck.params, ck.config, u->features);
  std::vector<int> prefix{ck.config.sos_eos_id};
  prefix.insert(prefix.end(), u->tokens.begin(), u->tokens.end());
  const auto out = decode_forward(ck.params, ck.config, hidden, prefix);
  const Matrix avg = average_cross_attention(out.attention, a.layer);
  const Matrix tokens_only = avg.leftCols(avg.cols() - 1);
  const auto pl = pseudo_labels(tokens_only, u->token_langs, a.layer);
  const Matrix post = frame_lid_posteriors(lid_logits(ck.params, hidden));

  std::printf("# utt %s, frames %ld, tokens %zu, columns: tokens then eos\n", u->id.c_str(),
              static_cast<long>(avg.rows()), u->tokens.size());
  std::printf("# tokens:");
  for (int t : u->tokens) std::printf(" %s", vocab.tokens[t].c_str());
  std::printf("\n# frame attention... | pseudo_label | lid posteriors (OTHER LANG_A LANG_B)\n");
  for (Eigen::Index t = 0; t < avg.rows(); ++t) {
    std::printf("%ld", static_cast<long>(t));
    for (Eigen::Index j = 0; j < avg.cols(); ++j) std::printf(" %.6g", avg(t, j));
    std::printf(" | %d |", pl.labels[static_cast<std::size_t>(t)]);
    for (Eigen::Index c = 0; c < post.cols(); ++c) std::printf(" %.6g", post(t, c));
    std::printf("\n");
  }
  std::printf("# tie_breaks %d\n", pl.tie_breaks);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Code-switching ASR with a language alignment loss"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Generate a synthetic code-switching corpus");
  s->add_option("--out", synth.out, "Output directory")->required();
  s->add_option("--seed", synth.spec.seed);
  s->add_option("--train-size", synth.spec.train_size);
  s->add_option("--dev-size", synth.spec.dev_size);
  s->add_option("--test-size", synth.spec.test_size);
  s->add_option("--tokens-a", synth.spec.tokens_a);
  s->add_option("--tokens-b", synth.spec.tokens_b);
  s->add_option("--feature-dim", synth.spec.feature_dim);
  s->add_option("--separation", synth.spec.separation);
  s->add_option("--noise", synth.spec.noise);
  s->add_option("--switch-a", synth.switch_a, "Switch probability after a LANG_A token");
  s->add_option("--switch-b", synth.switch_b, "Switch probability after a LANG_B token");
  s->add_option("--min-tokens", synth.spec.min_tokens);
  s->add_option("--max-tokens", synth.spec.max_tokens);

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Train a model");
  t->add_option("--config", tr.config_file, "key=value config file");
  t->add_option("--set", tr.sets, "Override any config key (key=value), repeatable");
  t->add_option("--init", tr.init, "Start from this checkpoint");
  const std::vector<std::pair<std::string, std::string>> train_flags{
      {"--train", "train_manifest"}, {"--dev", "dev_manifest"},   {"--vocab", "vocab"},
      {"--out", "out_dir"},          {"--beta", "beta"},          {"--alpha-train", "alpha_train"},
      {"--lang-weights", "lang_weights"}, {"--epochs", "epochs"}, {"--extra-epochs", "extra_epochs"},
      {"--seed", "seed"},            {"--lr", "lr_peak"},         {"--warmup", "warmup"},
      {"--batch", "batch"},          {"--threads", "threads"},    {"--rate-factor", "rate_factor"}};
  std::map<std::string, std::string> train_raw;
  for (const auto& [flag, key] : train_flags) t->add_option(flag, train_raw[key], "Config key " + key);

  DecodeArgs dec;
  auto* d = app.add_subcommand("decode", "Joint CTC/attention beam search to an N-best file");
  d->add_option("--ckpt", dec.ckpt)->required();
  d->add_option("--manifest", dec.manifest)->required();
  d->add_option("--vocab", dec.vocab)->required();
  d->add_option("--out", dec.out)->required();
  d->add_option("--beam", dec.beam);
  d->add_option("--alpha-dec", dec.alpha, "CTC weight in the joint score");
  d->add_option("--max-len", dec.max_len);

  ScoreArgs sc;
  auto* c = app.add_subcommand("score", "Mixed error rate against a reference manifest");
  c->add_option("--ref", sc.ref)->required();
  c->add_option("--vocab", sc.vocab)->required();
  c->add_option("--nbest", sc.nbest, "Score the first hypothesis of each list");
  c->add_option("--text", sc.text, "Score a utt_id<TAB>words transcript file");

  HintArgs hi;
  auto* h = app.add_subcommand("hint", "Linguistic hints and their accuracy");
  h->add_option("--nbest", hi.nbest);
  h->add_option("--lid", hi.lid, "LID sidecar (default <nbest>.lid)");
  h->add_option("--vocab", hi.vocab)->required();
  h->add_option("--ref", hi.ref, "Reference manifest for accuracy");
  h->add_option("--hint-source", hi.source, "lal|first|vote|combined|groundtruth");
  h->add_option("--tau", hi.tau);
  h->add_option("--w-lal", hi.w_lal);
  h->add_option("--w-hyp", hi.w_hyp);

  CorrectArgs co;
  auto* r = app.add_subcommand("correct", "Generative error correction through an LLM client");
  r->add_option("--nbest", co.nbest)->required();
  r->add_option("--lid", co.lid, "LID sidecar (default <nbest>.lid)");
  r->add_option("--vocab", co.vocab)->required();
  r->add_option("--out", co.out)->required();
  r->add_option("--client", co.client, "echo-first|fail|scripted:<path>|http:<url>");
  r->add_option("--hint-source", co.hint_source, "none|lal|first|vote|combined");
  r->add_option("--tau", co.opts.presence_threshold);
  r->add_option("--w-lal", co.opts.w_lal);
  r->add_option("--w-hyp", co.opts.w_hyp);
  r->add_option("--temperature", co.opts.temperature);
  r->add_option("--max-tokens", co.opts.max_tokens);
  r->add_option("--retries", co.opts.retries);
  r->add_option("--hypotheses", co.opts.max_hypotheses);

  GradCheckOptions gc;
  auto* g = app.add_subcommand("gradcheck", "Finite-difference gradient suite");
  g->add_option("--configs", gc.configs);
  g->add_option("--seed", gc.seed);
  g->add_option("--tolerance", gc.tolerance);

  AttnArgs at;
  auto* a = app.add_subcommand("attn-dump", "Cross-attention, pseudo-labels and LID posteriors for one utterance");
  a->add_option("--ckpt", at.ckpt)->required();
  a->add_option("--manifest", at.manifest)->required();
  a->add_option("--vocab", at.vocab)->required();
  a->add_option("--utt", at.utt, "Utterance id (default: first)");
  a->add_option("--layer", at.layer, "Decoder layer (default: last)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*s) return run_synth(synth);
    if (*t) {
      for (const auto& [key, value] : train_raw)
        if (!value.empty()) tr.flags[key] = value;
      return run_train(tr);
    }
    if (*d) return run_decode(dec);
    if (*c) return run_score(sc);
    if (*h) return run_hint(hi);
    if (*r) return run_correct(co);
    if (*g) return run_gradcheck(gc);
    if (*a) return run_attn_dump(at);
  } catch (const IoError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kMissingFile;
  } catch (const FormatError& e) {
    std::fprintf(stderr, "error: format: %s\n", e.what());
    return kBadFormat;
  } catch (const SchemaError& e) {
    std::fprintf(stderr, "error: schema: %s\n", e.what());
    return kSchemaMismatch;
  } catch (const InfeasibleAlignment& e) {
    std::fprintf(stderr, "error: infeasible: %s\n", e.what());
    return kInfeasible;
  } catch (const TrainingDiverged& e) {
    std::fprintf(stderr, "error: diverged at step %ld: %s\n", e.batch(), e.what());
    return kDiverged;
  } catch (const CheckFailed& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kCheckFailed;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kUsage;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kInternal;
  }
  return kInternal;
}
