// Copyright 2026 The lalcs Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>
#include <sys/wait.h>

namespace fs = std::filesystem;

namespace {

const fs::path kDir = fs::temp_directory_path() / "lal_unit_cli";

struct Run {
  int code;
  std::string out;
};

Run lal(const std::string& args) {
  fs::create_directories(kDir);
  const fs::path log = kDir / "stdout.txt";
  const std::string cmd = std::string("\"") + LAL_BINARY + "\" " + args + " > \"" + log.string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  std::ifstream in(log);
  std::stringstream ss;
  ss << in.rdbuf();
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, ss.str()};
}

std::string value_of(const std::string& text, const std::string& key) {
  const auto pos = text.find("\n" + key + "=");
  if (pos == std::string::npos) return "";
  const auto start = pos + key.size() + 2;
  return text.substr(start, text.find('\n', start) - start);
}

std::string p(const std::string& name) { return "\"" + (kDir / name).string() + "\""; }

}  // namespace

TEST_CASE("error classes map to exit codes") {
  CHECK(lal("").code == 2);
  CHECK(lal("synth").code == 2);
  CHECK(lal("frobnicate").code == 2);
  CHECK(lal("score --ref " + p("missing.tsv") + " --vocab " + p("missing.txt") + " --text x").code == 3);
  {
    std::ofstream out(kDir / "bad_vocab.txt");
    out << "garbage\n";
  }
  CHECK(lal("score --ref " + p("missing.tsv") + " --vocab " + p("bad_vocab.txt") + " --text x").code == 4);
  CHECK(lal("gradcheck --configs 2").code == 0);
}

TEST_CASE("end-to-end pipeline on a tiny corpus") {
  const auto corpus = kDir / "corpus";
  REQUIRE(lal("synth --out " + p("corpus") +
              " --train-size 16 --dev-size 4 --test-size 4 --tokens-a 3 --tokens-b 3 --feature-dim 4 --max-tokens 4")
              .code == 0);
  REQUIRE(fs::exists(corpus / "train.tsv"));
  REQUIRE(fs::exists(corpus / "vocab.txt"));
  const std::string vocab = p("corpus/vocab.txt"), test = p("corpus/test.tsv");

  SUBCASE("identical reference and hypothesis score zero") {
    std::ifstream man(corpus / "test.tsv");
    std::ifstream voc(corpus / "vocab.txt");
    std::vector<std::string> names;
    for (std::string line; std::getline(voc, line);) names.push_back(line.substr(0, line.find('\t')));
    std::ofstream text(kDir / "ref.txt");
    for (std::string line; std::getline(man, line);) {
      std::vector<std::string> f;
      std::stringstream ls(line);
      for (std::string x; std::getline(ls, x, '\t');) f.push_back(x);
      text << f[0] << '\t';
      std::stringstream ids(f[3]);
      bool first = true;
      for (int id; ids >> id; first = false) text << (first ? "" : " ") << names[id];
      text << '\n';
    }
    text.close();
    const auto r = lal("score --ref " + test + " --vocab " + vocab + " --text " + p("ref.txt"));
    CHECK(r.code == 0);
    CHECK(value_of(r.out, "mer") == "0");
  }

  SUBCASE("train, decode, hint and neutral correction") {
    REQUIRE(lal("train --train " + p("corpus/train.tsv") + " --dev " + p("corpus/dev.tsv") + " --vocab " + vocab +
                " --out " + p("run") + " --epochs 2 --warmup 2 --batch 8 --beta 0.5 --set d_model=8 --set ffn_width=16"
                " --set enc_layers=1 --set dec_layers=1 --set average_best=1")
                .code == 0);
    REQUIRE(fs::exists(kDir / "run" / "final.ckpt"));
    REQUIRE(lal("decode --ckpt " + p("run/final.ckpt") + " --manifest " + test + " --vocab " + vocab + " --out " +
                p("nbest.txt") + " --beam 3")
                .code == 0);
    REQUIRE(fs::exists(kDir / "nbest.txt.lid"));
    const auto base = lal("score --ref " + test + " --vocab " + vocab + " --nbest " + p("nbest.txt"));
    REQUIRE(base.code == 0);
    const auto gt = lal("hint --nbest " + p("nbest.txt") + " --vocab " + vocab + " --ref " + test +
                        " --hint-source groundtruth");
    CHECK(gt.code == 0);
    CHECK(value_of(gt.out, "hint_accuracy") == "1");
    CHECK(lal("hint --nbest " + p("nbest.txt") + " --vocab " + vocab + " --ref " + test + " --hint-source lal").code == 0);
    REQUIRE(lal("correct --nbest " + p("nbest.txt") + " --vocab " + vocab + " --out " + p("fixed.txt") +
                " --client echo-first --hint-source combined")
                .code == 0);
    const auto fixed = lal("score --ref " + test + " --vocab " + vocab + " --text " + p("fixed.txt"));
    CHECK(fixed.code == 0);
    CHECK(value_of(fixed.out, "mer") == value_of(base.out, "mer"));
    CHECK(lal("attn-dump --ckpt " + p("run/final.ckpt") + " --manifest " + test + " --vocab " + vocab).code == 0);
    CHECK(lal("correct --nbest " + p("nbest.txt") + " --vocab " + vocab + " --out " + p("fb.txt") +
              " --client fail --retries 0")
              .code == 0);
  }
}
