// Copyright 2026 The lalcs Authors
// SPDX-License-Identifier: Apache-2.0

#include "lal/vocab.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include "lal/error.hpp"

namespace lal {

int Vocabulary::id_of(std::string_view token) const {
  auto it = index.find(std::string(token));
  return it == index.end() ? unk : it->second;
}

int Vocabulary::block_size(int lang) const {
  int n = 0;
  for (int l : lang_of) n += (l == lang);
  return n;
}

Vocabulary build_vocab(int count_a, int count_b) {
  if (count_a < 1 || count_b < 1) throw std::invalid_argument("build_vocab: every language block needs at least one token");
  Vocabulary v;
  v.tokens = {"<blank>", "<sos/eos>", "<unk>"};
  v.lang_of = {kOther, kOther, kOther};
  for (int i = 0; i < count_a; ++i) {
    v.tokens.push_back("a" + std::to_string(i));
    v.lang_of.push_back(kLangA);
  }
  for (int i = 0; i < count_b; ++i) {
    v.tokens.push_back("b" + std::to_string(i));
    v.lang_of.push_back(kLangB);
  }
  for (int i = 0; i < v.size(); ++i) v.index.emplace(v.tokens[i], i);
  return v;
}

int t2l(const Vocabulary& vocab, int token_id) {
  if (token_id < 0 || token_id >= vocab.size())
    throw std::out_of_range("t2l: token id " + std::to_string(token_id) + " outside vocabulary of size " +
                            std::to_string(vocab.size()));
  return vocab.lang_of[token_id];
}

std::vector<int> t2l(const Vocabulary& vocab, const std::vector<int>& token_ids) {
  std::vector<int> out;
  out.reserve(token_ids.size());
  for (int id : token_ids) out.push_back(t2l(vocab, id));
  return out;
}

std::string render_tokens(const Vocabulary& vocab, const std::vector<int>& ids) {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) out += ' ';
    out += vocab.tokens.at(ids[i]);
  }
  return out;
}

std::vector<int> parse_tokens(const Vocabulary& vocab, std::string_view text) {
  std::istringstream in{std::string(text)};
  std::vector<int> ids;
  std::string word;
  while (in >> word) ids.push_back(vocab.id_of(word));
  return ids;
}

void write_vocab(const std::filesystem::path& path, const Vocabulary& vocab) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  for (int id = 0; id < vocab.size(); ++id) out << vocab.tokens[id] << '\t' << vocab.lang_of[id] << '\n';
  if (!out) throw IoError("write failed for " + path.string());
}

Vocabulary read_vocab(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::string> tokens;
  std::vector<int> langs;
  std::string line;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto tab = line.find('\t');
    int lang = -1;
    if (tab != std::string::npos) {
      const std::string field = line.substr(tab + 1);
      if (field.size() == 1 && field[0] >= '0' && field[0] <= '2') lang = field[0] - '0';
    }
    if (lang < 0) throw FormatError(path.string() + ":" + std::to_string(lineno) + ": expected token<TAB>0|1|2");
    tokens.push_back(line.substr(0, tab));
    langs.push_back(lang);
  }
  int count_a = 0, count_b = 0;
  for (int l : langs) {
    count_a += l == kLangA;
    count_b += l == kLangB;
  }
  if (count_a == 0 || count_b == 0) throw FormatError(path.string() + ": both languages need at least one token");
  Vocabulary v = build_vocab(count_a, count_b);
  if (v.tokens != tokens || v.lang_of != langs)
    throw FormatError(path.string() + ": token inventory does not match the expected layout");
  return v;
}

}  // namespace lal
