// Copyright 2026 The lalcs Authors
// SPDX-License-Identifier: Apache-2.0

#include "lal/manifest.hpp"

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>

#include "lal/error.hpp"

namespace lal {

namespace {

constexpr char kMagic[4] = {'L', 'A', 'L', 'F'};

template <typename T>
void put_le(std::ostream& out, T value) {
  static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T get_le(std::istream& in) {
  unsigned char bytes[sizeof(T)];
  in.read(reinterpret_cast<char*>(bytes), sizeof(T));
  if (!in) throw FormatError("feature file truncated");
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t tab = line.find('\t', start);
    out.push_back(line.substr(start, tab - start));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  return out;
}

std::vector<long long> parse_ints(const std::string& field, const std::string& where) {
  std::istringstream in(field);
  std::vector<long long> out;
  std::string word;
  while (in >> word) {
    std::size_t used = 0;
    long long v = 0;
    try {
      v = std::stoll(word, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != word.size()) throw FormatError(where + ": not an integer: '" + word + "'");
    out.push_back(v);
  }
  return out;
}

}  // namespace

std::filesystem::path features_path_for(const std::filesystem::path& manifest) {
  auto p = manifest;
  p.replace_extension(".lalf");
  return p;
}

void write_manifest(const std::filesystem::path& manifest, const std::filesystem::path& features,
                    const std::vector<Utterance>& utts, int feature_dim) {
  std::ofstream feat(features, std::ios::binary);
  std::ofstream man(manifest);
  if (!feat) throw IoError("cannot write " + features.string());
  if (!man) throw IoError("cannot write " + manifest.string());
  feat.write(kMagic, 4);
  put_le<std::uint64_t>(feat, static_cast<std::uint64_t>(feature_dim));
  std::uint64_t offset = 4 + 8;
  for (const auto& u : utts) {
    if (u.features.cols() != feature_dim) throw SchemaError("utterance " + u.id + " has wrong feature dimension");
    for (Eigen::Index r = 0; r < u.features.rows(); ++r)
      for (Eigen::Index c = 0; c < u.features.cols(); ++c) put_le<float>(feat, static_cast<float>(u.features(r, c)));
    man << u.id << '\t' << offset << '\t' << u.features.rows() << '\t';
    for (std::size_t i = 0; i < u.tokens.size(); ++i) man << (i ? " " : "") << u.tokens[i];
    man << '\t';
    for (std::size_t i = 0; i < u.token_langs.size(); ++i) man << (i ? " " : "") << u.token_langs[i];
    man << '\n';
    offset += static_cast<std::uint64_t>(u.features.size()) * sizeof(float);
  }
  if (!feat || !man) throw IoError("write failed for " + manifest.string());
}

namespace {

// Features are skipped when `features` is null.
std::vector<Utterance> read_impl(const std::filesystem::path& manifest, const std::filesystem::path* features,
                                 const Vocabulary& vocab) {
  std::ifstream man(manifest);
  if (!man) throw IoError("cannot open " + manifest.string());
  std::ifstream feat;
  Eigen::Index dim = 0;
  if (features) {
    feat.open(*features, std::ios::binary);
    if (!feat) throw IoError("cannot open " + features->string());
    char magic[4];
    feat.read(magic, 4);
    if (!feat || std::memcmp(magic, kMagic, 4) != 0) throw FormatError(features->string() + ": bad magic");
    dim = static_cast<Eigen::Index>(get_le<std::uint64_t>(feat));
  }

  std::vector<Utterance> out;
  std::string line;
  long lineno = 0;
  while (std::getline(man, line)) {
    ++lineno;
    const std::string where = manifest.string() + ":" + std::to_string(lineno);
    const auto fields = split_tabs(line);
    if (fields.size() != 5)
      throw FormatError(where + ": expected 5 fields, got " + std::to_string(fields.size()));
    Utterance u;
    u.id = fields[0];
    if (u.id.empty()) throw FormatError(where + ": empty utterance id");
    const auto offset = parse_ints(fields[1], where);
    const auto frames = parse_ints(fields[2], where);
    if (offset.size() != 1 || frames.size() != 1 || offset[0] < 0 || frames[0] < 1)
      throw FormatError(where + ": bad offset or frame count");
    for (long long t : parse_ints(fields[3], where)) {
      if (t < 0 || t >= vocab.size()) throw FormatError(where + ": token id " + std::to_string(t) + " out of range");
      u.tokens.push_back(static_cast<int>(t));
    }
    for (long long l : parse_ints(fields[4], where)) u.token_langs.push_back(static_cast<int>(l));
    if (u.tokens.empty()) throw FormatError(where + ": empty token sequence");
    if (u.token_langs.size() != u.tokens.size()) throw FormatError(where + ": token/language count mismatch");
    for (std::size_t i = 0; i < u.tokens.size(); ++i)
      if (u.token_langs[i] != vocab.lang_of[u.tokens[i]])
        throw FormatError(where + ": language id disagrees with vocabulary for token " + std::to_string(u.tokens[i]));

    if (!features) {
      out.push_back(std::move(u));
      continue;
    }
    feat.clear();
    feat.seekg(static_cast<std::streamoff>(offset[0]));
    u.features.resize(frames[0], dim);
    for (Eigen::Index r = 0; r < u.features.rows(); ++r)
      for (Eigen::Index c = 0; c < dim; ++c) {
        try {
          u.features(r, c) = get_le<float>(feat);
        } catch (const FormatError&) {
          throw FormatError(where + ": feature block runs past end of " + features->string());
        }
      }
    out.push_back(std::move(u));
  }
  return out;
}

}  // namespace

std::vector<Utterance> read_manifest(const std::filesystem::path& manifest, const std::filesystem::path& features,
                                     const Vocabulary& vocab) {
  return read_impl(manifest, &features, vocab);
}

std::vector<Utterance> read_manifest_labels(const std::filesystem::path& manifest, const Vocabulary& vocab) {
  return read_impl(manifest, nullptr, vocab);
}

void write_text_transcripts(const std::filesystem::path& path, const std::vector<std::string>& ids,
                            const std::vector<std::string>& texts) {
  if (ids.size() != texts.size()) throw std::invalid_argument("write_text_transcripts: length mismatch");
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  for (std::size_t i = 0; i < ids.size(); ++i) out << ids[i] << '\t' << texts[i] << '\n';
  if (!out) throw IoError("write failed for " + path.string());
}

std::vector<std::pair<std::string, std::string>> read_text_transcripts(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::pair<std::string, std::string>> out;
  std::string line;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || tab == 0)
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": expected utt_id<TAB>text");
    out.emplace_back(line.substr(0, tab), line.substr(tab + 1));
  }
  return out;
}

}  // namespace lal
