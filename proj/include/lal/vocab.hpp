// Copyright 2026 The lalcs Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace lal {

/// Language classes of the frame-level classifier. Special tokens are OTHER.
enum Lang : int { kOther = 0, kLangA = 1, kLangB = 2 };
inline constexpr int kNumLangs = 3;

/// Token inventory laid out as [specials | LANG_A block | LANG_B block].
struct Vocabulary {
  std::vector<std::string> tokens;
  std::vector<int> lang_of;
  int blank = 0;
  int sos_eos = 1;
  int unk = 2;
  std::array<std::string, kNumLangs> lang_names{"OTHER", "LANG_A", "LANG_B"};

  int size() const { return static_cast<int>(tokens.size()); }
  bool is_special(int id) const { return id == blank || id == sos_eos || id == unk; }
  /// Token id for a surface string, or unk when it is not in the inventory.
  int id_of(std::string_view token) const;
  /// Number of tokens belonging to `lang`.
  int block_size(int lang) const;

  std::unordered_map<std::string, int> index;
};

Vocabulary build_vocab(int count_a, int count_b);

/// Token id -> language id. Throws std::out_of_range for ids outside [0, V).
int t2l(const Vocabulary& vocab, int token_id);
std::vector<int> t2l(const Vocabulary& vocab, const std::vector<int>& token_ids);

/// Space-joined surface form, skipping nothing.
std::string render_tokens(const Vocabulary& vocab, const std::vector<int>& ids);
/// Inverse of render_tokens; unknown words become unk.
std::vector<int> parse_tokens(const Vocabulary& vocab, std::string_view text);

// One `token<TAB>language id` line per id, in id order.
void write_vocab(const std::filesystem::path& path, const Vocabulary& vocab);
/// Rebuilds the vocabulary from its block sizes and checks every line.
Vocabulary read_vocab(const std::filesystem::path& path);

}  // namespace lal
