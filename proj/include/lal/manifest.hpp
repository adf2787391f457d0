// Copyright 2026 The lalcs Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "lal/synth.hpp"
#include "lal/vocab.hpp"

namespace lal {

// Manifest: one line per utterance,
//   utt_id \t feat_offset \t T \t token ids \t language ids
// Features: "LALF", u64 LE feature dim, then T x F float32 LE blocks at the
// byte offsets recorded in the manifest.

void write_manifest(const std::filesystem::path& manifest, const std::filesystem::path& features,
                    const std::vector<Utterance>& utts, int feature_dim);

/// Reads and validates a manifest. Records whose language ids disagree with
/// the vocabulary, or that are otherwise malformed, raise FormatError with
/// the offending line number.
std::vector<Utterance> read_manifest(const std::filesystem::path& manifest, const std::filesystem::path& features,
                                     const Vocabulary& vocab);

/// Feature file that accompanies a manifest: same stem, extension ".lalf".
/// Ids, tokens and languages only; the feature file is not touched.
std::vector<Utterance> read_manifest_labels(const std::filesystem::path& manifest, const Vocabulary& vocab);

// Transcript text file: utt_id \t space-separated words
void write_text_transcripts(const std::filesystem::path& path, const std::vector<std::string>& ids,
                            const std::vector<std::string>& texts);
std::vector<std::pair<std::string, std::string>> read_text_transcripts(const std::filesystem::path& path);

std::filesystem::path features_path_for(const std::filesystem::path& manifest);

}  // namespace lal
