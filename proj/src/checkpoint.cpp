// Copyright 2026 The lalcs Authors
// SPDX-License-Identifier: Apache-2.0

#include "lal/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

#include "lal/error.hpp"

namespace lal {

namespace {

constexpr char kMagic[4] = {'L', 'A', 'L', 'C'};

template <typename T>
void put(std::ostream& out, T value) {
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T get(std::istream& in, const std::string& what) {
  unsigned char bytes[sizeof(T)];
  in.read(reinterpret_cast<char*>(bytes), sizeof(T));
  if (!in) throw FormatError(what + ": truncated checkpoint");
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

std::string read_string(std::istream& in, std::uint64_t len, const std::string& what) {
  if (len > (1ULL << 30)) throw FormatError(what + ": implausible string length");
  std::string s(len, '\0');
  in.read(s.data(), static_cast<std::streamsize>(len));
  if (!in) throw FormatError(what + ": truncated checkpoint");
  return s;
}

const std::vector<std::pair<std::string, int ModelConfig::*>>& config_keys() {
  static const std::vector<std::pair<std::string, int ModelConfig::*>> keys = {
      {"d_model", &ModelConfig::d_model},       {"heads", &ModelConfig::heads},
      {"enc_layers", &ModelConfig::enc_layers}, {"dec_layers", &ModelConfig::dec_layers},
      {"ffn_width", &ModelConfig::ffn_width},   {"subsample", &ModelConfig::subsample},
      {"vocab_size", &ModelConfig::vocab_size}, {"num_langs", &ModelConfig::num_langs},
      {"feature_dim", &ModelConfig::feature_dim}, {"blank_id", &ModelConfig::blank_id},
      {"sos_eos_id", &ModelConfig::sos_eos_id},
  };
  return keys;
}

}  // namespace

std::string config_to_text(const ModelConfig& cfg, const std::map<std::string, std::string>& extra) {
  std::ostringstream out;
  for (const auto& [key, member] : config_keys()) out << "model." << key << '=' << cfg.*member << '\n';
  for (const auto& [k, v] : extra) out << k << '=' << v << '\n';
  return out.str();
}

ModelConfig config_from_text(const std::string& text, std::map<std::string, std::string>* extra) {
  ModelConfig cfg;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError("checkpoint config line without '=': " + line);
    const std::string key = line.substr(0, eq), value = line.substr(eq + 1);
    bool known = false;
    for (const auto& [name, member] : config_keys()) {
      if (key == "model." + name) {
        cfg.*member = std::stoi(value);
        known = true;
      }
    }
    if (!known && extra) (*extra)[key] = value;
  }
  cfg.validate();
  return cfg;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(kMagic, 4);
  const std::string text = config_to_text(ckpt.config, ckpt.extra);
  put<std::uint64_t>(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  put<std::uint64_t>(out, ckpt.params.tensors.size());
  for (const auto& [name, m] : ckpt.params.tensors) {
    put<std::uint64_t>(out, name.size());
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put<std::uint64_t>(out, 2);
    put<std::uint64_t>(out, static_cast<std::uint64_t>(m.rows()));
    put<std::uint64_t>(out, static_cast<std::uint64_t>(m.cols()));
    for (Eigen::Index i = 0; i < m.size(); ++i) put<double>(out, m.data()[i]);
  }
  put<std::int64_t>(out, ckpt.step);
  put<double>(out, ckpt.validation_loss);
  if (!out) throw IoError("write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  const std::string what = path.string();
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) throw FormatError(what + ": not a checkpoint (bad magic)");
  Checkpoint ck;
  const auto text_len = get<std::uint64_t>(in, what);
  ck.config = config_from_text(read_string(in, text_len, what), &ck.extra);
  const auto count = get<std::uint64_t>(in, what);
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::string name = read_string(in, get<std::uint64_t>(in, what), what);
    const auto rank = get<std::uint64_t>(in, what);
    if (rank < 1 || rank > 2) throw FormatError(what + ": tensor '" + name + "' has unsupported rank");
    std::uint64_t rows = 1, cols;
    if (rank == 2) rows = get<std::uint64_t>(in, what);
    cols = get<std::uint64_t>(in, what);
    if (rows * cols > (1ULL << 28)) throw FormatError(what + ": tensor '" + name + "' is implausibly large");
    Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (Eigen::Index j = 0; j < m.size(); ++j) m.data()[j] = get<double>(in, what);
    if (!ck.params.tensors.emplace(name, std::move(m)).second)
      throw FormatError(what + ": duplicate tensor '" + name + "'");
  }
  ck.step = get<std::int64_t>(in, what);
  ck.validation_loss = get<double>(in, what);
  validate_params(ck.params, ck.config);
  return ck;
}

ModelParams average_params(const std::vector<const ModelParams*>& sets) {
  if (sets.empty()) throw std::invalid_argument("average_params: nothing to average");
  const ModelParams& first = *sets[0];
  for (const ModelParams* s : sets) {
    if (s->tensors.size() != first.tensors.size()) throw SchemaError("checkpoint tensor sets differ");
    for (const auto& [name, m] : first.tensors) {
      auto it = s->tensors.find(name);
      if (it == s->tensors.end()) throw SchemaError("tensor '" + name + "' missing from a checkpoint");
      if (it->second.rows() != m.rows() || it->second.cols() != m.cols())
        throw SchemaError("tensor '" + name + "' shapes differ between checkpoints");
    }
  }
  // Running mean: m_i = m_{i-1} + (x_i - m_{i-1}) / i keeps identical inputs
  // bit-identical, which sum-then-divide does not.
  ModelParams out = first;
  for (std::size_t i = 1; i < sets.size(); ++i) {
    const double n = static_cast<double>(i + 1);
    for (auto& [name, mean] : out.tensors) mean += (sets[i]->tensors.at(name) - mean) / n;
  }
  return out;
}

Checkpoint average_checkpoints(const std::vector<std::filesystem::path>& paths, std::size_t k) {
  if (paths.empty()) throw std::invalid_argument("average_checkpoints: no checkpoints given");
  if (k == 0) throw std::invalid_argument("average_checkpoints: k must be >= 1");
  std::vector<Checkpoint> all;
  for (const auto& p : paths) all.push_back(load_checkpoint(p));
  for (const auto& c : all)
    if (!(c.config == all[0].config)) throw SchemaError("checkpoints were trained with different model configs");
  std::vector<std::size_t> order(all.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return all[a].validation_loss < all[b].validation_loss; });
  order.resize(std::min(k, order.size()));
  std::vector<const ModelParams*> chosen;
  for (std::size_t i : order) chosen.push_back(&all[i].params);
  Checkpoint out = all[order[0]];
  out.params = average_params(chosen);
  return out;
}

}  // namespace lal
