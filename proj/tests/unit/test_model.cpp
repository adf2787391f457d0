// Copyright 2026 The lalcs Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "lal/checkpoint.hpp"
#include "lal/error.hpp"
#include "lal/model.hpp"
#include "oracles.hpp"

using namespace lal;
namespace fs = std::filesystem;

namespace {

ModelConfig tiny() {
  ModelConfig c;
  c.d_model = 8;
  c.heads = 2;
  c.enc_layers = 2;
  c.dec_layers = 2;
  c.ffn_width = 16;
  c.vocab_size = 9;
  c.feature_dim = 5;
  return c;
}

double row_logsumexp(const Matrix& m, Eigen::Index r) {
  const double mx = m.row(r).maxCoeff();
  return mx + std::log((m.row(r).array() - mx).exp().sum());
}

}  // namespace

TEST_CASE("config validation") {
  ModelConfig c = tiny();
  CHECK_NOTHROW(c.validate());
  c.heads = 3;
  CHECK_THROWS(c.validate());
  c = tiny();
  c.subsample = 0;
  CHECK_THROWS(c.validate());
  c = tiny();
  c.num_langs = 4;
  CHECK_THROWS(c.validate());
}

TEST_CASE("encoder shapes and subsampling") {
  const ModelConfig c = tiny();
  const ModelParams p = init_params(c, 1);
  std::mt19937_64 rng(2);
  const Matrix h = encode(p, c, oracle::random_matrix(rng, 40, c.feature_dim));
  CHECK(h.rows() == 10);
  CHECK(h.cols() == c.d_model);
  CHECK(encode(p, c, oracle::random_matrix(rng, 43, c.feature_dim)).rows() == 10);
  CHECK_THROWS(encode(p, c, oracle::random_matrix(rng, 3, c.feature_dim)));
}

TEST_CASE("zero input with zero parameters stays finite") {
  const ModelConfig c = tiny();
  ModelParams p = init_params(c, 1);
  for (auto& [name, m] : p.tensors) m.setZero();
  const Matrix h = encode(p, c, Matrix::Zero(16, c.feature_dim));
  CHECK(h.allFinite());
  CHECK(ctc_log_probs(p, h).allFinite());
  const std::vector<int> prefix{c.sos_eos_id, 4};
  CHECK(decode_forward(p, c, h, prefix).logits.allFinite());
}

TEST_CASE("ctc and lid heads") {
  const ModelConfig c = tiny();
  ModelParams p = init_params(c, 3);
  std::mt19937_64 rng(4);
  const Matrix h = encode(p, c, oracle::random_matrix(rng, 24, c.feature_dim));
  const Matrix lp = ctc_log_probs(p, h);
  CHECK(lp.rows() == h.rows());
  for (Eigen::Index r = 0; r < lp.rows(); ++r) CHECK(std::abs(row_logsumexp(lp, r)) < 1e-10);

  CHECK(lid_logits(p, h).cols() == 3);
  p.tensors.at("lid.weight").setZero();
  p.tensors.at("lid.bias") << 0.5, -1.0, 2.0;
  const Matrix lid = lid_logits(p, h);
  for (Eigen::Index r = 0; r < lid.rows(); ++r) CHECK(lid.row(r) == p.at("lid.bias"));
}

TEST_CASE("decoder shapes, causality and attention records") {
  const ModelConfig c = tiny();
  const ModelParams p = init_params(c, 5);
  std::mt19937_64 rng(6);
  const Matrix h = encode(p, c, oracle::random_matrix(rng, 28, c.feature_dim));
  const std::vector<int> prefix{c.sos_eos_id, 3, 7, 4, 8};
  const auto out = decode_forward(p, c, h, prefix);
  CHECK(out.logits.rows() == 5);
  CHECK(out.logits.cols() == c.vocab_size);
  REQUIRE(out.attention.size() == 2);
  for (const auto& layer : out.attention) {
    REQUIRE(layer.size() == 2);
    for (const auto& head : layer) {
      CHECK(head.rows() == h.rows());
      CHECK(head.cols() == 5);
      // Frame-major: each token's distribution over frames is a column.
      for (Eigen::Index j = 0; j < head.cols(); ++j) CHECK(std::abs(head.col(j).sum() - 1.0) < 1e-12);
    }
  }
  const Matrix avg = average_cross_attention(out.attention);
  for (Eigen::Index t = 0; t < avg.rows(); ++t) CHECK(std::abs(avg.row(t).sum() - 1.0) < 1e-12);

  // Changing tokens from position 3 on leaves rows 0..2 untouched.
  std::vector<int> other = prefix;
  other[3] = 5;
  other[4] = 3;
  const auto out2 = decode_forward(p, c, h, other);
  CHECK(out2.logits.topRows(3) == out.logits.topRows(3));
  CHECK_FALSE(out2.logits.row(3) == out.logits.row(3));

  const std::vector<int> empty;
  CHECK_THROWS(decode_forward(p, c, h, empty));
  const std::vector<int> no_sos{3, 4};
  CHECK_THROWS(decode_forward(p, c, h, no_sos));
}

TEST_CASE("head averaging") {
  AttentionRecord one{{(Matrix(2, 2) << 0.7, 0.3, 0.2, 0.8).finished()}};
  CHECK(average_cross_attention(one) == one[0][0]);
  AttentionRecord two{{(Matrix(1, 2) << 1.0, 0.0).finished(), (Matrix(1, 2) << 0.0, 1.0).finished()}};
  CHECK(average_cross_attention(two) == (Matrix(1, 2) << 0.5, 0.5).finished());
  AttentionRecord layers{{(Matrix(1, 2) << 1.0, 0.0).finished()}, {(Matrix(1, 2) << 0.0, 1.0).finished()}};
  CHECK(average_cross_attention(layers)(0, 1) == 1.0);
  CHECK(average_cross_attention(layers, 0)(0, 0) == 1.0);
  CHECK_THROWS(average_cross_attention(layers, 2));
  CHECK_THROWS(average_cross_attention(AttentionRecord{}));
}

TEST_CASE("low-rank adaptation") {
  std::mt19937_64 rng(8);
  const Matrix m0 = oracle::random_matrix(rng, 6, 5), x = oracle::random_matrix(rng, 5, 3);
  const Matrix a = oracle::random_matrix(rng, 6, 4);
  SUBCASE("zero B is exactly the base map") { CHECK(lora_apply(m0, a, Matrix::Zero(4, 5), x) == m0 * x); }
  SUBCASE("zero base with an identity product passes x through") {
    const Matrix aa = Matrix::Identity(5, 5), bb = Matrix::Identity(5, 5);
    CHECK(lora_apply(Matrix::Zero(5, 5), aa, bb, x) == x);
  }
  SUBCASE("general case") {
    const Matrix b = oracle::random_matrix(rng, 4, 5);
    CHECK(lora_apply(m0, a, b, x).isApprox((m0 + a * b) * x, 1e-14));
  }
  SUBCASE("shape checks") { CHECK_THROWS(lora_apply(m0, a, Matrix::Zero(3, 5), x)); }

  SUBCASE("adapted model with zero B is bit-equal") {
    const ModelConfig c = tiny();
    const ModelParams base = init_params(c, 9);
    ModelParams adapted = base;
    add_lora(adapted, linear_weight_names(c), 4, 10);
    CHECK(adapted.tensors.size() == base.tensors.size() + 2 * linear_weight_names(c).size());
    const Matrix feats = oracle::random_matrix(rng, 20, c.feature_dim);
    const Matrix h0 = encode(base, c, feats), h1 = encode(adapted, c, feats);
    CHECK(h0 == h1);
    const std::vector<int> prefix{c.sos_eos_id, 3, 6};
    CHECK(decode_forward(base, c, h0, prefix).logits == decode_forward(adapted, c, h1, prefix).logits);
    CHECK(ctc_log_probs(base, h0) == ctc_log_probs(adapted, h1));
    CHECK(lid_logits(base, h0) == lid_logits(adapted, h1));
  }
}

TEST_CASE("parameter schema validation") {
  const ModelConfig c = tiny();
  ModelParams p = init_params(c, 1);
  CHECK_NOTHROW(validate_params(p, c));
  CHECK(p.tensors.size() == parameter_schema(c).size());
  p.tensors.at("ctc.weight") = Matrix::Zero(2, 2);
  CHECK_THROWS_AS(validate_params(p, c), SchemaError);
  p = init_params(c, 1);
  p.tensors.erase("lid.bias");
  CHECK_THROWS(validate_params(p, c));
}

TEST_CASE("checkpoint round-trip and averaging") {
  const fs::path dir = fs::temp_directory_path() / "lal_unit_model";
  fs::create_directories(dir);
  const ModelConfig c = tiny();
  Checkpoint ck{c, init_params(c, 11), 42, 1.25, {{"beta", "0.5"}}};
  add_lora(ck.params, {"ctc.weight"}, 2, 3);
  save_checkpoint(dir / "a.ckpt", ck);
  const Checkpoint back = load_checkpoint(dir / "a.ckpt");
  CHECK(back.config == c);
  CHECK(back.step == 42);
  CHECK(back.validation_loss == 1.25);
  CHECK(back.extra.at("beta") == "0.5");
  CHECK(back.params.tensors == ck.params.tensors);

  SUBCASE("arithmetic mean") {
    ModelParams one, three;
    one.tensors["w"] = Matrix::Constant(1, 1, 1.0);
    three.tensors["w"] = Matrix::Constant(1, 1, 3.0);
    CHECK(average_params({&one, &three}).at("w")(0, 0) == 2.0);
    ModelParams other;
    other.tensors["v"] = Matrix::Constant(1, 1, 1.0);
    CHECK_THROWS_AS(average_params({&one, &other}), SchemaError);
  }
  SUBCASE("identical checkpoints average to themselves") {
    std::vector<const ModelParams*> same(10, &ck.params);
    CHECK(average_params(same).tensors == ck.params.tensors);
  }
  SUBCASE("the k lowest validation losses are kept") {
    std::vector<fs::path> paths;
    for (int i = 0; i < 4; ++i) {
      Checkpoint k{c, init_params(c, 1), i, static_cast<double>(4 - i), {}};
      for (auto& [name, m] : k.params.tensors) m.setConstant(static_cast<double>(i));
      paths.push_back(dir / ("k" + std::to_string(i) + ".ckpt"));
      save_checkpoint(paths.back(), k);
    }
    const Checkpoint avg = average_checkpoints(paths, 2);
    CHECK(avg.params.at("lid.bias")(0, 0) == 2.5);  // epochs 3 and 2
    CHECK(average_checkpoints(paths).params.at("lid.bias")(0, 0) == 1.5);
  }
}

TEST_CASE("config text round-trip") {
  ModelConfig c = tiny();
  c.subsample = 2;
  std::map<std::string, std::string> extra;
  const ModelConfig back = config_from_text(config_to_text(c, {{"seed", "3"}}), &extra);
  CHECK(back == c);
  CHECK(extra.at("seed") == "3");
}
