#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "jointseg/encoder.hpp"
#include "jointseg/errors.hpp"
#include "jointseg/numerics/grad_check.hpp"
#include "support/oracles.hpp"

using namespace jointseg;
using numerics::Shape;
using testing::Mat;
using testing::Vec;

namespace {

Parameter<double> param_of(const Mat& m) { return Parameter<double>(testing::to_tensor(m)); }
Parameter<double> param_of(const Vec& v) {
  return Parameter<double>(Tensor<double>({v.size()}, v));
}

Vec random_vec(std::size_t n, std::mt19937_64& rng, double scale = 1.0) {
  return testing::random_mat(1, n, rng, scale)[0];
}

EncoderConfig small_config() {
  EncoderConfig cfg;
  cfg.dim = 4;
  cfg.hidden = 3;
  cfg.feature_maps = {3, 3, 2};
  return cfg;
}

Mat run_lstm(const Mat& X, LstmParams<double>& p, bool reverse) {
  Tape<double> tape;
  return testing::to_mat(
      tape.value(lstm_forward(tape, tape.constant(testing::to_tensor(X)), p, reverse)));
}

LstmParams<double> random_lstm(std::size_t d, std::size_t h, std::mt19937_64& rng) {
  return {param_of(testing::random_mat(4 * h, d + h, rng)), param_of(random_vec(4 * h, rng))};
}

}  // namespace

TEST_CASE("config derives widths") {
  EncoderConfig cfg;
  CHECK(cfg.input_dim() == 50);
  CHECK(cfg.output_dim() == 200);
  cfg.use_bigram = true;
  CHECK(cfg.input_dim() == 150);
  cfg = EncoderConfig{};
  cfg.recurrent = Recurrent::kNone;
  CHECK(cfg.output_dim() == 50);
  cfg.use_pooling = false;
  cfg.use_highway = false;
  CHECK(cfg.output_dim() == 500);
  cfg = EncoderConfig{};
  cfg.mlp_baseline = true;
  cfg.use_conv = cfg.use_pooling = cfg.use_highway = false;
  cfg.recurrent = Recurrent::kNone;
  CHECK(cfg.output_dim() == 100);
}

TEST_CASE("config validation") {
  EncoderConfig cfg;
  cfg.use_pooling = false;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);  // highway needs pooling
  cfg = EncoderConfig{};
  cfg.feature_maps = {10, 10};  // 20 features cannot be pooled down to 50
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = EncoderConfig{};
  cfg.mlp_baseline = true;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);  // conv pipeline still on
  cfg.use_conv = cfg.use_pooling = cfg.use_highway = false;
  cfg.window = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  CHECK(parse_recurrent("blstm") == Recurrent::kBlstm);
  CHECK_THROWS_AS(parse_recurrent("gru"), ConfigError);
}

TEST_CASE("embedding lookup and unk fallback") {
  EncoderConfig cfg = small_config();
  EmbeddingTable<double> table{Parameter<double>(Shape{4, 4}), std::nullopt};
  for (std::size_t i = 0; i < table.unigram.value.size(); ++i)
    table.unigram.value[i] = static_cast<double>(i);
  Tape<double> tape;
  CharIndices chars{{2, 0, 3}, {}, {}};
  const auto& X = tape.value(embed_sentence(tape, chars, table, cfg));
  CHECK(X.rows() == 3);
  CHECK(X.at(0, 0) == 8.0);
  CHECK(X.at(1, 3) == 3.0);  // unk row
  CHECK(X.at(2, 1) == 13.0);

  CharIndices empty;
  CHECK_THROWS_AS(embed_sentence(tape, empty, table, cfg), EmptyInputError);
}

TEST_CASE("bigram embeddings concatenate unigram, left and right bigram rows") {
  EncoderConfig cfg = small_config();
  cfg.dim = 2;
  cfg.use_bigram = true;
  EmbeddingTable<double> table{
      Parameter<double>(Tensor<double>::from_rows({{0, 0}, {0, 0}, {1, 2}})),
      Parameter<double>(Tensor<double>::from_rows({{0, 0}, {0, 0}, {5, 6}, {7, 8}}))};
  Tape<double> tape;
  CharIndices chars{{2, 2}, {3, 2}, {2, 3}};
  const auto& X = tape.value(embed_sentence(tape, chars, table, cfg));
  CHECK(X == Tensor<double>::from_rows({{1, 2, 7, 8, 5, 6}, {1, 2, 5, 6, 7, 8}}));
}

TEST_CASE("initialization ranges") {
  EncoderConfig cfg = small_config();
  std::mt19937_64 rng(1);
  auto params = init_encoder<double>(cfg, 10, 0, rng);
  for (double v : params.embed.unigram.value.values()) CHECK(std::abs(v) <= 0.01);
  CHECK(params.embed.unigram.sparse_rows);
  const double bound = std::sqrt(6.0 / (3 * 4 + 2));
  for (double v : params.conv->weights[2].value.values()) CHECK(std::abs(v) <= bound);
  for (double v : params.conv->biases[0].value.values()) CHECK(v == 0.0);
  CHECK(params.forward->W.shape() == Shape{12, 7});
  CHECK(params.backward.has_value());
  CHECK(params.highway->W.shape() == Shape{4, 4});
}

TEST_CASE("convolution matches the scalar oracle") {
  std::mt19937_64 rng(5);
  for (std::size_t n : {1, 2, 5}) {
    const Mat X = testing::random_mat(n, 3, rng);
    std::vector<Mat> W;
    std::vector<Vec> b;
    ConvFilterBank<double> bank;
    for (std::size_t q = 1; q <= 4; ++q) {
      W.push_back(testing::random_mat(q * 3, 2, rng));
      b.push_back(random_vec(2, rng));
      bank.weights.push_back(param_of(W.back()));
      bank.biases.push_back(param_of(b.back()));
    }
    Tape<double> tape;
    const auto out = conv_feature_maps(tape, tape.constant(testing::to_tensor(X)), bank);
    CHECK(tape.value(out).rows() == n);
    CHECK(tape.value(out).cols() == 8);
    CHECK(testing::max_rel_error(testing::to_mat(tape.value(out)),
                                 testing::conv_oracle(X, W, b)) <= 1e-12);
  }
}

TEST_CASE("unigram convolution is a per-position affine map through tanh") {
  std::mt19937_64 rng(6);
  const Mat X = testing::random_mat(3, 2, rng);
  const Mat W = testing::random_mat(2, 2, rng);
  const Vec b = random_vec(2, rng);
  ConvFilterBank<double> bank;
  bank.weights.push_back(param_of(W));
  bank.biases.push_back(param_of(b));
  Tape<double> tape;
  const auto& Z = tape.value(conv_feature_maps(tape, tape.constant(testing::to_tensor(X)), bank));
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 2; ++j)
      CHECK(Z.at(i, j) == doctest::Approx(std::tanh(b[j] + X[i][0] * W[0][j] + X[i][1] * W[1][j])));
}

TEST_CASE("zero filters give tanh of the bias on every row") {
  ConvFilterBank<double> bank;
  bank.weights.push_back(Parameter<double>(Shape{2, 1}));
  bank.biases.push_back(param_of(Vec{0.3}));
  bank.weights.push_back(Parameter<double>(Shape{4, 1}));
  bank.biases.push_back(param_of(Vec{-2.0}));
  std::mt19937_64 rng(2);
  Tape<double> tape;
  const auto& Z = tape.value(
      conv_feature_maps(tape, tape.constant(testing::to_tensor(testing::random_mat(4, 2, rng))), bank));
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(Z.at(i, 0) == std::tanh(0.3));
    CHECK(Z.at(i, 1) == std::tanh(-2.0));
  }
}

TEST_CASE("k-max pooling keeps the largest values in original order") {
  const std::vector<double> row{2, 5, 1, 4};
  CHECK(kmax_indices<double>(row, 2) == std::vector<std::size_t>{1, 3});
  CHECK(kmax_indices<double>(row, 4) == std::vector<std::size_t>{0, 1, 2, 3});
  const std::vector<double> tie{1, 1, 0};
  CHECK(kmax_indices<double>(tie, 1) == std::vector<std::size_t>{0});
  CHECK_THROWS_AS(kmax_indices<double>(row, 5), DimensionError);

  Tape<double> tape;
  const Var z = tape.constant(Tensor<double>::from_rows({{2, 5, 1, 4}, {0, -1, 3, 3}}));
  const Var y = kmax_pool(tape, z, 2);
  CHECK(tape.value(y) == Tensor<double>::from_rows({{5, 4}, {3, 3}}));
  tape.backward(numerics::sum(tape, y));
  CHECK(tape.grad(z) == Tensor<double>::from_rows({{0, 1, 0, 1}, {0, 0, 1, 1}}));
}

TEST_CASE("k-max pooling property: subsequence holding the top-k multiset") {
  std::mt19937_64 rng(9);
  std::uniform_int_distribution<int> small(-3, 3);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t F = 1 + static_cast<std::size_t>(trial % 9);
    const std::size_t k = 1 + static_cast<std::size_t>(rng() % F);
    std::vector<double> row(F);
    for (auto& v : row) v = small(rng);  // many ties
    const auto keep = kmax_indices<double>(row, k);
    CHECK(std::is_sorted(keep.begin(), keep.end()));
    std::vector<double> kept, sorted = row;
    for (auto i : keep) kept.push_back(row[i]);
    CHECK(kept == testing::kmax_oracle(row, k));
    std::sort(sorted.begin(), sorted.end(), std::greater<>());
    sorted.resize(k);
    std::sort(kept.begin(), kept.end(), std::greater<>());
    CHECK(kept == sorted);
  }
}

TEST_CASE("highway gate extremes and midpoint") {
  std::mt19937_64 rng(4);
  const Mat X = testing::random_mat(3, 2, rng), cov = testing::random_mat(3, 2, rng);
  auto run = [&](double bias) {
    HighwayParams<double> hw{Parameter<double>(Shape{2, 2}), param_of(Vec{bias, bias})};
    Tape<double> tape;
    return testing::to_mat(tape.value(highway_forward(
        tape, tape.constant(testing::to_tensor(X)), tape.constant(testing::to_tensor(cov)), hw)));
  };
  const Mat carry = run(-1e6), transform = run(1e6), mid = run(0);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 2; ++j) {
      CHECK(std::abs(carry[i][j] - X[i][j]) <= 1e-6);
      CHECK(std::abs(transform[i][j] - cov[i][j]) <= 1e-6);
      CHECK(mid[i][j] == doctest::Approx(0.5 * (X[i][j] + cov[i][j])));
    }

  const Mat W = testing::random_mat(2, 2, rng);
  const Vec b = random_vec(2, rng);
  HighwayParams<double> hw{param_of(W), param_of(b)};
  Tape<double> tape;
  const auto out = highway_forward(tape, tape.constant(testing::to_tensor(X)),
                                   tape.constant(testing::to_tensor(cov)), hw);
  CHECK(testing::max_rel_error(testing::to_mat(tape.value(out)),
                               testing::highway_oracle(X, cov, W, b)) <= 1e-12);
}

TEST_CASE("highway rejects a carry input of another width") {
  HighwayParams<double> hw{Parameter<double>(Shape{2, 2}), Parameter<double>(Shape{2})};
  Tape<double> tape;
  CHECK_THROWS_AS(highway_forward(tape, tape.constant(Tensor<double>::matrix(3, 2)),
                                  tape.constant(Tensor<double>::matrix(3, 3)), hw),
                  DimensionError);
}

TEST_CASE("lstm with zero weights stays at zero") {
  LstmParams<double> p{Parameter<double>(Shape{8, 5}), Parameter<double>(Shape{8})};
  std::mt19937_64 rng(3);
  const Mat H = run_lstm(testing::random_mat(4, 3, rng), p, false);
  for (const auto& row : H)
    for (double v : row) CHECK(v == 0.0);
}

TEST_CASE("lstm matches the scalar step oracle in both directions") {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 10; ++trial) {
    auto p = random_lstm(3, 2, rng);
    const Mat X = testing::random_mat(4, 3, rng);
    const Mat W = testing::to_mat(p.W.value);
    const Vec b(p.b.value.values().begin(), p.b.value.values().end());
    for (bool reverse : {false, true})
      CHECK(testing::max_rel_error(run_lstm(X, p, reverse), testing::lstm_oracle(X, W, b, reverse)) <=
            1e-10);
  }
}

TEST_CASE("single-step lstm is direction independent") {
  std::mt19937_64 rng(12);
  auto p = random_lstm(3, 2, rng);
  const Mat X = testing::random_mat(1, 3, rng);
  CHECK(run_lstm(X, p, false) == run_lstm(X, p, true));
}

TEST_CASE("blstm output concatenates directions and is mirror symmetric") {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    auto fwd = random_lstm(3, 2, rng), bwd = random_lstm(3, 2, rng);
    const Mat X = testing::random_mat(5, 3, rng);
    Mat Xr(X.rbegin(), X.rend());
    Tape<double> tape;
    const Mat H = testing::to_mat(
        tape.value(blstm_forward(tape, tape.constant(testing::to_tensor(X)), fwd, bwd)));
    const Mat Hr = testing::to_mat(
        tape.value(blstm_forward(tape, tape.constant(testing::to_tensor(Xr)), bwd, fwd)));
    REQUIRE(H[0].size() == 4);
    for (std::size_t i = 0; i < 5; ++i) {
      const auto& a = H[i];
      const auto& b = Hr[4 - i];
      CHECK(a[0] == b[2]);
      CHECK(a[1] == b[3]);
      CHECK(a[2] == b[0]);
      CHECK(a[3] == b[1]);
    }
  }

  auto a = random_lstm(3, 2, rng), b = random_lstm(3, 3, rng);
  Tape<double> tape;
  CHECK_THROWS_AS(blstm_forward(tape, tape.constant(Tensor<double>::matrix(2, 3)), a, b),
                  ConfigError);
}

TEST_CASE("mlp window matches a sliding-window oracle") {
  std::mt19937_64 rng(13);
  const Mat X = testing::random_mat(4, 2, rng);
  const Mat W = testing::random_mat(6, 3, rng);
  const Vec b = random_vec(3, rng);
  MlpParams<double> mlp{param_of(W), param_of(b)};
  Tape<double> tape;
  const Mat H = testing::to_mat(tape.value(mlp_encode(tape, tape.constant(testing::to_tensor(X)), mlp, 3)));
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 3; ++j) {
      double s = b[j];
      for (int off = -1; off <= 1; ++off) {
        const int src = static_cast<int>(i) + off;
        if (src < 0 || src >= 4) continue;
        for (std::size_t c = 0; c < 2; ++c)
          s += X[static_cast<std::size_t>(src)][c] * W[static_cast<std::size_t>(off + 1) * 2 + c][j];
      }
      CHECK(H[i][j] == doctest::Approx(std::tanh(s)).epsilon(1e-12));
    }

  // A one-character sentence sees zeros on both sides.
  const Mat one = testing::random_mat(1, 2, rng);
  Tape<double> t2;
  const Mat H1 = testing::to_mat(t2.value(mlp_encode(t2, t2.constant(testing::to_tensor(one)), mlp, 3)));
  for (std::size_t j = 0; j < 3; ++j)
    CHECK(H1[0][j] ==
          doctest::Approx(std::tanh(b[j] + one[0][0] * W[2][j] + one[0][1] * W[3][j])).epsilon(1e-12));
}

TEST_CASE("encode output width for every ablation topology") {
  std::mt19937_64 rng(17);
  const CharIndices chars{{2, 3, 4, 2, 5, 6, 3, 2, 4, 5}, {}, {}};
  for (int conv_stage = 0; conv_stage < 4; ++conv_stage)
    for (Recurrent r : {Recurrent::kNone, Recurrent::kLstm, Recurrent::kBlstm}) {
      EncoderConfig cfg;
      cfg.dim = 6;
      cfg.hidden = 5;
      cfg.feature_maps = {4, 4, 4};
      cfg.use_conv = conv_stage >= 1;
      cfg.use_pooling = conv_stage >= 2;
      cfg.use_highway = conv_stage >= 3;
      cfg.recurrent = r;
      cfg.validate();
      auto params = init_encoder<double>(cfg, 8, 0, rng);
      Tape<double> tape;
      const auto& H = tape.value(encode(tape, chars, params, cfg));
      CHECK(H.rows() == 10);
      CHECK(H.cols() == cfg.output_dim());
    }
}

TEST_CASE("full-size encode shapes") {
  EncoderConfig cfg;
  std::mt19937_64 rng(1);
  auto params = init_encoder<float>(cfg, 20, 0, rng);
  const CharIndices chars{{2, 3, 4, 5, 6, 7, 8, 9, 10, 11}, {}, {}};
  Tape<float> tape;
  const Var X = embed_sentence(tape, chars, params.embed, cfg);
  CHECK(tape.value(X).shape() == Shape{10, 50});
  const Var Z = conv_feature_maps(tape, X, *params.conv);
  CHECK(tape.value(Z).shape() == Shape{10, 500});
  const Var P = kmax_pool(tape, Z, 50);
  CHECK(tape.value(P).shape() == Shape{10, 50});
  const Var Hw = highway_forward(tape, X, P, *params.highway);
  CHECK(tape.value(Hw).shape() == Shape{10, 50});
  const Var H = blstm_forward(tape, Hw, *params.forward, *params.backward);
  CHECK(tape.value(H).shape() == Shape{10, 200});
}

TEST_CASE("encoder gradients pass the finite-difference check") {
  std::mt19937_64 rng(23);
  EncoderConfig cfg = small_config();
  cfg.use_bigram = true;
  cfg.feature_maps = {5, 5, 4};
  auto params = init_encoder<double>(cfg, 6, 5, rng);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  for (double& v : params.embed.unigram.value.values()) v = u(rng);
  for (double& v : params.embed.bigram->value.values()) v = u(rng);
  const CharIndices chars{{2, 3, 4, 5}, {1, 2, 3, 4}, {2, 3, 4, 1}};

  std::vector<Parameter<double>*> all{&params.embed.unigram, &*params.embed.bigram,
                                      &params.highway->W,    &params.highway->b,
                                      &params.forward->W,    &params.forward->b,
                                      &params.backward->W,   &params.backward->b};
  for (auto& w : params.conv->weights) all.push_back(&w);
  for (auto& b : params.conv->biases) all.push_back(&b);
  Tensor<double> weights = Tensor<double>::matrix(4, 6);
  for (double& v : weights.values()) v = u(rng);

  auto objective = [&] {
    Tape<double> tape;
    const Var H = encode(tape, chars, params, cfg);
    const Var w = tape.constant(weights);
    const Var loss = numerics::sum(tape, numerics::hadamard(tape, H, w));
    tape.backward(loss);
    return tape.value(loss)[0];
  };
  const auto report = numerics::grad_check(objective, all);
  INFO(report.worst_param, " ", report.worst_index, " ", report.worst_analytic, " ", report.worst_numeric);
  CHECK(report.max_rel_error <= 1e-4);
}
