#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "jointseg/errors.hpp"
#include "jointseg/numerics/grad_check.hpp"
#include "jointseg/training.hpp"
#include "support/oracles.hpp"
#include "support/toy_corpus.hpp"

using namespace jointseg;
using numerics::Shape;

namespace {

EncoderConfig tiny_config() {
  EncoderConfig cfg;
  cfg.dim = 6;
  cfg.hidden = 5;
  cfg.feature_maps = {4, 4, 4};
  return cfg;
}

template <typename Real>
Model<Real> toy_model(const std::vector<Sentence>& corpus, const EncoderConfig& cfg,
                      std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return Model<Real>::create(cfg, Vocab::build(corpus), TagSet::build(corpus), false, rng);
}

std::vector<std::vector<double>> snapshot(Model<float>& m) {
  std::vector<std::vector<double>> out;
  for (auto& np : m.parameters())
    out.emplace_back(np.param->value.values().begin(), np.param->value.values().end());
  return out;
}

}  // namespace

TEST_CASE("objective is mean loss plus half lambda times the squared norm") {
  const std::vector<double> losses{1, 2, 3};
  CHECK(objective(losses, 4.0, 0.5) == doctest::Approx(3.0));
  CHECK_THROWS_AS(objective({}, 1.0, 0.1), EmptyInputError);
}

TEST_CASE("hinge loss equals the worst margin violation") {
  std::mt19937_64 rng(41);
  std::uniform_real_distribution<double> u(-1.5, 1.5);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 1 + rng() % 4, T = 1 + rng() % 3;
    TransitionMatrix<double> trans{Parameter<double>(Shape{T, T}), {}};
    for (double& v : trans.A.value.values()) v = u(rng);
    TagScoreLattice<double> lat{Tensor<double>::matrix(n, T), &trans};
    for (double& v : lat.emissions.values()) v = u(rng);
    std::vector<int> gold(n);
    for (auto& g : gold) g = static_cast<int>(rng() % T);
    const double eta = 0.2;

    testing::Lattice oracle{testing::to_mat(lat.emissions), testing::to_mat(trans.A.value)};
    const double gold_score = testing::path_score_oracle(oracle, gold);
    double worst = 0;
    bool all_hold = true;
    testing::for_each_sequence(n, static_cast<int>(T), [&](const std::vector<int>& t) {
      double delta = 0;
      for (std::size_t i = 0; i < n; ++i) delta += t[i] != gold[i] ? eta : 0.0;
      const double violation = testing::path_score_oracle(oracle, t) + delta - gold_score;
      worst = std::max(worst, violation);
      if (violation > 0) all_hold = false;
    });
    const auto h = hinge_loss(lat, gold, eta);
    CHECK(h.loss == doctest::Approx(worst).epsilon(1e-12));
    CHECK((h.loss == 0.0) == all_hold);
    CHECK(h.loss >= 0.0);
  }
}

TEST_CASE("hinge gradient reaches emissions and arcs") {
  std::mt19937_64 rng(43);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  int checked = 0;
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t n = 4, T = 3;
    TransitionMatrix<double> trans{Parameter<double>(Shape{T, T}), {}};
    for (double& v : trans.A.value.values()) v = u(rng);
    Parameter<double> P(Shape{n, T});
    for (double& v : P.value.values()) v = u(rng);
    std::vector<int> gold(n);
    for (auto& g : gold) g = static_cast<int>(rng() % T);
    const double eta = 0.3;

    // Finite differences are only meaningful away from argmax switches.
    testing::Lattice oracle{testing::to_mat(P.value), testing::to_mat(trans.A.value)};
    const auto best = testing::enumerate_best(oracle, &gold, eta);
    if (best.score - best.runner_up < 1e-3) continue;
    ++checked;

    auto objective = [&] {
      Tape<double> tape;
      const Var loss = hinge_loss(tape, numerics::leaf(tape, P), trans, gold, eta);
      tape.backward(loss);
      return tape.value(loss)[0];
    };
    std::vector<Parameter<double>*> params{&P, &trans.A};
    CHECK(numerics::grad_check(objective, params).max_rel_error <= 1e-6);
  }
  CHECK(checked >= 20);
}

TEST_CASE("an inactive hinge has no gradient") {
  TransitionMatrix<double> trans{Parameter<double>(Shape{2, 2}), {}};
  Parameter<double> P(Tensor<double>::from_rows({{5, 0}, {0, 5}}));
  const std::vector<int> gold{0, 1};
  Tape<double> tape;
  const Var loss = hinge_loss(tape, numerics::leaf(tape, P), trans, gold, 0.2);
  tape.backward(loss);
  CHECK(tape.value(loss)[0] == 0.0);
  for (double g : P.grad.values()) CHECK(g == 0.0);
  for (double g : trans.A.grad.values()) CHECK(g == 0.0);
}

TEST_CASE("masked arcs receive no gradient") {
  TransitionMatrix<double> trans{Parameter<double>(Shape{2, 2}), {1, 0, 1, 1}};
  Parameter<double> P(Tensor<double>::from_rows({{0, 1}, {1, 0}}));
  const std::vector<int> gold{0, 0};
  Tape<double> tape;
  tape.backward(hinge_loss(tape, numerics::leaf(tape, P), trans, gold, 0.2));
  CHECK(trans.A.grad.at(0, 1) == 0.0);
}

TEST_CASE("full objective gradient passes the finite-difference check") {
  const auto corpus = testing::make_toy_corpus(3, 2);
  auto model = toy_model<double>(corpus, tiny_config(), 5);
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-0.3, 0.3);
  for (double& v : model.transitions.A.value.values()) v = u(rng);
  for (double& v : model.encoder.embed.unigram.value.values()) v = u(rng);
  std::vector<Example> examples;
  for (const auto& s : corpus) {
    auto ex = model.make_example(s);
    ex.chars.unigram.resize(std::min<std::size_t>(ex.chars.size(), 5));
    ex.gold.resize(ex.chars.unigram.size());
    examples.push_back(ex);
  }
  std::vector<Parameter<double>*> params;
  for (auto& np : model.parameters()) params.push_back(np.param);
  const auto report = numerics::grad_check(
      [&] { return objective_and_gradient(model, std::span<const Example>(examples), 0.2, 1e-2); },
      params);
  CHECK(report.max_rel_error <= 1e-4);
}

TEST_CASE("AdaGrad step on a dense parameter") {
  const auto corpus = testing::make_toy_corpus(2, 1);
  auto model = toy_model<double>(corpus, tiny_config(), 3);
  TrainConfig cfg;
  cfg.learning_rate = 0.2;
  cfg.l2 = 0.01;
  auto& b = model.projection.b;
  for (std::size_t i = 0; i < b.value.size(); ++i) {
    b.value[i] = 0.1 * static_cast<double>(i);
    b.grad[i] = static_cast<double>(i) - 2.0;
  }
  const auto before = b.value;
  const auto grad = b.grad;
  const auto A_before = model.transitions.A.value;
  apply_update(model, cfg, 4);
  for (std::size_t i = 0; i < b.value.size(); ++i) {
    const double g = grad[i] / 4.0 + 0.01 * before[i];
    const double expected = before[i] - 0.2 * g / std::sqrt(g * g + 1e-6);
    CHECK(b.value[i] == doctest::Approx(expected).epsilon(1e-12));
    CHECK(b.accumulator[i] == doctest::Approx(g * g).epsilon(1e-12));
    CHECK(b.grad[i] == 0.0);
  }
  CHECK(model.transitions.A.value == A_before);  // no data gradient, no step
}

TEST_CASE("plain SGD step") {
  const auto corpus = testing::make_toy_corpus(2, 1);
  auto model = toy_model<double>(corpus, tiny_config(), 3);
  TrainConfig cfg;
  cfg.optimizer = Optimizer::kSgd;
  cfg.learning_rate = 0.5;
  cfg.l2 = 0.0;
  model.projection.b.grad.fill(2.0);
  const auto before = model.projection.b.value;
  apply_update(model, cfg, 2);
  for (std::size_t i = 0; i < before.size(); ++i)
    CHECK(model.projection.b.value[i] == doctest::Approx(before[i] - 0.5));
}

TEST_CASE("embedding rows without gradient and frozen tables stay put") {
  const auto corpus = testing::make_toy_corpus(2, 1);
  auto model = toy_model<double>(corpus, tiny_config(), 3);
  TrainConfig cfg;
  auto& E = model.encoder.embed.unigram;
  const auto before = E.value;
  E.grad.at(2, 0) = 1.0;
  apply_update(model, cfg, 1);
  for (std::size_t r = 0; r < E.value.rows(); ++r)
    for (std::size_t c = 0; c < E.value.cols(); ++c)
      if (r == 2)
        CHECK(E.value.at(r, c) != before.at(r, c));  // whole row regularized
      else
        CHECK(E.value.at(r, c) == before.at(r, c));

  model.set_embeddings_frozen(true);
  const auto frozen_before = E.value;
  E.grad.fill(1.0);
  apply_update(model, cfg, 1);
  CHECK(E.value == frozen_before);
}

TEST_CASE("snapshot selection prefers the earlier epoch on ties") {
  const std::vector<double> f1{0.5, 0.9, 0.9, 0.7};
  CHECK(select_best(f1) == 1);
  CHECK_THROWS_AS(select_best({}), EmptyInputError);
}

TEST_CASE("dev split is a seeded partition") {
  const auto corpus = testing::make_toy_corpus(50, 3);
  const auto [train, dev] = split_dev(corpus, 0.1, 7);
  CHECK(train.size() == 45);
  CHECK(dev.size() == 5);
  const auto [train2, dev2] = split_dev(corpus, 0.1, 7);
  CHECK(dev == dev2);
  CHECK(split_dev(corpus, 0.0, 7).second.empty());
}

TEST_CASE("config validation") {
  TrainConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.batch_size = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = TrainConfig{};
  cfg.learning_rate = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = TrainConfig{};
  cfg.dev_fraction = 1.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  CHECK(parse_optimizer("sgd") == Optimizer::kSgd);
  CHECK_THROWS_AS(parse_optimizer("adam"), ConfigError);
}

TEST_CASE("deterministic training is reproducible") {
  const auto corpus = testing::make_toy_corpus(20, 4);
  EncoderConfig enc = tiny_config();
  TrainConfig cfg;
  cfg.max_epochs = 3;
  cfg.batch_size = 5;
  auto a = fit(toy_model<float>(corpus, enc, 1), corpus, {}, cfg);
  auto b = fit(toy_model<float>(corpus, enc, 1), corpus, {}, cfg);
  CHECK(snapshot(a.best) == snapshot(b.best));
  CHECK(a.history.size() == 3);
  CHECK(a.best_epoch == 2);
  CHECK_FALSE(a.selected_on_dev);
}

TEST_CASE("model selection keeps the best dev epoch") {
  const auto corpus = testing::make_toy_corpus(20, 4);
  TrainConfig cfg;
  cfg.max_epochs = 4;
  cfg.batch_size = 5;
  std::vector<double> seen;
  auto result = fit(toy_model<float>(corpus, tiny_config(), 1), corpus, corpus, cfg,
                    [&](const EpochRecord& r) { seen.push_back(r.dev.f1); });
  REQUIRE(seen.size() == 4);
  CHECK(result.selected_on_dev);
  CHECK(result.best_epoch == select_best(seen));
  CHECK(evaluate_model(result.best, corpus, EvalMode::kJoint).f1 ==
        doctest::Approx(seen[result.best_epoch]));
}

TEST_CASE("multithreaded training runs and lowers the loss") {
  const auto corpus = testing::make_toy_corpus(40, 6);
  TrainConfig cfg;
  cfg.deterministic = false;
  cfg.threads = 4;
  cfg.max_epochs = 8;
  cfg.batch_size = 10;
  auto result = fit(toy_model<float>(corpus, tiny_config(), 2), corpus, {}, cfg);
  CHECK(result.history.back().stats.mean_loss < result.history.front().stats.mean_loss);
}

TEST_CASE("empty training data is rejected") {
  const auto corpus = testing::make_toy_corpus(2, 1);
  CHECK_THROWS_AS(fit(toy_model<float>(corpus, tiny_config(), 1), {}, {}, TrainConfig{}),
                  EmptyInputError);
}
