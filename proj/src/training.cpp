#include "jointseg/training.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <map>
#include <numeric>
#include <thread>

#include "jointseg/errors.hpp"

namespace jointseg {

std::string to_string(Optimizer o) { return o == Optimizer::kAdagrad ? "adagrad" : "sgd"; }

Optimizer parse_optimizer(const std::string& s) {
  if (s == "adagrad") return Optimizer::kAdagrad;
  if (s == "sgd") return Optimizer::kSgd;
  throw ConfigError("unknown optimizer '" + s + "' (expected adagrad or sgd)");
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0)) throw ConfigError("learning rate must be positive");
  if (!(margin >= 0)) throw ConfigError("margin discount must be non-negative");
  if (!(l2 >= 0)) throw ConfigError("L2 coefficient must be non-negative");
  if (batch_size < 1) throw ConfigError("batch size must be at least 1");
  if (max_epochs < 0) throw ConfigError("epoch count must be non-negative");
  if (!(dev_fraction >= 0 && dev_fraction < 1)) throw ConfigError("dev fraction must be in [0, 1)");
  if (threads < 1) throw ConfigError("thread count must be at least 1");
}

double objective(std::span<const double> losses, double squared_norm, double l2) {
  if (losses.empty()) throw EmptyInputError("objective over an empty batch");
  const double mean = std::accumulate(losses.begin(), losses.end(), 0.0) /
                      static_cast<double>(losses.size());
  return mean + 0.5 * l2 * squared_norm;
}

namespace {

// Signed usage counts of the violator minus gold. The loss is evaluated from
// these so entries shared by both paths contribute exactly nothing.
struct PathDifference {
  std::vector<std::pair<std::size_t, int>> emissions;  // (position, tag) with +1/-1
  std::vector<int> emission_sign;
  std::map<std::pair<int, int>, int> arcs;
};

PathDifference path_difference(std::span<const int> violator, std::span<const int> gold) {
  PathDifference d;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if (violator[i] == gold[i]) continue;
    d.emissions.emplace_back(i, violator[i]);
    d.emission_sign.push_back(+1);
    d.emissions.emplace_back(i, gold[i]);
    d.emission_sign.push_back(-1);
  }
  for (std::size_t i = 1; i < gold.size(); ++i) {
    ++d.arcs[{violator[i - 1], violator[i]}];
    --d.arcs[{gold[i - 1], gold[i]}];
  }
  return d;
}

template <typename Real>
Real difference_score(const PathDifference& d, const Tensor<Real>& P,
                      const TransitionMatrix<Real>& trans) {
  Real s = 0;
  for (std::size_t k = 0; k < d.emissions.size(); ++k)
    s += static_cast<Real>(d.emission_sign[k]) *
         P.at(d.emissions[k].first, static_cast<std::size_t>(d.emissions[k].second));
  for (const auto& [arc, c] : d.arcs)
    if (c != 0) s += static_cast<Real>(c) * trans.score(arc.first, arc.second);
  return s;
}

template <typename Real>
HingeResult<Real> hinge_impl(const TagScoreLattice<Real>& lat, std::span<const int> gold,
                             double eta, PathDifference* diff_out) {
  HingeResult<Real> r;
  r.violator = loss_augmented_viterbi(lat, gold, eta).tags;
  if (std::equal(r.violator.begin(), r.violator.end(), gold.begin(), gold.end())) return r;
  PathDifference diff = path_difference(r.violator, gold);
  const Real loss = difference_score(diff, lat.emissions, *lat.transitions) +
                    static_cast<Real>(margin_delta(gold, r.violator, eta));
  // A tie with gold can round to a hair below zero.
  r.loss = loss > Real(0) ? loss : Real(0);
  if (diff_out && r.loss > Real(0)) *diff_out = std::move(diff);
  return r;
}

template <typename Real>
bool row_is_zero(std::span<const Real> row) {
  return std::all_of(row.begin(), row.end(), [](Real v) { return v == Real(0); });
}

template <typename Real>
void step(std::span<Real> value, std::span<const Real> grad, std::span<Real> acc,
          const TrainConfig& cfg, Real scale) {
  const Real lr = static_cast<Real>(cfg.learning_rate);
  const Real l2 = static_cast<Real>(cfg.l2);
  for (std::size_t i = 0; i < value.size(); ++i) {
    const Real g = grad[i] * scale + l2 * value[i];
    if (cfg.optimizer == Optimizer::kAdagrad) {
      acc[i] += g * g;
      value[i] -= lr * g / std::sqrt(acc[i] + Real(1e-6));
    } else {
      value[i] -= lr * g;
    }
  }
}

}  // namespace

template <typename Real>
HingeResult<Real> hinge_loss(const TagScoreLattice<Real>& lat, std::span<const int> gold,
                             double eta) {
  return hinge_impl(lat, gold, eta, nullptr);
}

template <typename Real>
Var hinge_loss(Tape<Real>& tape, Var emissions, TransitionMatrix<Real>& transitions,
               std::span<const int> gold, double eta, HingeResult<Real>* info) {
  const TagScoreLattice<Real> lat{tape.value(emissions), &transitions};
  PathDifference diff;
  HingeResult<Real> r = hinge_impl(lat, gold, eta, &diff);
  const Real loss = r.loss;
  if (info) *info = std::move(r);
  return tape.push(
      Tensor<Real>(numerics::Shape{1}, loss),
      [emissions, &transitions, diff = std::move(diff), loss](Tape<Real>& t,
                                                              const Tensor<Real>& g) {
        if (loss <= Real(0)) return;
        Tensor<Real>& dP = t.grad(emissions);
        for (std::size_t k = 0; k < diff.emissions.size(); ++k)
          dP.at(diff.emissions[k].first, static_cast<std::size_t>(diff.emissions[k].second)) +=
              static_cast<Real>(diff.emission_sign[k]) * g[0];
        Tensor<Real>* dA = t.param_grad(transitions.A);
        if (!dA) return;
        for (const auto& [arc, c] : diff.arcs) {
          if (c == 0 || !transitions.is_allowed(arc.first, arc.second)) continue;
          dA->at(static_cast<std::size_t>(arc.first), static_cast<std::size_t>(arc.second)) +=
              static_cast<Real>(c) * g[0];
        }
      },
      "hinge_loss");
}

template <typename Real>
Real backprop_margin(Model<Real>& model, const Example& ex, double eta, GradientSink<Real>* sink,
                     TagSequence* violator) {
  Tape<Real> tape(sink);
  const Var P = model.scores(tape, ex.chars);
  HingeResult<Real> info;
  const Var loss = hinge_loss(tape, P, model.transitions, ex.gold, eta, &info);
  if (info.loss > Real(0)) tape.backward(loss);
  if (violator) *violator = std::move(info.violator);
  return info.loss;
}

template <typename Real>
double objective_and_gradient(Model<Real>& model, std::span<const Example> examples, double eta,
                              double l2) {
  if (examples.empty()) throw EmptyInputError("objective over an empty batch");
  model.zero_grad();
  std::vector<double> losses;
  for (const auto& ex : examples)
    losses.push_back(static_cast<double>(backprop_margin(model, ex, eta)));
  const Real scale = Real(1) / static_cast<Real>(examples.size());
  for (auto& np : model.parameters()) {
    auto g = np.param->grad.values();
    const auto v = np.param->value.values();
    for (std::size_t i = 0; i < g.size(); ++i)
      g[i] = g[i] * scale + (np.param->frozen ? Real(0) : static_cast<Real>(l2) * v[i]);
  }
  return objective(losses, model.squared_norm(), l2);
}

template <typename Real>
void apply_update(Model<Real>& model, const TrainConfig& cfg, std::size_t batch_size) {
  const Real scale = Real(1) / static_cast<Real>(std::max<std::size_t>(batch_size, 1));
  for (auto& np : model.parameters()) {
    Parameter<Real>& p = *np.param;
    if (p.frozen) continue;
    if (p.sparse_rows && p.value.rank() == 2) {
      for (std::size_t r = 0; r < p.value.rows(); ++r) {
        if (row_is_zero<Real>(p.grad.row(r))) continue;
        step<Real>(p.value.row(r), p.grad.row(r), p.accumulator.row(r), cfg, scale);
      }
    } else if (!row_is_zero<Real>(p.grad.values())) {
      step<Real>(p.value.values(), p.grad.values(), p.accumulator.values(), cfg, scale);
    }
  }
  model.zero_grad();
}

template <typename Real>
BatchStats train_epoch(Model<Real>& model, std::span<const Example> examples,
                       const TrainConfig& cfg, std::mt19937_64& rng, int epoch) {
  if (examples.empty()) throw EmptyInputError("training set is empty");
  const auto started = std::chrono::steady_clock::now();
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);

  const std::size_t batch = static_cast<std::size_t>(cfg.batch_size);
  const std::size_t workers =
      cfg.deterministic ? 1 : std::max<std::size_t>(1, static_cast<std::size_t>(cfg.threads));
  const double eta = cfg.margin;
  BatchStats stats;
  stats.epoch = epoch;
  double total_loss = 0;

  model.zero_grad();
  for (std::size_t start = 0; start < order.size(); start += batch) {
    const std::size_t end = std::min(order.size(), start + batch);
    if (workers == 1) {
      for (std::size_t k = start; k < end; ++k) {
        const double loss = static_cast<double>(backprop_margin(model, examples[order[k]], eta));
        total_loss += loss;
        stats.violations += loss > 0;
      }
    } else {
      // Workers pull sentences in whatever order they finish; the summation
      // order of the gradient therefore varies from run to run.
      std::atomic<std::size_t> next{start};
      std::vector<GradientSink<Real>> sinks(workers);
      std::vector<double> losses(end - start, 0.0);
      std::vector<std::thread> pool;
      for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
          for (std::size_t k = next++; k < end; k = next++)
            losses[k - start] =
                static_cast<double>(backprop_margin(model, examples[order[k]], eta, &sinks[w]));
        });
      }
      for (auto& t : pool) t.join();
      for (auto& s : sinks) s.flush();
      for (double l : losses) {
        total_loss += l;
        stats.violations += l > 0;
      }
    }
    apply_update(model, cfg, end - start);
  }

  stats.sentences = examples.size();
  stats.mean_loss = total_loss / static_cast<double>(examples.size());
  stats.regularizer = 0.5 * cfg.l2 * model.squared_norm();
  stats.objective = stats.mean_loss + stats.regularizer;
  stats.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return stats;
}

std::size_t select_best(std::span<const double> dev_f1) {
  if (dev_f1.empty()) throw EmptyInputError("no snapshots to select from");
  std::size_t best = 0;
  for (std::size_t i = 1; i < dev_f1.size(); ++i)
    if (dev_f1[i] > dev_f1[best]) best = i;
  return best;
}

std::pair<std::vector<Sentence>, std::vector<Sentence>> split_dev(std::vector<Sentence> sentences,
                                                                  double fraction,
                                                                  std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::shuffle(sentences.begin(), sentences.end(), rng);
  const auto n_dev = static_cast<std::size_t>(fraction * static_cast<double>(sentences.size()));
  std::vector<Sentence> dev(std::make_move_iterator(sentences.begin()),
                            std::make_move_iterator(sentences.begin() +
                                                    static_cast<std::ptrdiff_t>(n_dev)));
  sentences.erase(sentences.begin(), sentences.begin() + static_cast<std::ptrdiff_t>(n_dev));
  return {std::move(sentences), std::move(dev)};
}

template <typename Real>
PrfScore evaluate_model(const Model<Real>& model, const std::vector<Sentence>& gold,
                        EvalMode mode) {
  std::vector<std::vector<WordSpan>> ref, pred;
  for (const auto& s : gold) {
    if (!s.tags) throw ConfigError("evaluation sentence has no gold tags");
    ref.push_back(decode_tags_to_words(*s.tags));
    pred.push_back(decode_tags_to_words(model.tag(s.chars)));
  }
  return score_prf(ref, pred, mode);
}

template <typename Real>
FitResult<Real> fit(Model<Real> model, const std::vector<Sentence>& train,
                    const std::vector<Sentence>& dev, const TrainConfig& cfg,
                    const std::function<void(const EpochRecord&)>& on_epoch) {
  cfg.validate();
  std::vector<Example> examples;
  examples.reserve(train.size());
  for (const auto& s : train) examples.push_back(model.make_example(s));
  if (examples.empty()) throw EmptyInputError("training set is empty");

  std::uint64_t seed = cfg.seed;
  if (!cfg.deterministic) seed ^= (static_cast<std::uint64_t>(std::random_device{}()) << 1);
  std::mt19937_64 rng(seed);
  model.train_config = cfg;
  model.set_embeddings_frozen(cfg.freeze_embeddings);

  FitResult<Real> result;
  result.selected_on_dev = !dev.empty();
  result.best = model;
  std::vector<double> dev_f1;
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    EpochRecord rec;
    rec.stats = train_epoch(model, examples, cfg, rng, epoch);
    if (!dev.empty()) {
      rec.has_dev = true;
      rec.dev = evaluate_model(model, dev, EvalMode::kJoint);
      dev_f1.push_back(rec.dev.f1);
      if (select_best(dev_f1) == dev_f1.size() - 1) {
        result.best = model;
        result.best_epoch = dev_f1.size() - 1;
      }
    } else {
      result.best = model;
      result.best_epoch = result.history.size();
    }
    result.history.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  return result;
}

#define JOINTSEG_INSTANTIATE(Real)                                                             \
  template HingeResult<Real> hinge_loss<Real>(const TagScoreLattice<Real>&,                    \
                                              std::span<const int>, double);                   \
  template Var hinge_loss<Real>(Tape<Real>&, Var, TransitionMatrix<Real>&,                     \
                                std::span<const int>, double, HingeResult<Real>*);             \
  template Real backprop_margin<Real>(Model<Real>&, const Example&, double,                    \
                                      GradientSink<Real>*, TagSequence*);                      \
  template double objective_and_gradient<Real>(Model<Real>&, std::span<const Example>, double, \
                                               double);                                        \
  template void apply_update<Real>(Model<Real>&, const TrainConfig&, std::size_t);             \
  template BatchStats train_epoch<Real>(Model<Real>&, std::span<const Example>,                \
                                        const TrainConfig&, std::mt19937_64&, int);            \
  template PrfScore evaluate_model<Real>(const Model<Real>&, const std::vector<Sentence>&,     \
                                         EvalMode);                                            \
  template FitResult<Real> fit<Real>(Model<Real>, const std::vector<Sentence>&,                \
                                     const std::vector<Sentence>&, const TrainConfig&,         \
                                     const std::function<void(const EpochRecord&)>&);

JOINTSEG_INSTANTIATE(float)
JOINTSEG_INSTANTIATE(double)

#undef JOINTSEG_INSTANTIATE

}  // namespace jointseg
