#pragma once

#include <cstddef>
#include <functional>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include "jointseg/eval.hpp"
#include "jointseg/lattice.hpp"
#include "jointseg/model.hpp"
#include "jointseg/train_config.hpp"

namespace jointseg {

using numerics::GradientSink;

struct BatchStats {
  int epoch = 0;
  double mean_loss = 0;
  double regularizer = 0;  // (lambda / 2) * ||theta||^2 after the epoch
  double objective = 0;    // mean_loss + regularizer
  std::size_t violations = 0;
  std::size_t sentences = 0;
  double seconds = 0;
};

// (1/m) sum(losses) + (lambda / 2) * squared_norm
double objective(std::span<const double> losses, double squared_norm, double l2);

template <typename Real>
struct HingeResult {
  Real loss = 0;
  TagSequence violator;
};

// max_t [score(t) + delta(gold, t)] - score(gold), via loss-augmented Viterbi.
// Never negative; zero when gold attains the augmented maximum.
template <typename Real>
HingeResult<Real> hinge_loss(const TagScoreLattice<Real>& lat, std::span<const int> gold,
                             double eta);

// Tape version over emission scores. Backward sends +1 to the violator's
// emissions and arcs and -1 to gold's; shared arcs cancel. An inactive hinge
// has no gradient.
template <typename Real>
Var hinge_loss(Tape<Real>& tape, Var emissions, TransitionMatrix<Real>& transitions,
               std::span<const int> gold, double eta, HingeResult<Real>* info = nullptr);

// Adds the data subgradient of one sentence's hinge loss to the parameter
// grads (or to `sink`). Returns the loss.
template <typename Real>
Real backprop_margin(Model<Real>& model, const Example& ex, double eta,
                     GradientSink<Real>* sink = nullptr, TagSequence* violator = nullptr);

// Full objective for a set of examples: mean hinge loss plus the L2 term,
// with the matching gradient left in the parameter grads. Grads are zeroed
// first.
template <typename Real>
double objective_and_gradient(Model<Real>& model, std::span<const Example> examples,
                              double eta, double l2);

// One optimizer step from the accumulated data gradient of `batch_size`
// sentences. The L2 gradient joins the data gradient of every parameter (or
// embedding row) that received one; untouched entries do not move.
template <typename Real>
void apply_update(Model<Real>& model, const TrainConfig& cfg, std::size_t batch_size);

template <typename Real>
BatchStats train_epoch(Model<Real>& model, std::span<const Example> examples,
                       const TrainConfig& cfg, std::mt19937_64& rng, int epoch);

// Index of the highest dev F1; ties go to the earlier epoch.
std::size_t select_best(std::span<const double> dev_f1);

// Leading `fraction` of a seeded shuffle becomes the dev set.
std::pair<std::vector<Sentence>, std::vector<Sentence>> split_dev(std::vector<Sentence> sentences,
                                                                  double fraction,
                                                                  std::uint64_t seed);

template <typename Real>
PrfScore evaluate_model(const Model<Real>& model, const std::vector<Sentence>& gold,
                        EvalMode mode);

struct EpochRecord {
  BatchStats stats;
  bool has_dev = false;
  PrfScore dev;
};

template <typename Real>
struct FitResult {
  Model<Real> best;
  std::size_t best_epoch = 0;  // 0-based index into history
  bool selected_on_dev = false;
  std::vector<EpochRecord> history;
};

// Trains for cfg.max_epochs and keeps the epoch with the best dev joint F1.
// Without dev data the final epoch is returned.
template <typename Real>
FitResult<Real> fit(Model<Real> model, const std::vector<Sentence>& train,
                    const std::vector<Sentence>& dev, const TrainConfig& cfg,
                    const std::function<void(const EpochRecord&)>& on_epoch = {});

}  // namespace jointseg
