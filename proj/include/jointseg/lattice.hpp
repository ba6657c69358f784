#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "jointseg/numerics/ops.hpp"
#include "jointseg/numerics/tape.hpp"
#include "jointseg/numerics/tensor.hpp"

namespace jointseg {

using numerics::Parameter;
using numerics::Tape;
using numerics::Tensor;
using numerics::Var;

using TagSequence = std::vector<int>;

// Score of a forbidden transition. Finite so sums stay well defined.
inline constexpr double kForbiddenScore = -1e30;

template <typename Real>
struct ProjectionParams {
  Parameter<Real> W;  // d_out x |T|
  Parameter<Real> b;  // |T|
};

template <typename Real>
struct TransitionMatrix {
  Parameter<Real> A;  // |T| x |T|, A[from][to]
  // Row-major |T| x |T| flags, 1 = allowed. Empty means unconstrained.
  std::vector<std::uint8_t> allowed;

  std::size_t size() const { return A.value.rows(); }
  bool constrained() const { return !allowed.empty(); }
  bool is_allowed(int from, int to) const {
    return allowed.empty() || allowed[static_cast<std::size_t>(from) * size() +
                                      static_cast<std::size_t>(to)] != 0;
  }
  Real score(int from, int to) const {
    return is_allowed(from, to) ? A.value.at(static_cast<std::size_t>(from),
                                             static_cast<std::size_t>(to))
                                : static_cast<Real>(kForbiddenScore);
  }
};

template <typename Real>
struct TagScoreLattice {
  Tensor<Real> emissions;  // n x |T|
  const TransitionMatrix<Real>* transitions = nullptr;

  std::size_t length() const { return emissions.rows(); }
  std::size_t tags() const { return emissions.cols(); }
};

template <typename Real>
struct Decoded {
  TagSequence tags;
  Real score = 0;
};

// eta times the number of positions where the sequences disagree.
double margin_delta(std::span<const int> gold, std::span<const int> tags, double eta);

// Per-position affine map to tag scores (no nonlinearity).
template <typename Real>
Var emission_scores(Tape<Real>& tape, Var H, ProjectionParams<Real>& proj) {
  return numerics::affine(tape, H, proj.W, proj.b);
}

// sum_{i>=2} A[t_{i-1}, t_i] + sum_i P[i, t_i]
template <typename Real>
Real path_score(const TagScoreLattice<Real>& lat, std::span<const int> tags);

// Exact argmax over all tag sequences. Among equal-scoring sequences the
// lexicographically smallest wins.
template <typename Real>
Decoded<Real> viterbi(const TagScoreLattice<Real>& lat);

// argmax of path_score(t) + margin_delta(gold, t, eta); the returned score
// includes the margin term.
template <typename Real>
Decoded<Real> loss_augmented_viterbi(const TagScoreLattice<Real>& lat,
                                     std::span<const int> gold, double eta);

// Exhaustive enumeration with the same objective and tie rule as the decoders
// above. Refuses instances with more than 1e6 sequences.
template <typename Real>
Decoded<Real> brute_force_decode(const TagScoreLattice<Real>& lat,
                                 std::optional<std::span<const int>> gold = std::nullopt,
                                 double eta = 0.0);

inline constexpr double kBruteForceLimit = 1e6;

}  // namespace jointseg
