#include "jointseg/lattice.hpp"

#include <string>

#include "jointseg/errors.hpp"

namespace jointseg {

namespace {

template <typename Real>
void check_lattice(const TagScoreLattice<Real>& lat) {
  if (lat.emissions.rank() != 2 || lat.length() == 0)
    throw EmptyInputError("tag lattice has no positions");
  if (!lat.transitions || lat.transitions->size() != lat.tags())
    throw DimensionError("transition matrix does not match " + std::to_string(lat.tags()) +
                         " tags");
}

template <typename Real>
void check_sequence(const TagScoreLattice<Real>& lat, std::span<const int> tags,
                    const char* what) {
  if (tags.size() != lat.length())
    throw DimensionError(std::string(what) + " has length " + std::to_string(tags.size()) +
                         " but the lattice has " + std::to_string(lat.length()) + " positions");
  for (int t : tags)
    if (t < 0 || static_cast<std::size_t>(t) >= lat.tags())
      throw DimensionError(std::string(what) + " contains tag " + std::to_string(t) +
                           " outside [0, " + std::to_string(lat.tags()) + ")");
}

template <typename Real>
bool infeasible(Real score) {
  return static_cast<double>(score) < kForbiddenScore / 2;
}

// Max-sum over the chain with emissions shifted by eta wherever the tag
// differs from gold. A backward pass computes the best suffix score of every
// (position, tag); a forward greedy pass then picks, at each position, the
// smallest tag that attains the optimum, which yields the lexicographically
// smallest optimal sequence.
template <typename Real>
TagSequence decode(const TagScoreLattice<Real>& lat, const int* gold, double eta) {
  const std::size_t n = lat.length(), T = lat.tags();
  const auto& trans = *lat.transitions;
  auto emit = [&](std::size_t i, std::size_t t) {
    Real e = lat.emissions.at(i, t);
    if (gold && static_cast<int>(t) != gold[i]) e += static_cast<Real>(eta);
    return e;
  };

  // suffix[i][t]: best score of positions i+1..n-1 given tag t at i.
  std::vector<Real> suffix(n * T, Real(0));
  for (std::size_t i = n - 1; i-- > 0;) {
    for (std::size_t t = 0; t < T; ++t) {
      Real best = 0;
      for (std::size_t u = 0; u < T; ++u) {
        const Real s = trans.score(static_cast<int>(t), static_cast<int>(u)) + emit(i + 1, u) +
                       suffix[(i + 1) * T + u];
        if (u == 0 || s > best) best = s;
      }
      suffix[i * T + t] = best;
    }
  }

  TagSequence path(n);
  Real best = 0;
  for (std::size_t t = 0; t < T; ++t) {
    const Real s = emit(0, t) + suffix[t];
    if (t == 0 || s > best) {
      best = s;
      path[0] = static_cast<int>(t);
    }
  }
  if (infeasible(best)) throw InfeasibleLatticeError("every tag path uses a forbidden transition");
  for (std::size_t i = 1; i < n; ++i) {
    const int prev = path[i - 1];
    Real step = 0;
    for (std::size_t u = 0; u < T; ++u) {
      const Real s = trans.score(prev, static_cast<int>(u)) + emit(i, u) + suffix[i * T + u];
      if (u == 0 || s > step) {
        step = s;
        path[i] = static_cast<int>(u);
      }
    }
  }
  return path;
}

}  // namespace

double margin_delta(std::span<const int> gold, std::span<const int> tags, double eta) {
  if (gold.size() != tags.size())
    throw DimensionError("margin between sequences of length " + std::to_string(gold.size()) +
                         " and " + std::to_string(tags.size()));
  std::size_t mismatches = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) mismatches += gold[i] != tags[i];
  return eta * static_cast<double>(mismatches);
}

template <typename Real>
Real path_score(const TagScoreLattice<Real>& lat, std::span<const int> tags) {
  check_lattice(lat);
  check_sequence(lat, tags, "tag sequence");
  Real score = lat.emissions.at(0, static_cast<std::size_t>(tags[0]));
  for (std::size_t i = 1; i < tags.size(); ++i)
    score += lat.transitions->score(tags[i - 1], tags[i]) +
             lat.emissions.at(i, static_cast<std::size_t>(tags[i]));
  return score;
}

template <typename Real>
Decoded<Real> viterbi(const TagScoreLattice<Real>& lat) {
  check_lattice(lat);
  Decoded<Real> out;
  out.tags = decode(lat, nullptr, 0.0);
  out.score = path_score(lat, out.tags);
  return out;
}

template <typename Real>
Decoded<Real> loss_augmented_viterbi(const TagScoreLattice<Real>& lat, std::span<const int> gold,
                                     double eta) {
  check_lattice(lat);
  check_sequence(lat, gold, "gold sequence");
  Decoded<Real> out;
  out.tags = decode(lat, gold.data(), eta);
  out.score = path_score(lat, out.tags) + static_cast<Real>(margin_delta(gold, out.tags, eta));
  return out;
}

template <typename Real>
Decoded<Real> brute_force_decode(const TagScoreLattice<Real>& lat,
                                 std::optional<std::span<const int>> gold, double eta) {
  check_lattice(lat);
  if (gold) check_sequence(lat, *gold, "gold sequence");
  const std::size_t n = lat.length(), T = lat.tags();
  double count = 1;
  for (std::size_t i = 0; i < n; ++i) {
    count *= static_cast<double>(T);
    if (count > kBruteForceLimit)
      throw GuardError("brute-force decoding of " + std::to_string(T) + "^" +
                       std::to_string(n) + " sequences exceeds the 1e6 limit");
  }

  TagSequence current(n, 0);
  Decoded<Real> best;
  bool first = true;
  while (true) {
    Real s = path_score(lat, current);
    if (gold) s += static_cast<Real>(margin_delta(*gold, current, eta));
    if (first || s > best.score) {
      best.tags = current;
      best.score = s;
      first = false;
    }
    // Lexicographic odometer, last position fastest.
    std::size_t i = n;
    while (i > 0) {
      --i;
      if (static_cast<std::size_t>(++current[i]) < T) break;
      current[i] = 0;
      if (i == 0) {
        i = n + 1;
        break;
      }
    }
    if (i == n + 1) break;
  }
  if (infeasible(best.score))
    throw InfeasibleLatticeError("every tag path uses a forbidden transition");
  return best;
}

#define JOINTSEG_INSTANTIATE(Real)                                                            \
  template Real path_score<Real>(const TagScoreLattice<Real>&, std::span<const int>);         \
  template Decoded<Real> viterbi<Real>(const TagScoreLattice<Real>&);                         \
  template Decoded<Real> loss_augmented_viterbi<Real>(const TagScoreLattice<Real>&,           \
                                                      std::span<const int>, double);          \
  template Decoded<Real> brute_force_decode<Real>(                                            \
      const TagScoreLattice<Real>&, std::optional<std::span<const int>>, double);

JOINTSEG_INSTANTIATE(float)
JOINTSEG_INSTANTIATE(double)

#undef JOINTSEG_INSTANTIATE

}  // namespace jointseg
