#pragma once

#include <cstddef>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "jointseg/corpus.hpp"
#include "jointseg/encoder.hpp"
#include "jointseg/lattice.hpp"
#include "jointseg/train_config.hpp"

namespace jointseg {

template <typename Real>
struct NamedParameter {
  std::string name;
  Parameter<Real>* param;
};

// A sentence converted to model indices with its gold tag ids.
struct Example {
  CharIndices chars;
  TagSequence gold;
};

// Everything needed to tag text: vocabulary, tag set, topology and weights.
template <typename Real>
struct Model {
  EncoderConfig encoder_config;
  TrainConfig train_config;
  Vocab vocab;
  TagSet tagset;
  EncoderParams<Real> encoder;
  ProjectionParams<Real> projection;
  TransitionMatrix<Real> transitions;

  // Fresh randomly initialized model. The transition matrix starts at zero.
  static Model create(const EncoderConfig& cfg, Vocab vocab, TagSet tagset,
                      bool constrain_transitions, std::mt19937_64& rng);

  CharIndices index(const std::u32string& chars) const;
  Example make_example(const Sentence& s) const;

  // Emission scores P (n x |T|) recorded on the tape.
  Var scores(Tape<Real>& tape, const CharIndices& chars);
  TagScoreLattice<Real> lattice(Tensor<Real> emissions) const;

  TagSequence predict(const CharIndices& chars) const;
  std::vector<JointTag> tag(const std::u32string& chars) const;

  // Every trainable tensor in the fixed manifest order used on disk.
  std::vector<NamedParameter<Real>> parameters();
  std::vector<std::pair<std::string, const Parameter<Real>*>> parameters() const;

  void zero_grad();
  double squared_norm() const;
  void set_embeddings_frozen(bool frozen);

  template <typename Other>
  Model<Other> cast() const;
};

// Names and shapes the config implies, in manifest order.
std::vector<std::pair<std::string, numerics::Shape>> parameter_manifest(
    const EncoderConfig& cfg, std::size_t vocab_size, std::size_t bigram_vocab_size,
    std::size_t num_tags);

}  // namespace jointseg
