#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "jointseg/numerics/ops.hpp"
#include "jointseg/numerics/tape.hpp"
#include "jointseg/numerics/tensor.hpp"

namespace jointseg {

using numerics::Parameter;
using numerics::Tape;
using numerics::Tensor;
using numerics::Var;

enum class Recurrent { kNone, kLstm, kBlstm };

std::string to_string(Recurrent r);
Recurrent parse_recurrent(const std::string& s);

// Topology switches and layer sizes. Either the windowed MLP baseline or the
// convolutional pipeline is active; the recurrent layer (if any) follows.
struct EncoderConfig {
  bool mlp_baseline = false;
  int window = 1;  // MLP context window

  bool use_conv = true;
  bool use_pooling = true;
  bool use_highway = true;
  Recurrent recurrent = Recurrent::kBlstm;

  int dim = 50;                                        // d
  int hidden = 100;                                    // h
  std::vector<int> feature_maps{100, 100, 100, 100, 100};  // l_q for q = 1..Q
  bool use_bigram = false;

  int feature_sets() const { return static_cast<int>(feature_maps.size()); }
  // Per-position embedding width: d, or 3d with bigram context.
  std::size_t input_dim() const;
  // Width after conv/pool/highway (or after the MLP).
  std::size_t feature_dim() const;
  std::size_t output_dim() const;

  // Throws ConfigError describing the first violated constraint.
  void validate() const;

  bool operator==(const EncoderConfig&) const = default;
};

// Character (and optional bigram) lookup tables. Index 0 is unk, 1 is pad.
template <typename Real>
struct EmbeddingTable {
  Parameter<Real> unigram;
  std::optional<Parameter<Real>> bigram;
};

template <typename Real>
struct ConvFilterBank {
  // weights[q-1]: (q * d_in) x l_q, biases[q-1]: l_q
  std::vector<Parameter<Real>> weights;
  std::vector<Parameter<Real>> biases;
};

template <typename Real>
struct HighwayParams {
  Parameter<Real> W;  // d_in x d_in
  Parameter<Real> b;  // d_in
};

// Gate rows are stacked as (input, output, forget, candidate), each h wide.
// gates = W * [x; h_prev] + b with W of shape 4h x (d + h).
template <typename Real>
struct LstmParams {
  Parameter<Real> W;
  Parameter<Real> b;

  std::size_t hidden() const { return b.value.size() / 4; }
  std::size_t input_dim() const { return W.value.cols() - hidden(); }
};

template <typename Real>
struct MlpParams {
  Parameter<Real> W;  // (k * d_in) x h
  Parameter<Real> b;
};

template <typename Real>
struct EncoderParams {
  EmbeddingTable<Real> embed;
  std::optional<MlpParams<Real>> mlp;
  std::optional<ConvFilterBank<Real>> conv;
  std::optional<HighwayParams<Real>> highway;
  std::optional<LstmParams<Real>> forward;
  std::optional<LstmParams<Real>> backward;
};

// Allocates and initializes every parameter the config needs: weight matrices
// uniform in ±sqrt(6 / (fan_in + fan_out)), biases zero, embeddings ±0.01.
template <typename Real>
EncoderParams<Real> init_encoder(const EncoderConfig& cfg, std::size_t vocab_size,
                                 std::size_t bigram_vocab_size, std::mt19937_64& rng);

// Indices of one sentence. bigram_left[i] indexes c_{i-1}c_i and
// bigram_right[i] indexes c_i c_{i+1}; both empty when bigrams are off.
struct CharIndices {
  std::vector<std::int32_t> unigram;
  std::vector<std::int32_t> bigram_left;
  std::vector<std::int32_t> bigram_right;

  std::size_t size() const { return unigram.size(); }
};

template <typename Real>
Var embed_sentence(Tape<Real>& tape, const CharIndices& chars,
                   EmbeddingTable<Real>& table, const EncoderConfig& cfg);

// tanh(W^T [x_{i-floor((k-1)/2)} ; ... ; x_{i+ceil((k-1)/2)}] + b), zero padded.
template <typename Real>
Var mlp_encode(Tape<Real>& tape, Var X, MlpParams<Real>& mlp, int window);

// Wide convolution for q = 1..Q, concatenated along features.
template <typename Real>
Var conv_feature_maps(Tape<Real>& tape, Var X, ConvFilterBank<Real>& bank);

// Keeps the k largest entries of every row in their original order. Ties
// prefer the lower column.
template <typename Real>
Var kmax_pool(Tape<Real>& tape, Var z, std::size_t k);

// Column indices kmax_pool keeps for one row, ascending.
template <typename Real>
std::vector<std::size_t> kmax_indices(std::span<const Real> row, std::size_t k);

template <typename Real>
Var highway_forward(Tape<Real>& tape, Var X, Var cov_X, HighwayParams<Real>& hw);

template <typename Real>
Var lstm_forward(Tape<Real>& tape, Var X, LstmParams<Real>& p, bool reverse);

template <typename Real>
Var blstm_forward(Tape<Real>& tape, Var X, LstmParams<Real>& fwd, LstmParams<Real>& bwd);

// Full pipeline: embed -> (conv -> pool -> highway | mlp) -> recurrent.
template <typename Real>
Var encode(Tape<Real>& tape, const CharIndices& chars, EncoderParams<Real>& params,
           const EncoderConfig& cfg);

}  // namespace jointseg
