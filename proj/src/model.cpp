#include "jointseg/model.hpp"

#include <cmath>

#include "jointseg/errors.hpp"

namespace jointseg {

using numerics::Shape;

std::vector<std::pair<std::string, Shape>> parameter_manifest(const EncoderConfig& cfg,
                                                              std::size_t vocab_size,
                                                              std::size_t bigram_vocab_size,
                                                              std::size_t num_tags) {
  cfg.validate();
  const std::size_t d = static_cast<std::size_t>(cfg.dim);
  const std::size_t d_in = cfg.input_dim();
  const std::size_t h = static_cast<std::size_t>(cfg.hidden);
  std::vector<std::pair<std::string, Shape>> m;
  m.emplace_back("embed.unigram", Shape{vocab_size, d});
  if (cfg.use_bigram) m.emplace_back("embed.bigram", Shape{bigram_vocab_size, d});
  if (cfg.mlp_baseline) {
    m.emplace_back("mlp.W", Shape{static_cast<std::size_t>(cfg.window) * d_in, h});
    m.emplace_back("mlp.b", Shape{h});
  }
  if (cfg.use_conv) {
    for (int q = 1; q <= cfg.feature_sets(); ++q) {
      const std::size_t l = static_cast<std::size_t>(cfg.feature_maps[q - 1]);
      m.emplace_back("conv." + std::to_string(q) + ".W", Shape{static_cast<std::size_t>(q) * d_in, l});
      m.emplace_back("conv." + std::to_string(q) + ".b", Shape{l});
    }
  }
  if (cfg.use_highway) {
    m.emplace_back("highway.W", Shape{d_in, d_in});
    m.emplace_back("highway.b", Shape{d_in});
  }
  const std::size_t f = cfg.feature_dim();
  if (cfg.recurrent != Recurrent::kNone) {
    m.emplace_back("lstm.forward.W", Shape{4 * h, f + h});
    m.emplace_back("lstm.forward.b", Shape{4 * h});
  }
  if (cfg.recurrent == Recurrent::kBlstm) {
    m.emplace_back("lstm.backward.W", Shape{4 * h, f + h});
    m.emplace_back("lstm.backward.b", Shape{4 * h});
  }
  m.emplace_back("projection.W", Shape{cfg.output_dim(), num_tags});
  m.emplace_back("projection.b", Shape{num_tags});
  m.emplace_back("transitions.A", Shape{num_tags, num_tags});
  return m;
}

template <typename Real>
Model<Real> Model<Real>::create(const EncoderConfig& cfg, Vocab vocab, TagSet tagset,
                                bool constrain_transitions, std::mt19937_64& rng) {
  Model m;
  m.encoder_config = cfg;
  m.encoder = init_encoder<Real>(cfg, vocab.size(), vocab.bigram_size(), rng);

  const std::size_t T = tagset.size();
  const std::size_t out = cfg.output_dim();
  const double limit = std::sqrt(6.0 / static_cast<double>(out + T));
  std::uniform_real_distribution<double> dist(-limit, limit);
  m.projection.W = Parameter<Real>(Shape{out, T});
  for (Real& v : m.projection.W.value.values()) v = static_cast<Real>(dist(rng));
  m.projection.b = Parameter<Real>(Shape{T});
  m.transitions.A = Parameter<Real>(Shape{T, T});
  if (constrain_transitions) m.transitions.allowed = tagset.segmentation_mask();

  m.vocab = std::move(vocab);
  m.tagset = std::move(tagset);
  return m;
}

template <typename Real>
CharIndices Model<Real>::index(const std::u32string& chars) const {
  return vocab.encode(chars, encoder_config.use_bigram);
}

template <typename Real>
Example Model<Real>::make_example(const Sentence& s) const {
  if (!s.tags) throw ConfigError("training sentence has no gold tags");
  return Example{index(s.chars), tagset.encode(*s.tags)};
}

template <typename Real>
Var Model<Real>::scores(Tape<Real>& tape, const CharIndices& chars) {
  const Var H = encode(tape, chars, encoder, encoder_config);
  return emission_scores(tape, H, projection);
}

template <typename Real>
TagScoreLattice<Real> Model<Real>::lattice(Tensor<Real> emissions) const {
  return TagScoreLattice<Real>{std::move(emissions), &transitions};
}

template <typename Real>
TagSequence Model<Real>::predict(const CharIndices& chars) const {
  if (chars.size() == 0) return {};
  // Forward only: no closure ever runs, so the parameters stay untouched.
  auto& self = const_cast<Model&>(*this);
  Tape<Real> tape;
  const Var P = self.scores(tape, chars);
  return viterbi(lattice(tape.value(P))).tags;
}

template <typename Real>
std::vector<JointTag> Model<Real>::tag(const std::u32string& chars) const {
  return tagset.decode(predict(index(chars)));
}

template <typename Real>
std::vector<NamedParameter<Real>> Model<Real>::parameters() {
  std::vector<NamedParameter<Real>> out;
  out.push_back({"embed.unigram", &encoder.embed.unigram});
  if (encoder.embed.bigram) out.push_back({"embed.bigram", &*encoder.embed.bigram});
  if (encoder.mlp) {
    out.push_back({"mlp.W", &encoder.mlp->W});
    out.push_back({"mlp.b", &encoder.mlp->b});
  }
  if (encoder.conv) {
    for (std::size_t q = 0; q < encoder.conv->weights.size(); ++q) {
      out.push_back({"conv." + std::to_string(q + 1) + ".W", &encoder.conv->weights[q]});
      out.push_back({"conv." + std::to_string(q + 1) + ".b", &encoder.conv->biases[q]});
    }
  }
  if (encoder.highway) {
    out.push_back({"highway.W", &encoder.highway->W});
    out.push_back({"highway.b", &encoder.highway->b});
  }
  if (encoder.forward) {
    out.push_back({"lstm.forward.W", &encoder.forward->W});
    out.push_back({"lstm.forward.b", &encoder.forward->b});
  }
  if (encoder.backward) {
    out.push_back({"lstm.backward.W", &encoder.backward->W});
    out.push_back({"lstm.backward.b", &encoder.backward->b});
  }
  out.push_back({"projection.W", &projection.W});
  out.push_back({"projection.b", &projection.b});
  out.push_back({"transitions.A", &transitions.A});
  return out;
}

template <typename Real>
std::vector<std::pair<std::string, const Parameter<Real>*>> Model<Real>::parameters() const {
  std::vector<std::pair<std::string, const Parameter<Real>*>> out;
  for (auto& [name, p] : const_cast<Model&>(*this).parameters()) out.emplace_back(name, p);
  return out;
}

template <typename Real>
void Model<Real>::zero_grad() {
  for (auto& np : parameters()) np.param->zero_grad();
}

template <typename Real>
double Model<Real>::squared_norm() const {
  double s = 0;
  for (const auto& [name, p] : parameters()) s += static_cast<double>(numerics::squared_norm(p->value));
  return s;
}

template <typename Real>
void Model<Real>::set_embeddings_frozen(bool frozen) {
  encoder.embed.unigram.frozen = frozen;
  if (encoder.embed.bigram) encoder.embed.bigram->frozen = frozen;
}

template <typename Real>
template <typename Other>
Model<Other> Model<Real>::cast() const {
  Model<Other> m;
  m.encoder_config = encoder_config;
  m.train_config = train_config;
  m.vocab = vocab;
  m.tagset = tagset;
  auto p = [](const Parameter<Real>& x) { return x.template cast<Other>(); };
  m.encoder.embed.unigram = p(encoder.embed.unigram);
  if (encoder.embed.bigram) m.encoder.embed.bigram = p(*encoder.embed.bigram);
  if (encoder.mlp) m.encoder.mlp = MlpParams<Other>{p(encoder.mlp->W), p(encoder.mlp->b)};
  if (encoder.conv) {
    ConvFilterBank<Other> bank;
    for (const auto& w : encoder.conv->weights) bank.weights.push_back(p(w));
    for (const auto& b : encoder.conv->biases) bank.biases.push_back(p(b));
    m.encoder.conv = std::move(bank);
  }
  if (encoder.highway)
    m.encoder.highway = HighwayParams<Other>{p(encoder.highway->W), p(encoder.highway->b)};
  if (encoder.forward)
    m.encoder.forward = LstmParams<Other>{p(encoder.forward->W), p(encoder.forward->b)};
  if (encoder.backward)
    m.encoder.backward = LstmParams<Other>{p(encoder.backward->W), p(encoder.backward->b)};
  m.projection = ProjectionParams<Other>{p(projection.W), p(projection.b)};
  m.transitions.A = p(transitions.A);
  m.transitions.allowed = transitions.allowed;
  return m;
}

template struct Model<float>;
template struct Model<double>;
template Model<double> Model<float>::cast<double>() const;
template Model<float> Model<double>::cast<float>() const;
template Model<float> Model<float>::cast<float>() const;
template Model<double> Model<double>::cast<double>() const;

}  // namespace jointseg
