#include "jointseg/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>

#include "jointseg/errors.hpp"

namespace jointseg {

using numerics::Activation;
using numerics::Shape;

std::string to_string(Recurrent r) {
  switch (r) {
    case Recurrent::kNone: return "none";
    case Recurrent::kLstm: return "lstm";
    case Recurrent::kBlstm: return "blstm";
  }
  return "none";
}

Recurrent parse_recurrent(const std::string& s) {
  if (s == "none") return Recurrent::kNone;
  if (s == "lstm") return Recurrent::kLstm;
  if (s == "blstm") return Recurrent::kBlstm;
  throw ConfigError("unknown recurrent layer '" + s + "' (expected none, lstm or blstm)");
}

std::size_t EncoderConfig::input_dim() const {
  return static_cast<std::size_t>(dim) * (use_bigram ? 3 : 1);
}

std::size_t EncoderConfig::feature_dim() const {
  if (mlp_baseline) return static_cast<std::size_t>(hidden);
  if (use_conv && !use_pooling) {
    std::size_t total = 0;
    for (int l : feature_maps) total += static_cast<std::size_t>(l);
    return total;
  }
  // Pooling keeps k = d_in features so the highway carry type-checks.
  return input_dim();
}

std::size_t EncoderConfig::output_dim() const {
  switch (recurrent) {
    case Recurrent::kBlstm: return 2 * static_cast<std::size_t>(hidden);
    case Recurrent::kLstm: return static_cast<std::size_t>(hidden);
    case Recurrent::kNone: break;
  }
  return feature_dim();
}

void EncoderConfig::validate() const {
  if (dim < 1) throw ConfigError("embedding dimension must be positive");
  if ((mlp_baseline || recurrent != Recurrent::kNone) && hidden < 1)
    throw ConfigError("hidden dimension must be positive");
  if (mlp_baseline) {
    if (window < 1) throw ConfigError("window size must be at least 1");
    if (use_conv || use_pooling || use_highway)
      throw ConfigError("the MLP baseline excludes the convolutional pipeline");
    return;
  }
  if (use_pooling && !use_conv) throw ConfigError("pooling requires the convolutional layer");
  if (use_highway && !use_pooling)
    throw ConfigError("highway requires pooling (carry and transform widths must match)");
  if (use_conv) {
    if (feature_maps.empty()) throw ConfigError("at least one feature map set is required");
    std::size_t total = 0;
    for (int l : feature_maps) {
      if (l < 1) throw ConfigError("feature map set sizes must be positive");
      total += static_cast<std::size_t>(l);
    }
    if (use_pooling && total < input_dim())
      throw ConfigError("k-max pooling keeps " + std::to_string(input_dim()) +
                        " features but the convolution only produces " +
                        std::to_string(total));
  }
}

namespace {

template <typename Real>
Parameter<Real> glorot(std::size_t rows, std::size_t cols, std::size_t fan_in,
                       std::size_t fan_out, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  Parameter<Real> p(Shape{rows, cols});
  for (Real& v : p.value.values()) v = static_cast<Real>(dist(rng));
  return p;
}

template <typename Real>
Parameter<Real> embedding(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-0.01, 0.01);
  Parameter<Real> p(Shape{rows, cols});
  for (Real& v : p.value.values()) v = static_cast<Real>(dist(rng));
  p.sparse_rows = true;
  return p;
}

template <typename Real>
Parameter<Real> zeros(std::size_t n) {
  return Parameter<Real>(Shape{n});
}

template <typename Real>
void require_same_rows(const Tensor<Real>& a, const Tensor<Real>& b, const char* op) {
  if (a.shape() != b.shape())
    throw DimensionError(std::string(op) + ": " + numerics::shape_string(a.shape()) +
                         " vs " + numerics::shape_string(b.shape()));
}

}  // namespace

template <typename Real>
EncoderParams<Real> init_encoder(const EncoderConfig& cfg, std::size_t vocab_size,
                                 std::size_t bigram_vocab_size, std::mt19937_64& rng) {
  cfg.validate();
  const std::size_t d = static_cast<std::size_t>(cfg.dim);
  const std::size_t d_in = cfg.input_dim();
  const std::size_t h = static_cast<std::size_t>(cfg.hidden);

  EncoderParams<Real> p;
  p.embed.unigram = embedding<Real>(vocab_size, d, rng);
  if (cfg.use_bigram) p.embed.bigram = embedding<Real>(bigram_vocab_size, d, rng);

  if (cfg.mlp_baseline) {
    const std::size_t in = static_cast<std::size_t>(cfg.window) * d_in;
    p.mlp = MlpParams<Real>{glorot<Real>(in, h, in, h, rng), zeros<Real>(h)};
  }
  if (cfg.use_conv) {
    ConvFilterBank<Real> bank;
    for (int q = 1; q <= cfg.feature_sets(); ++q) {
      const std::size_t in = static_cast<std::size_t>(q) * d_in;
      const std::size_t out = static_cast<std::size_t>(cfg.feature_maps[q - 1]);
      bank.weights.push_back(glorot<Real>(in, out, in, out, rng));
      bank.biases.push_back(zeros<Real>(out));
    }
    p.conv = std::move(bank);
  }
  if (cfg.use_highway)
    p.highway = HighwayParams<Real>{glorot<Real>(d_in, d_in, d_in, d_in, rng), zeros<Real>(d_in)};

  const std::size_t f = cfg.feature_dim();
  auto lstm = [&] {
    return LstmParams<Real>{glorot<Real>(4 * h, f + h, f + h, 4 * h, rng), zeros<Real>(4 * h)};
  };
  if (cfg.recurrent != Recurrent::kNone) p.forward = lstm();
  if (cfg.recurrent == Recurrent::kBlstm) p.backward = lstm();
  return p;
}

template <typename Real>
Var embed_sentence(Tape<Real>& tape, const CharIndices& chars, EmbeddingTable<Real>& table,
                   const EncoderConfig& cfg) {
  if (chars.size() == 0) throw EmptyInputError("cannot embed an empty sentence");
  const Var uni = numerics::lookup_rows(tape, table.unigram, chars.unigram);
  if (!cfg.use_bigram) return uni;
  if (!table.bigram) throw ConfigError("bigram embeddings requested but no bigram table");
  if (chars.bigram_left.size() != chars.size() || chars.bigram_right.size() != chars.size())
    throw DimensionError("bigram index sequences must match the sentence length");
  const Var left = numerics::lookup_rows(tape, *table.bigram, chars.bigram_left);
  const Var right = numerics::lookup_rows(tape, *table.bigram, chars.bigram_right);
  return numerics::concat_cols(tape, {uni, left, right});
}

template <typename Real>
Var mlp_encode(Tape<Real>& tape, Var X, MlpParams<Real>& mlp, int window) {
  if (window < 1) throw ConfigError("window size must be at least 1");
  const std::size_t k = static_cast<std::size_t>(window);
  const Var ctx = numerics::window_concat(tape, X, (k - 1) / 2, k / 2);
  return numerics::activation(tape, numerics::affine(tape, ctx, mlp.W, mlp.b), Activation::kTanh);
}

template <typename Real>
Var conv_feature_maps(Tape<Real>& tape, Var X, ConvFilterBank<Real>& bank) {
  if (tape.value(X).rows() == 0) throw EmptyInputError("convolution over an empty sequence");
  if (bank.weights.empty() || bank.weights.size() != bank.biases.size())
    throw ConfigError("malformed convolution filter bank");
  std::vector<Var> maps;
  for (std::size_t q = 1; q <= bank.weights.size(); ++q) {
    // window c_{i - floor((q-1)/2) : i + ceil((q-1)/2)}
    const Var ctx = numerics::window_concat(tape, X, (q - 1) / 2, q / 2);
    const Var pre = numerics::affine(tape, ctx, bank.weights[q - 1], bank.biases[q - 1]);
    maps.push_back(numerics::activation(tape, pre, Activation::kTanh));
  }
  return maps.size() == 1 ? maps.front() : numerics::concat_cols(tape, maps);
}

template <typename Real>
std::vector<std::size_t> kmax_indices(std::span<const Real> row, std::size_t k) {
  if (k > row.size())
    throw DimensionError("k-max pooling width " + std::to_string(k) + " exceeds " +
                         std::to_string(row.size()) + " features");
  std::vector<std::size_t> order(row.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                    [&](std::size_t a, std::size_t b) {
                      return row[a] > row[b] || (row[a] == row[b] && a < b);
                    });
  order.resize(k);
  std::sort(order.begin(), order.end());
  return order;
}

template <typename Real>
Var kmax_pool(Tape<Real>& tape, Var z, std::size_t k) {
  const Tensor<Real>& Z = tape.value(z);
  const std::size_t n = Z.rows();
  auto selected = std::make_shared<std::vector<std::size_t>>();
  selected->reserve(n * k);
  Tensor<Real> Y = Tensor<Real>::matrix(n, k);
  for (std::size_t i = 0; i < n; ++i) {
    const auto keep = kmax_indices<Real>(Z.row(i), k);
    for (std::size_t j = 0; j < k; ++j) Y.at(i, j) = Z.at(i, keep[j]);
    selected->insert(selected->end(), keep.begin(), keep.end());
  }
  return tape.push(
      std::move(Y),
      [z, selected, n, k](Tape<Real>& t, const Tensor<Real>& g) {
        Tensor<Real>& dZ = t.grad(z);
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < k; ++j) dZ.at(i, (*selected)[i * k + j]) += g.at(i, j);
      },
      "kmax_pool");
}

template <typename Real>
Var highway_forward(Tape<Real>& tape, Var X, Var cov_X, HighwayParams<Real>& hw) {
  const Tensor<Real>& x = tape.value(X);
  require_same_rows(x, tape.value(cov_X), "highway carry/transform");
  if (hw.W.value.rows() != x.cols() || hw.W.value.cols() != x.cols())
    throw DimensionError("highway gate " + numerics::shape_string(hw.W.shape()) +
                         " does not match input width " + std::to_string(x.cols()));
  const Var gate =
      numerics::activation(tape, numerics::affine(tape, X, hw.W, hw.b), Activation::kSigmoid);
  return numerics::blend(tape, cov_X, X, gate);
}

template <typename Real>
Var lstm_forward(Tape<Real>& tape, Var X, LstmParams<Real>& p, bool reverse) {
  const Tensor<Real>& x = tape.value(X);
  const std::size_t n = x.rows(), d = x.cols(), h = p.hidden();
  if (p.b.value.size() != 4 * h || p.W.value.rows() != 4 * h || p.W.value.cols() != d + h)
    throw DimensionError("lstm weights " + numerics::shape_string(p.W.shape()) +
                         " do not fit input width " + std::to_string(d) + " and hidden " +
                         std::to_string(h));

  // Activated gates (i, o, f, c~) and cell states per position.
  auto gates = std::make_shared<Tensor<Real>>(Tensor<Real>::matrix(n, 4 * h));
  auto cells = std::make_shared<Tensor<Real>>(Tensor<Real>::matrix(n, h));
  Tensor<Real> H = Tensor<Real>::matrix(n, h);

  std::vector<Real> v(d + h), h_prev(h, Real(0)), c_prev(h, Real(0));
  for (std::size_t s = 0; s < n; ++s) {
    const std::size_t t = reverse ? n - 1 - s : s;
    std::copy(x.row(t).begin(), x.row(t).end(), v.begin());
    std::copy(h_prev.begin(), h_prev.end(), v.begin() + static_cast<std::ptrdiff_t>(d));
    auto gt = gates->row(t);
    for (std::size_t r = 0; r < 4 * h; ++r) {
      Real acc = p.b.value[r];
      auto w = p.W.value.row(r);
      for (std::size_t c = 0; c < d + h; ++c) acc += w[c] * v[c];
      gt[r] = r < 3 * h ? numerics::sigmoid(acc) : std::tanh(acc);
    }
    for (std::size_t j = 0; j < h; ++j) {
      const Real c = c_prev[j] * gt[2 * h + j] + gt[3 * h + j] * gt[j];
      cells->at(t, j) = c;
      H.at(t, j) = gt[h + j] * std::tanh(c);
      c_prev[j] = c;
      h_prev[j] = H.at(t, j);
    }
  }

  const Var out{tape.size()};
  return tape.push(
      std::move(H),
      [X, out, &p, gates, cells, n, d, h, reverse](Tape<Real>& t, const Tensor<Real>& g) {
        const Tensor<Real>& x = t.value(X);
        const Tensor<Real>& H = t.value(out);
        Tensor<Real>& dX = t.grad(X);
        Tensor<Real>* dW = t.param_grad(p.W);
        Tensor<Real>* db = t.param_grad(p.b);

        std::vector<Real> dh_next(h, Real(0)), dc_next(h, Real(0)), dz(4 * h), v(d + h),
            dv(d + h);
        for (std::size_t s = n; s-- > 0;) {
          const std::size_t pos = reverse ? n - 1 - s : s;
          const bool has_prev = s > 0;
          const std::size_t prev = reverse ? pos + 1 : pos - 1;
          auto gt = gates->row(pos);
          for (std::size_t j = 0; j < h; ++j) {
            const Real ig = gt[j], og = gt[h + j], fg = gt[2 * h + j], cand = gt[3 * h + j];
            const Real th = std::tanh(cells->at(pos, j));
            const Real dh = g.at(pos, j) + dh_next[j];
            const Real d_o = dh * th;
            const Real dc = dh * og * (Real(1) - th * th) + dc_next[j];
            const Real c_prev = has_prev ? cells->at(prev, j) : Real(0);
            dz[j] = dc * cand * ig * (Real(1) - ig);
            dz[h + j] = d_o * og * (Real(1) - og);
            dz[2 * h + j] = dc * c_prev * fg * (Real(1) - fg);
            dz[3 * h + j] = dc * ig * (Real(1) - cand * cand);
            dc_next[j] = dc * fg;
          }
          std::copy(x.row(pos).begin(), x.row(pos).end(), v.begin());
          for (std::size_t j = 0; j < h; ++j) v[d + j] = has_prev ? H.at(prev, j) : Real(0);
          std::fill(dv.begin(), dv.end(), Real(0));
          for (std::size_t r = 0; r < 4 * h; ++r) {
            const Real gz = dz[r];
            if (gz == Real(0)) continue;
            auto w = p.W.value.row(r);
            for (std::size_t c = 0; c < d + h; ++c) dv[c] += w[c] * gz;
            if (dW) {
              auto dw = dW->row(r);
              for (std::size_t c = 0; c < d + h; ++c) dw[c] += gz * v[c];
            }
            if (db) (*db)[r] += gz;
          }
          auto dx = dX.row(pos);
          for (std::size_t c = 0; c < d; ++c) dx[c] += dv[c];
          for (std::size_t j = 0; j < h; ++j) dh_next[j] = dv[d + j];
        }
      },
      "lstm");
}

template <typename Real>
Var blstm_forward(Tape<Real>& tape, Var X, LstmParams<Real>& fwd, LstmParams<Real>& bwd) {
  if (fwd.hidden() != bwd.hidden())
    throw ConfigError("bidirectional LSTM directions disagree on hidden size");
  const Var f = lstm_forward(tape, X, fwd, false);
  const Var b = lstm_forward(tape, X, bwd, true);
  return numerics::concat_cols(tape, {f, b});
}

template <typename Real>
Var encode(Tape<Real>& tape, const CharIndices& chars, EncoderParams<Real>& params,
           const EncoderConfig& cfg) {
  const Var X = embed_sentence(tape, chars, params.embed, cfg);
  Var features = X;
  if (cfg.mlp_baseline) {
    if (!params.mlp) throw ConfigError("MLP parameters missing");
    features = mlp_encode(tape, X, *params.mlp, cfg.window);
  } else if (cfg.use_conv) {
    if (!params.conv) throw ConfigError("convolution parameters missing");
    features = conv_feature_maps(tape, X, *params.conv);
    if (cfg.use_pooling) {
      features = kmax_pool(tape, features, cfg.input_dim());
      if (cfg.use_highway) {
        if (!params.highway) throw ConfigError("highway parameters missing");
        features = highway_forward(tape, X, features, *params.highway);
      }
    }
  }
  switch (cfg.recurrent) {
    case Recurrent::kNone: return features;
    case Recurrent::kLstm:
      if (!params.forward) throw ConfigError("LSTM parameters missing");
      return lstm_forward(tape, features, *params.forward, false);
    case Recurrent::kBlstm:
      if (!params.forward || !params.backward) throw ConfigError("BLSTM parameters missing");
      return blstm_forward(tape, features, *params.forward, *params.backward);
  }
  return features;
}

#define JOINTSEG_INSTANTIATE(Real)                                                             \
  template EncoderParams<Real> init_encoder<Real>(const EncoderConfig&, std::size_t,           \
                                                  std::size_t, std::mt19937_64&);              \
  template Var embed_sentence<Real>(Tape<Real>&, const CharIndices&, EmbeddingTable<Real>&,    \
                                    const EncoderConfig&);                                     \
  template Var mlp_encode<Real>(Tape<Real>&, Var, MlpParams<Real>&, int);                      \
  template Var conv_feature_maps<Real>(Tape<Real>&, Var, ConvFilterBank<Real>&);               \
  template std::vector<std::size_t> kmax_indices<Real>(std::span<const Real>, std::size_t);    \
  template Var kmax_pool<Real>(Tape<Real>&, Var, std::size_t);                                 \
  template Var highway_forward<Real>(Tape<Real>&, Var, Var, HighwayParams<Real>&);             \
  template Var lstm_forward<Real>(Tape<Real>&, Var, LstmParams<Real>&, bool);                  \
  template Var blstm_forward<Real>(Tape<Real>&, Var, LstmParams<Real>&, LstmParams<Real>&);    \
  template Var encode<Real>(Tape<Real>&, const CharIndices&, EncoderParams<Real>&,             \
                            const EncoderConfig&);

JOINTSEG_INSTANTIATE(float)
JOINTSEG_INSTANTIATE(double)

#undef JOINTSEG_INSTANTIATE

}  // namespace jointseg
