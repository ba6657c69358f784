#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "jointseg/numerics/tape.hpp"
#include "jointseg/numerics/tensor.hpp"

namespace jointseg::numerics {

enum class Activation { kSigmoid, kTanh };

template <typename Real>
inline Real sigmoid(Real z) {
  // Split by sign so exp never overflows.
  if (z >= 0) return Real(1) / (Real(1) + std::exp(-z));
  const Real e = std::exp(z);
  return e / (Real(1) + e);
}

namespace detail {

inline void require_matrix(const Shape& s, const char* what) {
  if (s.size() != 2)
    throw DimensionError(std::string(what) + " must be a matrix, got " +
                         shape_string(s));
}

inline void require_same(const Shape& a, const Shape& b, const char* op) {
  if (a != b)
    throw DimensionError(std::string(op) + ": shape mismatch " +
                         shape_string(a) + " vs " + shape_string(b));
}

}  // namespace detail

// out[i] = W^T x[i] + b for every row i.
template <typename Real>
Var affine(Tape<Real>& tape, Var x, Parameter<Real>& W, Parameter<Real>& b) {
  const Tensor<Real>& X = tape.value(x);
  detail::require_matrix(X.shape(), "affine input");
  detail::require_matrix(W.shape(), "affine weight");
  if (X.cols() != W.value.rows() || b.value.size() != W.value.cols())
    throw DimensionError("affine: input " + shape_string(X.shape()) +
                         " incompatible with weight " + shape_string(W.shape()) +
                         " and bias " + shape_string(b.shape()));
  const std::size_t n = X.rows(), in = X.cols(), out = W.value.cols();
  Tensor<Real> Y = Tensor<Real>::matrix(n, out);
  for (std::size_t i = 0; i < n; ++i) {
    auto y = Y.row(i);
    for (std::size_t j = 0; j < out; ++j) y[j] = b.value[j];
    auto xi = X.row(i);
    for (std::size_t k = 0; k < in; ++k) {
      const Real xk = xi[k];
      if (xk == Real(0)) continue;
      auto w = W.value.row(k);
      for (std::size_t j = 0; j < out; ++j) y[j] += xk * w[j];
    }
  }
  return tape.push(
      std::move(Y),
      [x, &W, &b, n, in, out](Tape<Real>& t, const Tensor<Real>& g) {
        const Tensor<Real>& X = t.value(x);
        Tensor<Real>& dX = t.grad(x);
        Tensor<Real>* dW = t.param_grad(W);
        Tensor<Real>* db = t.param_grad(b);
        for (std::size_t i = 0; i < n; ++i) {
          auto gi = g.row(i);
          auto xi = X.row(i);
          auto dxi = dX.row(i);
          for (std::size_t k = 0; k < in; ++k) {
            auto w = W.value.row(k);
            Real acc = 0;
            for (std::size_t j = 0; j < out; ++j) acc += gi[j] * w[j];
            dxi[k] += acc;
            if (dW && xi[k] != Real(0)) {
              auto dw = dW->row(k);
              for (std::size_t j = 0; j < out; ++j) dw[j] += xi[k] * gi[j];
            }
          }
          if (db)
            for (std::size_t j = 0; j < out; ++j) (*db)[j] += gi[j];
        }
      },
      "affine");
}

template <typename Real>
Var activation(Tape<Real>& tape, Var x, Activation kind) {
  Tensor<Real> Y = tape.value(x);
  for (Real& v : Y.values())
    v = kind == Activation::kSigmoid ? sigmoid(v) : std::tanh(v);
  const Var out{tape.size()};
  return tape.push(
      std::move(Y),
      [x, out, kind](Tape<Real>& t, const Tensor<Real>& g) {
        const auto y = t.value(out).values();
        auto dx = t.grad(x).values();
        const auto gv = g.values();
        for (std::size_t i = 0; i < y.size(); ++i) {
          const Real d = kind == Activation::kSigmoid ? y[i] * (Real(1) - y[i])
                                                      : Real(1) - y[i] * y[i];
          dx[i] += gv[i] * d;
        }
      },
      kind == Activation::kSigmoid ? "sigmoid" : "tanh");
}

template <typename Real>
Var add(Tape<Real>& tape, Var a, Var b) {
  detail::require_same(tape.value(a).shape(), tape.value(b).shape(), "add");
  Tensor<Real> Y = tape.value(a);
  const auto bv = tape.value(b).values();
  for (std::size_t i = 0; i < bv.size(); ++i) Y[i] += bv[i];
  return tape.push(
      std::move(Y),
      [a, b](Tape<Real>& t, const Tensor<Real>& g) {
        auto da = t.grad(a).values();
        auto db = t.grad(b).values();
        for (std::size_t i = 0; i < da.size(); ++i) {
          da[i] += g[i];
          db[i] += g[i];
        }
      },
      "add");
}

template <typename Real>
Var hadamard(Tape<Real>& tape, Var a, Var b) {
  detail::require_same(tape.value(a).shape(), tape.value(b).shape(), "hadamard");
  Tensor<Real> Y = tape.value(a);
  const auto bv = tape.value(b).values();
  for (std::size_t i = 0; i < bv.size(); ++i) Y[i] *= bv[i];
  return tape.push(
      std::move(Y),
      [a, b](Tape<Real>& t, const Tensor<Real>& g) {
        const auto av = t.value(a).values();
        const auto bv = t.value(b).values();
        auto da = t.grad(a).values();
        auto db = t.grad(b).values();
        for (std::size_t i = 0; i < da.size(); ++i) {
          da[i] += g[i] * bv[i];
          db[i] += g[i] * av[i];
        }
      },
      "hadamard");
}

// out = a ⊙ gate + b ⊙ (1 - gate)
template <typename Real>
Var blend(Tape<Real>& tape, Var a, Var b, Var gate) {
  const Tensor<Real>& A = tape.value(a);
  const Tensor<Real>& B = tape.value(b);
  const Tensor<Real>& G = tape.value(gate);
  detail::require_same(A.shape(), B.shape(), "blend");
  detail::require_same(A.shape(), G.shape(), "blend gate");
  Tensor<Real> Y(A.shape());
  for (std::size_t i = 0; i < Y.size(); ++i)
    Y[i] = A[i] * G[i] + B[i] * (Real(1) - G[i]);
  return tape.push(
      std::move(Y),
      [a, b, gate](Tape<Real>& t, const Tensor<Real>& g) {
        const auto av = t.value(a).values();
        const auto bv = t.value(b).values();
        const auto gv = t.value(gate).values();
        auto da = t.grad(a).values();
        auto db = t.grad(b).values();
        auto dg = t.grad(gate).values();
        for (std::size_t i = 0; i < da.size(); ++i) {
          da[i] += g[i] * gv[i];
          db[i] += g[i] * (Real(1) - gv[i]);
          dg[i] += g[i] * (av[i] - bv[i]);
        }
      },
      "blend");
}

// Column-wise concatenation of matrices with equal row counts.
template <typename Real>
Var concat_cols(Tape<Real>& tape, const std::vector<Var>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  const std::size_t n = tape.value(parts.front()).rows();
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (Var p : parts) {
    const Tensor<Real>& v = tape.value(p);
    detail::require_matrix(v.shape(), "concat_cols input");
    if (v.rows() != n)
      throw DimensionError("concat_cols: row count " + std::to_string(v.rows()) +
                           " vs " + std::to_string(n));
    widths.push_back(v.cols());
    total += v.cols();
  }
  Tensor<Real> Y = Tensor<Real>::matrix(n, total);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t off = 0;
    for (std::size_t p = 0; p < parts.size(); ++p) {
      auto src = tape.value(parts[p]).row(i);
      std::copy(src.begin(), src.end(), Y.row(i).begin() + off);
      off += widths[p];
    }
  }
  return tape.push(
      std::move(Y),
      [parts, widths, n](Tape<Real>& t, const Tensor<Real>& g) {
        for (std::size_t i = 0; i < n; ++i) {
          std::size_t off = 0;
          auto gi = g.row(i);
          for (std::size_t p = 0; p < parts.size(); ++p) {
            auto dst = t.grad(parts[p]).row(i);
            for (std::size_t j = 0; j < widths[p]; ++j) dst[j] += gi[off + j];
            off += widths[p];
          }
        }
      },
      "concat_cols");
}

// Row i of the output concatenates input rows i-left .. i+right; rows outside
// [0, n) contribute zero vectors.
template <typename Real>
Var window_concat(Tape<Real>& tape, Var x, std::size_t left, std::size_t right) {
  const Tensor<Real>& X = tape.value(x);
  detail::require_matrix(X.shape(), "window_concat input");
  const std::size_t n = X.rows(), d = X.cols(), span = left + 1 + right;
  Tensor<Real> Y = Tensor<Real>::matrix(n, span * d);
  for (std::size_t i = 0; i < n; ++i) {
    auto y = Y.row(i);
    for (std::size_t w = 0; w < span; ++w) {
      const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(i + w) -
                                 static_cast<std::ptrdiff_t>(left);
      if (src < 0 || src >= static_cast<std::ptrdiff_t>(n)) continue;
      auto xr = X.row(static_cast<std::size_t>(src));
      std::copy(xr.begin(), xr.end(), y.begin() + w * d);
    }
  }
  return tape.push(
      std::move(Y),
      [x, n, d, span, left](Tape<Real>& t, const Tensor<Real>& g) {
        Tensor<Real>& dX = t.grad(x);
        for (std::size_t i = 0; i < n; ++i) {
          auto gi = g.row(i);
          for (std::size_t w = 0; w < span; ++w) {
            const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(i + w) -
                                       static_cast<std::ptrdiff_t>(left);
            if (src < 0 || src >= static_cast<std::ptrdiff_t>(n)) continue;
            auto dx = dX.row(static_cast<std::size_t>(src));
            for (std::size_t j = 0; j < d; ++j) dx[j] += gi[w * d + j];
          }
        }
      },
      "window_concat");
}

// Gathers table rows; the gradient scatters back into the touched rows only.
template <typename Real>
Var lookup_rows(Tape<Real>& tape, Parameter<Real>& table,
                std::span<const std::int32_t> indices) {
  detail::require_matrix(table.shape(), "lookup table");
  const std::size_t rows = table.value.rows(), d = table.value.cols();
  std::vector<std::size_t> idx;
  idx.reserve(indices.size());
  for (std::int32_t i : indices) {
    if (i < 0 || static_cast<std::size_t>(i) >= rows)
      throw DimensionError("lookup index " + std::to_string(i) +
                           " outside table of " + std::to_string(rows) + " rows");
    idx.push_back(static_cast<std::size_t>(i));
  }
  Tensor<Real> Y = Tensor<Real>::matrix(idx.size(), d);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    auto src = table.value.row(idx[i]);
    std::copy(src.begin(), src.end(), Y.row(i).begin());
  }
  return tape.push(
      std::move(Y),
      [&table, idx = std::move(idx), d](Tape<Real>& t, const Tensor<Real>& g) {
        Tensor<Real>* dT = t.param_grad(table);
        if (!dT) return;
        for (std::size_t i = 0; i < idx.size(); ++i) {
          auto dst = dT->row(idx[i]);
          auto gi = g.row(i);
          for (std::size_t j = 0; j < d; ++j) dst[j] += gi[j];
        }
      },
      "lookup_rows");
}

// Exposes a whole parameter as a tape value.
template <typename Real>
Var leaf(Tape<Real>& tape, Parameter<Real>& p) {
  return tape.push(
      p.value,
      [&p](Tape<Real>& t, const Tensor<Real>& g) {
        Tensor<Real>* dp = t.param_grad(p);
        if (!dp) return;
        for (std::size_t i = 0; i < g.size(); ++i) (*dp)[i] += g[i];
      },
      "leaf");
}

template <typename Real>
Var sum(Tape<Real>& tape, Var x) {
  Real s = 0;
  for (Real v : tape.value(x).values()) s += v;
  return tape.push(
      Tensor<Real>(Shape{1}, s),
      [x](Tape<Real>& t, const Tensor<Real>& g) {
        for (Real& v : t.grad(x).values()) v += g[0];
      },
      "sum");
}

template <typename Real>
Var sum_of_squares(Tape<Real>& tape, Var x) {
  return tape.push(
      Tensor<Real>(Shape{1}, squared_norm(tape.value(x))),
      [x](Tape<Real>& t, const Tensor<Real>& g) {
        const auto xv = t.value(x).values();
        auto dx = t.grad(x).values();
        for (std::size_t i = 0; i < xv.size(); ++i) dx[i] += Real(2) * xv[i] * g[0];
      },
      "sum_of_squares");
}

}  // namespace jointseg::numerics
