#pragma once

#include <atomic>
#include <cassert>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "jointseg/errors.hpp"

namespace jointseg::numerics {

using Shape = std::vector<std::size_t>;

inline std::string shape_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

// Process-wide switch for NaN/Inf checks after every op.
inline std::atomic<bool>& finite_checks_flag() {
  static std::atomic<bool> enabled{true};
  return enabled;
}
inline void set_finite_checks(bool on) { finite_checks_flag() = on; }
inline bool finite_checks() { return finite_checks_flag(); }

// Dense row-major array. Rank 2 is the common case; the leading dimension is
// the sequence position wherever a sequence is involved.
template <typename Real>
class Tensor {
 public:
  using value_type = Real;

  Tensor() = default;

  explicit Tensor(Shape shape, Real fill = Real(0))
      : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

  Tensor(Shape shape, std::vector<Real> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_size(shape_) != data_.size())
      throw DimensionError("tensor shape " + shape_string(shape_) +
                           " does not hold " + std::to_string(data_.size()) +
                           " values");
  }

  static Tensor matrix(std::size_t rows, std::size_t cols, Real fill = Real(0)) {
    return Tensor(Shape{rows, cols}, fill);
  }

  static Tensor from_rows(const std::vector<std::vector<Real>>& rows) {
    const std::size_t n = rows.size();
    const std::size_t m = n ? rows.front().size() : 0;
    Tensor out = matrix(n, m);
    for (std::size_t i = 0; i < n; ++i) {
      if (rows[i].size() != m)
        throw DimensionError("ragged rows in tensor literal");
      std::copy(rows[i].begin(), rows[i].end(), out.row(i).begin());
    }
    return out;
  }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::size_t rows() const {
    assert(rank() == 2);
    return shape_[0];
  }
  std::size_t cols() const {
    assert(rank() == 2);
    return shape_[1];
  }

  Real& operator[](std::size_t i) { return data_[i]; }
  Real operator[](std::size_t i) const { return data_[i]; }

  Real& at(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
  Real at(std::size_t i, std::size_t j) const {
    return data_[i * shape_[1] + j];
  }

  std::span<Real> row(std::size_t i) {
    return {data_.data() + i * shape_[1], shape_[1]};
  }
  std::span<const Real> row(std::size_t i) const {
    return {data_.data() + i * shape_[1], shape_[1]};
  }

  std::span<Real> values() { return data_; }
  std::span<const Real> values() const { return data_; }
  std::vector<Real>& storage() { return data_; }
  const std::vector<Real>& storage() const { return data_; }

  void fill(Real v) { std::fill(data_.begin(), data_.end(), v); }

  bool all_finite() const {
    for (Real v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  bool operator==(const Tensor&) const = default;

  template <typename Other>
  Tensor<Other> cast() const {
    return Tensor<Other>(shape_, std::vector<Other>(data_.begin(), data_.end()));
  }

 private:
  Shape shape_;
  std::vector<Real> data_;
};

// Trainable tensor with its gradient and adaptive-rate accumulator.
template <typename Real>
struct Parameter {
  Tensor<Real> value;
  Tensor<Real> grad;
  Tensor<Real> accumulator;
  // Frozen parameters receive no gradient and are never updated.
  bool frozen = false;
  // Rows are updated independently (embedding tables).
  bool sparse_rows = false;

  Parameter() = default;
  explicit Parameter(Shape shape)
      : value(shape), grad(shape), accumulator(shape) {}
  explicit Parameter(Tensor<Real> v)
      : value(std::move(v)), grad(value.shape()), accumulator(value.shape()) {}

  const Shape& shape() const { return value.shape(); }
  void zero_grad() { grad.fill(Real(0)); }

  template <typename Other>
  Parameter<Other> cast() const {
    Parameter<Other> out(value.template cast<Other>());
    out.accumulator = accumulator.template cast<Other>();
    out.frozen = frozen;
    out.sparse_rows = sparse_rows;
    return out;
  }
};

template <typename Real>
Real squared_norm(const Tensor<Real>& t) {
  Real s = 0;
  for (Real v : t.values()) s += v * v;
  return s;
}

}  // namespace jointseg::numerics
