#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "jointseg/numerics/tensor.hpp"

namespace jointseg::numerics {

// Handle to a value recorded on a Tape.
struct Var {
  std::size_t id = 0;
};

// Per-worker gradient buffers. When a Tape has a sink attached, parameter
// gradients land here instead of in Parameter::grad, so several tapes can run
// concurrently against the same read-only parameters.
template <typename Real>
class GradientSink {
 public:
  Tensor<Real>& buffer(Parameter<Real>& p) {
    auto it = buffers_.find(&p);
    if (it == buffers_.end())
      it = buffers_.emplace(&p, Tensor<Real>(p.shape())).first;
    return it->second;
  }

  // Adds every buffer into its parameter's grad.
  void flush() {
    for (auto& [param, buf] : buffers_) {
      auto dst = param->grad.values();
      auto src = buf.values();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
    }
  }

  void clear() { buffers_.clear(); }

 private:
  std::map<Parameter<Real>*, Tensor<Real>> buffers_;
};

// Reverse-mode tape. Each recorded op stores its output value and a closure
// that, given the output gradient, accumulates into its inputs' gradients.
template <typename Real>
class Tape {
 public:
  using Backward = std::function<void(Tape&, const Tensor<Real>& out_grad)>;

  Tape() = default;
  explicit Tape(GradientSink<Real>* sink) : sink_(sink) {}

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor<Real> value) { return push(std::move(value), nullptr, "constant"); }

  Var push(Tensor<Real> value, Backward backward, const char* op) {
    if (finite_checks() && !value.all_finite())
      throw NumericError(std::string("non-finite value produced by ") + op);
    nodes_.push_back(Node{std::move(value), {}, std::move(backward)});
    return Var{nodes_.size() - 1};
  }

  const Tensor<Real>& value(Var v) const { return nodes_.at(v.id).value; }

  Tensor<Real>& grad(Var v) {
    Node& n = nodes_.at(v.id);
    if (n.grad.empty() && !n.value.empty()) n.grad = Tensor<Real>(n.value.shape());
    return n.grad;
  }

  // Destination for a parameter's gradient, or nullptr when it is frozen.
  Tensor<Real>* param_grad(Parameter<Real>& p) {
    if (p.frozen) return nullptr;
    if (sink_) return &sink_->buffer(p);
    return &p.grad;
  }

  // Seeds d(root)/d(root) = 1 for every element of root and runs the closures
  // in reverse recording order.
  void backward(Var root) {
    grad(root).fill(Real(1));
    for (std::size_t i = root.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.backward || n.grad.empty()) continue;
      n.backward(*this, n.grad);
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor<Real> value;
    Tensor<Real> grad;
    Backward backward;
  };

  std::vector<Node> nodes_;
  GradientSink<Real>* sink_ = nullptr;
};

}  // namespace jointseg::numerics
