#pragma once

// Reverse-mode differentiation over the primitives in ops.hpp.
//
// A Tape records every primitive application in execution order together with
// a closure computing its vector-Jacobian product. Node ids are assigned in
// creation order, so replaying them from last to first visits the graph in
// reverse topological order. Gradients of Parameters are accumulated into
// Parameter::grad; gradients of leaves stay on the tape.
//
// One tape per thread. Parameters must outlive the tape that references them.

#include <functional>
#include <span>
#include <vector>

#include "msmlp/ops.hpp"
#include "msmlp/tensor.hpp"

namespace msmlp {

class Tape;

class Var {
 public:
  Var() = default;

  const Tensor4& value() const;
  /// Empty tensor until backward has propagated something into this node.
  const Tensor4& grad() const;
  const Shape4& shape() const { return value().shape(); }
  int id() const { return id_; }
  Tape* tape() const { return tape_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  int id_ = -1;
};

class Tape {
 public:
  using Backward = std::function<void(Tape&, const Tensor4& grad_out)>;

  /// With record == false the tape only keeps values (inference mode) and
  /// backward() is rejected.
  explicit Tape(bool record = true) : record_(record) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return record_; }
  /// Number of recorded primitive applications (leaves excluded).
  std::size_t size() const { return ops_; }
  bool empty() const { return ops_ == 0; }

  Var leaf(Tensor4 value, bool requires_grad = false);
  Var constant(Tensor4 value) { return leaf(std::move(value), false); }

  /// Adds an op node. `needs_grad` marks whether anything upstream is
  /// trainable; closures skip work for inputs that do not need gradients.
  Var record(Tensor4 value, bool needs_grad, Backward backward);

  const Tensor4& value(int id) const { return nodes_.at(id).value; }
  const Tensor4& grad(int id) const { return nodes_.at(id).grad; }
  bool needs_grad(int id) const { return nodes_.at(id).needs_grad; }
  bool needs_grad(const Var& v) const { return needs_grad(v.id()); }

  void accumulate(int id, const Tensor4& g);

  /// Seeds d(out) = out_grad and propagates to every reachable node and
  /// Parameter. Throws std::logic_error when nothing was recorded.
  void backward(const Var& out, const Tensor4& out_grad);
  /// Scalar convenience: out must hold a single element.
  void backward(const Var& loss, double seed = 1.0);

  void clear();

 private:
  struct Node {
    Tensor4 value;
    Tensor4 grad;
    bool needs_grad = false;
    Backward backward;
  };

  bool record_;
  std::size_t ops_ = 0;
  std::vector<Node> nodes_;
};

/// Adds `g` into a parameter's gradient buffer (allocating it if needed).
void accumulate_grad(Parameter& p, std::span<const double> g);

namespace ag {

Var add(const Var& a, const Var& b);
/// Sum of all elements, shape (1,1,1,1).
Var sum(const Var& x);
/// Sum of x * weights elementwise, shape (1,1,1,1).
Var weighted_sum(const Var& x, const Tensor4& weights);
/// Multiplies sample b of x by factors[b] (drop-path masks).
Var scale_samples(const Var& x, std::vector<double> factors);

Var shift2d(const Var& x, int offset, Axis axis);
/// Any offset allowed; out-of-range shifts give zeros.
Var shift2d_unchecked(const Var& x, int offset, Axis axis);

Var depthwise_conv2d(const Var& x, DepthwiseKernel& k);
Var full_conv2d(const Var& x, FullKernel& k);
Var channel_linear(const Var& x, LinearWeights& w);
Var patch_embed(const Var& x, int patch, LinearWeights& w);
Var layer_norm(const Var& x, NormAffine& norm, double eps = kLayerNormEps);
Var gelu(const Var& x);
Var global_avg_pool(const Var& x);

std::vector<Var> split_channels(const Var& x, std::span<const int> widths);
Var concat_channels(std::span<const Var> parts);

}  // namespace ag
}  // namespace msmlp
