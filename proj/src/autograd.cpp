#include "msmlp/autograd.hpp"

#include <stdexcept>
#include <string>

namespace msmlp {

const Tensor4& Var::value() const {
  if (!tape_) throw std::logic_error("Var: not bound to a tape");
  return tape_->value(id_);
}

const Tensor4& Var::grad() const {
  if (!tape_) throw std::logic_error("Var: not bound to a tape");
  return tape_->grad(id_);
}

Var Tape::leaf(Tensor4 value, bool requires_grad) {
  nodes_.push_back(Node{std::move(value), Tensor4(), requires_grad && record_, nullptr});
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::record(Tensor4 value, bool needs_grad, Backward backward) {
  Node node{std::move(value), Tensor4(), needs_grad && record_, nullptr};
  if (record_) {
    node.backward = std::move(backward);
    ++ops_;
  }
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

void Tape::accumulate(int id, const Tensor4& g) {
  Node& node = nodes_.at(id);
  if (!node.needs_grad) return;
  if (g.shape() != node.value.shape()) {
    throw std::invalid_argument("Tape: gradient shape " + g.shape().str() +
                                " does not match value shape " + node.value.shape().str());
  }
  if (node.grad.empty()) {
    node.grad = g;
  } else {
    node.grad += g;
  }
}

void Tape::backward(const Var& out, const Tensor4& out_grad) {
  if (!record_) throw std::logic_error("Tape: backward on a non-recording tape");
  if (ops_ == 0) throw std::logic_error("Tape: backward on an empty tape");
  if (out.tape() != this) throw std::invalid_argument("Tape: Var belongs to another tape");
  accumulate(out.id(), out_grad);
  for (int id = out.id(); id >= 0; --id) {
    Node& node = nodes_[id];
    if (!node.backward || node.grad.empty()) continue;
    node.backward(*this, node.grad);
  }
}

void Tape::backward(const Var& loss, double seed) {
  if (loss.valid() && loss.value().size() != 1) {
    throw std::invalid_argument("Tape: scalar backward requires a single-element output, got " +
                                loss.value().shape().str());
  }
  backward(loss, Tensor4({1, 1, 1, 1}, seed));
}

void Tape::clear() {
  nodes_.clear();
  ops_ = 0;
}

void accumulate_grad(Parameter& p, std::span<const double> g) {
  if (g.size() != p.value.size()) throw std::invalid_argument("accumulate_grad: size mismatch");
  if (p.grad.size() != p.value.size()) p.grad.assign(p.value.size(), 0.0);
  for (std::size_t k = 0; k < g.size(); ++k) p.grad[k] += g[k];
}

namespace ag {

namespace {
Tape& tape_of(const Var& x) {
  if (!x.valid()) throw std::invalid_argument("ag: unbound Var");
  return *x.tape();
}
}  // namespace

Var add(const Var& a, const Var& b) {
  Tape& t = tape_of(a);
  if (a.shape() != b.shape()) {
    throw std::invalid_argument("add: shape mismatch " + a.shape().str() + " vs " + b.shape().str());
  }
  Tensor4 y = a.value();
  y += b.value();
  const int ia = a.id(), ib = b.id();
  return t.record(std::move(y), t.needs_grad(a) || t.needs_grad(b),
                  [ia, ib](Tape& tp, const Tensor4& g) {
                    tp.accumulate(ia, g);
                    tp.accumulate(ib, g);
                  });
}

Var sum(const Var& x) {
  Tape& t = tape_of(x);
  double s = 0.0;
  for (double v : x.value().data()) s += v;
  const int ix = x.id();
  const Shape4 shape = x.shape();
  return t.record(Tensor4({1, 1, 1, 1}, s), t.needs_grad(x), [ix, shape](Tape& tp, const Tensor4& g) {
    tp.accumulate(ix, Tensor4(shape, g[0]));
  });
}

Var weighted_sum(const Var& x, const Tensor4& weights) {
  Tape& t = tape_of(x);
  if (weights.shape() != x.shape()) throw std::invalid_argument("weighted_sum: shape mismatch");
  double s = 0.0;
  const Tensor4& v = x.value();
  for (std::size_t k = 0; k < v.size(); ++k) s += v[k] * weights[k];
  const int ix = x.id();
  return t.record(Tensor4({1, 1, 1, 1}, s), t.needs_grad(x),
                  [ix, weights](Tape& tp, const Tensor4& g) {
                    Tensor4 gx = weights;
                    for (double& e : gx.data()) e *= g[0];
                    tp.accumulate(ix, gx);
                  });
}

Var scale_samples(const Var& x, std::vector<double> factors) {
  Tape& t = tape_of(x);
  if (factors.size() != static_cast<std::size_t>(x.shape().n)) {
    throw std::invalid_argument("scale_samples: need one factor per sample");
  }
  const std::size_t per = x.value().size() / factors.size();
  Tensor4 y = x.value();
  for (std::size_t b = 0; b < factors.size(); ++b)
    for (std::size_t k = 0; k < per; ++k) y[b * per + k] *= factors[b];
  const int ix = x.id();
  return t.record(std::move(y), t.needs_grad(x),
                  [ix, per, f = std::move(factors)](Tape& tp, const Tensor4& g) {
                    Tensor4 gx = g;
                    for (std::size_t b = 0; b < f.size(); ++b)
                      for (std::size_t k = 0; k < per; ++k) gx[b * per + k] *= f[b];
                    tp.accumulate(ix, gx);
                  });
}

Var shift2d(const Var& x, int offset, Axis axis) {
  // Validate through the checked forward, then share the unchecked path.
  Tape& t = tape_of(x);
  Tensor4 y = msmlp::shift2d(x.value(), offset, axis);
  const int ix = x.id();
  return t.record(std::move(y), t.needs_grad(x), [ix, offset, axis](Tape& tp, const Tensor4& g) {
    tp.accumulate(ix, msmlp::shift2d_unchecked(g, -offset, axis));
  });
}

Var shift2d_unchecked(const Var& x, int offset, Axis axis) {
  Tape& t = tape_of(x);
  Tensor4 y = msmlp::shift2d_unchecked(x.value(), offset, axis);
  const int ix = x.id();
  return t.record(std::move(y), t.needs_grad(x), [ix, offset, axis](Tape& tp, const Tensor4& g) {
    tp.accumulate(ix, msmlp::shift2d_unchecked(g, -offset, axis));
  });
}

Var depthwise_conv2d(const Var& x, DepthwiseKernel& k) {
  Tape& t = tape_of(x);
  Tensor4 y = msmlp::depthwise_conv2d(x.value(), k);
  const int ix = x.id();
  return t.record(std::move(y), true, [ix, &k](Tape& tp, const Tensor4& g) {
    KernelGrads kg = depthwise_conv2d_backward(tp.value(ix), k, g);
    accumulate_grad(k.weight, kg.dweight);
    if (k.has_bias()) accumulate_grad(k.bias, kg.dbias);
    tp.accumulate(ix, kg.dx);
  });
}

Var full_conv2d(const Var& x, FullKernel& k) {
  Tape& t = tape_of(x);
  Tensor4 y = msmlp::full_conv2d(x.value(), k);
  const int ix = x.id();
  return t.record(std::move(y), true, [ix, &k](Tape& tp, const Tensor4& g) {
    KernelGrads kg = full_conv2d_backward(tp.value(ix), k, g);
    accumulate_grad(k.weight, kg.dweight);
    if (k.has_bias()) accumulate_grad(k.bias, kg.dbias);
    tp.accumulate(ix, kg.dx);
  });
}

Var channel_linear(const Var& x, LinearWeights& w) {
  Tape& t = tape_of(x);
  Tensor4 y = msmlp::channel_linear(x.value(), w);
  const int ix = x.id();
  return t.record(std::move(y), true, [ix, &w](Tape& tp, const Tensor4& g) {
    KernelGrads kg = channel_linear_backward(tp.value(ix), w, g);
    accumulate_grad(w.weight, kg.dweight);
    if (w.has_bias()) accumulate_grad(w.bias, kg.dbias);
    tp.accumulate(ix, kg.dx);
  });
}

Var patch_embed(const Var& x, int patch, LinearWeights& w) {
  Tape& t = tape_of(x);
  Tensor4 y = msmlp::patch_embed(x.value(), patch, w);
  const int ix = x.id();
  return t.record(std::move(y), true, [ix, patch, &w](Tape& tp, const Tensor4& g) {
    KernelGrads kg = patch_embed_backward(tp.value(ix), patch, w, g);
    accumulate_grad(w.weight, kg.dweight);
    if (w.has_bias()) accumulate_grad(w.bias, kg.dbias);
    tp.accumulate(ix, kg.dx);
  });
}

Var layer_norm(const Var& x, NormAffine& norm, double eps) {
  Tape& t = tape_of(x);
  Tensor4 y = msmlp::layer_norm(x.value(), norm.gamma.value, norm.beta.value, eps);
  const int ix = x.id();
  return t.record(std::move(y), true, [ix, &norm, eps](Tape& tp, const Tensor4& g) {
    NormGrads ng = layer_norm_backward(tp.value(ix), norm.gamma.value, eps, g);
    accumulate_grad(norm.gamma, ng.dgamma);
    accumulate_grad(norm.beta, ng.dbeta);
    tp.accumulate(ix, ng.dx);
  });
}

Var gelu(const Var& x) {
  Tape& t = tape_of(x);
  Tensor4 y = msmlp::gelu(x.value());
  const int ix = x.id();
  return t.record(std::move(y), t.needs_grad(x), [ix](Tape& tp, const Tensor4& g) {
    tp.accumulate(ix, gelu_backward(tp.value(ix), g));
  });
}

Var global_avg_pool(const Var& x) {
  Tape& t = tape_of(x);
  Tensor4 y = msmlp::global_avg_pool(x.value());
  const int ix = x.id();
  const Shape4 shape = x.shape();
  return t.record(std::move(y), t.needs_grad(x), [ix, shape](Tape& tp, const Tensor4& g) {
    tp.accumulate(ix, global_avg_pool_backward(shape, g));
  });
}

std::vector<Var> split_channels(const Var& x, std::span<const int> widths) {
  Tape& t = tape_of(x);
  std::vector<Tensor4> parts = msmlp::split_channels(x.value(), widths);
  std::vector<Var> out;
  out.reserve(parts.size());
  const int ix = x.id();
  const Shape4 shape = x.shape();
  int offset = 0;
  for (auto& part : parts) {
    const int width = part.c();
    out.push_back(t.record(std::move(part), t.needs_grad(x),
                           [ix, shape, offset, width](Tape& tp, const Tensor4& g) {
                             Tensor4 gx(shape);
                             const std::size_t tokens = gx.size() / shape.c;
                             for (std::size_t k = 0; k < tokens; ++k)
                               for (int c = 0; c < width; ++c)
                                 gx[k * shape.c + offset + c] = g[k * width + c];
                             tp.accumulate(ix, gx);
                           }));
    offset += width;
  }
  return out;
}

Var concat_channels(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_channels: nothing to concatenate");
  Tape& t = tape_of(parts[0]);
  std::vector<Tensor4> values;
  std::vector<int> ids, widths;
  bool needs = false;
  for (const Var& p : parts) {
    values.push_back(p.value());
    ids.push_back(p.id());
    widths.push_back(p.shape().c);
    needs = needs || t.needs_grad(p);
  }
  Tensor4 y = msmlp::concat_channels(values);
  return t.record(std::move(y), needs, [ids, widths](Tape& tp, const Tensor4& g) {
    std::vector<Tensor4> gs = msmlp::split_channels(g, widths);
    for (std::size_t k = 0; k < ids.size(); ++k) tp.accumulate(ids[k], gs[k]);
  });
}

}  // namespace ag
}  // namespace msmlp
