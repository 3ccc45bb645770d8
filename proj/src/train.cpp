#include "msmlp/train.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "msmlp/autograd.hpp"

namespace msmlp {

void adamw_step(std::span<Parameter* const> params, OptimState& state,
                std::span<const double> decay_scale) {
  if (!decay_scale.empty() && decay_scale.size() != params.size()) {
    throw std::invalid_argument("adamw_step: decay_scale needs one entry per parameter");
  }
  if (state.m.empty()) {
    for (const Parameter* p : params) {
      state.m.emplace_back(p->size(), 0.0);
      state.v.emplace_back(p->size(), 0.0);
    }
  }
  if (state.m.size() != params.size()) throw std::invalid_argument("adamw_step: state/parameter count mismatch");
  ++state.step;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t k = 0; k < params.size(); ++k) {
    Parameter& p = *params[k];
    auto& m = state.m[k];
    auto& v = state.v[k];
    if (m.size() != p.size() || p.grad.size() != p.size()) {
      throw std::invalid_argument("adamw_step: shape mismatch for parameter " + std::to_string(k));
    }
    const double decay = state.lr * state.weight_decay * (decay_scale.empty() ? 1.0 : decay_scale[k]);
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double g = p.grad[i];
      p.value[i] -= decay * p.value[i];
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g;
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g * g;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      p.value[i] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
    }
  }
}

double cosine_lr(std::int64_t step, std::int64_t total_steps, std::int64_t warmup_steps, double base_lr) {
  if (warmup_steps > 0 && step < warmup_steps) {
    return base_lr * static_cast<double>(step + 1) / static_cast<double>(warmup_steps);
  }
  const std::int64_t span = std::max<std::int64_t>(1, total_steps - warmup_steps);
  const double progress = std::clamp(static_cast<double>(step - warmup_steps) / span, 0.0, 1.0);
  return 0.5 * base_lr * (1.0 + std::cos(std::numbers::pi * progress));
}

LossResult cross_entropy(const Tensor4& logits, std::span<const int> labels) {
  const int n = logits.n();
  const int k = static_cast<int>(logits.size() / n);
  if (labels.size() != static_cast<std::size_t>(n)) {
    throw std::invalid_argument("cross_entropy: one label per sample required");
  }
  LossResult out{0.0, Tensor4(logits.shape())};
  for (int b = 0; b < n; ++b) {
    const int y = labels[b];
    if (y < 0 || y >= k) {
      throw std::out_of_range("cross_entropy: label " + std::to_string(y) + " outside [0, " +
                              std::to_string(k) + ")");
    }
    const double* z = logits.ptr() + static_cast<std::size_t>(b) * k;
    double* g = out.grad.ptr() + static_cast<std::size_t>(b) * k;
    const double zmax = *std::max_element(z, z + k);
    double denom = 0.0;
    for (int c = 0; c < k; ++c) denom += std::exp(z[c] - zmax);
    const double log_denom = std::log(denom);
    out.loss += -(z[y] - zmax - log_denom);
    for (int c = 0; c < k; ++c) g[c] = std::exp(z[c] - zmax - log_denom) / n;
    g[y] -= 1.0 / n;
  }
  out.loss /= n;
  return out;
}

// ---------------------------------------------------------------------------

Tensor4 Dataset::batch_images(std::span<const int> indices) const {
  const Shape4 s = images.shape();
  Tensor4 out({static_cast<int>(indices.size()), s.h, s.w, s.c});
  const std::size_t per = static_cast<std::size_t>(s.h) * s.w * s.c;
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const double* src = images.ptr() + static_cast<std::size_t>(indices[k]) * per;
    std::copy(src, src + per, out.ptr() + k * per);
  }
  return out;
}

std::vector<int> Dataset::batch_labels(std::span<const int> indices) const {
  std::vector<int> out;
  out.reserve(indices.size());
  for (int i : indices) out.push_back(labels.at(i));
  return out;
}

Dataset make_synthetic_task(const SyntheticTask& task) {
  if (task.num_classes != 8) throw std::invalid_argument("synthetic task: num_classes must be 8");
  if (task.image_size < 16 || task.image_size % 2 != 0) {
    throw std::invalid_argument("synthetic task: image_size must be even and >= 16");
  }
  if (task.samples < 1 || task.in_channels < 1) throw std::invalid_argument("synthetic task: bad sizes");
  Rng rng(task.seed);
  const int S = task.image_size, half = S / 2, side = S / 4 + (S / 4) % 2;
  Dataset data{Tensor4({task.samples, S, S, task.in_channels}), std::vector<int>(task.samples)};

  // Stratified labels in a shuffled order keep the classes balanced.
  std::iota(data.labels.begin(), data.labels.end(), 0);
  for (int& y : data.labels) y %= task.num_classes;
  std::shuffle(data.labels.begin(), data.labels.end(), rng);

  std::normal_distribution<double> noise(0.0, 0.1);
  std::uniform_real_distribution<double> tint(0.5, 1.0);
  std::uniform_int_distribution<int> place(0, half - side);
  std::vector<double> color(task.in_channels);
  for (int b = 0; b < task.samples; ++b) {
    const int quadrant = data.labels[b] / 2;
    const bool columns = data.labels[b] % 2 == 1;
    for (int i = 0; i < S; ++i)
      for (int j = 0; j < S; ++j)
        for (int c = 0; c < task.in_channels; ++c) data.images.at(b, i, j, c) = noise(rng);
    for (double& col : color) col = tint(rng);
    const int top = (quadrant / 2) * half + place(rng);
    const int left = (quadrant % 2) * half + place(rng);
    for (int i = 0; i < side; ++i)
      for (int j = 0; j < side; ++j) {
        const bool lit = columns ? (j % 2 == 0) : (i % 2 == 0);
        if (!lit) continue;
        for (int c = 0; c < task.in_channels; ++c) data.images.at(b, top + i, left + j, c) += color[c];
      }
  }
  return data;
}

// ---------------------------------------------------------------------------

namespace {

double batch_accuracy(const Tensor4& logits, std::span<const int> labels) {
  const int n = logits.n();
  const int k = static_cast<int>(logits.size() / n);
  int correct = 0;
  for (int b = 0; b < n; ++b) {
    const double* z = logits.ptr() + static_cast<std::size_t>(b) * k;
    if (std::max_element(z, z + k) - z == labels[b]) ++correct;
  }
  return static_cast<double>(correct) / n;
}

void clip_grad_norm(std::span<Parameter* const> params, double max_norm) {
  if (max_norm <= 0.0) return;
  double sq = 0.0;
  for (const Parameter* p : params)
    for (double g : p->grad) sq += g * g;
  const double norm = std::sqrt(sq);
  if (norm <= max_norm) return;
  const double scale = max_norm / (norm + 1e-12);
  for (Parameter* p : params)
    for (double& g : p->grad) g *= scale;
}

}  // namespace

TrainHistory train_loop(Model& model, const Dataset& data, const TrainConfig& config) {
  if (config.steps < 0 || config.batch_size < 1) throw std::invalid_argument("train_loop: bad config");
  if (data.images.h() != model.spec.image_size || data.images.c() != model.spec.in_channels) {
    throw std::invalid_argument("train_loop: dataset images do not match the model spec");
  }
  std::vector<Parameter*> params;
  std::vector<double> decay;
  for (auto& np : model.named_parameters()) {
    params.push_back(np.param);
    decay.push_back(np.param->shape.size() >= 2 ? 1.0 : 0.0);
  }
  OptimState opt;
  opt.weight_decay = config.weight_decay;
  const auto warmup = static_cast<std::int64_t>(std::ceil(config.warmup_fraction * config.steps));

  Rng rng(config.seed);
  std::vector<int> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = order.size();
  const int batch = std::min(config.batch_size, data.size());

  TrainHistory history;
  for (int step = 0; step < config.steps; ++step) {
    std::vector<int> idx;
    while (static_cast<int>(idx.size()) < batch) {
      if (cursor == order.size()) {
        std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
      }
      idx.push_back(order[cursor++]);
    }
    const std::vector<int> labels = data.batch_labels(idx);

    model.zero_grad();
    Tape tape;
    Var logits = model_forward(model, tape.constant(data.batch_images(idx)), true, &rng);
    LossResult ce = cross_entropy(logits.value(), labels);
    if (!std::isfinite(ce.loss)) {
      std::ostringstream msg;
      msg << "train_loop: non-finite loss " << ce.loss << " at step " << step << " (lr "
          << opt.lr << ")";
      throw std::runtime_error(msg.str());
    }
    tape.backward(logits, ce.grad);
    clip_grad_norm(params, config.max_grad_norm);
    opt.lr = cosine_lr(step, config.steps, warmup, config.lr);
    adamw_step(params, opt, decay);
    history.steps.push_back({step, ce.loss, batch_accuracy(logits.value(), labels), opt.lr});
  }
  const EvalResult final_eval = evaluate(model, data);
  history.final_accuracy = final_eval.accuracy;
  history.final_loss = final_eval.loss;
  return history;
}

EvalResult evaluate(Model& model, const Dataset& data, int batch_size) {
  EvalResult r;
  int correct_weighted = 0;
  double loss_sum = 0.0;
  for (int start = 0; start < data.size(); start += batch_size) {
    std::vector<int> idx;
    for (int k = start; k < std::min(data.size(), start + batch_size); ++k) idx.push_back(k);
    const std::vector<int> labels = data.batch_labels(idx);
    Tensor4 logits = model_forward(model, data.batch_images(idx));
    loss_sum += cross_entropy(logits, labels).loss * static_cast<double>(idx.size());
    correct_weighted += static_cast<int>(std::lround(batch_accuracy(logits, labels) * idx.size()));
  }
  r.loss = loss_sum / data.size();
  r.accuracy = static_cast<double>(correct_weighted) / data.size();
  return r;
}

double linear_baseline_accuracy(const Dataset& data, int steps, double lr, std::uint64_t seed) {
  const int n = data.size();
  const int features = static_cast<int>(data.images.size() / n);
  const int classes = *std::max_element(data.labels.begin(), data.labels.end()) + 1;
  LinearWeights w(features, classes);
  Rng rng(seed);
  fill_trunc_normal(w.weight.value, rng, 0.02);
  const Tensor4 x({n, 1, 1, features}, data.images.storage());
  std::vector<Parameter*> params = {&w.weight, &w.bias};
  const std::vector<double> decay = {1.0, 0.0};
  OptimState opt;
  opt.lr = lr;
  for (int s = 0; s < steps; ++s) {
    w.weight.zero_grad();
    w.bias.zero_grad();
    LossResult ce = cross_entropy(channel_linear(x, w), data.labels);
    KernelGrads g = channel_linear_backward(x, w, ce.grad);
    accumulate_grad(w.weight, g.dweight);
    accumulate_grad(w.bias, g.dbias);
    adamw_step(params, opt, decay);
  }
  return batch_accuracy(channel_linear(x, w), data.labels);
}

void write_history_csv(std::ostream& out, const TrainHistory& history) {
  out << "step,loss,acc\n";
  const auto old = out.precision(17);
  for (const auto& s : history.steps) out << s.step << ',' << s.loss << ',' << s.accuracy << '\n';
  out.precision(old);
}

}  // namespace msmlp
