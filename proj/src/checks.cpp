#include "msmlp/checks.hpp"

#include <algorithm>
#include <functional>
#include <memory>
#include <numeric>
#include <stdexcept>

#include "msmlp/autograd.hpp"

namespace msmlp {

MixShiftSpec random_mix_shift_spec(Rng& rng) {
  std::uniform_int_distribution<int> groups(1, 6), offset(-6, 6), region(0, 3), pick3(0, 2), coin(0, 1);
  MixShiftSpec spec;
  const int S = groups(rng);
  spec.d = {0};
  spec.r = {1};
  for (int n = 1; n < S; ++n) {
    spec.d.push_back(offset(rng));
    spec.r.push_back(2 * region(rng) + 1);
  }
  spec.axis_mode = static_cast<AxisMode>(pick3(rng));
  spec.conv_type = coin(rng) ? ConvType::full : ConvType::depthwise;
  spec.projection = static_cast<Projection>(pick3(rng));
  return spec;
}

OracleSummary run_oracle_suite(int count, std::uint64_t seed, double tol) {
  if (count < 1) throw std::invalid_argument("run_oracle_suite: count must be positive");
  Rng rng(seed);
  std::uniform_int_distribution<int> batch(1, 2), side(1, 12), extra(0, 7), coin(0, 1);
  OracleSummary out;
  for (int k = 0; k < count; ++k) {
    const MixShiftSpec spec = random_mix_shift_spec(rng);
    const Shape4 shape{batch(rng), side(rng), side(rng), spec.S() + extra(rng)};
    MixShiftParams params = make_mix_shift_params(spec, shape.c, coin(rng) == 1);
    randomize(params, rng, 0.5, 0.1);
    const Tensor4 x = random_tensor(shape, rng);
    const Tensor4 fast = mix_shift_forward(x, spec, params);
    const Tensor4 slow = mix_shift_forward_reference(x, spec, params);
    Tape tape(false);
    const Tensor4 taped = mix_shift_forward(tape.constant(x), spec, params).value();
    const double dev = std::max(max_abs_diff(fast.data(), slow.data()), max_abs_diff(taped.data(), slow.data()));
    out.cases.push_back({shape, spec, dev});
    out.max_deviation = std::max(out.max_deviation, dev);
    if (!(dev <= tol)) ++out.failures;
  }
  return out;
}

namespace {

using Build = std::function<Var(Tape&, const Var&)>;

Tensor4 output_of(const Build& build, const Tensor4& x) {
  Tape tape(false);
  return build(tape, tape.constant(x)).value();
}

// Central difference of sum(R * y), formed from the output differences so the
// large common part of the two sums never has to cancel.
double contracted_diff(const Tensor4& up, const Tensor4& down, const Tensor4& r, double step) {
  double acc = 0.0;
  for (std::size_t k = 0; k < r.size(); ++k) acc += r[k] * ((up[k] - down[k]) / (2.0 * step));
  return acc;
}

void note(GradCheckReport& rep, GradCheckEntry e) {
  rep.max_rel_error = std::max(rep.max_rel_error, e.max_rel_error);
  rep.entries.push_back(std::move(e));
}

// Checks d/dx and d/dparams of sum(R * build(x)) over every entry.
void check_op(GradCheckReport& rep, const std::string& name, const Build& build, Tensor4 x,
              const std::vector<std::pair<std::string, Parameter*>>& params, Rng& rng, double step) {
  Tensor4 r;
  {
    Tape probe(false);
    r = random_tensor(build(probe, probe.constant(x)).shape(), rng);
  }
  for (auto& [pname, p] : params) p->zero_grad();
  Tape tape;
  Var xv = tape.leaf(x, true);
  Var loss = ag::weighted_sum(build(tape, xv), r);
  tape.backward(loss);

  GradCheckEntry input{name + ".input", 0, 0.0};
  const Tensor4 dx = xv.grad().empty() ? Tensor4::zeros_like(x) : xv.grad();
  for (std::size_t i = 0; i < x.size(); ++i) {
    Tensor4 xp = x;
    xp[i] += step;
    const Tensor4 up = output_of(build, xp);
    xp[i] = x[i] - step;
    const Tensor4 down = output_of(build, xp);
    input.max_rel_error = std::max(input.max_rel_error, relative_error(dx[i], contracted_diff(up, down, r, step)));
    ++input.checked;
  }
  note(rep, input);

  for (auto& [pname, p] : params) {
    GradCheckEntry e{name + "." + pname, 0, 0.0};
    for (std::size_t i = 0; i < p->size(); ++i) {
      const double saved = p->value[i];
      p->value[i] = saved + step;
      const Tensor4 up = output_of(build, x);
      p->value[i] = saved - step;
      const Tensor4 down = output_of(build, x);
      p->value[i] = saved;
      const double num = contracted_diff(up, down, r, step);
      e.max_rel_error = std::max(e.max_rel_error, relative_error(p->grad.at(i), num));
      ++e.checked;
    }
    note(rep, e);
  }
}

void randomize_param(Parameter& p, Rng& rng, double std) { fill_normal(p.value, rng, 0.0, std); }

}  // namespace

GradCheckReport gradcheck_primitives(std::uint64_t seed, double step) {
  Rng rng(seed);
  GradCheckReport rep;
  const Shape4 s{2, 5, 4, 3};

  for (Axis axis : {Axis::horizontal, Axis::vertical}) {
    for (int off : {-2, 1}) {
      check_op(rep, std::string("shift2d.") + to_string(axis) + "." + std::to_string(off),
               [=](Tape&, const Var& x) { return ag::shift2d(x, off, axis); }, random_tensor(s, rng), {}, rng,
               step);
    }
  }

  DepthwiseKernel dw(3, 3);
  randomize_param(dw.weight, rng, 0.5);
  randomize_param(dw.bias, rng, 0.5);
  check_op(rep, "depthwise_conv2d", [&](Tape&, const Var& x) { return ag::depthwise_conv2d(x, dw); },
           random_tensor(s, rng), {{"weight", &dw.weight}, {"bias", &dw.bias}}, rng, step);

  FullKernel full(3, 3);
  randomize_param(full.weight, rng, 0.5);
  randomize_param(full.bias, rng, 0.5);
  check_op(rep, "full_conv2d", [&](Tape&, const Var& x) { return ag::full_conv2d(x, full); },
           random_tensor(s, rng), {{"weight", &full.weight}, {"bias", &full.bias}}, rng, step);

  LinearWeights lin(3, 4);
  randomize_param(lin.weight, rng, 0.5);
  randomize_param(lin.bias, rng, 0.5);
  check_op(rep, "channel_linear", [&](Tape&, const Var& x) { return ag::channel_linear(x, lin); },
           random_tensor(s, rng), {{"weight", &lin.weight}, {"bias", &lin.bias}}, rng, step);

  LinearWeights emb(2 * 2 * 3, 5);
  randomize_param(emb.weight, rng, 0.5);
  randomize_param(emb.bias, rng, 0.5);
  check_op(rep, "patch_embed", [&](Tape&, const Var& x) { return ag::patch_embed(x, 2, emb); },
           random_tensor({2, 4, 6, 3}, rng), {{"weight", &emb.weight}, {"bias", &emb.bias}}, rng, step);

  NormAffine norm(3);
  fill_normal(norm.gamma.value, rng, 1.0, 0.3);
  randomize_param(norm.beta, rng, 0.3);
  check_op(rep, "layer_norm", [&](Tape&, const Var& x) { return ag::layer_norm(x, norm); },
           random_tensor(s, rng), {{"gamma", &norm.gamma}, {"beta", &norm.beta}}, rng, step);

  check_op(rep, "gelu", [](Tape&, const Var& x) { return ag::gelu(x); }, random_tensor(s, rng, 2.0), {}, rng,
           step);
  check_op(rep, "global_avg_pool", [](Tape&, const Var& x) { return ag::global_avg_pool(x); },
           random_tensor(s, rng), {}, rng, step);

  const std::vector<int> widths = {2, 1, 2};
  check_op(rep, "split_concat",
           [&](Tape&, const Var& x) {
             std::vector<Var> parts = ag::split_channels(x, widths);
             std::swap(parts[0], parts[2]);
             return ag::concat_channels(parts);
           },
           random_tensor({2, 3, 3, 5}, rng), {}, rng, step);
  check_op(rep, "add",
           [](Tape&, const Var& x) { return ag::add(x, ag::gelu(x)); }, random_tensor(s, rng), {}, rng, step);
  check_op(rep, "scale_samples",
           [](Tape&, const Var& x) { return ag::scale_samples(x, {0.0, 1.25}); }, random_tensor(s, rng), {}, rng,
           step);

  for (AxisMode mode : {AxisMode::horizontal, AxisMode::vertical, AxisMode::dual}) {
    for (ConvType conv : {ConvType::depthwise, ConvType::full}) {
      MixShiftSpec spec;
      spec.d = {0, 1, -2, 4};
      spec.r = {1, 3, 1, 3};
      spec.axis_mode = mode;
      spec.conv_type = conv;
      spec.projection = conv == ConvType::full ? Projection::post : Projection::pre_post;
      auto params = std::make_shared<MixShiftParams>(make_mix_shift_params(spec, 5));
      randomize(*params, rng, 0.4, 0.2);
      std::vector<std::pair<std::string, Parameter*>> list;
      for_each_parameter(*params, "", [&](const std::string& n, Parameter& p) { list.emplace_back(n, &p); });
      check_op(rep, std::string("mix_shift.") + to_string(mode) + "." + to_string(conv),
               [params, spec](Tape&, const Var& x) { return mix_shift_forward(x, spec, *params); },
               random_tensor({2, 5, 4, 5}, rng), list, rng, step);
    }
  }
  return rep;
}

GradCheckReport gradcheck_model(const ModelSpec& spec, std::uint64_t seed, int per_tensor, double step,
                                double weight_std, int batch) {
  if (per_tensor < 1 || batch < 1) throw std::invalid_argument("gradcheck_model: bad sample sizes");
  Model model = build_model(spec, seed);
  Rng rng(seed ^ 0x9e3779b97f4a7c15ULL);
  const std::vector<NamedParameter> params = model.named_parameters();
  for (const auto& np : params) {
    const bool is_gamma = np.name.size() >= 5 && np.name.compare(np.name.size() - 5, 5, "gamma") == 0;
    fill_normal(np.param->value, rng, is_gamma ? 1.0 : 0.0, weight_std);
  }
  const Tensor4 images = random_tensor({batch, spec.image_size, spec.image_size, spec.in_channels}, rng);
  const Tensor4 r = random_tensor({batch, 1, 1, spec.num_classes}, rng);

  auto logits_now = [&] { return model_forward(model, images); };

  model.zero_grad();
  {
    Tape tape;
    Var logits = model_forward(model, tape.constant(images), false, nullptr);
    tape.backward(ag::weighted_sum(logits, r));
  }

  GradCheckReport rep;
  for (const auto& np : params) {
    Parameter& p = *np.param;
    std::vector<std::size_t> idx(p.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    if (idx.size() > static_cast<std::size_t>(per_tensor)) {
      std::shuffle(idx.begin(), idx.end(), rng);
      idx.resize(per_tensor);
      std::sort(idx.begin(), idx.end());
    }
    GradCheckEntry e{np.name, 0, 0.0};
    for (std::size_t i : idx) {
      const double saved = p.value[i];
      p.value[i] = saved + step;
      const Tensor4 up = logits_now();
      p.value[i] = saved - step;
      const Tensor4 down = logits_now();
      p.value[i] = saved;
      const double num = contracted_diff(up, down, r, step);
      e.max_rel_error = std::max(e.max_rel_error, relative_error(p.grad.at(i), num));
      ++e.checked;
    }
    note(rep, e);
  }
  return rep;
}

}  // namespace msmlp
