#include "msmlp/mixshift.hpp"

#include <algorithm>
#include <cstdlib>
#include <stdexcept>

namespace msmlp {

namespace {

void require(bool cond, const std::string& what) {
  if (!cond) throw std::invalid_argument(what);
}

int axis_extent(const Shape4& s, Axis axis) { return axis == Axis::vertical ? s.h : s.w; }

// Depthwise mixing and shift alignment of every group without per-group
// temporaries. Each channel is moved to a contiguous plane first so the tap
// loops run over whole rows; output row i of group n is fed by input rows
// around i + d[n] (vertical) or by columns offset by d[n] (horizontal).
Tensor4 fused_depthwise_shift(const Tensor4& u, const MixShiftSpec& spec, const MixShiftParams& params,
                              const MixShiftBranch& branch) {
  const int N = u.n(), H = u.h(), W = u.w(), C = u.c();
  const int S = spec.S();
  const int di = branch.axis == Axis::vertical ? 1 : 0;
  const int dj = 1 - di;
  const std::size_t plane = static_cast<std::size_t>(H) * W;
  std::vector<int> group_of(C), offset(S + 1, 0);
  for (int n = 0; n < S; ++n) {
    offset[n + 1] = offset[n] + params.widths[n];
    for (int c = offset[n]; c < offset[n + 1]; ++c) group_of[c] = n;
  }
  Tensor4 out(u.shape());
  const bool parallel = num_threads() > 1;

  // Channels are processed in blocks of kBlock so the gathers and scatters
  // between NHWC and the planes read and write whole cache lines.
  constexpr int kBlock = 8;
  const int blocks = (C + kBlock - 1) / kBlock;

#pragma omp parallel if (parallel)
  {
    std::vector<double> src(plane * kBlock), dst(plane * kBlock);
#pragma omp for collapse(2) schedule(static)
    for (int b = 0; b < N; ++b) {
      for (int blk = 0; blk < blocks; ++blk) {
        const int cb = blk * kBlock, ce = std::min(C, cb + kBlock), nc = ce - cb;
        const double* in = u.ptr() + u.index(b, 0, 0, 0);
        for (std::size_t t = 0; t < plane; ++t)
          for (int q = 0; q < nc; ++q) src[q * plane + t] = in[t * C + cb + q];
        std::fill(dst.begin(), dst.end(), 0.0);
        for (int q = 0; q < nc; ++q) {
          const int c = cb + q, n = group_of[c];
          const auto& k = std::get<DepthwiseKernel>(branch.mixers[n]);
          const int r = k.region, half = r / 2, cl = c - offset[n];
          const double* wk = k.weight.value.data() + static_cast<std::size_t>(cl) * r * r;
          const double bias = k.has_bias() ? k.bias.value[cl] : 0.0;
          const int sh_i = di * spec.d[n], sh_j = dj * spec.d[n];
          const double* sp = src.data() + q * plane;
          double* dp = dst.data() + q * plane;
          // Output tokens whose region center (i + sh_i, j + sh_j) is on the map.
          const int i0 = std::max(0, -sh_i), i1 = std::min(H, H - sh_i);
          const int j0 = std::max(0, -sh_j), j1 = std::min(W, W - sh_j);
          for (int i = i0; i < i1; ++i) {
            double* orow = dp + static_cast<std::size_t>(i) * W;
            for (int j = j0; j < j1; ++j) orow[j] = bias;
            for (int ky = 0; ky < r; ++ky) {
              const int si = i + sh_i + ky - half;
              if (si < 0 || si >= H) continue;
              const double* irow = sp + static_cast<std::size_t>(si) * W;
              for (int kx = 0; kx < r; ++kx) {
                const double t = wk[ky * r + kx];
                const int dx = sh_j + kx - half;
                const int ja = std::max(j0, -dx), jb = std::min(j1, W - dx);
                for (int j = ja; j < jb; ++j) orow[j] += t * irow[j + dx];
              }
            }
          }
        }
        double* o = out.ptr() + out.index(b, 0, 0, 0);
        for (std::size_t t = 0; t < plane; ++t)
          for (int q = 0; q < nc; ++q) o[t * C + cb + q] = dst[q * plane + t];
      }
    }
  }
  return out;
}

}  // namespace

const char* to_string(AxisMode mode) {
  switch (mode) {
    case AxisMode::horizontal: return "horizontal";
    case AxisMode::vertical: return "vertical";
    case AxisMode::dual: return "dual";
  }
  return "?";
}

const char* to_string(ConvType type) { return type == ConvType::depthwise ? "dw" : "full"; }

const char* to_string(Projection projection) {
  switch (projection) {
    case Projection::none: return "none";
    case Projection::post: return "post";
    case Projection::pre_post: return "pre_post";
  }
  return "?";
}

AxisMode axis_mode_from_string(const std::string& s) {
  if (s == "horizontal") return AxisMode::horizontal;
  if (s == "vertical") return AxisMode::vertical;
  if (s == "dual" || s == "dual-branch-sum") return AxisMode::dual;
  throw std::invalid_argument("unknown axis_mode '" + s + "'");
}

ConvType conv_type_from_string(const std::string& s) {
  if (s == "dw" || s == "depthwise") return ConvType::depthwise;
  if (s == "full") return ConvType::full;
  throw std::invalid_argument("unknown conv_type '" + s + "'");
}

Projection projection_from_string(const std::string& s) {
  if (s == "none") return Projection::none;
  if (s == "post") return Projection::post;
  if (s == "pre_post") return Projection::pre_post;
  throw std::invalid_argument("unknown projection '" + s + "'");
}

void MixShiftSpec::validate() const {
  require(!d.empty(), "MixShiftSpec: S must be >= 1");
  require(d.size() == r.size(), "MixShiftSpec: d and r must both have S entries");
  // The query group stays in place. Its region is normally 1, but the
  // global-region ablation mixes it over 7 x 7 like every other group.
  require(d[0] == 0, "MixShiftSpec: the first (query) group needs d = 0");
  for (int rn : r) require(rn >= 1 && rn % 2 == 1, "MixShiftSpec: region sizes must be odd and >= 1");
}

std::vector<Axis> MixShiftSpec::branch_axes() const {
  switch (axis_mode) {
    case AxisMode::horizontal: return {Axis::horizontal};
    case AxisMode::vertical: return {Axis::vertical};
    case AxisMode::dual: return {Axis::horizontal, Axis::vertical};
  }
  return {};
}

int MixShiftSpec::reach() const {
  int m = 0;
  for (std::size_t n = 0; n < d.size(); ++n) m = std::max(m, std::abs(d[n]) + (r[n] - 1) / 2);
  return m;
}

std::vector<int> mix_shift_group_widths(int channels, int groups) {
  return balanced_group_widths(channels, groups);
}

MixShiftParams make_mix_shift_params(const MixShiftSpec& spec, int channels, bool bias) {
  spec.validate();
  MixShiftParams p;
  p.channels = channels;
  p.widths = mix_shift_group_widths(channels, spec.S());
  for (Axis axis : spec.branch_axes()) {
    MixShiftBranch br;
    br.axis = axis;
    if (spec.projection == Projection::pre_post) br.pre.emplace_back(channels, channels, bias);
    if (spec.projection != Projection::none) br.post.emplace_back(channels, channels, bias);
    for (int n = 0; n < spec.S(); ++n) {
      if (spec.conv_type == ConvType::depthwise) {
        br.mixers.emplace_back(DepthwiseKernel(p.widths[n], spec.r[n], bias));
      } else {
        br.mixers.emplace_back(FullKernel(p.widths[n], spec.r[n], bias));
      }
    }
    p.branches.push_back(std::move(br));
  }
  return p;
}

MixShiftParams identity_mix_shift_params(const MixShiftSpec& spec, int channels) {
  MixShiftParams p = make_mix_shift_params(spec, channels, true);
  for (auto& br : p.branches) {
    for (auto& w : br.pre) w = LinearWeights::identity(channels, true);
    for (auto& w : br.post) w = LinearWeights::identity(channels, true);
    for (int n = 0; n < spec.S(); ++n) {
      if (spec.conv_type == ConvType::depthwise) {
        br.mixers[n] = DepthwiseKernel::delta(p.widths[n], spec.r[n], true);
      } else {
        br.mixers[n] = FullKernel::delta(p.widths[n], spec.r[n], true);
      }
    }
  }
  return p;
}

void randomize(MixShiftParams& params, Rng& rng, double stddev, double bias_stddev) {
  for_each_parameter(params, "", [&](const std::string& name, Parameter& p) {
    const bool is_bias = name.size() >= 4 && name.compare(name.size() - 4, 4, "bias") == 0;
    if (is_bias) {
      if (bias_stddev > 0.0) fill_normal(p.value, rng, 0.0, bias_stddev);
    } else {
      fill_trunc_normal(p.value, rng, stddev);
    }
  });
}

void check_params(const MixShiftSpec& spec, const MixShiftParams& params, int channels) {
  spec.validate();
  require(params.channels == channels, "mix-shift: parameters built for " +
                                           std::to_string(params.channels) + " channels, input has " +
                                           std::to_string(channels));
  require(params.widths.size() == static_cast<std::size_t>(spec.S()),
          "mix-shift: parameter group count does not match S");
  require(params.branches.size() == spec.branch_axes().size(),
          "mix-shift: parameter branch count does not match axis_mode");
  for (const auto& br : params.branches) {
    require(br.mixers.size() == static_cast<std::size_t>(spec.S()), "mix-shift: missing group kernels");
    for (int n = 0; n < spec.S(); ++n) {
      const int region = std::visit([](const auto& k) { return k.region; }, br.mixers[n]);
      const int width = std::visit([](const auto& k) { return k.channels; }, br.mixers[n]);
      require(region == spec.r[n], "mix-shift: kernel " + std::to_string(n) + " has region " +
                                       std::to_string(region) + ", spec wants " +
                                       std::to_string(spec.r[n]));
      require(width == params.widths[n], "mix-shift: kernel width mismatch in group " +
                                             std::to_string(n));
    }
  }
}

// ---------------------------------------------------------------------------

Tensor4 mix_shift_branch(const Tensor4& x, const MixShiftSpec& spec, const MixShiftParams& params,
                         const MixShiftBranch& branch) {
  check_params(spec, params, x.c());
  if (spec.conv_type == ConvType::depthwise) {
    Tensor4 y = branch.has_pre() ? fused_depthwise_shift(channel_linear(x, branch.pre[0]), spec, params, branch)
                                 : fused_depthwise_shift(x, spec, params, branch);
    return branch.has_post() ? channel_linear(y, branch.post[0]) : y;
  }
  Tensor4 u = branch.has_pre() ? channel_linear(x, branch.pre[0]) : x;
  std::vector<Tensor4> groups = split_channels(u, params.widths);
  const int ext = axis_extent(x.shape(), branch.axis);
  for (int n = 0; n < spec.S(); ++n) {
    if (std::abs(spec.d[n]) >= ext) {
      groups[n] = Tensor4::zeros_like(groups[n]);
      continue;
    }
    Tensor4 mixed = std::visit(
        [&](const auto& k) -> Tensor4 {
          if constexpr (std::is_same_v<std::decay_t<decltype(k)>, DepthwiseKernel>) {
            return depthwise_conv2d(groups[n], k);
          } else {
            return full_conv2d(groups[n], k);
          }
        },
        branch.mixers[n]);
    groups[n] = spec.d[n] == 0 ? std::move(mixed) : shift2d(mixed, -spec.d[n], branch.axis);
  }
  Tensor4 y = concat_channels(groups);
  return branch.has_post() ? channel_linear(y, branch.post[0]) : y;
}

Var mix_shift_branch(const Var& x, const MixShiftSpec& spec, const MixShiftParams& params,
                     MixShiftBranch& branch) {
  check_params(spec, params, x.shape().c);
  Tape& tape = *x.tape();
  Var u = branch.has_pre() ? ag::channel_linear(x, branch.pre[0]) : x;
  std::vector<Var> groups = ag::split_channels(u, params.widths);
  const int ext = axis_extent(x.shape(), branch.axis);
  for (int n = 0; n < spec.S(); ++n) {
    if (std::abs(spec.d[n]) >= ext) {
      groups[n] = tape.constant(Tensor4(groups[n].shape()));
      continue;
    }
    Var mixed = std::visit(
        [&](auto& k) -> Var {
          if constexpr (std::is_same_v<std::decay_t<decltype(k)>, DepthwiseKernel>) {
            return ag::depthwise_conv2d(groups[n], k);
          } else {
            return ag::full_conv2d(groups[n], k);
          }
        },
        branch.mixers[n]);
    groups[n] = spec.d[n] == 0 ? mixed : ag::shift2d(mixed, -spec.d[n], branch.axis);
  }
  Var y = ag::concat_channels(groups);
  return branch.has_post() ? ag::channel_linear(y, branch.post[0]) : y;
}

Tensor4 mix_shift_reference(const Tensor4& x, const MixShiftSpec& spec,
                            const MixShiftParams& params, const MixShiftBranch& branch) {
  check_params(spec, params, x.c());
  const int N = x.n(), H = x.h(), W = x.w(), C = x.c();

  // Pre-projection, one dot product at a time.
  Tensor4 u(x.shape());
  for (int b = 0; b < N; ++b)
    for (int i = 0; i < H; ++i)
      for (int j = 0; j < W; ++j)
        for (int co = 0; co < C; ++co) {
          if (!branch.has_pre()) {
            u.at(b, i, j, co) = x.at(b, i, j, co);
            continue;
          }
          const LinearWeights& pre = branch.pre[0];
          double acc = pre.has_bias() ? pre.bias.value[co] : 0.0;
          for (int ci = 0; ci < C; ++ci) acc += pre.weight.value[co * C + ci] * x.at(b, i, j, ci);
          u.at(b, i, j, co) = acc;
        }

  const int di_unit = branch.axis == Axis::vertical ? 1 : 0;
  const int dj_unit = branch.axis == Axis::horizontal ? 1 : 0;
  Tensor4 y(x.shape());
  std::vector<int> group_start(spec.S(), 0);
  for (int n = 1; n < spec.S(); ++n) group_start[n] = group_start[n - 1] + params.widths[n - 1];

  for (int b = 0; b < N; ++b)
    for (int i = 0; i < H; ++i)
      for (int j = 0; j < W; ++j)
        for (int n = 0; n < spec.S(); ++n) {
          const int ci = i + spec.d[n] * di_unit;  // region center
          const int cj = j + spec.d[n] * dj_unit;
          const int width = params.widths[n];
          const int r = spec.r[n], half = (r - 1) / 2;
          const int c0 = group_start[n];
          if (ci < 0 || ci >= H || cj < 0 || cj >= W) continue;  // shifted in from outside: zero
          for (int co = 0; co < width; ++co) {
            double acc = 0.0;
            if (const auto* k = std::get_if<DepthwiseKernel>(&branch.mixers[n])) {
              if (k->has_bias()) acc = k->bias.value[co];
              for (int ky = 0; ky < r; ++ky)
                for (int kx = 0; kx < r; ++kx) {
                  const int si = ci - half + ky, sj = cj - half + kx;
                  if (si < 0 || si >= H || sj < 0 || sj >= W) continue;
                  acc += k->weight.value[(co * r + ky) * r + kx] * u.at(b, si, sj, c0 + co);
                }
            } else {
              const auto& fk = std::get<FullKernel>(branch.mixers[n]);
              if (fk.has_bias()) acc = fk.bias.value[co];
              for (int cin = 0; cin < width; ++cin)
                for (int ky = 0; ky < r; ++ky)
                  for (int kx = 0; kx < r; ++kx) {
                    const int si = ci - half + ky, sj = cj - half + kx;
                    if (si < 0 || si >= H || sj < 0 || sj >= W) continue;
                    acc += fk.weight.value[((co * width + cin) * r + ky) * r + kx] *
                           u.at(b, si, sj, c0 + cin);
                  }
            }
            y.at(b, i, j, c0 + co) = acc;
          }
        }

  if (!branch.has_post()) return y;
  const LinearWeights& post = branch.post[0];
  Tensor4 o(x.shape());
  for (int b = 0; b < N; ++b)
    for (int i = 0; i < H; ++i)
      for (int j = 0; j < W; ++j)
        for (int co = 0; co < C; ++co) {
          double acc = post.has_bias() ? post.bias.value[co] : 0.0;
          for (int ci = 0; ci < C; ++ci) acc += post.weight.value[co * C + ci] * y.at(b, i, j, ci);
          o.at(b, i, j, co) = acc;
        }
  return o;
}

Tensor4 mix_shift_forward(const Tensor4& x, const MixShiftSpec& spec, const MixShiftParams& params) {
  check_params(spec, params, x.c());
  Tensor4 out = mix_shift_branch(x, spec, params, params.branches[0]);
  for (std::size_t k = 1; k < params.branches.size(); ++k)
    out += mix_shift_branch(x, spec, params, params.branches[k]);
  return out;
}

Var mix_shift_forward(const Var& x, const MixShiftSpec& spec, MixShiftParams& params) {
  check_params(spec, params, x.shape().c);
  Var out = mix_shift_branch(x, spec, params, params.branches[0]);
  for (std::size_t k = 1; k < params.branches.size(); ++k)
    out = ag::add(out, mix_shift_branch(x, spec, params, params.branches[k]));
  return out;
}

Tensor4 mix_shift_forward_reference(const Tensor4& x, const MixShiftSpec& spec,
                                    const MixShiftParams& params) {
  Tensor4 out = mix_shift_reference(x, spec, params, params.branches[0]);
  for (std::size_t k = 1; k < params.branches.size(); ++k)
    out += mix_shift_reference(x, spec, params, params.branches[k]);
  return out;
}

}  // namespace msmlp
