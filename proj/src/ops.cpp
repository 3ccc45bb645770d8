#include "msmlp/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace msmlp {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;
using ConstRowVectorMap = Eigen::Map<const Eigen::RowVectorXd>;

int g_num_threads = 1;

void require(bool cond, const std::string& what) {
  if (!cond) throw std::invalid_argument(what);
}

int extent(const Tensor4& x, Axis axis) { return axis == Axis::vertical ? x.h() : x.w(); }

}  // namespace

const char* to_string(Axis axis) { return axis == Axis::vertical ? "vertical" : "horizontal"; }

void set_num_threads(int threads) {
  g_num_threads = std::max(1, threads);
#ifdef _OPENMP
  omp_set_num_threads(g_num_threads);
#endif
}

int num_threads() { return g_num_threads; }

// ---------------------------------------------------------------------------

DepthwiseKernel::DepthwiseKernel(int channels_, int region_, bool with_bias)
    : channels(channels_), region(region_) {
  require(channels > 0, "DepthwiseKernel: channels must be positive");
  require(region > 0 && region % 2 == 1, "DepthwiseKernel: region size must be odd and >= 1");
  weight = Parameter({channels, region, region});
  if (with_bias) bias = Parameter({channels});
}

DepthwiseKernel DepthwiseKernel::delta(int channels, int region, bool with_bias) {
  DepthwiseKernel k(channels, region, with_bias);
  const int center = (region / 2) * region + region / 2;
  for (int c = 0; c < channels; ++c) k.weight.value[c * region * region + center] = 1.0;
  return k;
}

FullKernel::FullKernel(int channels_, int region_, bool with_bias)
    : channels(channels_), region(region_) {
  require(channels > 0, "FullKernel: channels must be positive");
  require(region > 0 && region % 2 == 1, "FullKernel: region size must be odd and >= 1");
  weight = Parameter({channels, channels, region, region});
  if (with_bias) bias = Parameter({channels});
}

FullKernel FullKernel::delta(int channels, int region, bool with_bias) {
  FullKernel k(channels, region, with_bias);
  const int rr = region * region;
  const int center = (region / 2) * region + region / 2;
  for (int c = 0; c < channels; ++c) k.weight.value[(c * channels + c) * rr + center] = 1.0;
  return k;
}

LinearWeights::LinearWeights(int in, int out, bool with_bias)
    : in_features(in), out_features(out) {
  require(in > 0 && out > 0, "LinearWeights: feature counts must be positive");
  weight = Parameter({out, in});
  if (with_bias) bias = Parameter({out});
}

LinearWeights LinearWeights::identity(int features, bool with_bias) {
  LinearWeights w(features, features, with_bias);
  for (int i = 0; i < features; ++i) w.weight.value[i * features + i] = 1.0;
  return w;
}

NormAffine::NormAffine(int channels) : gamma({channels}, 1.0), beta({channels}, 0.0) {}

// ---------------------------------------------------------------------------
// shift

Tensor4 shift2d(const Tensor4& x, int offset, Axis axis) {
  if (std::abs(offset) >= extent(x, axis)) {
    throw std::invalid_argument("shift2d: |offset| " + std::to_string(offset) +
                                " must be smaller than the " + to_string(axis) + " extent " +
                                std::to_string(extent(x, axis)));
  }
  return shift2d_unchecked(x, offset, axis);
}

Tensor4 shift2d_unchecked(const Tensor4& x, int offset, Axis axis) {
  Tensor4 out(x.shape());
  const int H = x.h(), W = x.w(), C = x.c();
  const int di = axis == Axis::vertical ? offset : 0;
  const int dj = axis == Axis::horizontal ? offset : 0;
  const int i0 = std::max(0, di), i1 = std::min(H, H + di);
  const int j0 = std::max(0, dj), j1 = std::min(W, W + dj);
  if (i0 >= i1 || j0 >= j1) return out;
  const std::size_t run = static_cast<std::size_t>(j1 - j0) * C;
  for (int b = 0; b < x.n(); ++b) {
    for (int i = i0; i < i1; ++i) {
      const double* src = x.ptr() + x.index(b, i - di, j0 - dj, 0);
      double* dst = out.ptr() + out.index(b, i, j0, 0);
      std::copy(src, src + run, dst);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// depthwise

Tensor4 depthwise_conv2d(const Tensor4& x, const DepthwiseKernel& k) {
  require(k.channels == x.c(), "depthwise_conv2d: kernel has " + std::to_string(k.channels) +
                                   " channels, input has " + std::to_string(x.c()));
  const int N = x.n(), H = x.h(), W = x.w(), C = x.c(), r = k.region, half = r / 2;
  const int rr = r * r;
  Tensor4 out(x.shape());
  // Repack weights as (ky, kx, c) so the inner loop runs over contiguous channels.
  std::vector<double> taps(static_cast<std::size_t>(rr) * C);
  for (int c = 0; c < C; ++c)
    for (int t = 0; t < rr; ++t) taps[static_cast<std::size_t>(t) * C + c] = k.weight.value[c * rr + t];
  const double* bias = k.has_bias() ? k.bias.value.data() : nullptr;

#pragma omp parallel for collapse(2) schedule(static) if (g_num_threads > 1)
  for (int b = 0; b < N; ++b) {
    for (int i = 0; i < H; ++i) {
      for (int j = 0; j < W; ++j) {
        double* o = out.ptr() + out.index(b, i, j, 0);
        if (bias) std::copy(bias, bias + C, o);
        for (int ky = 0; ky < r; ++ky) {
          const int si = i + ky - half;
          if (si < 0 || si >= H) continue;
          for (int kx = 0; kx < r; ++kx) {
            const int sj = j + kx - half;
            if (sj < 0 || sj >= W) continue;
            const double* src = x.ptr() + x.index(b, si, sj, 0);
            const double* tap = taps.data() + static_cast<std::size_t>(ky * r + kx) * C;
            for (int c = 0; c < C; ++c) o[c] += tap[c] * src[c];
          }
        }
      }
    }
  }
  return out;
}

KernelGrads depthwise_conv2d_backward(const Tensor4& x, const DepthwiseKernel& k,
                                      const Tensor4& dy) {
  require(k.channels == x.c() && dy.shape() == x.shape(),
          "depthwise_conv2d_backward: shape mismatch");
  const int N = x.n(), H = x.h(), W = x.w(), C = x.c(), r = k.region, half = r / 2;
  const int rr = r * r;
  KernelGrads g{Tensor4(x.shape()), std::vector<double>(k.weight.size(), 0.0),
                std::vector<double>(k.has_bias() ? C : 0, 0.0)};
  std::vector<double> taps(static_cast<std::size_t>(rr) * C);
  for (int c = 0; c < C; ++c)
    for (int t = 0; t < rr; ++t) taps[static_cast<std::size_t>(t) * C + c] = k.weight.value[c * rr + t];
  std::vector<double> dtaps(taps.size(), 0.0);

  for (int b = 0; b < N; ++b) {
    for (int i = 0; i < H; ++i) {
      for (int j = 0; j < W; ++j) {
        const double* go = dy.ptr() + dy.index(b, i, j, 0);
        if (k.has_bias())
          for (int c = 0; c < C; ++c) g.dbias[c] += go[c];
        for (int ky = 0; ky < r; ++ky) {
          const int si = i + ky - half;
          if (si < 0 || si >= H) continue;
          for (int kx = 0; kx < r; ++kx) {
            const int sj = j + kx - half;
            if (sj < 0 || sj >= W) continue;
            const std::size_t src_off = x.index(b, si, sj, 0);
            const double* src = x.ptr() + src_off;
            double* dsrc = g.dx.ptr() + src_off;
            const std::size_t t = static_cast<std::size_t>(ky * r + kx) * C;
            for (int c = 0; c < C; ++c) {
              dsrc[c] += taps[t + c] * go[c];
              dtaps[t + c] += src[c] * go[c];
            }
          }
        }
      }
    }
  }
  for (int c = 0; c < C; ++c)
    for (int t = 0; t < rr; ++t) g.dweight[c * rr + t] = dtaps[static_cast<std::size_t>(t) * C + c];
  return g;
}

// ---------------------------------------------------------------------------
// full (dense) convolution

Tensor4 full_conv2d(const Tensor4& x, const FullKernel& k) {
  require(k.channels == x.c(), "full_conv2d: kernel has " + std::to_string(k.channels) +
                                   " channels, input has " + std::to_string(x.c()));
  const int N = x.n(), H = x.h(), W = x.w(), C = x.c(), r = k.region, half = r / 2;
  const int rr = r * r;
  // taps[(ky,kx)][c_in][c_out]
  std::vector<double> taps(static_cast<std::size_t>(rr) * C * C);
  for (int co = 0; co < C; ++co)
    for (int ci = 0; ci < C; ++ci)
      for (int t = 0; t < rr; ++t)
        taps[(static_cast<std::size_t>(t) * C + ci) * C + co] = k.weight.value[(co * C + ci) * rr + t];
  Tensor4 out(x.shape());
  const double* bias = k.has_bias() ? k.bias.value.data() : nullptr;

#pragma omp parallel for collapse(2) schedule(static) if (g_num_threads > 1)
  for (int b = 0; b < N; ++b) {
    for (int i = 0; i < H; ++i) {
      for (int j = 0; j < W; ++j) {
        double* o = out.ptr() + out.index(b, i, j, 0);
        if (bias) std::copy(bias, bias + C, o);
        for (int ky = 0; ky < r; ++ky) {
          const int si = i + ky - half;
          if (si < 0 || si >= H) continue;
          for (int kx = 0; kx < r; ++kx) {
            const int sj = j + kx - half;
            if (sj < 0 || sj >= W) continue;
            const double* src = x.ptr() + x.index(b, si, sj, 0);
            const double* tap = taps.data() + static_cast<std::size_t>(ky * r + kx) * C * C;
            for (int ci = 0; ci < C; ++ci) {
              const double v = src[ci];
              const double* row = tap + static_cast<std::size_t>(ci) * C;
              for (int co = 0; co < C; ++co) o[co] += row[co] * v;
            }
          }
        }
      }
    }
  }
  return out;
}

KernelGrads full_conv2d_backward(const Tensor4& x, const FullKernel& k, const Tensor4& dy) {
  require(k.channels == x.c() && dy.shape() == x.shape(), "full_conv2d_backward: shape mismatch");
  const int N = x.n(), H = x.h(), W = x.w(), C = x.c(), r = k.region, half = r / 2;
  const int rr = r * r;
  KernelGrads g{Tensor4(x.shape()), std::vector<double>(k.weight.size(), 0.0),
                std::vector<double>(k.has_bias() ? C : 0, 0.0)};
  for (int b = 0; b < N; ++b) {
    for (int i = 0; i < H; ++i) {
      for (int j = 0; j < W; ++j) {
        const double* go = dy.ptr() + dy.index(b, i, j, 0);
        if (k.has_bias())
          for (int c = 0; c < C; ++c) g.dbias[c] += go[c];
        for (int ky = 0; ky < r; ++ky) {
          const int si = i + ky - half;
          if (si < 0 || si >= H) continue;
          for (int kx = 0; kx < r; ++kx) {
            const int sj = j + kx - half;
            if (sj < 0 || sj >= W) continue;
            const std::size_t src_off = x.index(b, si, sj, 0);
            const double* src = x.ptr() + src_off;
            double* dsrc = g.dx.ptr() + src_off;
            const int t = ky * r + kx;
            for (int co = 0; co < C; ++co) {
              const double gco = go[co];
              if (gco == 0.0) continue;
              for (int ci = 0; ci < C; ++ci) {
                const std::size_t widx = static_cast<std::size_t>(co * C + ci) * rr + t;
                dsrc[ci] += k.weight.value[widx] * gco;
                g.dweight[widx] += src[ci] * gco;
              }
            }
          }
        }
      }
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// linear

Tensor4 channel_linear(const Tensor4& x, const LinearWeights& w) {
  require(x.c() == w.in_features, "channel_linear: input has " + std::to_string(x.c()) +
                                      " channels, weights expect " + std::to_string(w.in_features));
  const Eigen::Index rows = static_cast<Eigen::Index>(x.size() / x.c());
  Tensor4 out({x.n(), x.h(), x.w(), w.out_features});
  ConstMatrixMap X(x.ptr(), rows, w.in_features);
  ConstMatrixMap Wm(w.weight.value.data(), w.out_features, w.in_features);
  MatrixMap Y(out.ptr(), rows, w.out_features);
  Y.noalias() = X * Wm.transpose();
  if (w.has_bias()) Y.rowwise() += ConstRowVectorMap(w.bias.value.data(), w.out_features);
  return out;
}

KernelGrads channel_linear_backward(const Tensor4& x, const LinearWeights& w, const Tensor4& dy) {
  require(x.c() == w.in_features && dy.c() == w.out_features && dy.n() == x.n() &&
              dy.h() == x.h() && dy.w() == x.w(),
          "channel_linear_backward: shape mismatch");
  const Eigen::Index rows = static_cast<Eigen::Index>(x.size() / x.c());
  KernelGrads g{Tensor4(x.shape()), std::vector<double>(w.weight.size()),
                std::vector<double>(w.has_bias() ? w.out_features : 0)};
  ConstMatrixMap X(x.ptr(), rows, w.in_features);
  ConstMatrixMap Wm(w.weight.value.data(), w.out_features, w.in_features);
  ConstMatrixMap G(dy.ptr(), rows, w.out_features);
  MatrixMap(g.dx.ptr(), rows, w.in_features).noalias() = G * Wm;
  MatrixMap(g.dweight.data(), w.out_features, w.in_features).noalias() = G.transpose() * X;
  if (w.has_bias()) {
    // Plain loop: Eigen's vectorized reduction peels by address alignment,
    // which would make the rounding depend on where dy happens to live.
    const double* gp = dy.ptr();
    for (Eigen::Index r = 0; r < rows; ++r, gp += w.out_features)
      for (int o = 0; o < w.out_features; ++o) g.dbias[o] += gp[o];
  }
  return g;
}

namespace {

// (n, h, w, c) -> (n, h/p, w/p, p*p*c) with per-patch order (py, px, c).
Tensor4 patchify(const Tensor4& x, int p) {
  const int Ho = x.h() / p, Wo = x.w() / p, C = x.c();
  Tensor4 out({x.n(), Ho, Wo, p * p * C});
  for (int b = 0; b < x.n(); ++b)
    for (int i = 0; i < Ho; ++i)
      for (int j = 0; j < Wo; ++j) {
        double* dst = out.ptr() + out.index(b, i, j, 0);
        for (int py = 0; py < p; ++py) {
          const double* src = x.ptr() + x.index(b, i * p + py, j * p, 0);
          std::copy(src, src + static_cast<std::size_t>(p) * C, dst + static_cast<std::size_t>(py) * p * C);
        }
      }
  return out;
}

Tensor4 unpatchify(const Tensor4& cols, int p, const Shape4& shape) {
  Tensor4 out(shape);
  const int C = shape.c;
  for (int b = 0; b < cols.n(); ++b)
    for (int i = 0; i < cols.h(); ++i)
      for (int j = 0; j < cols.w(); ++j) {
        const double* src = cols.ptr() + cols.index(b, i, j, 0);
        for (int py = 0; py < p; ++py) {
          double* dst = out.ptr() + out.index(b, i * p + py, j * p, 0);
          std::copy(src + static_cast<std::size_t>(py) * p * C, src + static_cast<std::size_t>(py + 1) * p * C, dst);
        }
      }
  return out;
}

void check_patch(const Tensor4& x, int p, const LinearWeights& w) {
  require(p >= 1, "patch_embed: patch ratio must be >= 1");
  require(x.h() % p == 0 && x.w() % p == 0,
          "patch_embed: spatial size " + std::to_string(x.h()) + "x" + std::to_string(x.w()) +
              " not divisible by patch ratio " + std::to_string(p));
  require(w.in_features == p * p * x.c(),
          "patch_embed: weights expect " + std::to_string(w.in_features) + " inputs, patch has " +
              std::to_string(p * p * x.c()));
}

}  // namespace

Tensor4 patch_embed(const Tensor4& x, int patch, const LinearWeights& w) {
  check_patch(x, patch, w);
  if (patch == 1) return channel_linear(x, w);
  return channel_linear(patchify(x, patch), w);
}

KernelGrads patch_embed_backward(const Tensor4& x, int patch, const LinearWeights& w,
                                 const Tensor4& dy) {
  check_patch(x, patch, w);
  if (patch == 1) return channel_linear_backward(x, w, dy);
  KernelGrads g = channel_linear_backward(patchify(x, patch), w, dy);
  g.dx = unpatchify(g.dx, patch, x.shape());
  return g;
}

// ---------------------------------------------------------------------------
// layer norm

Tensor4 layer_norm(const Tensor4& x, std::span<const double> gamma, std::span<const double> beta,
                   double eps) {
  const int C = x.c();
  require(gamma.size() == static_cast<std::size_t>(C) && beta.size() == static_cast<std::size_t>(C),
          "layer_norm: gamma/beta length must equal channel count " + std::to_string(C));
  require(eps > 0.0, "layer_norm: eps must be positive");
  Tensor4 out(x.shape());
  const std::size_t tokens = x.size() / C;
#pragma omp parallel for schedule(static) if (g_num_threads > 1)
  for (std::size_t t = 0; t < tokens; ++t) {
    const double* v = x.ptr() + t * C;
    double* o = out.ptr() + t * C;
    double mean = 0.0;
    for (int c = 0; c < C; ++c) mean += v[c];
    mean /= C;
    double var = 0.0;
    for (int c = 0; c < C; ++c) var += (v[c] - mean) * (v[c] - mean);
    var /= C;
    const double inv = 1.0 / std::sqrt(var + eps);
    for (int c = 0; c < C; ++c) o[c] = (v[c] - mean) * inv * gamma[c] + beta[c];
  }
  return out;
}

NormGrads layer_norm_backward(const Tensor4& x, std::span<const double> gamma, double eps,
                              const Tensor4& dy) {
  const int C = x.c();
  require(gamma.size() == static_cast<std::size_t>(C) && dy.shape() == x.shape(),
          "layer_norm_backward: shape mismatch");
  NormGrads g{Tensor4(x.shape()), std::vector<double>(C, 0.0), std::vector<double>(C, 0.0)};
  const std::size_t tokens = x.size() / C;
  std::vector<double> xhat(C), gxhat(C);
  for (std::size_t t = 0; t < tokens; ++t) {
    const double* v = x.ptr() + t * C;
    const double* go = dy.ptr() + t * C;
    double* gi = g.dx.ptr() + t * C;
    double mean = 0.0;
    for (int c = 0; c < C; ++c) mean += v[c];
    mean /= C;
    double var = 0.0;
    for (int c = 0; c < C; ++c) var += (v[c] - mean) * (v[c] - mean);
    var /= C;
    const double inv = 1.0 / std::sqrt(var + eps);
    double sum_g = 0.0, sum_gx = 0.0;
    for (int c = 0; c < C; ++c) {
      xhat[c] = (v[c] - mean) * inv;
      gxhat[c] = go[c] * gamma[c];
      g.dgamma[c] += go[c] * xhat[c];
      g.dbeta[c] += go[c];
      sum_g += gxhat[c];
      sum_gx += gxhat[c] * xhat[c];
    }
    for (int c = 0; c < C; ++c) gi[c] = inv * (gxhat[c] - sum_g / C - xhat[c] * sum_gx / C);
  }
  return g;
}

// ---------------------------------------------------------------------------
// gelu

double gelu(double x) { return 0.5 * x * std::erfc(-x * std::numbers::sqrt2 / 2.0); }

double gelu_derivative(double x) {
  const double cdf = 0.5 * std::erfc(-x * std::numbers::sqrt2 / 2.0);
  const double pdf = std::exp(-0.5 * x * x) * std::numbers::inv_sqrtpi / std::numbers::sqrt2;
  return cdf + x * pdf;
}

Tensor4 gelu(const Tensor4& x) {
  Tensor4 out(x.shape());
  for (std::size_t k = 0; k < x.size(); ++k) out[k] = gelu(x[k]);
  return out;
}

Tensor4 gelu_backward(const Tensor4& x, const Tensor4& dy) {
  require(dy.shape() == x.shape(), "gelu_backward: shape mismatch");
  Tensor4 out(x.shape());
  for (std::size_t k = 0; k < x.size(); ++k) out[k] = gelu_derivative(x[k]) * dy[k];
  return out;
}

// ---------------------------------------------------------------------------
// pooling

Tensor4 global_avg_pool(const Tensor4& x) {
  Tensor4 out({x.n(), 1, 1, x.c()});
  const double scale = 1.0 / (static_cast<double>(x.h()) * x.w());
  for (int b = 0; b < x.n(); ++b) {
    double* o = out.ptr() + out.index(b, 0, 0, 0);
    for (int i = 0; i < x.h(); ++i)
      for (int j = 0; j < x.w(); ++j) {
        const double* v = x.ptr() + x.index(b, i, j, 0);
        for (int c = 0; c < x.c(); ++c) o[c] += v[c];
      }
    for (int c = 0; c < x.c(); ++c) o[c] *= scale;
  }
  return out;
}

Tensor4 global_avg_pool_backward(const Shape4& input_shape, const Tensor4& dy) {
  require(dy.n() == input_shape.n && dy.c() == input_shape.c && dy.h() == 1 && dy.w() == 1,
          "global_avg_pool_backward: shape mismatch");
  Tensor4 dx(input_shape);
  const double scale = 1.0 / (static_cast<double>(input_shape.h) * input_shape.w);
  for (int b = 0; b < input_shape.n; ++b)
    for (int i = 0; i < input_shape.h; ++i)
      for (int j = 0; j < input_shape.w; ++j)
        for (int c = 0; c < input_shape.c; ++c) dx.at(b, i, j, c) = dy.at(b, 0, 0, c) * scale;
  return dx;
}

// ---------------------------------------------------------------------------
// channel groups

std::vector<int> balanced_group_widths(int channels, int groups) {
  require(groups >= 1, "balanced_group_widths: group count must be >= 1");
  require(channels >= groups, "balanced_group_widths: " + std::to_string(channels) +
                                  " channels cannot form " + std::to_string(groups) + " groups");
  std::vector<int> widths(groups, channels / groups);
  for (int g = 0; g < channels % groups; ++g) ++widths[g];
  return widths;
}

std::vector<Tensor4> split_channels(const Tensor4& x, int groups) {
  require(groups >= 1, "split_channels: group count must be >= 1");
  require(x.c() % groups == 0, "split_channels: " + std::to_string(x.c()) +
                                   " channels are not divisible into " + std::to_string(groups) +
                                   " equal groups");
  std::vector<int> widths(groups, x.c() / groups);
  return split_channels(x, widths);
}

std::vector<Tensor4> split_channels(const Tensor4& x, std::span<const int> widths) {
  int total = 0;
  for (int w : widths) {
    require(w >= 1, "split_channels: group widths must be >= 1");
    total += w;
  }
  require(total == x.c(), "split_channels: widths sum to " + std::to_string(total) + ", input has " +
                              std::to_string(x.c()) + " channels");
  std::vector<Tensor4> parts;
  parts.reserve(widths.size());
  const std::size_t tokens = x.size() / x.c();
  int offset = 0;
  for (int w : widths) {
    Tensor4 part({x.n(), x.h(), x.w(), w});
    for (std::size_t t = 0; t < tokens; ++t) {
      const double* src = x.ptr() + t * x.c() + offset;
      std::copy(src, src + w, part.ptr() + t * w);
    }
    parts.push_back(std::move(part));
    offset += w;
  }
  return parts;
}

Tensor4 concat_channels(std::span<const Tensor4> parts) {
  require(!parts.empty(), "concat_channels: nothing to concatenate");
  const Shape4 s0 = parts[0].shape();
  int total = 0;
  for (const auto& p : parts) {
    require(p.n() == s0.n && p.h() == s0.h && p.w() == s0.w, "concat_channels: spatial mismatch");
    total += p.c();
  }
  Tensor4 out({s0.n, s0.h, s0.w, total});
  const std::size_t tokens = out.size() / total;
  int offset = 0;
  for (const auto& p : parts) {
    for (std::size_t t = 0; t < tokens; ++t) {
      const double* src = p.ptr() + t * p.c();
      std::copy(src, src + p.c(), out.ptr() + t * total + offset);
    }
    offset += p.c();
  }
  return out;
}

}  // namespace msmlp
