#pragma once

// Forward primitives and their vector-Jacobian products. Every function here
// is pure: outputs depend only on the arguments.

#include <span>
#include <vector>

#include "msmlp/tensor.hpp"

namespace msmlp {

enum class Axis { horizontal, vertical };

const char* to_string(Axis axis);

/// Per-channel r x r filters, weight laid out as (c, r, r). Bias is optional.
struct DepthwiseKernel {
  int channels = 0;
  int region = 1;
  Parameter weight;
  Parameter bias;

  DepthwiseKernel() = default;
  DepthwiseKernel(int channels, int region, bool with_bias = true);

  /// Center tap 1, everything else (and the bias) 0.
  static DepthwiseKernel delta(int channels, int region, bool with_bias = true);
  bool has_bias() const { return !bias.empty(); }
};

/// Dense r x r convolution mixing all channels of a group, weight laid out as
/// (c_out, c_in, r, r) with c_out == c_in == channels.
struct FullKernel {
  int channels = 0;
  int region = 1;
  Parameter weight;
  Parameter bias;

  FullKernel() = default;
  FullKernel(int channels, int region, bool with_bias = true);

  static FullKernel delta(int channels, int region, bool with_bias = true);
  bool has_bias() const { return !bias.empty(); }
};

/// y = W x + b applied to every token's channel vector; weight is (out, in).
struct LinearWeights {
  int in_features = 0;
  int out_features = 0;
  Parameter weight;
  Parameter bias;

  LinearWeights() = default;
  LinearWeights(int in_features, int out_features, bool with_bias = true);

  static LinearWeights identity(int features, bool with_bias = true);
  bool has_bias() const { return !bias.empty(); }
};

struct NormAffine {
  Parameter gamma;
  Parameter beta;

  NormAffine() = default;
  explicit NormAffine(int channels);
  int channels() const { return static_cast<int>(gamma.size()); }
};

inline constexpr double kLayerNormEps = 1e-5;

// ---------------------------------------------------------------------------
// shift

/// out[n,i,j,c] = x[n,i-offset,j,c] (vertical) or x[n,i,j-offset,c]
/// (horizontal); vacated tokens are zero. Requires |offset| < extent.
Tensor4 shift2d(const Tensor4& x, int offset, Axis axis);

/// Same as shift2d but any offset is accepted; offsets that push everything
/// out of range yield zeros.
Tensor4 shift2d_unchecked(const Tensor4& x, int offset, Axis axis);

// ---------------------------------------------------------------------------
// convolutions (stride 1, zero "same" padding of (r-1)/2)

Tensor4 depthwise_conv2d(const Tensor4& x, const DepthwiseKernel& k);

struct KernelGrads {
  Tensor4 dx;
  std::vector<double> dweight;
  std::vector<double> dbias;
};

KernelGrads depthwise_conv2d_backward(const Tensor4& x, const DepthwiseKernel& k,
                                      const Tensor4& dy);

Tensor4 full_conv2d(const Tensor4& x, const FullKernel& k);
KernelGrads full_conv2d_backward(const Tensor4& x, const FullKernel& k, const Tensor4& dy);

// ---------------------------------------------------------------------------
// per-token linear maps

Tensor4 channel_linear(const Tensor4& x, const LinearWeights& w);
KernelGrads channel_linear_backward(const Tensor4& x, const LinearWeights& w,
                                    const Tensor4& dy);

/// Non-overlapping p x p patches flattened as (py, px, c_in) and projected by
/// w (out, p*p*c_in). Output (n, h/p, w/p, out).
Tensor4 patch_embed(const Tensor4& x, int patch, const LinearWeights& w);
KernelGrads patch_embed_backward(const Tensor4& x, int patch, const LinearWeights& w,
                                 const Tensor4& dy);

// ---------------------------------------------------------------------------
// normalization / activation / pooling

Tensor4 layer_norm(const Tensor4& x, std::span<const double> gamma,
                   std::span<const double> beta, double eps = kLayerNormEps);

struct NormGrads {
  Tensor4 dx;
  std::vector<double> dgamma;
  std::vector<double> dbeta;
};

NormGrads layer_norm_backward(const Tensor4& x, std::span<const double> gamma, double eps,
                              const Tensor4& dy);

double gelu(double x);
double gelu_derivative(double x);
Tensor4 gelu(const Tensor4& x);
Tensor4 gelu_backward(const Tensor4& x, const Tensor4& dy);

/// Mean over (h, w); result has shape (n, 1, 1, c).
Tensor4 global_avg_pool(const Tensor4& x);
Tensor4 global_avg_pool_backward(const Shape4& input_shape, const Tensor4& dy);

// ---------------------------------------------------------------------------
// channel groups

/// Equal split into `groups` slices; channel count must divide evenly.
std::vector<Tensor4> split_channels(const Tensor4& x, int groups);
/// Split into consecutive slices of the given widths (must sum to x.c()).
std::vector<Tensor4> split_channels(const Tensor4& x, std::span<const int> widths);
Tensor4 concat_channels(std::span<const Tensor4> parts);

/// Balanced widths for `groups` slices of `channels`: the first channels % groups
/// slices get one extra channel. Requires channels >= groups >= 1.
std::vector<int> balanced_group_widths(int channels, int groups);

// ---------------------------------------------------------------------------
// threading

/// Thread count used by the data-parallel forward loops (1 = serial).
void set_num_threads(int threads);
int num_threads();

}  // namespace msmlp
