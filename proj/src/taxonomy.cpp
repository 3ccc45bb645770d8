#include "msmlp/taxonomy.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cstdlib>
#include <stdexcept>
#include <string>

namespace msmlp {

namespace {
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;
using ConstStridedMap = Eigen::Map<const RowMatrix, 0, Eigen::OuterStride<>>;
}  // namespace

Tensor4 multi_shift(const Tensor4& x, std::span<const int> widths, std::span<const int> offsets,
                    Axis axis) {
  if (widths.size() != offsets.size()) {
    throw std::invalid_argument("multi_shift: need one offset per group");
  }
  std::vector<Tensor4> groups = split_channels(x, widths);
  for (std::size_t n = 0; n < groups.size(); ++n) {
    groups[n] = shift2d_unchecked(groups[n], -offsets[n], axis);
  }
  return concat_channels(groups);
}

TokenMixingWeights::TokenMixingWeights(int tokens_, bool with_bias) : tokens(tokens_) {
  if (tokens < 1) throw std::invalid_argument("TokenMixingWeights: tokens must be >= 1");
  weight.assign(static_cast<std::size_t>(tokens) * tokens, 0.0);
  if (with_bias) bias.assign(tokens, 0.0);
}

Tensor4 global_mix(const Tensor4& x, const TokenMixingWeights& w) {
  const int T = x.h() * x.w();
  if (w.tokens != T) {
    throw std::invalid_argument("global_mix: weights mix " + std::to_string(w.tokens) +
                                " tokens, input has " + std::to_string(T));
  }
  Tensor4 out(x.shape());
  ConstMatrixMap Wm(w.weight.data(), T, T);
  for (int b = 0; b < x.n(); ++b) {
    ConstMatrixMap X(x.ptr() + x.index(b, 0, 0, 0), T, x.c());
    MatrixMap Y(out.ptr() + out.index(b, 0, 0, 0), T, x.c());
    Y.noalias() = Wm * X;
    if (!w.bias.empty()) Y.colwise() += Eigen::Map<const Eigen::VectorXd>(w.bias.data(), T);
  }
  return out;
}

Tensor4 global_mix_tiled(const Tensor4& x, std::span<const double> tile, int tile_size) {
  if (tile_size < 1 || tile.size() != static_cast<std::size_t>(tile_size) * tile_size) {
    throw std::invalid_argument("global_mix_tiled: tile must hold tile_size^2 entries");
  }
  const int T = x.h() * x.w(), C = x.c();
  Tensor4 out(x.shape());
  for (int b = 0; b < x.n(); ++b) {
    ConstMatrixMap X(x.ptr() + x.index(b, 0, 0, 0), T, C);
    MatrixMap Y(out.ptr() + out.index(b, 0, 0, 0), T, C);
    for (int p0 = 0; p0 < T; p0 += tile_size) {
      const int bp = std::min(tile_size, T - p0);
      for (int q0 = 0; q0 < T; q0 += tile_size) {
        const int bq = std::min(tile_size, T - q0);
        ConstStridedMap Wt(tile.data(), bp, bq, Eigen::OuterStride<>(tile_size));
        Y.middleRows(p0, bp).noalias() += Wt * X.middleRows(q0, bq);
      }
    }
  }
  return out;
}

Tensor4 local_mix(const Tensor4& x, std::span<const int> widths, std::span<const int> offsets,
                  Axis axis, const LinearWeights& projection) {
  return channel_linear(multi_shift(x, widths, offsets, axis), projection);
}

}  // namespace msmlp
