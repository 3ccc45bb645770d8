#pragma once

// Reference operators for the other two token-mixing families: global mixing
// (one dense token-by-token matrix shared by all channels) and local mixing
// (channel-group shifts followed by a channel projection).

#include <span>
#include <vector>

#include "msmlp/ops.hpp"
#include "msmlp/tensor.hpp"

namespace msmlp {

/// Group n (widths[n] channels) is translated by -offsets[n] along `axis`,
/// zero-filled. Offsets at or beyond the extent produce zero groups.
Tensor4 multi_shift(const Tensor4& x, std::span<const int> widths, std::span<const int> offsets,
                    Axis axis);

/// Token-mixing weights over the flattened h*w token axis: out[p] = sum_q W[p,q] x[q] + bias[p].
struct TokenMixingWeights {
  int tokens = 0;
  std::vector<double> weight;  // tokens x tokens, row-major
  std::vector<double> bias;    // tokens or empty

  TokenMixingWeights() = default;
  TokenMixingWeights(int tokens, bool with_bias);
};

Tensor4 global_mix(const Tensor4& x, const TokenMixingWeights& w);

/// Dense global mixing whose implicit tokens x tokens matrix repeats a
/// tile x tile block: W[p,q] = tile[p % t, q % t]. Work is still (hw)^2 * c,
/// but memory stays bounded so large maps can be benchmarked.
Tensor4 global_mix_tiled(const Tensor4& x, std::span<const double> tile, int tile_size);

/// Local mixing (axial-shift family): multi_shift then a channel projection.
Tensor4 local_mix(const Tensor4& x, std::span<const int> widths, std::span<const int> offsets,
                  Axis axis, const LinearWeights& projection);

}  // namespace msmlp
