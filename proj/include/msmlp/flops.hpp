#pragma once

// Complexity formulas for the token-interaction families and exact
// multiply-accumulate / parameter tallies for model specs.
//
// Counting convention: 1 FLOP = 1 MAC. Linear layers cost tokens*C_in*C_out,
// depthwise convs tokens*C*r^2, full convs tokens*C^2*r^2 per group, patch
// embeddings (h/p)(w/p)*p^2*C_in*C_out. Bias adds, norms, activations,
// residual adds, shifts and pooling cost nothing. Parameters count every
// stored scalar, biases and norm affines included.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "msmlp/mixshift.hpp"
#include "msmlp/model.hpp"

namespace msmlp {

enum class MixingMethod { msa, w_msa, f_msa, global_mix, axial_shift, mix_shift };

const char* to_string(MixingMethod m);
MixingMethod mixing_method_from_string(const std::string& s);

struct ComplexityQuery {
  MixingMethod method = MixingMethod::mix_shift;
  std::int64_t H = 0, W = 0, C = 0;
  std::int64_t M = 0;  // window size, windowed attention only
  std::int64_t S = 0;
  std::vector<std::int64_t> r;
};

/// The formula value with constants as printed in the comparison table:
///   MSA 2(HW)^2 C, W-MSA 2 M^2 HWC, F-MSA (S + sum r^2) M HWC,
///   global-mix (HW)^2 C, axial-shift S, mix-shift sum r^2.
/// The last two are per-token-per-channel factors, not totals.
/// Throws std::invalid_argument on missing fields, std::overflow_error on overflow.
std::uint64_t complexity_formula(const ComplexityQuery& q);

struct FlopsRow {
  std::string name;
  std::uint64_t macs = 0;
  std::uint64_t params = 0;
  bool operator==(const FlopsRow&) const = default;
};

struct FlopsReport {
  std::vector<FlopsRow> rows;
  std::uint64_t total_macs = 0;
  std::uint64_t total_params = 0;

  void add(std::string name, std::uint64_t macs, std::uint64_t params);
};

struct FlopsOptions {
  bool include_patch_embed = true;
  bool include_head = true;
  /// Count every block as if it used this axis mode.
  std::optional<AxisMode> axis_override;
};

FlopsReport count_flops(const ModelSpec& spec, int image_size, const FlopsOptions& options = {});
/// Same tallies at the spec's own image size; parameters do not depend on it.
FlopsReport count_params(const ModelSpec& spec);

/// MACs of one mix-shift operator on an h x w x c map.
std::uint64_t mix_shift_macs(const MixShiftSpec& spec, std::int64_t h, std::int64_t w, std::int64_t c);

}  // namespace msmlp
