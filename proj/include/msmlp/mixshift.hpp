#pragma once

// Regional token mixing by mixing and shifting.
//
// The channels are split into S groups. Group n is mixed over an r[n] x r[n]
// region by its own convolution, then translated by -d[n] along the branch
// axis so the region centered at (i + d[n]) lands on token i. The groups are
// concatenated again, optionally wrapped in C -> C projections. Group 0 is the
// query group (d = 0, usually r = 1).

#include <string>
#include <variant>
#include <vector>

#include "msmlp/autograd.hpp"
#include "msmlp/ops.hpp"
#include "msmlp/tensor.hpp"

namespace msmlp {

enum class AxisMode { horizontal, vertical, dual };
enum class ConvType { depthwise, full };
/// Which C -> C projections wrap the grouped mixing inside each branch.
enum class Projection { none, post, pre_post };

const char* to_string(AxisMode mode);
const char* to_string(ConvType type);
const char* to_string(Projection projection);
AxisMode axis_mode_from_string(const std::string& s);
ConvType conv_type_from_string(const std::string& s);
Projection projection_from_string(const std::string& s);

struct MixShiftSpec {
  std::vector<int> d;
  std::vector<int> r;
  AxisMode axis_mode = AxisMode::dual;
  ConvType conv_type = ConvType::depthwise;
  Projection projection = Projection::pre_post;

  int S() const { return static_cast<int>(d.size()); }
  /// Throws std::invalid_argument when an invariant is broken.
  void validate() const;
  std::vector<Axis> branch_axes() const;
  /// Largest reach of any group along the branch axis: max |d| + (r-1)/2.
  int reach() const;

  bool operator==(const MixShiftSpec&) const = default;
};

using RegionMixer = std::variant<DepthwiseKernel, FullKernel>;

struct MixShiftBranch {
  Axis axis = Axis::horizontal;
  std::vector<LinearWeights> pre;   // 0 or 1 entries
  std::vector<LinearWeights> post;  // 0 or 1 entries
  std::vector<RegionMixer> mixers;  // one per group

  bool has_pre() const { return !pre.empty(); }
  bool has_post() const { return !post.empty(); }
};

struct MixShiftParams {
  int channels = 0;
  std::vector<int> widths;
  std::vector<MixShiftBranch> branches;  // horizontal first in dual mode
};

/// Group widths used by the operator: equal when S divides C, otherwise the
/// first C % S groups are one channel wider.
std::vector<int> mix_shift_group_widths(int channels, int groups);

/// Zero-initialised parameters shaped for (spec, channels).
MixShiftParams make_mix_shift_params(const MixShiftSpec& spec, int channels, bool bias = true);
/// Delta kernels, identity projections, zero biases: the operator reduces to
/// a pure multi-offset group shift.
MixShiftParams identity_mix_shift_params(const MixShiftSpec& spec, int channels);
/// Truncated-normal weights (std `stddev`), biases filled with `bias_stddev` noise.
void randomize(MixShiftParams& params, Rng& rng, double stddev, double bias_stddev = 0.0);

void check_params(const MixShiftSpec& spec, const MixShiftParams& params, int channels);

Tensor4 mix_shift_branch(const Tensor4& x, const MixShiftSpec& spec, const MixShiftParams& params,
                         const MixShiftBranch& branch);
Var mix_shift_branch(const Var& x, const MixShiftSpec& spec, const MixShiftParams& params,
                     MixShiftBranch& branch);

/// Index-by-index transcription: every output token gathers the r[n] x r[n]
/// window centered d[n] tokens away along the branch axis. Shares no code with
/// the optimized path.
Tensor4 mix_shift_reference(const Tensor4& x, const MixShiftSpec& spec,
                            const MixShiftParams& params, const MixShiftBranch& branch);

/// Single branch for one-axis modes, sum of both branches for dual mode.
Tensor4 mix_shift_forward(const Tensor4& x, const MixShiftSpec& spec, const MixShiftParams& params);
Var mix_shift_forward(const Var& x, const MixShiftSpec& spec, MixShiftParams& params);
Tensor4 mix_shift_forward_reference(const Tensor4& x, const MixShiftSpec& spec,
                                    const MixShiftParams& params);

/// Visits every learnable array with a dotted name relative to the operator.
template <typename Fn>
void for_each_parameter(MixShiftParams& params, const std::string& prefix, Fn&& fn) {
  for (auto& br : params.branches) {
    const std::string base = prefix + (br.axis == Axis::horizontal ? "h." : "v.");
    for (auto& w : br.pre) {
      fn(base + "pre.weight", w.weight);
      if (w.has_bias()) fn(base + "pre.bias", w.bias);
    }
    for (std::size_t g = 0; g < br.mixers.size(); ++g) {
      const std::string gname = base + "groups." + std::to_string(g) + ".";
      std::visit(
          [&](auto& k) {
            fn(gname + "weight", k.weight);
            if (k.has_bias()) fn(gname + "bias", k.bias);
          },
          br.mixers[g]);
    }
    for (auto& w : br.post) {
      fn(base + "post.weight", w.weight);
      if (w.has_bias()) fn(base + "post.bias", w.bias);
    }
  }
}

}  // namespace msmlp
