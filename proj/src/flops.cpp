#include "msmlp/flops.hpp"

#include <stdexcept>

namespace msmlp {

namespace {

using u64 = std::uint64_t;

u64 mul(u64 a, u64 b) {
  u64 out = 0;
  if (__builtin_mul_overflow(a, b, &out)) throw std::overflow_error("complexity: 64-bit overflow");
  return out;
}

u64 add(u64 a, u64 b) {
  u64 out = 0;
  if (__builtin_add_overflow(a, b, &out)) throw std::overflow_error("complexity: 64-bit overflow");
  return out;
}

u64 positive(std::int64_t v, const char* field, const char* method) {
  if (v <= 0) {
    throw std::invalid_argument(std::string(method) + ": field " + field + " must be positive");
  }
  return static_cast<u64>(v);
}

u64 sum_sq(const std::vector<std::int64_t>& r, const char* method) {
  if (r.empty()) throw std::invalid_argument(std::string(method) + ": field r is required");
  u64 s = 0;
  for (auto v : r) {
    const u64 rv = positive(v, "r", method);
    s = add(s, mul(rv, rv));
  }
  return s;
}

struct Linear {
  std::int64_t in, out;
  bool bias = true;
  u64 params() const { return static_cast<u64>(in * out + (bias ? out : 0)); }
  u64 macs(u64 tokens) const { return mul(tokens, static_cast<u64>(in * out)); }
};

}  // namespace

const char* to_string(MixingMethod m) {
  switch (m) {
    case MixingMethod::msa: return "MSA";
    case MixingMethod::w_msa: return "W-MSA";
    case MixingMethod::f_msa: return "F-MSA";
    case MixingMethod::global_mix: return "global-mix";
    case MixingMethod::axial_shift: return "axial-shift";
    case MixingMethod::mix_shift: return "mix-shift";
  }
  return "?";
}

MixingMethod mixing_method_from_string(const std::string& s) {
  if (s == "MSA" || s == "msa") return MixingMethod::msa;
  if (s == "W-MSA" || s == "w-msa") return MixingMethod::w_msa;
  if (s == "F-MSA" || s == "f-msa") return MixingMethod::f_msa;
  if (s == "global-mix" || s == "GM") return MixingMethod::global_mix;
  if (s == "axial-shift" || s == "AS") return MixingMethod::axial_shift;
  if (s == "mix-shift" || s == "MS") return MixingMethod::mix_shift;
  throw std::invalid_argument("unknown mixing method '" + s + "'");
}

std::uint64_t complexity_formula(const ComplexityQuery& q) {
  const char* name = to_string(q.method);
  switch (q.method) {
    case MixingMethod::msa: {
      const u64 hw = mul(positive(q.H, "H", name), positive(q.W, "W", name));
      return mul(mul(2, mul(hw, hw)), positive(q.C, "C", name));
    }
    case MixingMethod::w_msa: {
      const u64 m = positive(q.M, "M", name);
      const u64 hwc = mul(mul(positive(q.H, "H", name), positive(q.W, "W", name)), positive(q.C, "C", name));
      return mul(mul(2, mul(m, m)), hwc);
    }
    case MixingMethod::f_msa: {
      const u64 factor = add(positive(q.S, "S", name), sum_sq(q.r, name));
      const u64 hwc = mul(mul(positive(q.H, "H", name), positive(q.W, "W", name)), positive(q.C, "C", name));
      return mul(mul(factor, positive(q.M, "M", name)), hwc);
    }
    case MixingMethod::global_mix: {
      const u64 hw = mul(positive(q.H, "H", name), positive(q.W, "W", name));
      return mul(mul(hw, hw), positive(q.C, "C", name));
    }
    case MixingMethod::axial_shift:
      return positive(q.S, "S", name);
    case MixingMethod::mix_shift:
      return sum_sq(q.r, name);
  }
  throw std::invalid_argument("complexity_formula: unknown method");
}

void FlopsReport::add(std::string name, std::uint64_t macs, std::uint64_t params) {
  rows.push_back({std::move(name), macs, params});
  total_macs += macs;
  total_params += params;
}

std::uint64_t mix_shift_macs(const MixShiftSpec& spec, std::int64_t h, std::int64_t w, std::int64_t c) {
  spec.validate();
  const u64 tokens = static_cast<u64>(h * w);
  const std::vector<int> widths = mix_shift_group_widths(static_cast<int>(c), spec.S());
  u64 per_branch = 0;
  if (spec.projection == Projection::pre_post) per_branch += Linear{c, c}.macs(tokens);
  if (spec.projection != Projection::none) per_branch += Linear{c, c}.macs(tokens);
  for (int n = 0; n < spec.S(); ++n) {
    const u64 rr = static_cast<u64>(spec.r[n]) * spec.r[n];
    const u64 width = static_cast<u64>(widths[n]);
    per_branch += mul(tokens, mul(spec.conv_type == ConvType::depthwise ? width : width * width, rr));
  }
  return mul(per_branch, spec.branch_axes().size());
}

FlopsReport count_flops(const ModelSpec& spec, int image_size, const FlopsOptions& options) {
  spec.validate();
  FlopsReport rep;
  const std::vector<int> res = spec.stage_resolutions(image_size);
  std::int64_t in_ch = spec.in_channels;
  for (std::size_t s = 0; s < spec.stages.size(); ++s) {
    const StageSpec& st = spec.stages[s];
    const std::string sp = "stages." + std::to_string(s) + ".";
    const std::int64_t C = st.out_channels;
    const u64 tokens = static_cast<u64>(res[s]) * res[s];
    const Linear embed{static_cast<std::int64_t>(st.patch_ratio) * st.patch_ratio * in_ch, C};
    rep.add(sp + "embed", options.include_patch_embed ? embed.macs(tokens) : 0, embed.params());

    MixShiftSpec ms = st.mixshift;
    if (options.axis_override) ms.axis_mode = *options.axis_override;
    const std::vector<int> widths = mix_shift_group_widths(static_cast<int>(C), ms.S());
    for (int b = 0; b < st.num_blocks; ++b) {
      const std::string bp = sp + "blocks." + std::to_string(b) + ".";
      rep.add(bp + "norm1", 0, static_cast<u64>(2 * C));
      for (Axis axis : ms.branch_axes()) {
        const std::string mp = bp + "mix." + (axis == Axis::horizontal ? "h." : "v.");
        if (ms.projection == Projection::pre_post) {
          rep.add(mp + "pre", Linear{C, C}.macs(tokens), Linear{C, C}.params());
        }
        for (int n = 0; n < ms.S(); ++n) {
          const u64 rr = static_cast<u64>(ms.r[n]) * ms.r[n];
          const u64 width = static_cast<u64>(widths[n]);
          const u64 fan = ms.conv_type == ConvType::depthwise ? width : width * width;
          rep.add(mp + "groups." + std::to_string(n), mul(tokens, mul(fan, rr)), fan * rr + width);
        }
        if (ms.projection != Projection::none) {
          rep.add(mp + "post", Linear{C, C}.macs(tokens), Linear{C, C}.params());
        }
      }
      rep.add(bp + "norm2", 0, static_cast<u64>(2 * C));
      const Linear fc1{C, st.mlp_ratio * C}, fc2{st.mlp_ratio * C, C};
      rep.add(bp + "mlp.fc1", fc1.macs(tokens), fc1.params());
      rep.add(bp + "mlp.fc2", fc2.macs(tokens), fc2.params());
    }
    in_ch = C;
  }
  rep.add("norm", 0, static_cast<u64>(2 * in_ch));
  const Linear head{in_ch, spec.num_classes};
  rep.add("head", options.include_head ? head.macs(1) : 0, head.params());
  return rep;
}

FlopsReport count_params(const ModelSpec& spec) { return count_flops(spec, spec.image_size); }

}  // namespace msmlp
