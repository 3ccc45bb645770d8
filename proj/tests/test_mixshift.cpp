#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "msmlp/checks.hpp"
#include "msmlp/mixshift.hpp"
#include "msmlp/serialize.hpp"
#include "msmlp/taxonomy.hpp"
#include "oracles.hpp"

using namespace msmlp;

namespace {

MixShiftSpec spec_of(std::vector<int> d, std::vector<int> r, AxisMode mode, ConvType conv = ConvType::depthwise,
                     Projection proj = Projection::pre_post) {
  MixShiftSpec s;
  s.d = std::move(d);
  s.r = std::move(r);
  s.axis_mode = mode;
  s.conv_type = conv;
  s.projection = proj;
  return s;
}

MixShiftParams random_params(const MixShiftSpec& spec, int C, std::uint64_t seed, double bias_std = 0.1) {
  Rng rng(seed);
  MixShiftParams p = make_mix_shift_params(spec, C, true);
  randomize(p, rng, 0.5, bias_std);
  return p;
}

double max_dev(const Tensor4& a, const Tensor4& b) { return max_abs_diff(a.data(), b.data()); }

}  // namespace

TEST(MixShiftSpec, Validation) {
  EXPECT_NO_THROW(spec_of({0, 1, 2}, {1, 3, 5}, AxisMode::dual).validate());
  EXPECT_THROW(spec_of({}, {}, AxisMode::dual).validate(), std::invalid_argument);
  EXPECT_THROW(spec_of({0, 1}, {1}, AxisMode::dual).validate(), std::invalid_argument);
  EXPECT_THROW(spec_of({1, 1}, {1, 3}, AxisMode::dual).validate(), std::invalid_argument);
  EXPECT_THROW(spec_of({0, 1}, {1, 2}, AxisMode::dual).validate(), std::invalid_argument);
  // a mixed query group is allowed (the global-region ablation uses r = 7 everywhere)
  EXPECT_NO_THROW(spec_of({0, 1}, {7, 7}, AxisMode::dual).validate());
}

TEST(MixShiftSpec, ReachAndBranches) {
  EXPECT_EQ(spec_of({0, 1, 2, 3, 4}, {1, 1, 3, 5, 7}, AxisMode::dual).reach(), 7);
  EXPECT_EQ(spec_of({0, -6}, {1, 1}, AxisMode::dual).reach(), 6);
  EXPECT_EQ(spec_of({0}, {1}, AxisMode::vertical).branch_axes(), std::vector<Axis>{Axis::vertical});
  EXPECT_EQ(spec_of({0}, {1}, AxisMode::dual).branch_axes().size(), 2u);
}

TEST(MixShiftSpec, JsonRoundTrip) {
  const MixShiftSpec s = spec_of({0, -2, 5}, {1, 3, 7}, AxisMode::vertical, ConvType::full, Projection::post);
  EXPECT_EQ(mix_shift_spec_from_string(to_json_string(s)), s);
}

TEST(MixShift, ParamShapes) {
  const MixShiftSpec s = spec_of({0, 1, 2}, {1, 3, 5}, AxisMode::dual);
  const MixShiftParams p = make_mix_shift_params(s, 10, true);
  EXPECT_EQ(p.widths, (std::vector<int>{4, 3, 3}));
  ASSERT_EQ(p.branches.size(), 2u);
  EXPECT_EQ(p.branches[0].axis, Axis::horizontal);
  EXPECT_TRUE(p.branches[0].has_pre());
  EXPECT_TRUE(p.branches[0].has_post());
  EXPECT_NO_THROW(check_params(s, p, 10));
  EXPECT_THROW(check_params(s, p, 12), std::invalid_argument);
}

// S = 1 with identity everything: the operator is the identity map per branch.
TEST(MixShift, SingleGroupIdentity) {
  Rng rng(3);
  const Tensor4 x = random_tensor({2, 5, 6, 4}, rng);
  for (AxisMode m : {AxisMode::horizontal, AxisMode::vertical}) {
    const MixShiftSpec s = spec_of({0}, {1}, m);
    const Tensor4 y = mix_shift_forward(x, s, identity_mix_shift_params(s, 4));
    EXPECT_EQ(max_dev(y, x), 0.0);
  }
}

// Region sizes all 1, delta kernels, identity projections: a pure multi-offset shift.
TEST(MixShift, ReducesToAxialShift) {
  Rng rng(4);
  const Tensor4 x = random_tensor({2, 9, 11, 10}, rng);
  const std::vector<int> d{0, 1, 2, 3, 4};
  for (AxisMode m : {AxisMode::horizontal, AxisMode::vertical}) {
    const MixShiftSpec s = spec_of(d, {1, 1, 1, 1, 1}, m);
    const MixShiftParams p = identity_mix_shift_params(s, 10);
    const Axis axis = m == AxisMode::horizontal ? Axis::horizontal : Axis::vertical;
    const Tensor4 expected = multi_shift(x, p.widths, d, axis);
    EXPECT_TRUE(bitwise_equal(mix_shift_forward(x, s, p).data(), expected.data()));
    EXPECT_TRUE(bitwise_equal(mix_shift_forward_reference(x, s, p).data(), expected.data()));
  }
}

// The same composition assembled from the loop oracles, no library operator involved.
TEST(MixShift, MatchesLoopComposition) {
  Rng rng(5);
  const Tensor4 x = random_tensor({1, 9, 9, 10}, rng);
  const MixShiftSpec s = spec_of({0, 1, 2, 3, 4}, {1, 1, 3, 5, 7}, AxisMode::horizontal);
  const MixShiftParams p = random_params(s, 10, 6);
  const MixShiftBranch& br = p.branches[0];

  Tensor4 u = oracle::linear(x, br.pre[0].weight.value, br.pre[0].bias.value, 10);
  Tensor4 mixed(u.shape());
  int c0 = 0;
  for (int n = 0; n < s.S(); ++n) {
    const int wn = p.widths[n];
    Tensor4 g({1, 9, 9, wn});
    for (int i = 0; i < 9; ++i)
      for (int j = 0; j < 9; ++j)
        for (int c = 0; c < wn; ++c) g.at(0, i, j, c) = u.at(0, i, j, c0 + c);
    const auto& k = std::get<DepthwiseKernel>(br.mixers[n]);
    g = oracle::shift(oracle::depthwise(g, k.weight.value, k.bias.value, s.r[n]), -s.d[n], false);
    for (int i = 0; i < 9; ++i)
      for (int j = 0; j < 9; ++j)
        for (int c = 0; c < wn; ++c) mixed.at(0, i, j, c0 + c) = g.at(0, i, j, c);
    c0 += wn;
  }
  const Tensor4 expected = oracle::linear(mixed, br.post[0].weight.value, br.post[0].bias.value, 10);
  EXPECT_LE(max_dev(mix_shift_forward(x, s, p), expected), 1e-10);
  EXPECT_LE(max_dev(mix_shift_forward_reference(x, s, p), expected), 1e-10);
}

TEST(MixShift, ReferenceAgreesOnRandomSpecs) {
  const OracleSummary sum = run_oracle_suite(60, 11);
  EXPECT_EQ(sum.cases.size(), 60u);
  EXPECT_EQ(sum.failures, 0);
  EXPECT_LE(sum.max_deviation, 1e-10);
}

TEST(MixShift, RandomSpecsAreValid) {
  Rng rng(12);
  for (int k = 0; k < 500; ++k) {
    const MixShiftSpec s = random_mix_shift_spec(rng);
    EXPECT_NO_THROW(s.validate());
    EXPECT_GE(s.S(), 1);
    EXPECT_LE(s.S(), 6);
    for (int n = 0; n < s.S(); ++n) {
      EXPECT_LE(std::abs(s.d[n]), 6);
      EXPECT_LE(s.r[n], 7);
    }
  }
}

// Dual mode is the sum of its branches; zeroing one branch's post projection leaves the other.
TEST(MixShift, DualIsSumOfBranches) {
  Rng rng(7);
  const Tensor4 x = random_tensor({1, 7, 8, 6}, rng);
  const MixShiftSpec dual = spec_of({0, 1, -2}, {1, 3, 3}, AxisMode::dual);
  MixShiftParams p = random_params(dual, 6, 8);
  for (auto& v : p.branches[1].post[0].weight.value) v = 0.0;
  for (auto& v : p.branches[1].post[0].bias.value) v = 0.0;

  MixShiftSpec horiz = dual;
  horiz.axis_mode = AxisMode::horizontal;
  MixShiftParams ph = p;
  ph.branches.resize(1);
  EXPECT_LE(max_dev(mix_shift_forward(x, dual, p), mix_shift_forward(x, horiz, ph)), 1e-12);
}

// Horizontal mixing of a map whose rows are constant stays constant along each row
// away from the borders.
TEST(MixShift, RowConstantSymmetry) {
  const int H = 6, W = 20, C = 5;
  Tensor4 x({1, H, W, C});
  for (int i = 0; i < H; ++i)
    for (int j = 0; j < W; ++j)
      for (int c = 0; c < C; ++c) x.at(0, i, j, c) = std::sin(1.0 + i + 0.3 * c);
  const MixShiftSpec s = spec_of({0, 1, 2, -3}, {1, 3, 3, 5}, AxisMode::horizontal);
  const MixShiftParams p = random_params(s, C, 9);
  const Tensor4 y = mix_shift_forward(x, s, p);
  const int reach = s.reach();
  for (int i = 0; i < H; ++i)
    for (int j = reach; j < W - reach; ++j)
      for (int c = 0; c < C; ++c) EXPECT_NEAR(y.at(0, i, j, c), y.at(0, i, reach, c), 1e-12);
}

// An impulse only reaches tokens within max|d| + (r-1)/2 along the branch axis.
TEST(MixShift, Locality) {
  const int H = 9, W = 25, C = 5;
  const MixShiftSpec s = spec_of({0, 2, -1, 4}, {1, 3, 5, 3}, AxisMode::horizontal, ConvType::depthwise,
                                 Projection::none);
  MixShiftParams p = random_params(s, C, 10, 0.0);
  Tensor4 x({1, H, W, C});
  const int i0 = 4, j0 = 12;
  for (int c = 0; c < C; ++c) x.at(0, i0, j0, c) = 1.0;
  const Tensor4 y = mix_shift_forward(x, s, p);
  int max_di = 0, max_dj = 0;
  for (int i = 0; i < H; ++i)
    for (int j = 0; j < W; ++j)
      for (int c = 0; c < C; ++c)
        if (y.at(0, i, j, c) != 0.0) {
          max_di = std::max(max_di, std::abs(i - i0));
          max_dj = std::max(max_dj, std::abs(j - j0));
        }
  EXPECT_LE(max_dj, s.reach());
  // horizontal-only branch: vertical footprint is the kernel half-width only
  EXPECT_LE(max_di, 2);
}

TEST(MixShift, LinearWithoutBias) {
  Rng rng(13);
  const MixShiftSpec s = spec_of({0, 1, 3}, {1, 3, 5}, AxisMode::dual, ConvType::full);
  MixShiftParams p = make_mix_shift_params(s, 7, false);
  randomize(p, rng, 0.5);
  const Tensor4 a = random_tensor({2, 6, 7, 7}, rng);
  const Tensor4 b = random_tensor({2, 6, 7, 7}, rng);
  Tensor4 combo(a.shape());
  for (std::size_t k = 0; k < combo.size(); ++k) combo[k] = 2.0 * a[k] - 0.5 * b[k];
  const Tensor4 ya = mix_shift_forward(a, s, p), yb = mix_shift_forward(b, s, p);
  const Tensor4 yc = mix_shift_forward(combo, s, p);
  for (std::size_t k = 0; k < yc.size(); ++k) EXPECT_NEAR(yc[k], 2.0 * ya[k] - 0.5 * yb[k], 1e-12);
}

TEST(MixShift, ZeroInputWithoutBiasIsZero) {
  const MixShiftSpec s = spec_of({0, 1, 2}, {1, 3, 3}, AxisMode::dual);
  Rng rng(14);
  MixShiftParams p = make_mix_shift_params(s, 6, false);
  randomize(p, rng, 0.5);
  const Tensor4 y = mix_shift_forward(Tensor4({1, 5, 5, 6}), s, p);
  for (double v : y.storage()) EXPECT_EQ(v, 0.0);
}

// Offsets at or beyond the extent leave their group with nothing to read.
TEST(MixShift, OffsetBeyondExtentZeroes) {
  const MixShiftSpec s = spec_of({0, 7}, {1, 1}, AxisMode::horizontal, ConvType::depthwise, Projection::none);
  const MixShiftParams p = identity_mix_shift_params(s, 2);
  Rng rng(15);
  const Tensor4 x = random_tensor({1, 3, 4, 2}, rng);
  const Tensor4 y = mix_shift_forward(x, s, p);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 4; ++j) {
      EXPECT_EQ(y.at(0, i, j, 0), x.at(0, i, j, 0));
      EXPECT_EQ(y.at(0, i, j, 1), 0.0);
    }
}

TEST(MixShift, TapedMatchesDirect) {
  Rng rng(16);
  const MixShiftSpec s = spec_of({0, -1, 2}, {1, 5, 3}, AxisMode::dual, ConvType::full, Projection::post);
  MixShiftParams p = random_params(s, 7, 17);
  const Tensor4 x = random_tensor({2, 6, 5, 7}, rng);
  Tape tape;
  Var y = mix_shift_forward(tape.leaf(x, true), s, p);
  EXPECT_LE(max_dev(y.value(), mix_shift_forward(x, s, p)), 1e-12);
}

TEST(Taxonomy, GlobalMixDenseAndTiled) {
  Rng rng(18);
  const Tensor4 x = random_tensor({1, 4, 4, 3}, rng);
  TokenMixingWeights w(16, false);
  std::vector<double> tile(16);
  fill_normal(tile, rng);
  for (int p = 0; p < 16; ++p)
    for (int q = 0; q < 16; ++q) w.weight[p * 16 + q] = tile[(p % 4) * 4 + q % 4];
  EXPECT_LE(max_dev(global_mix(x, w), global_mix_tiled(x, tile, 4)), 1e-12);
  // identity matrix
  TokenMixingWeights eye(16, true);
  for (int p = 0; p < 16; ++p) eye.weight[p * 16 + p] = 1.0;
  EXPECT_EQ(max_dev(global_mix(x, eye), x), 0.0);
}

TEST(Taxonomy, LocalMixIsShiftThenProject) {
  Rng rng(19);
  const Tensor4 x = random_tensor({1, 5, 5, 6}, rng);
  const std::vector<int> widths{2, 2, 2}, offsets{0, 1, -1};
  LinearWeights proj(6, 6);
  fill_normal(proj.weight.value, rng);
  const Tensor4 expected = channel_linear(multi_shift(x, widths, offsets, Axis::vertical), proj);
  EXPECT_EQ(max_dev(local_mix(x, widths, offsets, Axis::vertical, proj), expected), 0.0);
}
