#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "msmlp/ops.hpp"
#include "oracles.hpp"

using namespace msmlp;

namespace {

double max_diff(const Tensor4& a, const Tensor4& b) {
  EXPECT_EQ(a.shape(), b.shape());
  return max_abs_diff(a.data(), b.data());
}

}  // namespace

TEST(Tensor, RejectsBadShapes) {
  EXPECT_THROW(Tensor4({0, 1, 1, 1}), std::invalid_argument);
  EXPECT_THROW(Tensor4({1, 2, 2, 1}, std::vector<double>(3)), std::invalid_argument);
  Tensor4 t({2, 3, 4, 5}, 1.5);
  EXPECT_EQ(t.size(), 120u);
  EXPECT_EQ(t.index(1, 2, 3, 4), 119u);
}

TEST(Tensor, TruncatedNormalStaysInsideTwoSigma) {
  Rng rng(3);
  std::vector<double> v(20000);
  fill_trunc_normal(v, rng, 0.02);
  double mean = 0.0;
  for (double x : v) {
    ASSERT_LE(std::abs(x), 0.04);
    mean += x;
  }
  EXPECT_NEAR(mean / v.size(), 0.0, 1e-3);
}

TEST(Shift, ZeroOffsetIsIdentity) {
  Rng rng(1);
  Tensor4 x = random_tensor({2, 4, 5, 3}, rng);
  EXPECT_TRUE(bitwise_equal(shift2d(x, 0, Axis::vertical).data(), x.data()));
  EXPECT_TRUE(bitwise_equal(shift2d(x, 0, Axis::horizontal).data(), x.data()));
}

TEST(Shift, HandExample) {
  Tensor4 x({1, 4, 1, 1}, std::vector<double>{1, 2, 3, 4});
  Tensor4 y = shift2d(x, 1, Axis::vertical);
  EXPECT_EQ(y.storage(), (std::vector<double>{0, 1, 2, 3}));
}

TEST(Shift, MatchesLoopOracle) {
  Rng rng(2);
  Tensor4 x = random_tensor({2, 5, 5, 3}, rng);
  EXPECT_EQ(max_diff(shift2d(x, -2, Axis::horizontal), oracle::shift(x, -2, false)), 0.0);
  for (int off = -4; off <= 4; ++off) {
    EXPECT_EQ(max_diff(shift2d(x, off, Axis::vertical), oracle::shift(x, off, true)), 0.0);
  }
}

TEST(Shift, RejectsOffsetAtExtent) {
  Tensor4 x({1, 3, 4, 1});
  EXPECT_THROW(shift2d(x, 3, Axis::vertical), std::invalid_argument);
  EXPECT_THROW(shift2d(x, -4, Axis::horizontal), std::invalid_argument);
  EXPECT_NO_THROW(shift2d(x, 3, Axis::horizontal));
}

TEST(Shift, RoundTripRestoresInterior) {
  Rng rng(4);
  Tensor4 x = random_tensor({1, 9, 7, 2}, rng);
  for (int d = 1; d <= 3; ++d) {
    Tensor4 back = shift2d(shift2d(x, d, Axis::vertical), -d, Axis::vertical);
    for (int i = 0; i < x.h() - d; ++i)
      for (int j = 0; j < x.w(); ++j)
        for (int c = 0; c < x.c(); ++c) EXPECT_EQ(back.at(0, i, j, c), x.at(0, i, j, c));
  }
}

TEST(DepthwiseConv, IdentityKernels) {
  Rng rng(5);
  Tensor4 x = random_tensor({1, 4, 4, 3}, rng);
  DepthwiseKernel ones(3, 1);
  std::fill(ones.weight.value.begin(), ones.weight.value.end(), 1.0);
  EXPECT_EQ(max_diff(depthwise_conv2d(x, ones), x), 0.0);
  EXPECT_EQ(max_diff(depthwise_conv2d(x, DepthwiseKernel::delta(3, 3)), x), 0.0);
}

TEST(DepthwiseConv, MatchesLoopOracle) {
  Rng rng(6);
  Tensor4 x = random_tensor({1, 6, 6, 2}, rng);
  DepthwiseKernel k(2, 5);
  fill_normal(k.weight.value, rng);
  fill_normal(k.bias.value, rng);
  EXPECT_LT(max_diff(depthwise_conv2d(x, k), oracle::depthwise(x, k.weight.value, k.bias.value, 5)), 1e-12);
}

TEST(DepthwiseConv, ChannelMismatchThrows) {
  EXPECT_THROW(depthwise_conv2d(Tensor4({1, 3, 3, 2}), DepthwiseKernel(3, 3)), std::invalid_argument);
}

TEST(DepthwiseConv, TranslationEquivariantOnInterior) {
  Rng rng(7);
  Tensor4 x = random_tensor({1, 12, 12, 2}, rng);
  DepthwiseKernel k(2, 3);
  fill_normal(k.weight.value, rng);
  const int d = 2, half = 1;
  Tensor4 a = depthwise_conv2d(shift2d(x, d, Axis::horizontal), k);
  Tensor4 b = shift2d(depthwise_conv2d(x, k), d, Axis::horizontal);
  for (int i = d + half; i < 12 - d - half; ++i)
    for (int j = d + half; j < 12 - d - half; ++j)
      for (int c = 0; c < 2; ++c) EXPECT_NEAR(a.at(0, i, j, c), b.at(0, i, j, c), 1e-12);
}

TEST(FullConv, MatchesLoopOracle) {
  Rng rng(8);
  Tensor4 x = random_tensor({2, 5, 4, 3}, rng);
  FullKernel k(3, 3);
  fill_normal(k.weight.value, rng);
  fill_normal(k.bias.value, rng);
  EXPECT_LT(max_diff(full_conv2d(x, k), oracle::full_conv(x, k.weight.value, k.bias.value, 3)), 1e-12);
  EXPECT_EQ(max_diff(full_conv2d(x, FullKernel::delta(3, 5)), x), 0.0);
}

TEST(ChannelLinear, HandExample) {
  LinearWeights w(2, 2);
  w.weight.value = {1, 1, 1, -1};
  Tensor4 y = channel_linear(Tensor4({1, 1, 1, 2}, std::vector<double>{1, 2}), w);
  EXPECT_EQ(y.storage(), (std::vector<double>{3, -1}));
}

TEST(ChannelLinear, IdentityAndOracle) {
  Rng rng(9);
  Tensor4 x = random_tensor({2, 3, 4, 5}, rng);
  EXPECT_EQ(max_diff(channel_linear(x, LinearWeights::identity(5)), x), 0.0);
  LinearWeights w(5, 7);
  fill_normal(w.weight.value, rng);
  fill_normal(w.bias.value, rng);
  EXPECT_LT(max_diff(channel_linear(x, w), oracle::linear(x, w.weight.value, w.bias.value, 7)), 1e-12);
  EXPECT_THROW(channel_linear(x, LinearWeights(4, 2)), std::invalid_argument);
}

TEST(PatchEmbed, ShapesAndOracle) {
  Rng rng(10);
  Tensor4 x = random_tensor({2, 8, 12, 3}, rng);
  LinearWeights w(4 * 4 * 3, 6);
  fill_normal(w.weight.value, rng);
  fill_normal(w.bias.value, rng);
  Tensor4 y = patch_embed(x, 4, w);
  EXPECT_EQ(y.shape(), (Shape4{2, 2, 3, 6}));
  EXPECT_LT(max_diff(y, oracle::patch_embed(x, 4, w.weight.value, w.bias.value, 6)), 1e-12);
  EXPECT_THROW(patch_embed(Tensor4({1, 6, 8, 3}), 4, w), std::invalid_argument);
}

TEST(PatchEmbed, RatioOneIsChannelLinear) {
  Rng rng(11);
  Tensor4 x = random_tensor({1, 3, 3, 4}, rng);
  LinearWeights w(4, 2);
  fill_normal(w.weight.value, rng);
  EXPECT_EQ(max_diff(patch_embed(x, 1, w), channel_linear(x, w)), 0.0);
}

TEST(PatchEmbed, StageOneResolution) {
  LinearWeights w(4 * 4 * 3, 96);
  EXPECT_EQ(patch_embed(Tensor4({1, 224, 224, 3}), 4, w).shape(), (Shape4{1, 56, 56, 96}));
}

TEST(LayerNorm, Examples) {
  std::vector<double> g1{1, 1}, b0{0, 0};
  Tensor4 c({1, 1, 1, 2}, std::vector<double>{3, 3});
  Tensor4 yc = layer_norm(c, g1, b0);
  EXPECT_EQ(yc[0], 0.0);
  EXPECT_EQ(yc[1], 0.0);
  Tensor4 y = layer_norm(Tensor4({1, 1, 1, 2}, std::vector<double>{1, -1}), g1, b0, 1e-12);
  EXPECT_NEAR(y[0], 1.0, 1e-9);
  EXPECT_NEAR(y[1], -1.0, 1e-9);
}

TEST(LayerNorm, MomentsAndOracle) {
  Rng rng(12);
  Tensor4 x = random_tensor({2, 3, 3, 8}, rng, 3.0);
  std::vector<double> g(8, 1.0), b(8, 0.0);
  Tensor4 y = layer_norm(x, g, b);
  for (int t = 0; t < 18; ++t) {
    double m = 0, v = 0;
    for (int c = 0; c < 8; ++c) m += y[t * 8 + c];
    m /= 8;
    for (int c = 0; c < 8; ++c) v += (y[t * 8 + c] - m) * (y[t * 8 + c] - m);
    v /= 8;
    EXPECT_LT(std::abs(m), 1e-9);
    EXPECT_NEAR(v, 1.0, 1e-5);  // eps = 1e-5 damps the variance slightly
  }
  fill_normal(g, rng);
  fill_normal(b, rng);
  EXPECT_LT(max_diff(layer_norm(x, g, b), oracle::layer_norm(x, g, b, kLayerNormEps)), 1e-12);
}

TEST(LayerNorm, UnitVarianceWithTinyEps) {
  Rng rng(13);
  Tensor4 x = random_tensor({1, 2, 2, 6}, rng);
  std::vector<double> g(6, 1.0), b(6, 0.0);
  Tensor4 y = layer_norm(x, g, b, 1e-12);
  for (int t = 0; t < 4; ++t) {
    double v = 0;
    for (int c = 0; c < 6; ++c) v += y[t * 6 + c] * y[t * 6 + c];
    EXPECT_NEAR(v / 6, 1.0, 1e-6);
  }
}

TEST(LayerNorm, InvariantToPerTokenConstant) {
  Rng rng(14);
  Tensor4 x = random_tensor({1, 3, 2, 5}, rng);
  Tensor4 shifted = x;
  for (int t = 0; t < 6; ++t)
    for (int c = 0; c < 5; ++c) shifted[t * 5 + c] += 10.0 * t - 7.0;
  std::vector<double> g(5, 1.0), b(5, 0.0);
  EXPECT_LT(max_diff(layer_norm(x, g, b), layer_norm(shifted, g, b)), 1e-9);
}

TEST(Gelu, Values) {
  EXPECT_EQ(gelu(0.0), 0.0);
  EXPECT_NEAR(gelu(1.0), 0.8413447460685429, 1e-12);
  EXPECT_NEAR(gelu(1.0), oracle::gelu(1.0), 1e-15);
  EXPECT_NEAR(gelu(40.0), 40.0, 1e-12);
  EXPECT_NEAR(gelu(-40.0), 0.0, 1e-12);
  for (double v = -6; v <= 6; v += 0.37) EXPECT_NEAR(gelu(v), oracle::gelu(v), 1e-14);
}

TEST(GlobalAvgPool, Examples) {
  Tensor4 y = global_avg_pool(Tensor4({1, 2, 2, 1}, std::vector<double>{1, 2, 3, 4}));
  EXPECT_EQ(y.shape(), (Shape4{1, 1, 1, 1}));
  EXPECT_DOUBLE_EQ(y[0], 2.5);
  Tensor4 c = global_avg_pool(Tensor4({2, 3, 3, 4}, 0.75));
  for (double v : c.storage()) EXPECT_DOUBLE_EQ(v, 0.75);
  Rng rng(15);
  Tensor4 x = random_tensor({2, 3, 5, 4}, rng);
  EXPECT_LT(max_diff(global_avg_pool(x), oracle::avg_pool(x)), 1e-14);
}

TEST(SplitChannels, EqualSplit) {
  Rng rng(16);
  Tensor4 x = random_tensor({1, 2, 2, 10}, rng);
  auto one = split_channels(x, 1);
  ASSERT_EQ(one.size(), 1u);
  EXPECT_EQ(max_diff(one[0], x), 0.0);
  auto parts = split_channels(x, 5);
  ASSERT_EQ(parts.size(), 5u);
  for (int n = 0; n < 5; ++n) {
    EXPECT_EQ(parts[n].c(), 2);
    for (int t = 0; t < 4; ++t)
      for (int c = 0; c < 2; ++c) EXPECT_EQ(parts[n][t * 2 + c], x[t * 10 + 2 * n + c]);
  }
  EXPECT_EQ(max_diff(concat_channels(parts), x), 0.0);
  EXPECT_THROW(split_channels(x, 3), std::invalid_argument);
}

TEST(SplitChannels, BalancedWidths) {
  EXPECT_EQ(balanced_group_widths(96, 5), (std::vector<int>{20, 19, 19, 19, 19}));
  EXPECT_EQ(balanced_group_widths(10, 5), (std::vector<int>{2, 2, 2, 2, 2}));
  EXPECT_THROW(balanced_group_widths(3, 5), std::invalid_argument);
  Rng rng(17);
  Tensor4 x = random_tensor({2, 2, 3, 96}, rng);
  const auto widths = balanced_group_widths(96, 5);
  EXPECT_EQ(max_diff(concat_channels(split_channels(x, widths)), x), 0.0);
}

TEST(Ops, PureFunctions) {
  Rng rng(18);
  Tensor4 x = random_tensor({1, 4, 4, 3}, rng);
  DepthwiseKernel k(3, 3);
  fill_normal(k.weight.value, rng);
  const Tensor4 a = depthwise_conv2d(x, k);
  const Tensor4 b = depthwise_conv2d(x, k);
  EXPECT_TRUE(bitwise_equal(a.data(), b.data()));
}
