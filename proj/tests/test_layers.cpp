#include <gtest/gtest.h>

#include "dint/gradcheck.hpp"
#include "dint/layers.hpp"
#include "dint/verify/oracles.hpp"

using namespace dint;

namespace {

LayerParams conv_params(const ConvSpec& s, Rng& rng, bool bias = true) {
  LayerParams p;
  p.weights = Param(Tensor::normal(Shape{s.out_channels, s.in_channels, s.kernel_h, s.kernel_w}, rng, 0.5));
  if (bias) p.bias = Param(Tensor::normal(Shape{1, s.out_channels, 1, 1}, rng, 0.5));
  return p;
}

}  // namespace

TEST(ConvSpec, OutputExtents) {
  EXPECT_EQ(ConvSpec::square(3, 96, 11, 4, 5).conv_out_h(224), 56u);
  EXPECT_EQ(ConvSpec::square(3, 1, 9, 2, 4).conv_out_w(64), 32u);
  EXPECT_EQ(ConvSpec::square(64, 3, 8, 4, 2).deconv_out_h(16), 64u);
  EXPECT_THROW(ConvSpec::square(1, 1, 5).conv_out_h(3), ShapeError);
}

TEST(Conv, OneByOneIdentity) {
  LayerParams p;
  p.weights = Param(Tensor::from(Shape{1, 1, 1, 1}, {1}));
  const Tensor x = Tensor::from(Shape{1, 1, 2, 2}, {1, 2, 3, 4});
  EXPECT_EQ(conv_forward(x, p, ConvSpec::square(1, 1, 1)), x);
}

TEST(Conv, BoxFilterWithPadding) {
  LayerParams p;
  p.weights = Param(Tensor(Shape{1, 1, 3, 3}, 1.0));
  const Tensor y = conv_forward(Tensor(Shape{1, 1, 3, 3}, 1.0), p, ConvSpec::square(1, 1, 3, 1, 1));
  EXPECT_EQ(y, Tensor::from(Shape{1, 1, 3, 3}, {4, 6, 4, 6, 9, 6, 4, 6, 4}));
}

TEST(Conv, MatchesNestedLoopOracle) {
  Rng rng(31);
  for (int t = 0; t < 8; ++t) {
    const std::size_t k = 1 + 2 * rng.below(3), stride = 1 + rng.below(3), pad = rng.below(k);
    const ConvSpec s = ConvSpec::square(1 + rng.below(3), 1 + rng.below(3), k, stride, pad);
    const Tensor x = Tensor::normal(Shape{1 + rng.below(2), s.in_channels, 7 + rng.below(6), 6 + rng.below(6)}, rng);
    const LayerParams p = conv_params(s, rng);
    const Tensor ref = oracle::nested_loop_conv(x, p.weights.value, p.bias.value, stride, pad);
    EXPECT_LE(max_abs_diff(conv_forward(x, p, s), ref), 1e-12);
  }
}

TEST(Conv, RejectsChannelMismatch) {
  Rng rng(1);
  const ConvSpec s = ConvSpec::square(2, 1, 3);
  const LayerParams p = conv_params(s, rng);
  EXPECT_THROW(conv_forward(Tensor(Shape{1, 3, 5, 5}), p, s), ShapeError);
}

TEST(Conv, GradientsMatchFiniteDifferences) {
  Rng rng(8);
  const ConvSpec s = ConvSpec::square(2, 3, 3, 2, 1);
  LayerParams p = conv_params(s, rng);
  const Tensor x = Tensor::normal(Shape{2, 2, 7, 6}, rng);
  const Tensor dy = Tensor::normal(Shape{2, 3, s.conv_out_h(7), s.conv_out_w(6)}, rng);
  const Tensor dx = conv_backward(dy, x, p, s);
  auto via_x = [&](const Tensor& v) { return dot(conv_forward(v, p, s), dy); };
  EXPECT_LT(check_gradient(via_x, x, dx).max_rel_error, 1e-6);
  auto via_w = [&](const Tensor& w) {
    LayerParams q = p;
    q.weights.value = w;
    return dot(conv_forward(x, q, s), dy);
  };
  EXPECT_LT(check_gradient(via_w, p.weights.value, p.weights.grad).max_rel_error, 1e-6);
  auto via_b = [&](const Tensor& b) {
    LayerParams q = p;
    q.bias.value = b;
    return dot(conv_forward(x, q, s), dy);
  };
  EXPECT_LT(check_gradient(via_b, p.bias.value, p.bias.grad).max_rel_error, 1e-6);
}

TEST(Conv, BackwardAccumulates) {
  Rng rng(2);
  const ConvSpec s = ConvSpec::square(1, 1, 3, 1, 1);
  LayerParams p = conv_params(s, rng);
  const Tensor x = Tensor::normal(Shape{1, 1, 4, 4}, rng), dy = Tensor::normal(Shape{1, 1, 4, 4}, rng);
  conv_backward(dy, x, p, s);
  const Tensor once = p.weights.grad;
  conv_backward(dy, x, p, s);
  EXPECT_LE(max_abs_diff(p.weights.grad, once * 2.0), 1e-12);
}

TEST(Deconv, IsAdjointOfConv) {
  // <conv(x), y> == <x, deconv(y)> when the deconvolution uses the
  // transposed weights and no bias.
  Rng rng(12);
  // Extents are chosen so that the strided windows tile the input exactly.
  for (const auto& [s, size] : {std::pair{ConvSpec::square(2, 3, 3, 2, 1), std::size_t{15}},
                                std::pair{ConvSpec::square(3, 2, 8, 4, 2), std::size_t{16}}}) {
    const LayerParams cp = conv_params(s, rng, false);
    const Tensor x = Tensor::normal(Shape{1, s.in_channels, size, size}, rng);
    const Tensor cx = conv_forward(x, cp, s);
    const Tensor y = Tensor::normal(cx.shape(), rng);
    LayerParams dp;
    dp.weights = Param(transpose_weights(cp.weights.value));
    const ConvSpec ds{s.out_channels, s.in_channels, s.kernel_h, s.kernel_w, s.stride_h, s.stride_w, s.pad_h, s.pad_w};
    const Tensor dyx = deconv_forward(y, dp, ds);
    ASSERT_EQ(dyx.shape(), x.shape());
    EXPECT_NEAR(dot(cx, y), dot(x, dyx), 1e-9 * std::max(1.0, std::abs(dot(cx, y))));
  }
}

TEST(Deconv, HeadUpsamplesByFour) {
  Rng rng(3);
  const ConvSpec s = ConvSpec::square(4, 3, 8, 4, 2);
  const LayerParams p = conv_params(s, rng);
  EXPECT_EQ(deconv_forward(Tensor(Shape{1, 4, 8, 10}), p, s).shape(), (Shape{1, 3, 32, 40}));
}

TEST(Deconv, GradientsMatchFiniteDifferences) {
  Rng rng(13);
  const ConvSpec s = ConvSpec::square(2, 2, 4, 2, 1);
  LayerParams p = conv_params(s, rng);
  const Tensor x = Tensor::normal(Shape{1, 2, 4, 5}, rng);
  const Tensor dy = Tensor::normal(deconv_forward(x, p, s).shape(), rng);
  const Tensor dx = deconv_backward(dy, x, p, s);
  EXPECT_LT(check_gradient([&](const Tensor& v) { return dot(deconv_forward(v, p, s), dy); }, x, dx).max_rel_error,
            1e-6);
  auto via_w = [&](const Tensor& w) {
    LayerParams q = p;
    q.weights.value = w;
    return dot(deconv_forward(x, q, s), dy);
  };
  EXPECT_LT(check_gradient(via_w, p.weights.value, p.weights.grad).max_rel_error, 1e-6);
}

TEST(MaxPool, PicksWindowMaxima) {
  const Tensor x = Tensor::from(Shape{1, 1, 4, 4}, {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15, 16});
  EXPECT_EQ(max_pool_forward(x, 2, 2).output, Tensor::from(Shape{1, 1, 2, 2}, {6, 8, 14, 16}));
}

TEST(MaxPool, PaddedOverlappingWindows) {
  // 3x3 stride 2 pad 1 halves the extent; padding never wins even when
  // every input is negative.
  const Tensor x(Shape{1, 1, 4, 4}, -1.0);
  const PoolResult r = max_pool_forward(x, 3, 2, 1);
  EXPECT_EQ(r.output, Tensor(Shape{1, 1, 2, 2}, -1.0));
}

TEST(MaxPool, TiesGoToLowestIndex) {
  const PoolResult r = max_pool_forward(Tensor(Shape{1, 1, 2, 2}, 1.0), 2, 2);
  ASSERT_EQ(r.argmax.size(), 1u);
  EXPECT_EQ(r.argmax[0], 0u);
}

TEST(MaxPool, BackwardRoutesToArgmax) {
  const Tensor x = Tensor::from(Shape{1, 1, 2, 2}, {1, 5, 3, 2});
  const PoolResult r = max_pool_forward(x, 2, 2);
  const Tensor dx = max_pool_backward(Tensor(Shape{1, 1, 1, 1}, 7.0), r.argmax, x.shape());
  EXPECT_EQ(dx, Tensor::from(Shape{1, 1, 2, 2}, {0, 7, 0, 0}));
}

TEST(MaxPool, RejectsPadNotSmallerThanKernel) {
  EXPECT_THROW(max_pool_forward(Tensor(Shape{1, 1, 4, 4}), 2, 2, 2), std::invalid_argument);
}

TEST(Bilinear, ConstantStaysConstant) {
  const Tensor y = bilinear_upsample_forward(Tensor(Shape{1, 2, 3, 5}, 0.7), 4);
  EXPECT_EQ(y.shape(), (Shape{1, 2, 12, 20}));
  EXPECT_LE(max_abs_diff(y, Tensor(y.shape(), 0.7)), 1e-15);
}

TEST(Bilinear, HalfPixelCentres) {
  // Factor 2, align corners false: outputs sit at input coordinates
  // -0.25, 0.25, 0.75, 1.25, clamped at the edges.
  const Tensor y = bilinear_upsample_forward(Tensor::from(Shape{1, 1, 1, 2}, {0, 1}), 2);
  EXPECT_EQ(y.shape(), (Shape{1, 1, 2, 4}));
  const double expected[] = {0.0, 0.25, 0.75, 1.0};
  for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(y(0, 0, 0, j), expected[j], 1e-15);
}

TEST(Bilinear, BackwardIsAdjoint) {
  Rng rng(6);
  const Tensor x = Tensor::normal(Shape{2, 2, 3, 4}, rng);
  const Tensor y = Tensor::normal(Shape{2, 2, 24, 32}, rng);
  EXPECT_NEAR(dot(bilinear_upsample_forward(x, 8), y), dot(x, bilinear_upsample_backward(y, 8)), 1e-9);
}

TEST(Prelu, Values) {
  const Tensor slopes = Tensor::from(Shape{1, 2, 1, 1}, {0.25, 0.5});
  const Tensor x = Tensor::from(Shape{1, 2, 1, 2}, {-4, 3, -2, 1});
  EXPECT_EQ(prelu_forward(x, slopes), Tensor::from(Shape{1, 2, 1, 2}, {-1, 3, -1, 1}));
}

TEST(Prelu, SlopeOneIsIdentity) {
  Rng rng(7);
  const Tensor x = Tensor::normal(Shape{2, 3, 4, 4}, rng);
  EXPECT_EQ(prelu_forward(x, Tensor(Shape{1, 3, 1, 1}, 1.0)), x);
}

TEST(Prelu, Gradients) {
  Rng rng(9);
  Tensor x = Tensor::normal(Shape{2, 3, 3, 3}, rng);
  for (double& v : x.data()) v += v < 0 ? -0.05 : 0.05;
  const Tensor slopes = Tensor::uniform(Shape{1, 3, 1, 1}, rng, 0.1, 0.4);
  const Tensor dy = Tensor::normal(x.shape(), rng);
  const PreluGrads g = prelu_backward(dy, x, slopes);
  EXPECT_LT(check_gradient([&](const Tensor& v) { return dot(prelu_forward(v, slopes), dy); }, x, g.dx, 1e-4)
                .max_rel_error,
            1e-7);
  EXPECT_LT(check_gradient([&](const Tensor& a) { return dot(prelu_forward(x, a), dy); }, slopes, g.dslopes)
                .max_rel_error,
            1e-7);
}

TEST(Dropout, EvalModeIsIdentity) {
  Rng rng(1);
  const Tensor x = Tensor::normal(Shape{1, 4, 5, 5}, rng);
  DropoutState st{0.5, false, {}};
  EXPECT_EQ(dropout_forward(x, st, rng), x);
}

TEST(Dropout, MaskEntriesAndRate) {
  Rng rng(4);
  const Tensor x(Shape{1, 8, 32, 32}, 1.0);
  DropoutState st{0.5, true, {}};
  const Tensor y = dropout_forward(x, st, rng);
  std::size_t kept = 0;
  for (double v : y.data()) {
    ASSERT_TRUE(v == 0.0 || v == 2.0);
    kept += v != 0.0;
  }
  EXPECT_NEAR(static_cast<double>(kept) / y.size(), 0.5, 0.03);
  EXPECT_EQ(dropout_backward(Tensor(x.shape(), 1.0), st), y);
}

TEST(Dropout, SameRngSameMask) {
  const Tensor x(Shape{1, 2, 8, 8}, 1.0);
  DropoutState a{0.5, true, {}}, b{0.5, true, {}};
  Rng ra(99), rb(99);
  EXPECT_EQ(dropout_forward(x, a, ra), dropout_forward(x, b, rb));
}

TEST(Concat, SplitInvertsConcat) {
  Rng rng(5);
  const Tensor a = Tensor::normal(Shape{2, 2, 3, 3}, rng), b = Tensor::normal(Shape{2, 3, 3, 3}, rng);
  const Tensor c = concat_channels(a, b);
  EXPECT_EQ(c.shape(), (Shape{2, 5, 3, 3}));
  const auto [da, db] = split_channels(c, 2);
  EXPECT_EQ(da, a);
  EXPECT_EQ(db, b);
  EXPECT_THROW(concat_channels(a, Tensor(Shape{2, 1, 4, 3})), ShapeError);
}
