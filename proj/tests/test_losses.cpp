#include <gtest/gtest.h>

#include "dint/gradcheck.hpp"
#include "dint/losses.hpp"
#include "dint/rng.hpp"
#include "dint/verify/oracles.hpp"

using namespace dint;

namespace {

// Direct evaluation of the scale-invariant loss for one unmasked item.
double reference_sil2(const Tensor& t, const Tensor& p, double lambda) {
  double s = 0, s2 = 0;
  for (std::size_t k = 0; k < t.size(); ++k) {
    const double y = t[k] - p[k];
    s += y;
    s2 += y * y;
  }
  const double n = static_cast<double>(t.size());
  return s2 / n - lambda * s * s / (n * n);
}

}  // namespace

TEST(Sil2, ZeroForEqualInputs) {
  Rng rng(1);
  const Tensor t = Tensor::normal(Shape{2, 3, 4, 4}, rng);
  const LossResult r = sil2_loss(t, t, {}, 0.5);
  EXPECT_EQ(r.loss, 0.0);
  EXPECT_EQ(r.grad, Tensor(t.shape()));
}

TEST(Sil2, ConstantOffsetHalfLambda) {
  // y = d everywhere: d^2 - lambda d^2.
  const Tensor t(Shape{1, 3, 2, 2}, 0.3), p(Shape{1, 3, 2, 2}, -0.2);
  EXPECT_NEAR(sil2_loss(t, p, {}, 0.5).loss, 0.125, 1e-15);
  EXPECT_NEAR(sil2_loss(t, p, {}, 1.0).loss, 0.0, 1e-15);
  EXPECT_NEAR(sil2_loss(t, p, {}, 0.0).loss, 0.25, 1e-15);
}

TEST(Sil2, LambdaOneIsShiftInvariant) {
  Rng rng(2);
  const Tensor t = Tensor::normal(Shape{1, 3, 5, 5}, rng), p = Tensor::normal(Shape{1, 3, 5, 5}, rng);
  const double base = sil2_loss(t, p, {}, 1.0).loss;
  const Tensor shifted = elementwise_map(p, [](double v) { return v + 1.7; });
  EXPECT_NEAR(sil2_loss(t, shifted, {}, 1.0).loss, base, 1e-12);
}

TEST(Sil2, LambdaZeroIsMse) {
  Rng rng(3);
  const Tensor t = Tensor::normal(Shape{1, 3, 4, 6}, rng), p = Tensor::normal(Shape{1, 3, 4, 6}, rng);
  const Tensor d = t - p;
  EXPECT_NEAR(sil2_loss(t, p, {}, 0.0).loss, dot(d, d) / d.size(), 1e-12);
}

TEST(Sil2, MatchesDirectFormulaAndAveragesBatch) {
  Rng rng(4);
  const Tensor t = Tensor::normal(Shape{3, 3, 4, 4}, rng), p = Tensor::normal(Shape{3, 3, 4, 4}, rng);
  double expected = 0;
  for (std::size_t n = 0; n < 3; ++n) expected += reference_sil2(batch_item(t, n), batch_item(p, n), 0.5);
  EXPECT_NEAR(sil2_loss(t, p, {}, 0.5).loss, expected / 3, 1e-12);
}

TEST(Sil2, MaskedPixelsIgnoredAndGradZero) {
  Rng rng(5);
  const Tensor t = Tensor::normal(Shape{1, 3, 2, 2}, rng);
  Tensor p = Tensor::normal(Shape{1, 3, 2, 2}, rng);
  const Tensor mask = Tensor::from(Shape{1, 1, 2, 2}, {1, 1, 1, 0});
  const LossResult a = sil2_loss(t, p, mask, 0.5);
  for (std::size_t c = 0; c < 3; ++c) {
    EXPECT_EQ(a.grad(0, c, 1, 1), 0.0);
    p(0, c, 1, 1) += 100.0;
  }
  EXPECT_EQ(sil2_loss(t, p, mask, 0.5).loss, a.loss);
}

TEST(Sil2, RejectsEmptyMaskAndBadLambda) {
  const Tensor t(Shape{2, 3, 2, 2});
  Tensor mask(Shape{2, 1, 2, 2}, 1.0);
  for (std::size_t k = 4; k < 8; ++k) mask[k] = 0.0;
  EXPECT_THROW(sil2_loss(t, t, mask, 0.5), std::invalid_argument);
  LossConfig cfg;
  cfg.lambda = 1.5;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
}

TEST(Sil2, GradientMatchesFiniteDifferences) {
  Rng rng(6);
  const Tensor t = Tensor::normal(Shape{2, 3, 3, 3}, rng), p = Tensor::normal(Shape{2, 3, 3, 3}, rng);
  Tensor mask(Shape{2, 1, 3, 3}, 1.0);
  mask[4] = 0.0;
  mask[10] = 0.0;
  for (double lambda : {0.0, 0.5, 1.0}) {
    const LossResult r = sil2_loss(t, p, mask, lambda);
    EXPECT_LT(check_gradient([&](const Tensor& v) { return sil2_loss(t, v, mask, lambda).loss; }, p, r.grad)
                  .max_rel_error,
              1e-6);
  }
}

TEST(GradientLoss, ZeroForConstantResidual) {
  Rng rng(7);
  const Tensor t = Tensor::normal(Shape{1, 3, 4, 4}, rng);
  const Tensor p = elementwise_map(t, [](double v) { return v - 0.4; });
  EXPECT_NEAR(gradient_loss(t, p, {}).loss, 0.0, 1e-28);
}

TEST(GradientLoss, ForwardDifferenceValue) {
  // One channel row 0 1 3 residual, single row: diffs 1 and 2 over n = 3.
  const Tensor t = Tensor::from(Shape{1, 1, 1, 3}, {0, 1, 3});
  const Tensor p(Shape{1, 1, 1, 3});
  EXPECT_NEAR(gradient_loss(t, p, {}).loss, (1.0 + 4.0) / 3.0, 1e-15);
}

TEST(GradientLoss, DifferenceNeedsBothEndpointsValid) {
  const Tensor t = Tensor::from(Shape{1, 1, 1, 3}, {0, 1, 3});
  const Tensor p(Shape{1, 1, 1, 3});
  const Tensor mask = Tensor::from(Shape{1, 1, 1, 3}, {1, 1, 0});
  EXPECT_NEAR(gradient_loss(t, p, mask).loss, 1.0 / 2.0, 1e-15);
}

TEST(GradientLoss, GradientMatchesFiniteDifferences) {
  Rng rng(8);
  const Tensor t = Tensor::normal(Shape{2, 3, 4, 5}, rng), p = Tensor::normal(Shape{2, 3, 4, 5}, rng);
  Tensor mask(Shape{2, 1, 4, 5}, 1.0);
  mask[7] = 0.0;
  const LossResult r = gradient_loss(t, p, mask);
  EXPECT_LT(check_gradient([&](const Tensor& v) { return gradient_loss(t, v, mask).loss; }, p, r.grad)
                .max_rel_error,
            1e-6);
}

TEST(TotalLoss, SumsComponents) {
  Rng rng(9);
  const Shape s{1, 3, 4, 4};
  const Tensor ta = Tensor::normal(s, rng), ts = Tensor::normal(s, rng);
  const Tensor pa = Tensor::normal(s, rng), ps = Tensor::normal(s, rng);
  LossConfig cfg;
  const TotalLoss plain = total_loss(ta, ts, pa, ps, {}, cfg);
  EXPECT_NEAR(plain.loss, sil2_loss(ta, pa, {}, 0.5).loss + sil2_loss(ts, ps, {}, 0.5).loss, 1e-14);
  EXPECT_EQ(plain.albedo_gradient, 0.0);
  cfg.use_gradient_loss = true;
  const TotalLoss with_grad = total_loss(ta, ts, pa, ps, {}, cfg);
  EXPECT_NEAR(with_grad.loss, plain.loss + gradient_loss(ta, pa, {}).loss, 1e-14);
  EXPECT_EQ(with_grad.grad_shading, plain.grad_shading);
}
