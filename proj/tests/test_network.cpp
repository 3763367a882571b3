#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "dint/network.hpp"
#include "dint/pipeline.hpp"

using namespace dint;

namespace {

NetworkConfig small(bool hc = false, bool deconv = false) {
  NetworkConfig c;
  c.channel_scale = 1.0 / 16;
  c.use_hypercolumn = hc;
  c.use_deconv_head = deconv;
  return c;
}

}  // namespace

TEST(NetworkConfig, WidthRoundsUp) {
  NetworkConfig c;
  EXPECT_EQ(c.width(96), 96u);
  c.channel_scale = 1.0 / 16;
  EXPECT_EQ(c.width(96), 6u);
  EXPECT_EQ(c.width(3), 1u);
  c.channel_scale = 0.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(Network, FullSizeParameterShapes) {
  Rng rng(1);
  const Network net = Network::build(NetworkConfig{}, rng);
  EXPECT_EQ(net.block("s1.conv1").params.weights.value.shape(), (Shape{96, 3, 11, 11}));
  EXPECT_EQ(net.block("s1.conv1").spec.stride_h, 4u);
  EXPECT_EQ(net.block("s2.conv1").params.weights.value.shape().h, 9u);
  EXPECT_EQ(net.block("s2.conv1").spec.stride_h, 2u);
  EXPECT_TRUE(net.block("s1.conv1").prelu);
  for (const auto& p : net.parameters())
    if (p.name.find(".slope") != std::string::npos)
      for (double v : p.param->value.data()) ASSERT_EQ(v, 0.25);
}

TEST(Network, ParameterNamesUnique) {
  Rng rng(2);
  for (bool hc : {false, true})
    for (bool dc : {false, true}) {
      Network net = Network::build(small(hc, dc), rng);
      std::set<std::string> names;
      for (const auto& p : net.parameters()) EXPECT_TRUE(names.insert(p.name).second) << p.name;
      EXPECT_GT(net.parameter_count(), 0u);
    }
}

TEST(Network, OutputsMatchInputExtent) {
  Rng rng(3);
  for (bool hc : {false, true})
    for (bool dc : {false, true}) {
      const Network net = Network::build(small(hc, dc), rng);
      Rng fw(0);
      const NetworkOutput out = net.forward(Tensor(Shape{2, 3, 64, 96}, 0.5), false, fw);
      EXPECT_EQ(out.log_albedo.shape(), (Shape{2, 3, 64, 96}));
      EXPECT_EQ(out.log_shading.shape(), (Shape{2, 3, 64, 96}));
      EXPECT_TRUE(out.log_albedo.all_finite());
    }
}

TEST(Network, RejectsUnpaddedInput) {
  Rng rng(4);
  const Network net = Network::build(small(), rng);
  Rng fw(0);
  try {
    net.forward(Tensor(Shape{1, 3, 70, 64}), false, fw);
    FAIL();
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("pad"), std::string::npos);
  }
  EXPECT_THROW(net.forward(Tensor(Shape{1, 1, 64, 64}), false, fw), ShapeError);
  EXPECT_EQ(net.padding_needed(70), 26u);
  EXPECT_EQ(net.padding_needed(64), 0u);
}

TEST(Network, BackwardNeedsCache) {
  Rng rng(5);
  Network net = Network::build(small(), rng);
  ForwardCache empty;
  const Tensor g(Shape{1, 3, 32, 32});
  EXPECT_THROW(net.backward(empty, g, g), std::logic_error);
}

TEST(Network, EvalForwardIsDeterministic) {
  Rng rng(6);
  const Network net = Network::build(small(true), rng);
  Rng data(7);
  const Tensor x = Tensor::uniform(Shape{1, 3, 32, 64}, data, 0.0, 1.0);
  Rng a(1), b(999);
  EXPECT_EQ(net.forward(x, false, a).log_albedo, net.forward(x, false, b).log_albedo);
}

TEST(Network, SameSeedSameWeights) {
  Rng a(42), b(42);
  const Network na = Network::build(small(), a), nb = Network::build(small(), b);
  const auto pa = na.parameters(), pb = nb.parameters();
  ASSERT_EQ(pa.size(), pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) EXPECT_EQ(pa[i].param->value, pb[i].param->value);
}

TEST(Network, BackwardAccumulatesAndZeroGradClears) {
  Rng rng(8);
  Network net = Network::build(small(), rng);
  Rng data(9);
  const Tensor x = Tensor::uniform(Shape{1, 3, 32, 32}, data, 0.0, 1.0);
  ForwardCache cache;
  Rng fw(3);
  const NetworkOutput out = net.forward(x, true, fw, &cache);
  const Tensor g = Tensor::normal(out.log_albedo.shape(), data);
  const Tensor dx = net.backward(cache, g, g);
  EXPECT_EQ(dx.shape(), x.shape());
  double norm = 0;
  for (const auto& p : net.parameters()) norm += dot(p.param->grad, p.param->grad);
  EXPECT_GT(norm, 0.0);
  net.zero_grad();
  for (const auto& p : net.parameters()) EXPECT_EQ(dot(p.param->grad, p.param->grad), 0.0);
}

TEST(Decompose, KeepsOddExtentsAndRange) {
  Rng rng(10);
  const Network net = Network::build(small(), rng);
  Rng data(11);
  const Tensor img = Tensor::uniform(Shape{1, 3, 70, 65}, data, 0.0, 1.0);
  const Decomposition d = decompose(net, img);
  EXPECT_EQ(d.albedo.shape(), img.shape());
  EXPECT_EQ(d.shading.shape(), img.shape());
  for (double v : d.albedo.data()) {
    ASSERT_GE(v, 0.0);
    ASSERT_LE(v, 1.0);
  }
  EXPECT_EQ(decompose(net, img).albedo, d.albedo);
}
