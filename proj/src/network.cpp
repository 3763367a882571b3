#include "dint/network.hpp"

#include <cmath>
#include <stdexcept>
#include <tuple>

namespace dint {

void NetworkConfig::validate() const {
  if (!(channel_scale > 0.0) || !std::isfinite(channel_scale)) {
    throw std::invalid_argument("network: channel_scale must be a positive finite number");
  }
  if (!(dropout_prob >= 0.0 && dropout_prob < 1.0)) {
    throw std::invalid_argument("network: dropout_prob must lie in [0, 1)");
  }
  if (input_multiple < 1) throw std::invalid_argument("network: input_multiple must be >= 1");
  (void)width(64);
}

std::size_t NetworkConfig::width(std::size_t base) const {
  const double scaled = std::ceil(static_cast<double>(base) * channel_scale - 1e-9);
  if (scaled < 1.0) {
    throw std::invalid_argument("network: channel_scale " + std::to_string(channel_scale) +
                                " gives a zero-width layer (base width " +
                                std::to_string(base) + ")");
  }
  return static_cast<std::size_t>(scaled);
}

namespace {

ConvBlock make_block(std::string name, ConvSpec spec, bool deconv, bool prelu,
                     bool dropout, Rng& rng) {
  ConvBlock b;
  b.spec = spec;
  b.deconv = deconv;
  b.prelu = prelu;
  b.dropout = dropout;
  b.params.name = std::move(name);
  const double fan_in = static_cast<double>(spec.in_channels * spec.kernel_h * spec.kernel_w);
  b.params.weights = Param(Tensor::normal(
      {spec.out_channels, spec.in_channels, spec.kernel_h, spec.kernel_w}, rng,
      std::sqrt(2.0 / fan_in)));
  b.params.bias = Param(Tensor(Shape{1, spec.out_channels, 1, 1}));
  if (prelu) b.params.prelu_slopes = Param(Tensor(Shape{1, spec.out_channels, 1, 1}, 0.25));
  return b;
}

// Scale-1 pools: 3x3 stride 2 with one cell of padding halve even extents.
constexpr std::size_t kPoolKernel = 3;
constexpr std::size_t kPoolStride = 2;
constexpr std::size_t kPoolPad = 1;

void expect_extent(const Tensor& t, std::size_t h, std::size_t w, const char* where) {
  if (t.h() != h || t.w() != w) {
    throw std::logic_error(std::string("network: ") + where + " is " + t.shape().str() +
                           ", expected spatial extent " + std::to_string(h) + "x" +
                           std::to_string(w));
  }
}

}  // namespace

Network Network::build(const NetworkConfig& cfg, Rng& rng) {
  cfg.validate();
  Network net;
  net.cfg_ = cfg;
  net.blocks_.resize(kBlockCount);
  auto& b = net.blocks_;

  const std::size_t c1 = cfg.width(96), c2 = cfg.width(256), c3 = cfg.width(384),
                    c4 = cfg.width(384), c5 = cfg.width(256), c6 = cfg.width(64);
  const std::size_t s2 = cfg.width(96), s2f = cfg.width(64), head = cfg.width(64);
  const bool drop = cfg.dropout_prob > 0.0;

  b[kS1Conv1] = make_block("s1.conv1", ConvSpec::square(3, c1, 11, 4, 5), false, true, false, rng);
  b[kS1Conv2] = make_block("s1.conv2", ConvSpec::square(c1, c2, 5, 1, 2), false, true, false, rng);
  b[kS1Conv3] = make_block("s1.conv3", ConvSpec::square(c2, c3, 3, 1, 1), false, true, false, rng);
  b[kS1Conv4] = make_block("s1.conv4", ConvSpec::square(c3, c4, 3, 1, 1), false, true, false, rng);
  b[kS1Conv5] = make_block("s1.conv5", ConvSpec::square(c4, c5, 3, 1, 1), false, true, false, rng);
  const std::size_t conv6_in = cfg.use_hypercolumn ? c1 + c2 + c5 : c5;
  b[kS1Conv6] = make_block("s1.conv6", ConvSpec::square(conv6_in, c6, 1, 1, 0), false, true, drop, rng);

  b[kS2Conv1] = make_block("s2.conv1", ConvSpec::square(3, s2, 9, 2, 4), false, true, drop, rng);
  b[kS2Conv2] = make_block("s2.conv2", ConvSpec::square(s2 + c6, s2f, 5, 1, 2), false, true, drop, rng);
  b[kS2Conv3] = make_block("s2.conv3", ConvSpec::square(s2f, s2f, 5, 1, 2), false, true, drop, rng);
  b[kS2Conv4] = make_block("s2.conv4", ConvSpec::square(s2f, s2f, 5, 1, 2), false, true, drop, rng);

  for (const auto& [conv, deconv, prefix] :
       {std::tuple{kAlbedoConv, kAlbedoDeconv, "albedo"},
        std::tuple{kShadingConv, kShadingDeconv, "shading"}}) {
    const std::string p = prefix;
    if (cfg.use_deconv_head) {
      b[conv] = make_block(p + ".conv", ConvSpec::square(s2f, head, 5, 1, 2), false, true, drop, rng);
      b[deconv] = make_block(p + ".deconv", ConvSpec::square(head, 3, 8, 4, 2), true, false, false, rng);
    } else {
      b[conv] = make_block(p + ".conv", ConvSpec::square(s2f, 3, 5, 1, 2), false, false, false, rng);
    }
  }
  return net;
}

std::size_t Network::padding_needed(std::size_t extent) const {
  const std::size_t m = cfg_.input_multiple;
  return (m - extent % m) % m;
}

Tensor Network::run_block(std::size_t id, const Tensor& x, bool train_mode, Rng& rng,
                          ForwardCache* cache) const {
  const ConvBlock& b = blocks_[id];
  Tensor z = b.deconv ? deconv_forward(x, b.params, b.spec) : conv_forward(x, b.params, b.spec);
  Tensor a = b.prelu ? prelu_forward(z, b.params.prelu_slopes.value) : z;
  DropoutState drop{cfg_.dropout_prob, train_mode, {}};
  if (b.dropout) a = dropout_forward(a, drop, rng);
  if (cache) {
    auto& c = cache->blocks[id];
    c.input = x;
    c.pre_activation = b.prelu ? std::move(z) : Tensor();
    c.dropout = std::move(drop);
  }
  return a;
}

Tensor Network::back_block(std::size_t id, const Tensor& dy, const ForwardCache& cache) {
  ConvBlock& b = blocks_[id];
  const auto& c = cache.blocks[id];
  Tensor d = b.dropout ? dropout_backward(dy, c.dropout) : dy;
  if (b.prelu) {
    PreluGrads g = prelu_backward(d, c.pre_activation, b.params.prelu_slopes.value);
    b.params.prelu_slopes.grad += g.dslopes;
    d = std::move(g.dx);
  }
  return b.deconv ? deconv_backward(d, c.input, b.params, b.spec)
                  : conv_backward(d, c.input, b.params, b.spec);
}

Tensor Network::run_head(std::size_t conv, std::size_t deconv, const Tensor& x,
                         bool train_mode, Rng& rng, ForwardCache* cache) const {
  Tensor h = run_block(conv, x, train_mode, rng, cache);
  if (cfg_.use_deconv_head) return run_block(deconv, h, train_mode, rng, cache);
  return bilinear_upsample_forward(h, 4);
}

Tensor Network::back_head(std::size_t conv, std::size_t deconv, const Tensor& dy,
                          const ForwardCache& cache) {
  Tensor d = cfg_.use_deconv_head ? back_block(deconv, dy, cache)
                                  : bilinear_upsample_backward(dy, 4);
  return back_block(conv, d, cache);
}

NetworkOutput Network::forward(const Tensor& image, bool train_mode, Rng& rng,
                               ForwardCache* cache) const {
  if (image.empty() || image.c() != 3) {
    throw ShapeError("network input must be N x 3 x H x W, got " + image.shape().str());
  }
  const std::size_t pad_h = padding_needed(image.h());
  const std::size_t pad_w = padding_needed(image.w());
  if (pad_h || pad_w) {
    throw ShapeError("network input " + std::to_string(image.h()) + "x" +
                     std::to_string(image.w()) + " is not a multiple of " +
                     std::to_string(cfg_.input_multiple) + "; pad by " +
                     std::to_string(pad_h) + " rows and " + std::to_string(pad_w) +
                     " columns");
  }
  if (cache) {
    *cache = ForwardCache{};
    cache->blocks.resize(kBlockCount);
    cache->input_shape = image.shape();
  }
  const std::size_t qh = image.h() / 4, qw = image.w() / 4;

  // Scale 1: coarse global context.
  Tensor a = run_block(kS1Conv1, image, train_mode, rng, cache);
  expect_extent(a, qh, qw, "scale-1 conv1 output");
  const Shape conv1_shape = a.shape();
  PoolResult p1 = max_pool_forward(a, kPoolKernel, kPoolStride, kPoolPad);
  a = run_block(kS1Conv2, p1.output, train_mode, rng, cache);
  const Shape conv2_shape = a.shape();
  PoolResult p2 = max_pool_forward(a, kPoolKernel, kPoolStride, kPoolPad);
  a = run_block(kS1Conv3, p2.output, train_mode, rng, cache);
  a = run_block(kS1Conv4, a, train_mode, rng, cache);
  a = run_block(kS1Conv5, a, train_mode, rng, cache);
  const Shape conv5_shape = a.shape();
  PoolResult p5 = max_pool_forward(a, kPoolKernel, kPoolStride, kPoolPad);
  expect_extent(p5.output, image.h() / 32, image.w() / 32, "scale-1 conv5 output");

  Tensor feat = bilinear_upsample_forward(p5.output, 8);
  if (cfg_.use_hypercolumn) {
    Tensor u1 = bilinear_upsample_forward(p1.output, 2);
    Tensor u2 = bilinear_upsample_forward(p2.output, 4);
    if (cache) {
      cache->hc_c1 = u1.c();
      cache->hc_c2 = u2.c();
    }
    feat = concat_channels(concat_channels(u1, u2), feat);
  }
  expect_extent(feat, qh, qw, "scale-1 features before conv6");
  Tensor s1 = run_block(kS1Conv6, feat, train_mode, rng, cache);

  if (cache) {
    cache->pool1 = {std::move(p1.argmax), conv1_shape};
    cache->pool2 = {std::move(p2.argmax), conv2_shape};
    cache->pool5 = {std::move(p5.argmax), conv5_shape};
  }

  // Scale 2: fine prediction at quarter resolution.
  Tensor b = run_block(kS2Conv1, image, train_mode, rng, cache);
  const Shape s2_conv1_shape = b.shape();
  PoolResult q = max_pool_forward(b, 2, 2, 0);
  expect_extent(q.output, qh, qw, "scale-2 pooled features");
  if (cache) {
    cache->pool_s2 = {std::move(q.argmax), s2_conv1_shape};
    cache->s2_channels = q.output.c();
  }
  Tensor f = concat_channels(q.output, s1);
  f = run_block(kS2Conv2, f, train_mode, rng, cache);
  f = run_block(kS2Conv3, f, train_mode, rng, cache);
  f = run_block(kS2Conv4, f, train_mode, rng, cache);

  NetworkOutput out;
  out.log_albedo = run_head(kAlbedoConv, kAlbedoDeconv, f, train_mode, rng, cache);
  out.log_shading = run_head(kShadingConv, kShadingDeconv, f, train_mode, rng, cache);
  expect_extent(out.log_albedo, image.h(), image.w(), "albedo head output");
  expect_extent(out.log_shading, image.h(), image.w(), "shading head output");
  if (cache) cache->valid = true;
  return out;
}

Tensor Network::backward(const ForwardCache& cache, const Tensor& d_log_albedo,
                         const Tensor& d_log_shading) {
  if (!cache.valid) {
    throw std::logic_error("network backward called without a cached forward pass");
  }
  const Shape out_shape{cache.input_shape.n, 3, cache.input_shape.h, cache.input_shape.w};
  require_shape(d_log_albedo, out_shape, "albedo upstream gradient");
  require_shape(d_log_shading, out_shape, "shading upstream gradient");

  Tensor df = back_head(kAlbedoConv, kAlbedoDeconv, d_log_albedo, cache);
  df += back_head(kShadingConv, kShadingDeconv, d_log_shading, cache);
  df = back_block(kS2Conv4, df, cache);
  df = back_block(kS2Conv3, df, cache);
  df = back_block(kS2Conv2, df, cache);
  auto [dq, ds1] = split_channels(df, cache.s2_channels);

  Tensor dimage = back_block(kS2Conv1, max_pool_backward(dq, cache.pool_s2.argmax,
                                                          cache.pool_s2.input_shape),
                             cache);

  Tensor dfeat = back_block(kS1Conv6, ds1, cache);
  Tensor dp1_hc, dp2_hc, du5;
  if (cfg_.use_hypercolumn) {
    auto [d12, d5] = split_channels(dfeat, cache.hc_c1 + cache.hc_c2);
    auto [d1, d2] = split_channels(d12, cache.hc_c1);
    dp1_hc = bilinear_upsample_backward(d1, 2);
    dp2_hc = bilinear_upsample_backward(d2, 4);
    du5 = std::move(d5);
  } else {
    du5 = std::move(dfeat);
  }
  Tensor da = max_pool_backward(bilinear_upsample_backward(du5, 8), cache.pool5.argmax,
                                cache.pool5.input_shape);
  da = back_block(kS1Conv5, da, cache);
  da = back_block(kS1Conv4, da, cache);
  Tensor dp2 = back_block(kS1Conv3, da, cache);
  if (!dp2_hc.empty()) dp2 += dp2_hc;
  Tensor dp1 = back_block(kS1Conv2, max_pool_backward(dp2, cache.pool2.argmax,
                                                      cache.pool2.input_shape),
                          cache);
  if (!dp1_hc.empty()) dp1 += dp1_hc;
  dimage += back_block(kS1Conv1, max_pool_backward(dp1, cache.pool1.argmax,
                                                   cache.pool1.input_shape),
                       cache);
  return dimage;
}

std::vector<NamedParam> Network::parameters() {
  std::vector<NamedParam> out;
  for (auto& b : blocks_) {
    if (b.params.name.empty()) continue;
    const std::string& l = b.params.name;
    out.push_back({l + ".weight", l, &b.params.weights});
    if (!b.params.bias.empty()) out.push_back({l + ".bias", l, &b.params.bias});
    if (!b.params.prelu_slopes.empty()) out.push_back({l + ".slope", l, &b.params.prelu_slopes});
  }
  return out;
}

std::vector<ConstNamedParam> Network::parameters() const {
  std::vector<ConstNamedParam> out;
  for (auto& p : const_cast<Network*>(this)->parameters()) out.push_back({p.name, p.layer, p.param});
  return out;
}

std::vector<std::string> Network::layer_names() const {
  std::vector<std::string> out;
  for (const auto& b : blocks_)
    if (!b.params.name.empty()) out.push_back(b.params.name);
  return out;
}

const ConvBlock& Network::block(const std::string& layer) const {
  for (const auto& b : blocks_)
    if (b.params.name == layer) return b;
  throw std::out_of_range("network has no layer named '" + layer + "'");
}

std::size_t Network::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : parameters()) n += p.param->value.size();
  return n;
}

void Network::zero_grad() {
  for (auto& p : parameters()) p.param->grad.fill(0.0);
}

}  // namespace dint
