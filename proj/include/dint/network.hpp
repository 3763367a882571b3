#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "dint/layers.hpp"
#include "dint/rng.hpp"
#include "dint/tensor.hpp"

namespace dint {

struct NetworkConfig {
  /// Multiplier on every channel width; 1 gives the full-size topology.
  double channel_scale = 1.0;
  /// Feed resized conv1/conv2/conv5 maps into conv6 (MSCR+HC).
  bool use_hypercolumn = false;
  /// Learned 8x8 stride-4 deconvolution heads instead of fixed bilinear x4.
  bool use_deconv_head = false;
  double dropout_prob = 0.5;
  std::size_t input_multiple = 32;

  void validate() const;
  /// ceil(base * channel_scale); throws if that is zero.
  std::size_t width(std::size_t base) const;
};

/// One convolution (or deconvolution) with its optional PReLU and dropout.
struct ConvBlock {
  LayerParams params;
  ConvSpec spec;
  bool deconv = false;
  bool prelu = false;
  bool dropout = false;
};

/// Activations recorded by a forward pass for the matching backward.
struct ForwardCache {
  struct Block {
    Tensor input;
    Tensor pre_activation;
    DropoutState dropout;
  };
  struct Pool {
    std::vector<std::size_t> argmax;
    Shape input_shape;
  };

  bool valid = false;
  Shape input_shape;
  std::vector<Block> blocks;
  Pool pool1, pool2, pool5, pool_s2;
  std::size_t hc_c1 = 0, hc_c2 = 0;
  std::size_t s2_channels = 0;
};

struct NetworkOutput {
  Tensor log_albedo;
  Tensor log_shading;
};

/// A parameter tensor together with its registry name.
struct NamedParam {
  std::string name;
  std::string layer;
  Param* param;
};

struct ConstNamedParam {
  std::string name;
  std::string layer;
  const Param* param;
};

/// Two-scale convolutional regression network producing log-albedo and
/// log-shading maps at the input resolution.
class Network {
 public:
  /// Builds the topology and draws initial parameters from `rng`.
  static Network build(const NetworkConfig& cfg, Rng& rng);

  const NetworkConfig& config() const { return cfg_; }

  /// Input is N x 3 x H x W in linear [0, 1]; H and W must be multiples of
  /// config().input_multiple. In train mode dropout masks come from `rng`.
  /// When `cache` is given, the activations needed by backward() are kept.
  NetworkOutput forward(const Tensor& image, bool train_mode, Rng& rng,
                        ForwardCache* cache = nullptr) const;

  /// Accumulates parameter gradients for the given upstream gradients and
  /// returns dL/dimage. Rejects a cache that did not come from forward().
  Tensor backward(const ForwardCache& cache, const Tensor& d_log_albedo,
                  const Tensor& d_log_shading);

  std::vector<NamedParam> parameters();
  std::vector<ConstNamedParam> parameters() const;
  std::vector<std::string> layer_names() const;
  const ConvBlock& block(const std::string& layer) const;
  std::size_t parameter_count() const;
  void zero_grad();

  /// Extra padding needed to make `extent` a multiple of input_multiple.
  std::size_t padding_needed(std::size_t extent) const;

 private:
  enum BlockId : std::size_t {
    kS1Conv1, kS1Conv2, kS1Conv3, kS1Conv4, kS1Conv5, kS1Conv6,
    kS2Conv1, kS2Conv2, kS2Conv3, kS2Conv4,
    kAlbedoConv, kAlbedoDeconv, kShadingConv, kShadingDeconv,
    kBlockCount
  };

  Tensor run_block(std::size_t id, const Tensor& x, bool train_mode, Rng& rng,
                   ForwardCache* cache) const;
  Tensor back_block(std::size_t id, const Tensor& dy, const ForwardCache& cache);
  Tensor run_head(std::size_t conv, std::size_t deconv, const Tensor& x,
                  bool train_mode, Rng& rng, ForwardCache* cache) const;
  Tensor back_head(std::size_t conv, std::size_t deconv, const Tensor& dy,
                   const ForwardCache& cache);

  NetworkConfig cfg_;
  std::vector<ConvBlock> blocks_;
};

}  // namespace dint
