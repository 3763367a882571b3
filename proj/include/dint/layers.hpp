#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "dint/rng.hpp"
#include "dint/tensor.hpp"

namespace dint {

/// Geometry of a 2-D convolution (or of the transposed convolution that
/// shares it).
struct ConvSpec {
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  std::size_t kernel_h = 1;
  std::size_t kernel_w = 1;
  std::size_t stride_h = 1;
  std::size_t stride_w = 1;
  std::size_t pad_h = 0;
  std::size_t pad_w = 0;

  static ConvSpec square(std::size_t in, std::size_t out, std::size_t kernel,
                         std::size_t stride = 1, std::size_t pad = 0) {
    return {in, out, kernel, kernel, stride, stride, pad, pad};
  }

  /// floor((in + 2 pad - kernel) / stride) + 1; throws if < 1.
  std::size_t conv_out_h(std::size_t in_h) const;
  std::size_t conv_out_w(std::size_t in_w) const;
  /// (in - 1) stride + kernel - 2 pad; throws if < 1.
  std::size_t deconv_out_h(std::size_t in_h) const;
  std::size_t deconv_out_w(std::size_t in_w) const;

  void validate() const;
};

/// A parameter tensor with its gradient accumulator and momentum buffer.
struct Param {
  Tensor value;
  Tensor grad;
  Tensor velocity;

  Param() = default;
  explicit Param(Tensor v)
      : value(std::move(v)),
        grad(value.empty() ? Tensor() : Tensor(value.shape())),
        velocity(value.empty() ? Tensor() : Tensor(value.shape())) {}

  bool empty() const { return value.empty(); }
};

/// Learnable state of one network layer. Convolution layers followed by a
/// PReLU carry the per-channel slopes here as well.
struct LayerParams {
  std::string name;
  Param weights;
  Param bias;
  Param prelu_slopes;
};

// Convolution -------------------------------------------------------------

/// Zero-padded cross-correlation. Weights are out x in x kh x kw, bias is
/// empty or 1 x out x 1 x 1.
Tensor conv_forward(const Tensor& x, const LayerParams& p, const ConvSpec& s);
/// Returns dL/dx and accumulates weight/bias gradients into `p`.
Tensor conv_backward(const Tensor& dy, const Tensor& x, LayerParams& p,
                     const ConvSpec& s);

// Transposed convolution ---------------------------------------------------

/// Adjoint of conv_forward with respect to its input. Weights are stored
/// out x in x kh x kw from the deconvolution's own point of view, i.e. the
/// transpose (first two axes) of the convolution it is adjoint to.
Tensor deconv_forward(const Tensor& x, const LayerParams& p, const ConvSpec& s);
Tensor deconv_backward(const Tensor& dy, const Tensor& x, LayerParams& p,
                       const ConvSpec& s);

/// Swaps the first two axes of a weight tensor.
Tensor transpose_weights(const Tensor& w);

// Max pooling --------------------------------------------------------------

struct PoolResult {
  Tensor output;
  /// Flat index into the input for each output element.
  std::vector<std::size_t> argmax;
};

/// Max over kernel x kernel windows; padding cells never win. Ties go to
/// the lowest flat input index.
PoolResult max_pool_forward(const Tensor& x, std::size_t kernel,
                            std::size_t stride, std::size_t pad = 0);
Tensor max_pool_backward(const Tensor& dy, const std::vector<std::size_t>& argmax,
                         const Shape& input_shape);

// Bilinear upsampling ------------------------------------------------------

/// Align-corners-false bilinear resize by an integer factor with edge clamp.
Tensor bilinear_upsample_forward(const Tensor& x, std::size_t factor);
Tensor bilinear_upsample_backward(const Tensor& dy, std::size_t factor);

// PReLU --------------------------------------------------------------------

/// slopes: 1 x C x 1 x 1.
Tensor prelu_forward(const Tensor& x, const Tensor& slopes);
struct PreluGrads {
  Tensor dx;
  Tensor dslopes;
};
PreluGrads prelu_backward(const Tensor& dy, const Tensor& x,
                          const Tensor& slopes);

// Dropout ------------------------------------------------------------------

struct DropoutState {
  double probability = 0.5;
  bool train_mode = true;
  /// Entries are 0 or 1/(1-p); empty until a train-mode forward.
  Tensor mask;
};

/// Inverted dropout; identity in eval mode or when p == 0.
Tensor dropout_forward(const Tensor& x, DropoutState& state, Rng& rng);
Tensor dropout_backward(const Tensor& dy, const DropoutState& state);

// Channel concatenation ------------------------------------------------------

Tensor concat_channels(const Tensor& a, const Tensor& b);
/// Splits dy back into the first `channels_a` channels and the rest.
std::pair<Tensor, Tensor> split_channels(const Tensor& dy,
                                         std::size_t channels_a);

}  // namespace dint
