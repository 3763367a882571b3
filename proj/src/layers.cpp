#include "dint/layers.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>

namespace dint {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

long conv_extent(std::size_t in, std::size_t kernel, std::size_t stride,
                 std::size_t pad) {
  const long span = static_cast<long>(in + 2 * pad) - static_cast<long>(kernel);
  if (span < 0) return 0;
  return span / static_cast<long>(stride) + 1;
}

std::string dim_name(const char* what, std::size_t expected, std::size_t got) {
  return std::string(what) + " (expected " + std::to_string(expected) +
         ", got " + std::to_string(got) + ")";
}

struct Geometry {
  std::size_t channels, height, width;
  std::size_t kh, kw, sh, sw, ph, pw;
  std::size_t out_h, out_w;
};

// Unfolds one C x H x W image into a (C kh kw) x (out_h out_w) matrix.
void im2col(const double* x, const Geometry& g, double* col) {
  const std::size_t cols = g.out_h * g.out_w;
  for (std::size_t c = 0; c < g.channels; ++c) {
    const double* xc = x + c * g.height * g.width;
    for (std::size_t i = 0; i < g.kh; ++i) {
      for (std::size_t j = 0; j < g.kw; ++j) {
        double* row = col + ((c * g.kh + i) * g.kw + j) * cols;
        for (std::size_t oh = 0; oh < g.out_h; ++oh) {
          const long ih = static_cast<long>(oh * g.sh + i) - static_cast<long>(g.ph);
          double* dst = row + oh * g.out_w;
          if (ih < 0 || ih >= static_cast<long>(g.height)) {
            std::fill(dst, dst + g.out_w, 0.0);
            continue;
          }
          const double* src = xc + ih * g.width;
          for (std::size_t ow = 0; ow < g.out_w; ++ow) {
            const long iw = static_cast<long>(ow * g.sw + j) - static_cast<long>(g.pw);
            dst[ow] = (iw < 0 || iw >= static_cast<long>(g.width)) ? 0.0 : src[iw];
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatters-adds columns back into a C x H x W image.
void col2im(const double* col, const Geometry& g, double* x) {
  const std::size_t cols = g.out_h * g.out_w;
  for (std::size_t c = 0; c < g.channels; ++c) {
    double* xc = x + c * g.height * g.width;
    for (std::size_t i = 0; i < g.kh; ++i) {
      for (std::size_t j = 0; j < g.kw; ++j) {
        const double* row = col + ((c * g.kh + i) * g.kw + j) * cols;
        for (std::size_t oh = 0; oh < g.out_h; ++oh) {
          const long ih = static_cast<long>(oh * g.sh + i) - static_cast<long>(g.ph);
          if (ih < 0 || ih >= static_cast<long>(g.height)) continue;
          double* dst = xc + ih * g.width;
          const double* src = row + oh * g.out_w;
          for (std::size_t ow = 0; ow < g.out_w; ++ow) {
            const long iw = static_cast<long>(ow * g.sw + j) - static_cast<long>(g.pw);
            if (iw >= 0 && iw < static_cast<long>(g.width)) dst[iw] += src[ow];
          }
        }
      }
    }
  }
}

Geometry conv_geometry(const ConvSpec& s, std::size_t channels, std::size_t h,
                       std::size_t w) {
  return {channels,   h,          w,          s.kernel_h, s.kernel_w,
          s.stride_h, s.stride_w, s.pad_h,    s.pad_w,    s.conv_out_h(h),
          s.conv_out_w(w)};
}

void check_conv_params(const LayerParams& p, const ConvSpec& s,
                       std::size_t weight_out, std::size_t weight_in,
                       std::size_t bias_channels) {
  const Shape& ws = p.weights.value.shape();
  const std::string who = p.name.empty() ? "conv" : p.name;
  if (ws.n != weight_out) throw ShapeError(who + ": " + dim_name("weight dim 0", weight_out, ws.n));
  if (ws.c != weight_in) throw ShapeError(who + ": " + dim_name("weight dim 1", weight_in, ws.c));
  if (ws.h != s.kernel_h) throw ShapeError(who + ": " + dim_name("kernel height", s.kernel_h, ws.h));
  if (ws.w != s.kernel_w) throw ShapeError(who + ": " + dim_name("kernel width", s.kernel_w, ws.w));
  if (!p.bias.empty()) {
    require_shape(p.bias.value, {1, bias_channels, 1, 1}, who + " bias");
  }
}

void check_input_channels(const Tensor& x, std::size_t expected,
                          const std::string& who) {
  if (x.c() != expected) {
    throw ShapeError(who + ": " + dim_name("input channels", expected, x.c()));
  }
}

}  // namespace

std::size_t ConvSpec::conv_out_h(std::size_t in_h) const {
  const long e = conv_extent(in_h, kernel_h, stride_h, pad_h);
  if (e < 1) throw ShapeError("convolution output height < 1 for input height " + std::to_string(in_h));
  return static_cast<std::size_t>(e);
}

std::size_t ConvSpec::conv_out_w(std::size_t in_w) const {
  const long e = conv_extent(in_w, kernel_w, stride_w, pad_w);
  if (e < 1) throw ShapeError("convolution output width < 1 for input width " + std::to_string(in_w));
  return static_cast<std::size_t>(e);
}

std::size_t ConvSpec::deconv_out_h(std::size_t in_h) const {
  const long e = static_cast<long>((in_h - 1) * stride_h + kernel_h) - 2 * static_cast<long>(pad_h);
  if (e < 1) throw ShapeError("deconvolution output height < 1 for input height " + std::to_string(in_h));
  return static_cast<std::size_t>(e);
}

std::size_t ConvSpec::deconv_out_w(std::size_t in_w) const {
  const long e = static_cast<long>((in_w - 1) * stride_w + kernel_w) - 2 * static_cast<long>(pad_w);
  if (e < 1) throw ShapeError("deconvolution output width < 1 for input width " + std::to_string(in_w));
  return static_cast<std::size_t>(e);
}

void ConvSpec::validate() const {
  if (in_channels < 1 || out_channels < 1) throw ShapeError("conv spec: channel counts must be >= 1");
  if (kernel_h < 1 || kernel_w < 1) throw ShapeError("conv spec: kernel must be >= 1");
  if (stride_h < 1 || stride_w < 1) throw ShapeError("conv spec: stride must be >= 1");
}

// --------------------------------------------------------------------------

Tensor conv_forward(const Tensor& x, const LayerParams& p, const ConvSpec& s) {
  s.validate();
  const std::string who = p.name.empty() ? "conv" : p.name;
  check_input_channels(x, s.in_channels, who);
  check_conv_params(p, s, s.out_channels, s.in_channels, s.out_channels);

  const Geometry g = conv_geometry(s, x.c(), x.h(), x.w());
  const std::size_t k = s.in_channels * s.kernel_h * s.kernel_w;
  const std::size_t cols = g.out_h * g.out_w;
  Tensor y(x.n(), s.out_channels, g.out_h, g.out_w);
  std::vector<double> col(k * cols);
  ConstMapMat wmat(p.weights.value.ptr(), s.out_channels, k);
  for (std::size_t n = 0; n < x.n(); ++n) {
    im2col(x.plane(n, 0), g, col.data());
    MapMat ymat(y.plane(n, 0), s.out_channels, cols);
    ymat.noalias() = wmat * ConstMapMat(col.data(), k, cols);
    if (!p.bias.empty()) {
      for (std::size_t o = 0; o < s.out_channels; ++o)
        ymat.row(o).array() += p.bias.value[o];
    }
  }
  return y;
}

Tensor conv_backward(const Tensor& dy, const Tensor& x, LayerParams& p,
                     const ConvSpec& s) {
  s.validate();
  const std::string who = p.name.empty() ? "conv" : p.name;
  check_input_channels(x, s.in_channels, who);
  check_conv_params(p, s, s.out_channels, s.in_channels, s.out_channels);
  const Geometry g = conv_geometry(s, x.c(), x.h(), x.w());
  require_shape(dy, {x.n(), s.out_channels, g.out_h, g.out_w}, who + " upstream gradient");

  const std::size_t k = s.in_channels * s.kernel_h * s.kernel_w;
  const std::size_t cols = g.out_h * g.out_w;
  Tensor dx(x.shape());
  std::vector<double> col(k * cols);
  std::vector<double> dcol(k * cols);
  ConstMapMat wmat(p.weights.value.ptr(), s.out_channels, k);
  MapMat dwmat(p.weights.grad.ptr(), s.out_channels, k);
  for (std::size_t n = 0; n < x.n(); ++n) {
    im2col(x.plane(n, 0), g, col.data());
    ConstMapMat dymat(dy.plane(n, 0), s.out_channels, cols);
    dwmat.noalias() += dymat * ConstMapMat(col.data(), k, cols).transpose();
    if (!p.bias.empty()) {
      for (std::size_t o = 0; o < s.out_channels; ++o)
        p.bias.grad[o] += dymat.row(o).sum();
    }
    MapMat(dcol.data(), k, cols).noalias() = wmat.transpose() * dymat;
    col2im(dcol.data(), g, dx.plane(n, 0));
  }
  return dx;
}

// --------------------------------------------------------------------------

Tensor transpose_weights(const Tensor& w) {
  Tensor t(Shape{w.c(), w.n(), w.h(), w.w()});
  for (std::size_t o = 0; o < w.n(); ++o)
    for (std::size_t i = 0; i < w.c(); ++i)
      for (std::size_t a = 0; a < w.h(); ++a)
        for (std::size_t b = 0; b < w.w(); ++b) t(i, o, a, b) = w(o, i, a, b);
  return t;
}

namespace {

// Deconvolution weights [out, in, kh, kw] rearranged as the
// (out kh kw) x in matrix that maps input pixels to output columns.
RowMat deconv_matrix(const Tensor& w) {
  const std::size_t out = w.n(), in = w.c(), kk = w.h() * w.w();
  RowMat m(out * kk, in);
  for (std::size_t o = 0; o < out; ++o)
    for (std::size_t i = 0; i < in; ++i)
      for (std::size_t t = 0; t < kk; ++t) m(o * kk + t, i) = w.plane(o, i)[t];
  return m;
}

}  // namespace

Tensor deconv_forward(const Tensor& x, const LayerParams& p, const ConvSpec& s) {
  s.validate();
  const std::string who = p.name.empty() ? "deconv" : p.name;
  check_input_channels(x, s.in_channels, who);
  check_conv_params(p, s, s.out_channels, s.in_channels, s.out_channels);

  const std::size_t out_h = s.deconv_out_h(x.h());
  const std::size_t out_w = s.deconv_out_w(x.w());
  // Geometry of the convolution this layer is the transpose of.
  const Geometry g{s.out_channels, out_h,      out_w,      s.kernel_h,
                   s.kernel_w,     s.stride_h, s.stride_w, s.pad_h,
                   s.pad_w,        x.h(),      x.w()};
  const std::size_t rows = s.out_channels * s.kernel_h * s.kernel_w;
  const std::size_t cols = x.h() * x.w();
  const RowMat wmat = deconv_matrix(p.weights.value);
  Tensor y(x.n(), s.out_channels, out_h, out_w);
  std::vector<double> col(rows * cols);
  for (std::size_t n = 0; n < x.n(); ++n) {
    MapMat(col.data(), rows, cols).noalias() =
        wmat * ConstMapMat(x.plane(n, 0), s.in_channels, cols);
    col2im(col.data(), g, y.plane(n, 0));
    if (!p.bias.empty()) {
      for (std::size_t o = 0; o < s.out_channels; ++o) {
        double* yo = y.plane(n, o);
        for (std::size_t q = 0; q < out_h * out_w; ++q) yo[q] += p.bias.value[o];
      }
    }
  }
  return y;
}

Tensor deconv_backward(const Tensor& dy, const Tensor& x, LayerParams& p,
                       const ConvSpec& s) {
  s.validate();
  const std::string who = p.name.empty() ? "deconv" : p.name;
  check_input_channels(x, s.in_channels, who);
  check_conv_params(p, s, s.out_channels, s.in_channels, s.out_channels);
  const std::size_t out_h = s.deconv_out_h(x.h());
  const std::size_t out_w = s.deconv_out_w(x.w());
  require_shape(dy, {x.n(), s.out_channels, out_h, out_w}, who + " upstream gradient");

  const Geometry g{s.out_channels, out_h,      out_w,      s.kernel_h,
                   s.kernel_w,     s.stride_h, s.stride_w, s.pad_h,
                   s.pad_w,        x.h(),      x.w()};
  const std::size_t rows = s.out_channels * s.kernel_h * s.kernel_w;
  const std::size_t cols = x.h() * x.w();
  const RowMat wmat = deconv_matrix(p.weights.value);
  RowMat dwmat = RowMat::Zero(rows, s.in_channels);
  Tensor dx(x.shape());
  std::vector<double> col(rows * cols);
  for (std::size_t n = 0; n < x.n(); ++n) {
    im2col(dy.plane(n, 0), g, col.data());
    ConstMapMat colmat(col.data(), rows, cols);
    ConstMapMat xmat(x.plane(n, 0), s.in_channels, cols);
    MapMat(dx.plane(n, 0), s.in_channels, cols).noalias() = wmat.transpose() * colmat;
    dwmat.noalias() += colmat * xmat.transpose();
    if (!p.bias.empty()) {
      for (std::size_t o = 0; o < s.out_channels; ++o) {
        const double* d = dy.plane(n, o);
        double acc = 0.0;
        for (std::size_t q = 0; q < out_h * out_w; ++q) acc += d[q];
        p.bias.grad[o] += acc;
      }
    }
  }
  const std::size_t kk = s.kernel_h * s.kernel_w;
  Tensor& dw = p.weights.grad;
  for (std::size_t o = 0; o < s.out_channels; ++o)
    for (std::size_t i = 0; i < s.in_channels; ++i)
      for (std::size_t t = 0; t < kk; ++t) dw.plane(o, i)[t] += dwmat(o * kk + t, i);
  return dx;
}

// --------------------------------------------------------------------------

PoolResult max_pool_forward(const Tensor& x, std::size_t kernel,
                            std::size_t stride, std::size_t pad) {
  if (kernel < 1 || stride < 1) throw ShapeError("max pool: kernel and stride must be >= 1");
  if (pad >= kernel) throw ShapeError("max pool: padding must be smaller than the kernel");
  if (kernel > x.h() + 2 * pad || kernel > x.w() + 2 * pad) {
    throw ShapeError("max pool: window " + std::to_string(kernel) +
                     " larger than padded input " + x.shape().str());
  }
  const std::size_t oh_n = static_cast<std::size_t>(conv_extent(x.h(), kernel, stride, pad));
  const std::size_t ow_n = static_cast<std::size_t>(conv_extent(x.w(), kernel, stride, pad));
  PoolResult r{Tensor(x.n(), x.c(), oh_n, ow_n), {}};
  r.argmax.resize(r.output.size());
  std::size_t q = 0;
  for (std::size_t n = 0; n < x.n(); ++n) {
    for (std::size_t c = 0; c < x.c(); ++c) {
      for (std::size_t oh = 0; oh < oh_n; ++oh) {
        const long h0 = static_cast<long>(oh * stride) - static_cast<long>(pad);
        const long h1 = std::min<long>(h0 + static_cast<long>(kernel), static_cast<long>(x.h()));
        for (std::size_t ow = 0; ow < ow_n; ++ow, ++q) {
          const long w0 = static_cast<long>(ow * stride) - static_cast<long>(pad);
          const long w1 = std::min<long>(w0 + static_cast<long>(kernel), static_cast<long>(x.w()));
          double best = -std::numeric_limits<double>::infinity();
          std::size_t arg = 0;
          bool found = false;
          // Row-major scan with strict '>' keeps the lowest flat index on ties.
          for (long ih = std::max<long>(h0, 0); ih < h1; ++ih) {
            for (long iw = std::max<long>(w0, 0); iw < w1; ++iw) {
              const std::size_t idx = x.index(n, c, ih, iw);
              if (!found || x[idx] > best) {
                best = x[idx];
                arg = idx;
                found = true;
              }
            }
          }
          r.output[q] = best;
          r.argmax[q] = arg;
        }
      }
    }
  }
  return r;
}

Tensor max_pool_backward(const Tensor& dy, const std::vector<std::size_t>& argmax,
                         const Shape& input_shape) {
  if (dy.size() != argmax.size()) {
    throw ShapeError("max pool backward: gradient has " + std::to_string(dy.size()) +
                     " entries but " + std::to_string(argmax.size()) + " indices were stored");
  }
  Tensor dx(input_shape);
  for (std::size_t q = 0; q < dy.size(); ++q) dx[argmax[q]] += dy[q];
  return dx;
}

// --------------------------------------------------------------------------

namespace {

struct Tap {
  std::size_t i0, i1;
  double w1;
};

std::vector<Tap> bilinear_taps(std::size_t in, std::size_t factor) {
  std::vector<Tap> taps(in * factor);
  for (std::size_t d = 0; d < taps.size(); ++d) {
    double src = (static_cast<double>(d) + 0.5) / static_cast<double>(factor) - 0.5;
    if (src < 0.0) src = 0.0;
    std::size_t i0 = static_cast<std::size_t>(std::floor(src));
    if (i0 >= in - 1) {
      taps[d] = {in - 1, in - 1, 0.0};
    } else {
      taps[d] = {i0, i0 + 1, src - static_cast<double>(i0)};
    }
  }
  return taps;
}

}  // namespace

Tensor bilinear_upsample_forward(const Tensor& x, std::size_t factor) {
  if (factor < 1) throw ShapeError("bilinear upsample: factor must be >= 1");
  if (factor == 1) return x;
  const auto th = bilinear_taps(x.h(), factor);
  const auto tw = bilinear_taps(x.w(), factor);
  Tensor y(x.n(), x.c(), x.h() * factor, x.w() * factor);
  for (std::size_t n = 0; n < x.n(); ++n) {
    for (std::size_t c = 0; c < x.c(); ++c) {
      const double* src = x.plane(n, c);
      double* dst = y.plane(n, c);
      for (std::size_t oh = 0; oh < y.h(); ++oh) {
        const Tap& a = th[oh];
        const double* r0 = src + a.i0 * x.w();
        const double* r1 = src + a.i1 * x.w();
        for (std::size_t ow = 0; ow < y.w(); ++ow) {
          const Tap& b = tw[ow];
          const double top = r0[b.i0] * (1.0 - b.w1) + r0[b.i1] * b.w1;
          const double bot = r1[b.i0] * (1.0 - b.w1) + r1[b.i1] * b.w1;
          dst[oh * y.w() + ow] = top * (1.0 - a.w1) + bot * a.w1;
        }
      }
    }
  }
  return y;
}

Tensor bilinear_upsample_backward(const Tensor& dy, std::size_t factor) {
  if (factor < 1) throw ShapeError("bilinear upsample: factor must be >= 1");
  if (dy.h() % factor != 0 || dy.w() % factor != 0) {
    throw ShapeError("bilinear upsample backward: gradient " + dy.shape().str() +
                     " is not a multiple of factor " + std::to_string(factor));
  }
  if (factor == 1) return dy;
  const std::size_t in_h = dy.h() / factor, in_w = dy.w() / factor;
  const auto th = bilinear_taps(in_h, factor);
  const auto tw = bilinear_taps(in_w, factor);
  Tensor dx(dy.n(), dy.c(), in_h, in_w);
  for (std::size_t n = 0; n < dy.n(); ++n) {
    for (std::size_t c = 0; c < dy.c(); ++c) {
      const double* g = dy.plane(n, c);
      double* dst = dx.plane(n, c);
      for (std::size_t oh = 0; oh < dy.h(); ++oh) {
        const Tap& a = th[oh];
        for (std::size_t ow = 0; ow < dy.w(); ++ow) {
          const Tap& b = tw[ow];
          const double v = g[oh * dy.w() + ow];
          dst[a.i0 * in_w + b.i0] += v * (1.0 - a.w1) * (1.0 - b.w1);
          dst[a.i0 * in_w + b.i1] += v * (1.0 - a.w1) * b.w1;
          dst[a.i1 * in_w + b.i0] += v * a.w1 * (1.0 - b.w1);
          dst[a.i1 * in_w + b.i1] += v * a.w1 * b.w1;
        }
      }
    }
  }
  return dx;
}

// --------------------------------------------------------------------------

Tensor prelu_forward(const Tensor& x, const Tensor& slopes) {
  require_shape(slopes, {1, x.c(), 1, 1}, "prelu slopes");
  Tensor y(x);
  const std::size_t hw = x.h() * x.w();
  for (std::size_t n = 0; n < x.n(); ++n) {
    for (std::size_t c = 0; c < x.c(); ++c) {
      const double a = slopes[c];
      double* p = y.plane(n, c);
      for (std::size_t q = 0; q < hw; ++q)
        if (p[q] < 0.0) p[q] *= a;
    }
  }
  return y;
}

PreluGrads prelu_backward(const Tensor& dy, const Tensor& x, const Tensor& slopes) {
  require_shape(slopes, {1, x.c(), 1, 1}, "prelu slopes");
  require_same_shape(dy, x, "prelu backward");
  PreluGrads g{Tensor(dy), Tensor(slopes.shape())};
  const std::size_t hw = x.h() * x.w();
  for (std::size_t n = 0; n < x.n(); ++n) {
    for (std::size_t c = 0; c < x.c(); ++c) {
      const double a = slopes[c];
      const double* xp = x.plane(n, c);
      double* dxp = g.dx.plane(n, c);
      double acc = 0.0;
      for (std::size_t q = 0; q < hw; ++q) {
        if (xp[q] < 0.0) {
          acc += xp[q] * dxp[q];
          dxp[q] *= a;
        }
      }
      g.dslopes[c] += acc;
    }
  }
  return g;
}

// --------------------------------------------------------------------------

Tensor dropout_forward(const Tensor& x, DropoutState& state, Rng& rng) {
  const double p = state.probability;
  if (!(p >= 0.0 && p < 1.0)) {
    throw std::invalid_argument("dropout probability must lie in [0, 1)");
  }
  if (!state.train_mode || p == 0.0) {
    state.mask = Tensor();
    return x;
  }
  const double keep_scale = 1.0 / (1.0 - p);
  state.mask = Tensor(x.shape());
  Tensor y(x);
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double m = rng.bernoulli(p) ? 0.0 : keep_scale;
    state.mask[k] = m;
    y[k] *= m;
  }
  return y;
}

Tensor dropout_backward(const Tensor& dy, const DropoutState& state) {
  if (state.mask.empty()) return dy;
  return hadamard(dy, state.mask);
}

// --------------------------------------------------------------------------

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  if (b.empty()) return a;
  if (a.empty()) return b;
  if (a.n() != b.n() || a.h() != b.h() || a.w() != b.w()) {
    throw ShapeError("concat: spatial/batch mismatch " + a.shape().str() + " vs " +
                     b.shape().str());
  }
  Tensor y(a.n(), a.c() + b.c(), a.h(), a.w());
  const std::size_t hw = a.h() * a.w();
  for (std::size_t n = 0; n < a.n(); ++n) {
    std::copy_n(a.plane(n, 0), a.c() * hw, y.plane(n, 0));
    std::copy_n(b.plane(n, 0), b.c() * hw, y.plane(n, a.c()));
  }
  return y;
}

std::pair<Tensor, Tensor> split_channels(const Tensor& dy, std::size_t channels_a) {
  if (channels_a > dy.c()) {
    throw ShapeError("split: " + std::to_string(channels_a) + " channels requested from " +
                     dy.shape().str());
  }
  const std::size_t channels_b = dy.c() - channels_a;
  const std::size_t hw = dy.h() * dy.w();
  Tensor a = channels_a ? Tensor(dy.n(), channels_a, dy.h(), dy.w()) : Tensor();
  Tensor b = channels_b ? Tensor(dy.n(), channels_b, dy.h(), dy.w()) : Tensor();
  for (std::size_t n = 0; n < dy.n(); ++n) {
    if (channels_a) std::copy_n(dy.plane(n, 0), channels_a * hw, a.plane(n, 0));
    if (channels_b) std::copy_n(dy.plane(n, channels_a), channels_b * hw, b.plane(n, 0));
  }
  return {std::move(a), std::move(b)};
}

}  // namespace dint
