#pragma once

// Straightforward reference implementations used to check the optimised
// code paths. Nothing here calls into the routine it is meant to verify.

#include <cstddef>
#include <vector>

#include "dint/tensor.hpp"

namespace dint::oracle {

/// Scalar accumulation over every element.
double loop_sum(const Tensor& t);

/// Direct seven-loop cross-correlation with zero padding.
Tensor nested_loop_conv(const Tensor& x, const Tensor& weights, const Tensor& bias,
                        std::size_t stride, std::size_t pad);

struct GridFit {
  double alpha;
  double loss;  // sum of squared residuals at alpha
};

/// Best alpha on the grid {0, step, 2 step, ..., hi} for sum (t - alpha p)^2.
GridFit grid_alpha(const Tensor& target, const Tensor& basis, double hi = 10.0, double step = 1e-4);

/// si-MSE with alpha taken from the grid instead of the closed form.
double grid_si_mse(const Tensor& truth, const Tensor& pred, double hi = 10.0, double step = 1e-4);

/// Mean squared error in log space (plain least squares).
double log_mse(const Tensor& log_target, const Tensor& log_pred);

/// LMSE by enumerating every window explicitly; each window's alpha and
/// error are computed inline.
double brute_force_lmse(const Tensor& truth, const Tensor& pred, double window_fraction = 0.1);

/// SSIM map from explicit 2-D Gaussian-weighted sums per output pixel,
/// using centred second moments.
Tensor direct_ssim_map(const Tensor& a, const Tensor& b, std::size_t window = 11, double sigma = 1.5,
                       double k1 = 0.01, double k2 = 0.03);
double direct_dssim(const Tensor& a, const Tensor& b);

}  // namespace dint::oracle
