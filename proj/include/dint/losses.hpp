#pragma once

#include "dint/tensor.hpp"

namespace dint {

/// Weighting of the scale-invariant term and optional albedo gradient loss.
struct LossConfig {
  double lambda = 0.5;
  bool use_gradient_loss = false;
  /// Guard used when targets are converted to log space upstream.
  double log_epsilon = kLogEpsilon;

  void validate() const;
};

struct LossResult {
  double loss = 0.0;
  /// dLoss/dprediction, zero at masked entries.
  Tensor grad;
};

/// Scale-invariant L2 loss between log-domain target and prediction.
///
/// For every batch item, with y = target - prediction over the n valid
/// channel entries, loss = (1/n) sum y^2 - lambda (1/n^2) (sum y)^2. Batch
/// items are averaged. `mask` is N x 1 x H x W with 1 = valid and is
/// broadcast over channels; an empty mask means all valid.
LossResult sil2_loss(const Tensor& log_target, const Tensor& log_pred,
                     const Tensor& mask, double lambda);

/// Mean squared forward difference of the log residual along rows and
/// columns. A difference only counts when both endpoints are valid; n is
/// the valid channel-entry count, as in sil2_loss.
LossResult gradient_loss(const Tensor& log_target, const Tensor& log_pred,
                         const Tensor& mask);

struct TotalLoss {
  double loss = 0.0;
  double albedo_sil2 = 0.0;
  double shading_sil2 = 0.0;
  double albedo_gradient = 0.0;
  Tensor grad_albedo;
  Tensor grad_shading;
};

/// SIL2(albedo) + SIL2(shading), plus the albedo gradient loss when enabled.
TotalLoss total_loss(const Tensor& log_albedo_target, const Tensor& log_shading_target,
                     const Tensor& log_albedo, const Tensor& log_shading,
                     const Tensor& mask, const LossConfig& cfg);

}  // namespace dint
