#pragma once

#include <optional>
#include <string>
#include <vector>

#include "dint/tensor.hpp"

namespace dint {

/// Scale-invariant MSE: the prediction is scaled by the least-squares alpha
/// (0 when the prediction is all zero) before averaging squared error over
/// valid entries. `mask` is N x 1 x H x W or empty (all valid).
double si_mse(const Tensor& truth, const Tensor& pred, const Tensor& mask = {});

struct LmseConfig {
  /// Window side as a fraction of the larger image extent.
  double window_fraction = 0.1;
  /// Window stride as a fraction of the window side.
  double stride_fraction = 0.5;

  void validate() const;
};

struct LmseResult {
  /// Mean per-window si-MSE.
  double lmse = 0.0;
  /// Same windows scored against an all-zero prediction.
  double zero_lmse = 0.0;
  std::size_t windows = 0;
};

/// Window origins along one axis: stride steps, the last one flush with
/// the border.
std::vector<std::size_t> window_origins(std::size_t extent, std::size_t window, std::size_t stride);

/// Local MSE: mean of si_mse over overlapping k x k windows,
/// k = round(window_fraction * max(H, W)), skipping windows with no valid
/// pixel. Operates on single images (N = 1).
LmseResult lmse_detail(const Tensor& truth, const Tensor& pred, const Tensor& mask = {},
                       const LmseConfig& cfg = {});
double lmse(const Tensor& truth, const Tensor& pred, const Tensor& mask = {},
            const LmseConfig& cfg = {});

/// Approximation of the MIT benchmark's reweighted "Total" LMSE: each
/// component is normalised by the zero predictor's windowed error, then
/// albedo and shading are averaged.
double mit_total_lmse(const LmseResult& albedo, const LmseResult& shading);

struct SsimConfig {
  std::size_t window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double dynamic_range = 1.0;
};

/// Per-pixel SSIM over the valid (fully covered) window positions:
/// N x C x (H - window + 1) x (W - window + 1).
Tensor ssim_map(const Tensor& a, const Tensor& b, const SsimConfig& cfg = {});

/// (1 - mean SSIM) / 2. With `align`, the prediction is first scaled by
/// fit_alpha against the truth and clipped to [0, 1].
double dssim(const Tensor& truth, const Tensor& pred, bool align = true,
             const SsimConfig& cfg = {});

// Reports ---------------------------------------------------------------------

struct EvalSample {
  std::string id;
  Tensor albedo_truth, shading_truth;
  Tensor albedo_pred, shading_pred;
  Tensor mask;
};

struct SampleMetrics {
  std::string id;
  double mse_a = 0, mse_s = 0;
  double lmse_a = 0, lmse_s = 0;
  double dssim_a = 0, dssim_s = 0;
  LmseResult lmse_detail_a, lmse_detail_s;
  std::optional<std::string> error;
};

struct MetricTriple {
  double mse = 0, lmse = 0, dssim = 0;
};

struct MetricReport {
  std::vector<SampleMetrics> per_sample;
  MetricTriple mean_albedo, mean_shading;
  /// (albedo + shading) / 2 per metric.
  MetricTriple avg;
  std::optional<double> mit_total_lmse;
  std::size_t failures = 0;

  std::string to_json() const;
};

struct EvalOptions {
  LmseConfig lmse;
  SsimConfig ssim;
  bool align_dssim = true;
  bool mit_total = false;
};

SampleMetrics evaluate_sample(const EvalSample& s, const EvalOptions& opts = {});
/// Scores every sample; failing samples are kept in the report with their
/// error and excluded from the means.
MetricReport evaluate_report(const std::vector<EvalSample>& samples, const EvalOptions& opts = {});
/// Recomputes failures, means, Avg and the optional Total column from
/// per_sample.
void finalize_report(MetricReport& report, bool mit_total);
/// Records an externally detected per-sample failure (e.g. a missing file).
void add_failure(MetricReport& report, const std::string& id, const std::string& error);

}  // namespace dint
