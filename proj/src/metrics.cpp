#include "dint/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "json.hpp"

#include "dint/data.hpp"

namespace dint {

namespace {

bool valid_at(const Tensor& mask, std::size_t n, std::size_t h, std::size_t w) {
  return mask.empty() || mask(n, 0, h, w) != 0.0;
}

void check_pair(const Tensor& truth, const Tensor& pred, const Tensor& mask, const char* who) {
  require_same_shape(truth, pred, who);
  if (!mask.empty()) require_shape(mask, {pred.n(), 1, pred.h(), pred.w()}, std::string(who) + " mask");
}

}  // namespace

double si_mse(const Tensor& truth, const Tensor& pred, const Tensor& mask) {
  check_pair(truth, pred, mask, "si_mse");
  double tp = 0.0, pp = 0.0, count = 0.0;
  for (std::size_t n = 0; n < pred.n(); ++n)
    for (std::size_t c = 0; c < pred.c(); ++c)
      for (std::size_t h = 0; h < pred.h(); ++h)
        for (std::size_t w = 0; w < pred.w(); ++w) {
          if (!valid_at(mask, n, h, w)) continue;
          const double p = pred(n, c, h, w);
          tp += truth(n, c, h, w) * p;
          pp += p * p;
          count += 1.0;
        }
  if (count == 0.0) throw std::invalid_argument("si_mse: mask has no valid pixels");
  const double a = pp > 0.0 ? tp / pp : 0.0;
  double err = 0.0;
  for (std::size_t n = 0; n < pred.n(); ++n)
    for (std::size_t c = 0; c < pred.c(); ++c)
      for (std::size_t h = 0; h < pred.h(); ++h)
        for (std::size_t w = 0; w < pred.w(); ++w) {
          if (!valid_at(mask, n, h, w)) continue;
          const double d = truth(n, c, h, w) - a * pred(n, c, h, w);
          err += d * d;
        }
  return err / count;
}

void LmseConfig::validate() const {
  if (!(window_fraction > 0.0 && window_fraction <= 1.0)) {
    throw std::invalid_argument("lmse: window_fraction must lie in (0, 1]");
  }
  if (!(stride_fraction > 0.0 && stride_fraction <= 1.0)) {
    throw std::invalid_argument("lmse: stride_fraction must lie in (0, 1]");
  }
}

std::vector<std::size_t> window_origins(std::size_t extent, std::size_t window, std::size_t stride) {
  std::vector<std::size_t> out;
  if (window > extent || window == 0) return out;
  stride = std::max<std::size_t>(stride, 1);
  for (std::size_t o = 0; o + window <= extent; o += stride) out.push_back(o);
  if (out.back() + window != extent) out.push_back(extent - window);
  return out;
}

LmseResult lmse_detail(const Tensor& truth, const Tensor& pred, const Tensor& mask,
                       const LmseConfig& cfg) {
  cfg.validate();
  check_pair(truth, pred, mask, "lmse");
  if (pred.n() != 1) throw ShapeError("lmse: expects a single image, got " + pred.shape().str());
  const std::size_t H = pred.h(), W = pred.w(), C = pred.c();
  const auto k = static_cast<std::size_t>(
      std::max(1L, std::lround(cfg.window_fraction * static_cast<double>(std::max(H, W)))));
  if (k > H || k > W) {
    throw ShapeError("lmse: window " + std::to_string(k) + " exceeds image " + pred.shape().str());
  }
  const auto stride = static_cast<std::size_t>(
      std::max(1.0, std::floor(static_cast<double>(k) * cfg.stride_fraction)));
  const auto ys = window_origins(H, k, stride);
  const auto xs = window_origins(W, k, stride);

  LmseResult r;
  Tensor wt(1, C, k, k), wp(1, C, k, k), wm(1, 1, k, k);
  for (std::size_t y0 : ys) {
    for (std::size_t x0 : xs) {
      bool any = false;
      for (std::size_t y = 0; y < k; ++y)
        for (std::size_t x = 0; x < k; ++x) {
          const double m = valid_at(mask, 0, y0 + y, x0 + x) ? 1.0 : 0.0;
          wm(0, 0, y, x) = m;
          any = any || m != 0.0;
          for (std::size_t c = 0; c < C; ++c) {
            wt(0, c, y, x) = truth(0, c, y0 + y, x0 + x);
            wp(0, c, y, x) = pred(0, c, y0 + y, x0 + x);
          }
        }
      if (!any) continue;
      r.lmse += si_mse(wt, wp, wm);
      double zero = 0.0, count = 0.0;
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t y = 0; y < k; ++y)
          for (std::size_t x = 0; x < k; ++x)
            if (wm(0, 0, y, x) != 0.0) {
              zero += wt(0, c, y, x) * wt(0, c, y, x);
              count += 1.0;
            }
      r.zero_lmse += zero / count;
      ++r.windows;
    }
  }
  if (r.windows == 0) throw std::invalid_argument("lmse: no window contains a valid pixel");
  r.lmse /= static_cast<double>(r.windows);
  r.zero_lmse /= static_cast<double>(r.windows);
  return r;
}

double lmse(const Tensor& truth, const Tensor& pred, const Tensor& mask, const LmseConfig& cfg) {
  return lmse_detail(truth, pred, mask, cfg).lmse;
}

double mit_total_lmse(const LmseResult& albedo, const LmseResult& shading) {
  if (albedo.zero_lmse <= 0.0 || shading.zero_lmse <= 0.0) {
    throw std::invalid_argument("mit_total_lmse: zero-predictor normaliser is zero");
  }
  return 0.5 * (albedo.lmse / albedo.zero_lmse + shading.lmse / shading.zero_lmse);
}

// SSIM --------------------------------------------------------------------------------

namespace {

std::vector<double> gaussian_kernel(std::size_t size, double sigma) {
  std::vector<double> g(size);
  const double centre = (static_cast<double>(size) - 1.0) / 2.0;
  double total = 0.0;
  for (std::size_t i = 0; i < size; ++i) {
    const double d = static_cast<double>(i) - centre;
    g[i] = std::exp(-d * d / (2.0 * sigma * sigma));
    total += g[i];
  }
  for (double& v : g) v /= total;
  return g;
}

// Valid-mode separable filtering of one H x W plane.
std::vector<double> filter_valid(const double* src, std::size_t H, std::size_t W,
                                 const std::vector<double>& g) {
  const std::size_t k = g.size(), oh = H - k + 1, ow = W - k + 1;
  std::vector<double> rows(H * ow, 0.0);
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (std::size_t j = 0; j < k; ++j) acc += g[j] * src[y * W + x + j];
      rows[y * ow + x] = acc;
    }
  std::vector<double> out(oh * ow, 0.0);
  for (std::size_t y = 0; y < oh; ++y)
    for (std::size_t x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (std::size_t i = 0; i < k; ++i) acc += g[i] * rows[(y + i) * ow + x];
      out[y * ow + x] = acc;
    }
  return out;
}

}  // namespace

Tensor ssim_map(const Tensor& a, const Tensor& b, const SsimConfig& cfg) {
  require_same_shape(a, b, "ssim");
  if (a.h() < cfg.window || a.w() < cfg.window) {
    throw ShapeError("ssim: image " + a.shape().str() + " is smaller than the " +
                     std::to_string(cfg.window) + "x" + std::to_string(cfg.window) + " window");
  }
  const auto g = gaussian_kernel(cfg.window, cfg.sigma);
  const double c1 = std::pow(cfg.k1 * cfg.dynamic_range, 2);
  const double c2 = std::pow(cfg.k2 * cfg.dynamic_range, 2);
  const std::size_t H = a.h(), W = a.w();
  const std::size_t oh = H - cfg.window + 1, ow = W - cfg.window + 1;
  Tensor out(a.n(), a.c(), oh, ow);
  std::vector<double> aa(H * W), bb(H * W), ab(H * W);
  for (std::size_t n = 0; n < a.n(); ++n) {
    for (std::size_t c = 0; c < a.c(); ++c) {
      const double* pa = a.plane(n, c);
      const double* pb = b.plane(n, c);
      for (std::size_t q = 0; q < H * W; ++q) {
        aa[q] = pa[q] * pa[q];
        bb[q] = pb[q] * pb[q];
        ab[q] = pa[q] * pb[q];
      }
      const auto mu_a = filter_valid(pa, H, W, g);
      const auto mu_b = filter_valid(pb, H, W, g);
      const auto e_aa = filter_valid(aa.data(), H, W, g);
      const auto e_bb = filter_valid(bb.data(), H, W, g);
      const auto e_ab = filter_valid(ab.data(), H, W, g);
      double* dst = out.plane(n, c);
      for (std::size_t q = 0; q < oh * ow; ++q) {
        const double var_a = e_aa[q] - mu_a[q] * mu_a[q];
        const double var_b = e_bb[q] - mu_b[q] * mu_b[q];
        const double cov = e_ab[q] - mu_a[q] * mu_b[q];
        dst[q] = ((2.0 * mu_a[q] * mu_b[q] + c1) * (2.0 * cov + c2)) /
                 ((mu_a[q] * mu_a[q] + mu_b[q] * mu_b[q] + c1) * (var_a + var_b + c2));
      }
    }
  }
  return out;
}

double dssim(const Tensor& truth, const Tensor& pred, bool align, const SsimConfig& cfg) {
  require_same_shape(truth, pred, "dssim");
  Tensor p = pred;
  if (align) {
    double a = 0.0;
    try {
      a = fit_alpha(truth, pred);
    } catch (const std::invalid_argument&) {
      a = 0.0;
    }
    p = elementwise_map(pred, [a](double v) { return std::clamp(a * v, 0.0, 1.0); });
  }
  const Tensor m = ssim_map(truth, p, cfg);
  const double mean = sum(m) / static_cast<double>(m.size());
  return std::clamp((1.0 - mean) / 2.0, 0.0, 1.0);
}

// Reports ------------------------------------------------------------------------------

SampleMetrics evaluate_sample(const EvalSample& s, const EvalOptions& opts) {
  SampleMetrics m;
  m.id = s.id;
  m.mse_a = si_mse(s.albedo_truth, s.albedo_pred, s.mask);
  m.mse_s = si_mse(s.shading_truth, s.shading_pred, s.mask);
  m.lmse_detail_a = lmse_detail(s.albedo_truth, s.albedo_pred, s.mask, opts.lmse);
  m.lmse_detail_s = lmse_detail(s.shading_truth, s.shading_pred, s.mask, opts.lmse);
  m.lmse_a = m.lmse_detail_a.lmse;
  m.lmse_s = m.lmse_detail_s.lmse;
  m.dssim_a = dssim(s.albedo_truth, s.albedo_pred, opts.align_dssim, opts.ssim);
  m.dssim_s = dssim(s.shading_truth, s.shading_pred, opts.align_dssim, opts.ssim);
  return m;
}

void finalize_report(MetricReport& r, bool mit_total) {
  r.mean_albedo = {};
  r.mean_shading = {};
  r.failures = 0;
  double count = 0.0, total = 0.0;
  bool total_ok = mit_total;
  for (const auto& m : r.per_sample) {
    if (m.error) {
      ++r.failures;
      continue;
    }
    count += 1.0;
    r.mean_albedo.mse += m.mse_a;
    r.mean_albedo.lmse += m.lmse_a;
    r.mean_albedo.dssim += m.dssim_a;
    r.mean_shading.mse += m.mse_s;
    r.mean_shading.lmse += m.lmse_s;
    r.mean_shading.dssim += m.dssim_s;
    if (total_ok) {
      try {
        total += mit_total_lmse(m.lmse_detail_a, m.lmse_detail_s);
      } catch (const std::invalid_argument&) {
        total_ok = false;
      }
    }
  }
  if (count > 0.0) {
    for (MetricTriple* t : {&r.mean_albedo, &r.mean_shading}) {
      t->mse /= count;
      t->lmse /= count;
      t->dssim /= count;
    }
  }
  r.avg = {(r.mean_albedo.mse + r.mean_shading.mse) / 2.0,
           (r.mean_albedo.lmse + r.mean_shading.lmse) / 2.0,
           (r.mean_albedo.dssim + r.mean_shading.dssim) / 2.0};
  if (total_ok && count > 0.0) r.mit_total_lmse = total / count;
  else r.mit_total_lmse.reset();
}


MetricReport evaluate_report(const std::vector<EvalSample>& samples, const EvalOptions& opts) {
  if (samples.empty()) throw std::invalid_argument("evaluate_report: no samples");
  MetricReport r;
  for (const auto& s : samples) {
    try {
      r.per_sample.push_back(evaluate_sample(s, opts));
    } catch (const std::exception& e) {
      SampleMetrics m;
      m.id = s.id;
      m.error = e.what();
      r.per_sample.push_back(std::move(m));
    }
  }
  finalize_report(r, opts.mit_total);
  return r;
}

void add_failure(MetricReport& report, const std::string& id, const std::string& error) {
  SampleMetrics m;
  m.id = id;
  m.error = error;
  report.per_sample.push_back(std::move(m));
  finalize_report(report, report.mit_total_lmse.has_value());
}

std::string MetricReport::to_json() const {
  using nlohmann::json;
  json per = json::array();
  for (const auto& m : per_sample) {
    json e{{"id", m.id}};
    if (m.error) {
      e["error"] = *m.error;
    } else {
      e["mse_a"] = m.mse_a;
      e["mse_s"] = m.mse_s;
      e["lmse_a"] = m.lmse_a;
      e["lmse_s"] = m.lmse_s;
      e["dssim_a"] = m.dssim_a;
      e["dssim_s"] = m.dssim_s;
    }
    per.push_back(std::move(e));
  }
  json j;
  j["per_sample"] = std::move(per);
  j["mean"] = {{"mse_a", mean_albedo.mse},     {"mse_s", mean_shading.mse},
               {"lmse_a", mean_albedo.lmse},   {"lmse_s", mean_shading.lmse},
               {"dssim_a", mean_albedo.dssim}, {"dssim_s", mean_shading.dssim}};
  j["avg"] = {{"mse", avg.mse}, {"lmse", avg.lmse}, {"dssim", avg.dssim}};
  if (mit_total_lmse) {
    j["mit_total_lmse"] = *mit_total_lmse;
    j["mit_total_lmse_note"] = "approximation: windowed error normalised by the zero predictor";
  }
  j["failures"] = failures;
  return j.dump(2);
}

}  // namespace dint
