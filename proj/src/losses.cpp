#include "dint/losses.hpp"

#include <cmath>
#include <stdexcept>

namespace dint {

void LossConfig::validate() const {
  if (!(lambda >= 0.0 && lambda <= 1.0)) {
    throw std::invalid_argument("loss: lambda must lie in [0, 1]");
  }
  if (!(log_epsilon > 0.0)) throw std::invalid_argument("loss: log_epsilon must be > 0");
}

namespace {

void check_mask(const Tensor& pred, const Tensor& mask, const char* who) {
  if (mask.empty()) return;
  require_shape(mask, {pred.n(), 1, pred.h(), pred.w()}, std::string(who) + " mask");
}

bool valid_at(const Tensor& mask, std::size_t n, std::size_t h, std::size_t w) {
  return mask.empty() || mask(n, 0, h, w) != 0.0;
}

// Valid channel entries of batch item n.
double valid_entries(const Tensor& pred, const Tensor& mask, std::size_t n, const char* who) {
  double count = 0.0;
  for (std::size_t h = 0; h < pred.h(); ++h)
    for (std::size_t w = 0; w < pred.w(); ++w)
      if (valid_at(mask, n, h, w)) count += 1.0;
  if (count == 0.0) {
    throw std::invalid_argument(std::string(who) + ": mask of batch item " + std::to_string(n) +
                                " has no valid pixels");
  }
  return count * static_cast<double>(pred.c());
}

}  // namespace

LossResult sil2_loss(const Tensor& log_target, const Tensor& log_pred, const Tensor& mask,
                     double lambda) {
  require_same_shape(log_target, log_pred, "sil2 loss");
  check_mask(log_pred, mask, "sil2 loss");
  LossResult r{0.0, Tensor(log_pred.shape())};
  const double batch = static_cast<double>(log_pred.n());
  for (std::size_t n = 0; n < log_pred.n(); ++n) {
    const double count = valid_entries(log_pred, mask, n, "sil2 loss");
    double sum_y = 0.0, sum_y2 = 0.0;
    for (std::size_t c = 0; c < log_pred.c(); ++c)
      for (std::size_t h = 0; h < log_pred.h(); ++h)
        for (std::size_t w = 0; w < log_pred.w(); ++w) {
          if (!valid_at(mask, n, h, w)) continue;
          const double y = log_target(n, c, h, w) - log_pred(n, c, h, w);
          sum_y += y;
          sum_y2 += y * y;
        }
    r.loss += (sum_y2 / count - lambda * sum_y * sum_y / (count * count)) / batch;
    const double shift = 2.0 * lambda * sum_y / (count * count);
    for (std::size_t c = 0; c < log_pred.c(); ++c)
      for (std::size_t h = 0; h < log_pred.h(); ++h)
        for (std::size_t w = 0; w < log_pred.w(); ++w) {
          if (!valid_at(mask, n, h, w)) continue;
          const double y = log_target(n, c, h, w) - log_pred(n, c, h, w);
          r.grad(n, c, h, w) = -(2.0 * y / count - shift) / batch;
        }
  }
  return r;
}

LossResult gradient_loss(const Tensor& log_target, const Tensor& log_pred, const Tensor& mask) {
  require_same_shape(log_target, log_pred, "gradient loss");
  check_mask(log_pred, mask, "gradient loss");
  LossResult r{0.0, Tensor(log_pred.shape())};
  const double batch = static_cast<double>(log_pred.n());
  const std::size_t H = log_pred.h(), W = log_pred.w();
  for (std::size_t n = 0; n < log_pred.n(); ++n) {
    const double count = valid_entries(log_pred, mask, n, "gradient loss");
    const double scale = 1.0 / (count * batch);
    double acc = 0.0;
    for (std::size_t c = 0; c < log_pred.c(); ++c) {
      auto y = [&](std::size_t h, std::size_t w) {
        return log_target(n, c, h, w) - log_pred(n, c, h, w);
      };
      for (std::size_t h = 0; h < H; ++h) {
        for (std::size_t w = 0; w < W; ++w) {
          if (!valid_at(mask, n, h, w)) continue;
          if (h + 1 < H && valid_at(mask, n, h + 1, w)) {
            const double d = y(h + 1, w) - y(h, w);
            acc += d * d;
            // d/dpred of d^2: pred enters y with a minus sign.
            r.grad(n, c, h + 1, w) -= 2.0 * d * scale;
            r.grad(n, c, h, w) += 2.0 * d * scale;
          }
          if (w + 1 < W && valid_at(mask, n, h, w + 1)) {
            const double d = y(h, w + 1) - y(h, w);
            acc += d * d;
            r.grad(n, c, h, w + 1) -= 2.0 * d * scale;
            r.grad(n, c, h, w) += 2.0 * d * scale;
          }
        }
      }
    }
    r.loss += acc * scale;
  }
  return r;
}

TotalLoss total_loss(const Tensor& log_albedo_target, const Tensor& log_shading_target,
                     const Tensor& log_albedo, const Tensor& log_shading, const Tensor& mask,
                     const LossConfig& cfg) {
  cfg.validate();
  LossResult a = sil2_loss(log_albedo_target, log_albedo, mask, cfg.lambda);
  LossResult s = sil2_loss(log_shading_target, log_shading, mask, cfg.lambda);
  TotalLoss t;
  t.albedo_sil2 = a.loss;
  t.shading_sil2 = s.loss;
  t.grad_albedo = std::move(a.grad);
  t.grad_shading = std::move(s.grad);
  if (cfg.use_gradient_loss) {
    LossResult g = gradient_loss(log_albedo_target, log_albedo, mask);
    t.albedo_gradient = g.loss;
    t.grad_albedo += g.grad;
  }
  t.loss = t.albedo_sil2 + t.shading_sil2 + t.albedo_gradient;
  return t;
}

}  // namespace dint
