#include "dint/verify/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

namespace dint::oracle {

double loop_sum(const Tensor& t) {
  double acc = 0.0;
  for (std::size_t n = 0; n < t.n(); ++n)
    for (std::size_t c = 0; c < t.c(); ++c)
      for (std::size_t h = 0; h < t.h(); ++h)
        for (std::size_t w = 0; w < t.w(); ++w) acc += t(n, c, h, w);
  return acc;
}

Tensor nested_loop_conv(const Tensor& x, const Tensor& weights, const Tensor& bias,
                        std::size_t stride, std::size_t pad) {
  const long H = static_cast<long>(x.h()), W = static_cast<long>(x.w());
  const long K = static_cast<long>(weights.h()), P = static_cast<long>(pad), S = static_cast<long>(stride);
  const long oh = (H + 2 * P - K) / S + 1, ow = (W + 2 * P - static_cast<long>(weights.w())) / S + 1;
  Tensor y(x.n(), weights.n(), static_cast<std::size_t>(oh), static_cast<std::size_t>(ow));
  for (std::size_t n = 0; n < x.n(); ++n)
    for (std::size_t o = 0; o < weights.n(); ++o)
      for (long i = 0; i < oh; ++i)
        for (long j = 0; j < ow; ++j) {
          double acc = bias.empty() ? 0.0 : bias[o];
          for (std::size_t c = 0; c < x.c(); ++c)
            for (long a = 0; a < K; ++a)
              for (long b = 0; b < static_cast<long>(weights.w()); ++b) {
                const long r = i * S + a - P, q = j * S + b - P;
                if (r < 0 || r >= H || q < 0 || q >= W) continue;
                acc += weights(o, c, a, b) * x(n, c, r, q);
              }
          y(n, o, i, j) = acc;
        }
  return y;
}

GridFit grid_alpha(const Tensor& target, const Tensor& basis, double hi, double step) {
  GridFit best{0.0, std::numeric_limits<double>::infinity()};
  const auto steps = static_cast<long>(std::llround(hi / step));
  for (long k = 0; k <= steps; ++k) {
    const double a = static_cast<double>(k) * step;
    double loss = 0.0;
    for (std::size_t i = 0; i < target.size(); ++i) {
      const double d = target[i] - a * basis[i];
      loss += d * d;
    }
    if (loss < best.loss) best = {a, loss};
  }
  return best;
}

double grid_si_mse(const Tensor& truth, const Tensor& pred, double hi, double step) {
  return grid_alpha(truth, pred, hi, step).loss / static_cast<double>(truth.size());
}

double log_mse(const Tensor& log_target, const Tensor& log_pred) {
  double acc = 0.0;
  for (std::size_t i = 0; i < log_target.size(); ++i) {
    const double d = log_target[i] - log_pred[i];
    acc += d * d;
  }
  return acc / static_cast<double>(log_target.size());
}

double brute_force_lmse(const Tensor& truth, const Tensor& pred, double window_fraction) {
  const std::size_t H = truth.h(), W = truth.w(), C = truth.c();
  const auto k = static_cast<std::size_t>(std::lround(window_fraction * static_cast<double>(std::max(H, W))));
  const std::size_t stride = std::max<std::size_t>(k / 2, 1);
  // Every origin reachable by stepping, plus the border-flush one.
  auto origins = [&](std::size_t extent) {
    std::set<std::size_t> s;
    for (std::size_t o = 0; o + k <= extent; o += stride) s.insert(o);
    s.insert(extent - k);
    return s;
  };
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t y0 : origins(H)) {
    for (std::size_t x0 : origins(W)) {
      double tp = 0.0, pp = 0.0;
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t y = y0; y < y0 + k; ++y)
          for (std::size_t x = x0; x < x0 + k; ++x) {
            tp += truth(0, c, y, x) * pred(0, c, y, x);
            pp += pred(0, c, y, x) * pred(0, c, y, x);
          }
      const double a = pp > 0.0 ? tp / pp : 0.0;
      double err = 0.0;
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t y = y0; y < y0 + k; ++y)
          for (std::size_t x = x0; x < x0 + k; ++x) {
            const double d = truth(0, c, y, x) - a * pred(0, c, y, x);
            err += d * d;
          }
      total += err / static_cast<double>(C * k * k);
      ++count;
    }
  }
  return total / static_cast<double>(count);
}

Tensor direct_ssim_map(const Tensor& a, const Tensor& b, std::size_t window, double sigma, double k1,
                       double k2) {
  std::vector<double> g(window * window);
  const double centre = (static_cast<double>(window) - 1.0) / 2.0;
  double norm = 0.0;
  for (std::size_t i = 0; i < window; ++i)
    for (std::size_t j = 0; j < window; ++j) {
      const double di = static_cast<double>(i) - centre, dj = static_cast<double>(j) - centre;
      g[i * window + j] = std::exp(-(di * di + dj * dj) / (2.0 * sigma * sigma));
      norm += g[i * window + j];
    }
  for (double& v : g) v /= norm;
  const double c1 = k1 * k1, c2 = k2 * k2;
  const std::size_t oh = a.h() - window + 1, ow = a.w() - window + 1;
  Tensor out(a.n(), a.c(), oh, ow);
  for (std::size_t n = 0; n < a.n(); ++n)
    for (std::size_t c = 0; c < a.c(); ++c)
      for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t x = 0; x < ow; ++x) {
          double ma = 0.0, mb = 0.0;
          for (std::size_t i = 0; i < window; ++i)
            for (std::size_t j = 0; j < window; ++j) {
              ma += g[i * window + j] * a(n, c, y + i, x + j);
              mb += g[i * window + j] * b(n, c, y + i, x + j);
            }
          double va = 0.0, vb = 0.0, cov = 0.0;
          for (std::size_t i = 0; i < window; ++i)
            for (std::size_t j = 0; j < window; ++j) {
              const double da = a(n, c, y + i, x + j) - ma, db = b(n, c, y + i, x + j) - mb;
              va += g[i * window + j] * da * da;
              vb += g[i * window + j] * db * db;
              cov += g[i * window + j] * da * db;
            }
          out(n, c, y, x) = ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
        }
  return out;
}

double direct_dssim(const Tensor& a, const Tensor& b) {
  const Tensor m = direct_ssim_map(a, b);
  double acc = 0.0;
  for (double v : m.data()) acc += v;
  return (1.0 - acc / static_cast<double>(m.size())) / 2.0;
}

}  // namespace dint::oracle
