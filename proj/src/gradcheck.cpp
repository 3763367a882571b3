#include "dint/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace dint {

double relative_error(double analytic, double numeric) {
  const double denom =
      std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / denom;
}

GradCheckResult check_gradient(const ScalarFn& f, const Tensor& x,
                               const Tensor& analytic, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("check_gradient: h must be > 0");
  require_same_shape(x, analytic, "check_gradient");

  GradCheckResult result;
  Tensor probe(x);
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double orig = probe[k];
    probe[k] = orig + h;
    const double fp = f(probe);
    probe[k] = orig - h;
    const double fm = f(probe);
    probe[k] = orig;
    if (!std::isfinite(fp)) {
      throw GradCheckError("f is non-finite at x[" + std::to_string(k) + "]+h",
                           k, h);
    }
    if (!std::isfinite(fm)) {
      throw GradCheckError("f is non-finite at x[" + std::to_string(k) + "]-h",
                           k, -h);
    }
    const double numeric = (fp - fm) / (2.0 * h);
    const double err = relative_error(analytic[k], numeric);
    if (err > result.max_rel_error || k == 0) {
      result = {std::max(err, result.max_rel_error), k, analytic[k], numeric};
    }
  }
  return result;
}

}  // namespace dint
