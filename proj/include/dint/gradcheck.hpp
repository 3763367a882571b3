#pragma once

#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>

#include "dint/tensor.hpp"

namespace dint {

/// Scalar objective; returns f(x).
using ScalarFn = std::function<double(const Tensor&)>;

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

/// Thrown when f is non-finite at a perturbed point.
class GradCheckError : public std::runtime_error {
 public:
  GradCheckError(const std::string& msg, std::size_t index, double offset)
      : std::runtime_error(msg), index(index), offset(offset) {}
  std::size_t index;
  double offset;
};

/// Compares `analytic` (df/dx at x) against central differences with step h.
/// Per coordinate the error is |a - d| / max(|a|, |d|, 1e-8); the maximum
/// over coordinates is returned.
GradCheckResult check_gradient(const ScalarFn& f, const Tensor& x,
                               const Tensor& analytic, double h = 1e-3);

/// Relative error of one analytic/numeric pair, as used by check_gradient.
double relative_error(double analytic, double numeric);

}  // namespace dint
