#include "dint/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "dint/rng.hpp"

namespace dint {

std::string Shape::str() const {
  return std::to_string(n) + "x" + std::to_string(c) + "x" +
         std::to_string(h) + "x" + std::to_string(w);
}

namespace {

void validate(const Shape& s) {
  if (s.n == 0 || s.c == 0 || s.h == 0 || s.w == 0) {
    throw ShapeError("tensor extents must all be >= 1, got " + s.str());
  }
  const std::size_t limit = std::numeric_limits<std::size_t>::max();
  if (s.n > limit / s.c || s.n * s.c > limit / s.h ||
      s.n * s.c * s.h > limit / s.w) {
    throw ShapeError("tensor element count overflows: " + s.str());
  }
}

}  // namespace

Tensor::Tensor(Shape shape, double fill) : shape_(shape) {
  validate(shape);
  data_.assign(shape.count(), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(shape), data_(std::move(data)) {
  validate(shape);
  if (data_.size() != shape.count()) {
    throw ShapeError("data length " + std::to_string(data_.size()) +
                     " does not match shape " + shape.str());
  }
}

Tensor Tensor::from(Shape shape, std::initializer_list<double> values) {
  return Tensor(shape, std::vector<double>(values));
}

Tensor Tensor::uniform(Shape shape, Rng& rng, double lo, double hi) {
  Tensor t(shape);
  for (double& v : t.data_) v = rng.uniform(lo, hi);
  return t;
}

Tensor Tensor::normal(Shape shape, Rng& rng, double stddev) {
  Tensor t(shape);
  for (double& v : t.data_) v = stddev * rng.normal();
  return t;
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape.count() != size()) {
    throw ShapeError("cannot reshape " + shape_.str() + " to " + shape.str());
  }
  return Tensor(shape, data_);
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(),
                     [](double v) { return std::isfinite(v); });
}

Tensor& Tensor::operator+=(const Tensor& other) {
  require_same_shape(*this, other, "tensor +=");
  for (std::size_t k = 0; k < data_.size(); ++k) data_[k] += other.data_[k];
  return *this;
}

Tensor& Tensor::operator-=(const Tensor& other) {
  require_same_shape(*this, other, "tensor -=");
  for (std::size_t k = 0; k < data_.size(); ++k) data_[k] -= other.data_[k];
  return *this;
}

Tensor& Tensor::operator*=(double s) {
  for (double& v : data_) v *= s;
  return *this;
}

Tensor operator+(Tensor a, const Tensor& b) { return a += b; }
Tensor operator-(Tensor a, const Tensor& b) { return a -= b; }
Tensor operator*(Tensor a, double s) { return a *= s; }

Tensor hadamard(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "hadamard");
  Tensor out(a);
  for (std::size_t k = 0; k < out.size(); ++k) out[k] *= b[k];
  return out;
}

Tensor reduce_sum(const Tensor& t, unsigned axes) {
  if ((axes & kAllAxes) == 0) {
    throw std::invalid_argument("reduce_sum: axis set must be non-empty");
  }
  const Shape& s = t.shape();
  const Shape o{(axes & kAxisN) ? 1 : s.n, (axes & kAxisC) ? 1 : s.c,
                (axes & kAxisH) ? 1 : s.h, (axes & kAxisW) ? 1 : s.w};
  Tensor out(o);
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t c = 0; c < s.c; ++c)
      for (std::size_t h = 0; h < s.h; ++h)
        for (std::size_t w = 0; w < s.w; ++w)
          out((axes & kAxisN) ? 0 : n, (axes & kAxisC) ? 0 : c,
              (axes & kAxisH) ? 0 : h, (axes & kAxisW) ? 0 : w) +=
              t(n, c, h, w);
  return out;
}

double sum(const Tensor& t) {
  double acc = 0.0;
  for (double v : t.data()) acc += v;
  return acc;
}

double dot(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "dot");
  double acc = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) acc += a[k] * b[k];
  return acc;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "max_abs_diff");
  double m = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k)
    m = std::max(m, std::abs(a[k] - b[k]));
  return m;
}

Tensor batch_item(const Tensor& t, std::size_t n) {
  if (n >= t.n()) {
    throw ShapeError("batch index " + std::to_string(n) + " out of range for " +
                     t.shape().str());
  }
  const std::size_t per = t.c() * t.h() * t.w();
  std::vector<double> d(t.ptr() + n * per, t.ptr() + (n + 1) * per);
  return Tensor(Shape{1, t.c(), t.h(), t.w()}, std::move(d));
}

Tensor stack(std::span<const Tensor> items) {
  if (items.empty()) throw ShapeError("stack: no items");
  const Shape s = items.front().shape();
  std::vector<double> d;
  d.reserve(items.size() * s.count());
  for (const Tensor& t : items) {
    if (t.shape() != s || s.n != 1) {
      throw ShapeError("stack: item " + t.shape().str() +
                       " does not match " + s.str());
    }
    d.insert(d.end(), t.data().begin(), t.data().end());
  }
  return Tensor(Shape{items.size(), s.c, s.h, s.w}, std::move(d));
}

void require_shape(const Tensor& t, const Shape& expected,
                   const std::string& what) {
  if (t.shape() != expected) {
    throw ShapeError(what + ": expected shape " + expected.str() + ", got " +
                     t.shape().str());
  }
}

void require_same_shape(const Tensor& a, const Tensor& b,
                        const std::string& what) {
  if (a.shape() != b.shape()) {
    throw ShapeError(what + ": shape mismatch " + a.shape().str() + " vs " +
                     b.shape().str());
  }
}

Tensor guarded_log(const Tensor& t, double eps) {
  return elementwise_map(t, [eps](double x) { return std::log(std::max(x, eps)); });
}

}  // namespace dint
