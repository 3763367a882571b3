#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace dint {

class Rng;

/// Extents of an N x C x H x W tensor.
struct Shape {
  std::size_t n = 0;
  std::size_t c = 0;
  std::size_t h = 0;
  std::size_t w = 0;

  std::size_t count() const { return n * c * h * w; }
  bool operator==(const Shape&) const = default;
  std::string str() const;
};

/// Bit flags naming the axes of a 4-D tensor.
enum Axis : unsigned {
  kAxisN = 1u,
  kAxisC = 2u,
  kAxisH = 4u,
  kAxisW = 8u,
  kAllAxes = 15u,
};

/// Dense row-major N,C,H,W array of doubles.
///
/// A default-constructed tensor is empty (shape 0x0x0x0); every other tensor
/// has all four extents >= 1.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);
  explicit Tensor(std::size_t n, std::size_t c, std::size_t h, std::size_t w,
         double fill = 0.0)
      : Tensor(Shape{n, c, h, w}, fill) {}

  static Tensor from(Shape shape, std::initializer_list<double> values);
  static Tensor uniform(Shape shape, Rng& rng, double lo = -1.0,
                        double hi = 1.0);
  static Tensor normal(Shape shape, Rng& rng, double stddev = 1.0);

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::size_t n() const { return shape_.n; }
  std::size_t c() const { return shape_.c; }
  std::size_t h() const { return shape_.h; }
  std::size_t w() const { return shape_.w; }

  std::size_t index(std::size_t n, std::size_t c, std::size_t h,
                    std::size_t w) const {
    return ((n * shape_.c + c) * shape_.h + h) * shape_.w + w;
  }
  double& operator()(std::size_t n, std::size_t c, std::size_t h,
                     std::size_t w) {
    return data_[index(n, c, h, w)];
  }
  double operator()(std::size_t n, std::size_t c, std::size_t h,
                    std::size_t w) const {
    return data_[index(n, c, h, w)];
  }
  double& operator[](std::size_t k) { return data_[k]; }
  double operator[](std::size_t k) const { return data_[k]; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  double* ptr() { return data_.data(); }
  const double* ptr() const { return data_.data(); }

  /// Pointer to the first element of plane (n, c).
  double* plane(std::size_t n, std::size_t c) {
    return data_.data() + (n * shape_.c + c) * shape_.h * shape_.w;
  }
  const double* plane(std::size_t n, std::size_t c) const {
    return data_.data() + (n * shape_.c + c) * shape_.h * shape_.w;
  }

  /// Same data, new extents with identical element count.
  Tensor reshaped(Shape shape) const;
  void fill(double v);
  bool all_finite() const;

  Tensor& operator+=(const Tensor& other);
  Tensor& operator-=(const Tensor& other);
  Tensor& operator*=(double s);

  bool operator==(const Tensor& other) const = default;

 private:
  Shape shape_{};
  std::vector<double> data_;
};

Tensor operator+(Tensor a, const Tensor& b);
Tensor operator-(Tensor a, const Tensor& b);
Tensor operator*(Tensor a, double s);
/// Elementwise product.
Tensor hadamard(const Tensor& a, const Tensor& b);

/// out[k] = f(t[k]).
template <typename F>
Tensor elementwise_map(const Tensor& t, F&& f) {
  Tensor out(t);
  for (double& v : out.data()) v = f(v);
  return out;
}

/// Sums over the flagged axes; reduced axes keep extent 1.
Tensor reduce_sum(const Tensor& t, unsigned axes);

double sum(const Tensor& t);
double dot(const Tensor& a, const Tensor& b);
double max_abs_diff(const Tensor& a, const Tensor& b);

/// Copies batch item `n` out as a 1 x C x H x W tensor.
Tensor batch_item(const Tensor& t, std::size_t n);
/// Stacks equally-shaped single-item tensors along N.
Tensor stack(std::span<const Tensor> items);

/// Thrown when tensor extents do not satisfy an operation's contract.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

void require_shape(const Tensor& t, const Shape& expected,
                   const std::string& what);
void require_same_shape(const Tensor& a, const Tensor& b,
                        const std::string& what);

/// Lower bound applied before every log of an intensity image.
inline constexpr double kLogEpsilon = 1e-4;

/// log(max(x, eps)) elementwise.
Tensor guarded_log(const Tensor& t, double eps = kLogEpsilon);

}  // namespace dint
