#include "dint/rng.hpp"

#include <bit>
#include <cmath>
#include <numbers>

namespace dint {

std::uint64_t mix64(std::uint64_t x) {
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ULL;
  x ^= x >> 27;
  x *= 0x94d049bb133111ebULL;
  x ^= x >> 31;
  return x;
}

std::uint64_t Rng::next_u64() {
  const std::uint64_t key = mix64(seed_ ^ 0x6a09e667f3bcc909ULL);
  return mix64(key + 0x9e3779b97f4a7c15ULL * ++counter_);
}

double Rng::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

std::uint64_t Rng::below(std::uint64_t bound) {
  if (bound <= 1) return 0;
  // Rejection keeps the result unbiased.
  const std::uint64_t limit = (~std::uint64_t{0}) - (~std::uint64_t{0}) % bound;
  std::uint64_t r;
  do {
    r = next_u64();
  } while (r >= limit);
  return r % bound;
}

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1;
  do {
    u1 = uniform();
  } while (u1 <= 0.0);
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double t = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(t);
  has_spare_ = true;
  return r * std::cos(t);
}

Rng Rng::fork(std::uint64_t stream) const {
  return Rng(mix64(mix64(seed_) ^ mix64(stream + 0x243f6a8885a308d3ULL)));
}

Rng::State Rng::state() const {
  return {seed_, counter_, has_spare_ ? 1u : 0u,
          std::bit_cast<std::uint64_t>(spare_)};
}

Rng Rng::from_state(const State& s) {
  Rng r(s[0]);
  r.counter_ = s[1];
  r.has_spare_ = s[2] != 0;
  r.spare_ = std::bit_cast<double>(s[3]);
  return r;
}

}  // namespace dint
