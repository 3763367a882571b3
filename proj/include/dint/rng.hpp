#pragma once

#include <array>
#include <cstdint>

namespace dint {

/// Counter-based generator: draw k of a stream is a pure function of
/// (seed, k), so the stream is identical on every platform and can be
/// saved/restored as plain integers.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : seed_(seed) {}

  std::uint64_t next_u64();
  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, bound).
  std::uint64_t below(std::uint64_t bound);
  /// Standard normal via Box-Muller; the second variate is cached.
  double normal();
  bool bernoulli(double p) { return uniform() < p; }

  /// Independent child stream keyed by `stream`; does not advance this one.
  Rng fork(std::uint64_t stream) const;

  std::uint64_t seed() const { return seed_; }
  std::uint64_t counter() const { return counter_; }

  /// seed, counter, cached-normal flag, cached-normal bits.
  using State = std::array<std::uint64_t, 4>;
  State state() const;
  static Rng from_state(const State& s);

  bool operator==(const Rng&) const = default;

 private:
  std::uint64_t seed_ = 0;
  std::uint64_t counter_ = 0;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// SplitMix64 finalizer.
std::uint64_t mix64(std::uint64_t x);

}  // namespace dint
