#pragma once

#include <cstdint>

namespace grimp {

// Counter-based generator: draw k of stream s under seed is a pure function
// of (seed, s, k), so results never depend on which thread consumed what.
// Only integer arithmetic is used to produce the raw 64-bit words.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0, std::uint64_t stream = 0) noexcept
      : seed_(seed), stream_(stream) {}

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream() const noexcept { return stream_; }
  std::uint64_t counter() const noexcept { return counter_; }

  std::uint64_t next_u64() noexcept;

  // Uniform in [0, 1) with 53 random bits.
  double uniform() noexcept;
  // Uniform in the open interval (0, 1).
  double uniform_open() noexcept;
  double normal() noexcept;
  // Standard logistic: log(u) - log(1 - u).
  double logistic() noexcept;
  bool bernoulli(double p) noexcept { return uniform() < p; }
  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) noexcept;

  // Independent generator for a sub-task, derived from this one's identity.
  Rng fork(std::uint64_t tag) const noexcept;

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t counter_ = 0;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace grimp
