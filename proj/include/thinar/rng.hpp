#pragma once

#include <cstdint>
#include <limits>

namespace thinar {

/// Counter-based 64-bit generator. Each (seed, stream) pair names an
/// independent sequence; the n-th output is a pure function of
/// (seed, stream, n), so chains and strata never share mutable state.
class Rng {
 public:
  using result_type = std::uint64_t;

  Rng(std::uint64_t seed, std::uint64_t stream);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()();

  /// Uniform on the open interval (0, 1).
  double uniform();
  double normal();
  double normal(double mean, double sd) { return mean + sd * normal(); }
  std::int64_t poisson(double lambda);
  std::int64_t binomial(std::int64_t n, double p);
  /// Uniform integer on [lo, hi].
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);
  double exponential(double rate);

  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

/// Derive a child seed for a named sub-task (replicate, scenario, ...).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag);

}  // namespace thinar
