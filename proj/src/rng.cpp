#include "thinar/rng.hpp"

#include <cmath>

#include "thinar/error.hpp"
#include "thinar/numerics.hpp"

namespace thinar {

namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

constexpr std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::int64_t poisson_inversion(Rng& rng, double lambda) {
  const double limit = std::exp(-lambda);
  double prod = rng.uniform();
  std::int64_t k = 0;
  while (prod > limit) {
    prod *= rng.uniform();
    ++k;
  }
  return k;
}

// Hormann (1993) transformed rejection with squeeze, for lambda >= 10.
std::int64_t poisson_ptrs(Rng& rng, double lambda) {
  const double slam = std::sqrt(lambda);
  const double loglam = std::log(lambda);
  const double b = 0.931 + 2.53 * slam;
  const double a = -0.059 + 0.02483 * b;
  const double inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
  const double vr = 0.9277 - 3.6224 / (b - 2.0);
  for (;;) {
    const double u = rng.uniform() - 0.5;
    const double v = rng.uniform();
    const double us = 0.5 - std::abs(u);
    const double k = std::floor((2.0 * a / us + b) * u + lambda + 0.43);
    if (us >= 0.07 && v <= vr) return static_cast<std::int64_t>(k);
    if (k < 0.0 || (us < 0.013 && v > us)) continue;
    if (std::log(v) + std::log(inv_alpha) - std::log(a / (us * us) + b) <=
        -lambda + k * loglam - std::lgamma(k + 1.0)) {
      return static_cast<std::int64_t>(k);
    }
  }
}

std::int64_t binomial_inversion(Rng& rng, std::int64_t n, double p) {
  const double q = 1.0 - p;
  const double s = p / q;
  const double a = static_cast<double>(n + 1) * s;
  double r = std::pow(q, static_cast<double>(n));
  double u = rng.uniform();
  std::int64_t x = 0;
  while (u > r && x < n) {
    u -= r;
    ++x;
    r *= a / static_cast<double>(x) - s;
  }
  return x;
}

// Hormann (1993) BTRS transformed rejection, requires p <= 0.5.
std::int64_t binomial_btrs(Rng& rng, std::int64_t n, double p) {
  const double nd = static_cast<double>(n);
  const double q = 1.0 - p;
  const double spq = std::sqrt(nd * p * q);
  const double b = 1.15 + 2.53 * spq;
  const double a = -0.0873 + 0.0248 * b + 0.01 * p;
  const double c = nd * p + 0.5;
  const double vr = 0.92 - 4.2 / b;
  const double alpha = (2.83 + 5.1 / b) * spq;
  const double lpq = std::log(p / q);
  const double m = std::floor((nd + 1.0) * p);
  const double h = std::lgamma(m + 1.0) + std::lgamma(nd - m + 1.0);
  for (;;) {
    const double u = rng.uniform() - 0.5;
    double v = rng.uniform();
    const double us = 0.5 - std::abs(u);
    const double k = std::floor((2.0 * a / us + b) * u + c);
    if (k < 0.0 || k > nd) continue;
    if (us >= 0.07 && v <= vr) return static_cast<std::int64_t>(k);
    v = std::log(v * alpha / (a / (us * us) + b));
    if (v <= h - std::lgamma(k + 1.0) - std::lgamma(nd - k + 1.0) + (k - m) * lpq) {
      return static_cast<std::int64_t>(k);
    }
  }
}

}  // namespace

Rng::Rng(std::uint64_t seed, std::uint64_t stream) : key_(mix64(mix64(seed) ^ (stream * kGolden + 0x632BE59BD9B4E019ULL))) {}

Rng::result_type Rng::operator()() {
  ++counter_;
  return mix64(mix64(key_ + counter_ * kGolden) ^ key_);
}

double Rng::uniform() {
  // 53 random bits, shifted off zero.
  return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53;
}

double Rng::normal() { return numerics::std_normal_quantile(uniform()); }

double Rng::exponential(double rate) { return -std::log(uniform()) / rate; }

std::int64_t Rng::uniform_int(std::int64_t lo, std::int64_t hi) {
  const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
  // Lemire-style rejection to avoid modulo bias.
  const std::uint64_t limit = max() - max() % span;
  std::uint64_t r;
  do {
    r = (*this)();
  } while (r >= limit);
  return lo + static_cast<std::int64_t>(r % span);
}

std::int64_t Rng::poisson(double lambda) {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw DomainError("poisson: rate must be finite and nonnegative");
  if (lambda == 0.0) return 0;
  return lambda < 10.0 ? poisson_inversion(*this, lambda) : poisson_ptrs(*this, lambda);
}

std::int64_t Rng::binomial(std::int64_t n, double p) {
  if (n < 0 || !(p >= 0.0 && p <= 1.0)) throw DomainError("binomial: invalid size or probability");
  if (n == 0 || p == 0.0) return 0;
  if (p == 1.0) return n;
  const bool flip = p > 0.5;
  const double pp = flip ? 1.0 - p : p;
  const std::int64_t k =
      static_cast<double>(n) * pp <= 30.0 ? binomial_inversion(*this, n, pp) : binomial_btrs(*this, n, pp);
  return flip ? n - k : k;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag) { return mix64(seed ^ mix64(tag + kGolden)); }

}  // namespace thinar
