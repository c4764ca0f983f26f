#pragma once

#include <cstdint>
#include <vector>

#include "thinar/params.hpp"

namespace thinar {

struct ModelSpec;
struct Design;
class ParameterLayout;

struct SimOutput {
  std::vector<std::int64_t> x;
  std::vector<std::int64_t> y;
  std::uint64_t seed = 0;
  /// False when simulated with phi >= 1 (moment formulas do not apply).
  bool stationary = true;
};

/// Simulate the canonical thinned Poisson autoregression. X starts at the
/// rounded stationary mean (or round(nu) when phi >= 1) and `burn_in`
/// latent steps are discarded. Uses stream `stream` of `seed`.
SimOutput simulate_thinned_pois_ar(const ThinnedArParams& params, std::size_t t_len, std::size_t burn_in,
                                   std::uint64_t seed, std::uint64_t stream = 0);

/// Simulate from the general framework: per-stratum Poisson counts with
/// lambda_it = nu_it + phi_it * sum_j theta_j X_{i,t-j} and binomial
/// reporting with probability pi_it. `constrained` holds one value per
/// constrained slot of `layout` (link coefficients, random effects, theta).
/// With burn_in = 0, x_1 is drawn from Poisson(lambda1) when the layout
/// has a lambda1 block, or set to the known x_1 values when given.
/// Stratum i uses RNG stream i, so a single constant-link stratum with
/// theta = (1) reproduces simulate_thinned_pois_ar exactly.
std::vector<SimOutput> simulate_general(const ModelSpec& spec, const Design& design, const ParameterLayout& layout,
                                        const std::vector<double>& constrained, std::size_t burn_in,
                                        std::uint64_t seed);

}  // namespace thinar
