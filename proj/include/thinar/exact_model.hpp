#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "thinar/design.hpp"
#include "thinar/model_spec.hpp"
#include "thinar/params.hpp"
#include "thinar/rng.hpp"
#include "thinar/series.hpp"
#include "thinar/transform.hpp"

namespace thinar {

/// Log joint of the canonical model for one series with x_1 known:
///   sum_t Bin(y_t; x_t, pi) + sum_{t >= 2} Pois(x_t; nu + phi x_{t-1}).
/// Returns -inf when any y_t > x_t. No prior terms.
double log_joint_exact(const ThinnedArParams& params, std::span<const std::int64_t> x,
                       std::span<const std::int64_t> y);

/// Conditional target of one stratum's latent counts.
struct LatentTarget {
  double nu = 1.0;
  double phi = 0.0;
  double pi = 1.0;
  std::vector<double> theta{1.0};
  bool x1_known = true;
  double lambda1 = 1.0;  // rate of x_1 when it is not known
};

struct LatentUpdate {
  std::int64_t accepted = 0;
  std::int64_t proposed = 0;
};

/// One single-site Metropolis sweep over t = 1..T (t = 1 skipped when x_1 is
/// known). Proposals are uniform on {x_t - width, ..., x_t + width} \ {x_t};
/// proposals below y_t are rejected.
LatentUpdate update_latent_counts(std::span<std::int64_t> x, std::span<const std::int64_t> y,
                                  const LatentTarget& target, std::int64_t width, Rng& rng);
LatentUpdate update_latent_counts(std::span<std::int64_t> x, std::span<const std::int64_t> y,
                                  const ThinnedArParams& params, std::int64_t width, Rng& rng);

/// Proposal half-width round(sqrt(3 sigma^2)) from the stationary latent
/// variance, at least 1. Falls back to the variance of `x` when phi >= 1.
std::int64_t latent_proposal_width(double nu, double phi, std::span<const std::int64_t> x);

/// Exact model with integer latent counts: constant nu, phi, pi, fixed
/// serial interval, Poisson counts. Continuous parameters live in an
/// unconstrained layout; latent counts are carried separately.
class ExactModel {
 public:
  ExactModel(ModelSpec spec, const ObservedSeries& data);

  const ModelSpec& spec() const { return spec_; }
  const ParameterLayout& layout() const { return layout_; }
  std::size_t dim() const { return layout_.unconstrained_size(); }
  std::size_t strata() const { return spec_.strata; }
  std::size_t t_len() const { return spec_.t_len; }
  const std::vector<std::int64_t>& y() const { return y_; }

  /// Log density of the continuous parameters given latent counts x (S * T),
  /// including priors and log-Jacobians. `include_constants = false` drops
  /// the terms that depend on x and y only (for use inside samplers).
  double log_density(std::span<const double> u, std::span<double> grad, std::span<const std::int64_t> x,
                     bool include_constants = true) const;

  LatentTarget latent_target(std::span<const double> c, std::size_t stratum) const;
  std::vector<std::int64_t> initial_latent(std::span<const double> c) const;
  std::vector<double> initial_point(Rng& rng, double jitter = 0.5) const;

 private:
  ModelSpec spec_;
  Design design_;
  ParameterLayout layout_;
  std::vector<std::int64_t> y_;
};

}  // namespace thinar
