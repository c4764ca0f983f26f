#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace thinar {

/// Mean, variance and lag-1 autocorrelation of a stationary series.
struct SeriesMoments {
  double mean = 0.0;
  double variance = 0.0;
  double acf1 = 0.0;
};

/// Sample moments with the 1/T convention for variance and lag-1
/// autocovariance. Throws NumericalError for a constant series.
SeriesMoments sample_moments(std::span<const std::int64_t> y);

/// Moments of the latent Poisson autoregression: mean nu/(1-phi),
/// variance mean/(1-phi^2), acf1 phi. Requires 0 <= phi < 1.
SeriesMoments stationary_latent_moments(double nu, double phi);

/// Moments of the binomially thinned series given latent moments.
SeriesMoments observed_moments_from_latent(const SeriesMoments& latent, double phi, double pi);

struct MomEstimate {
  double phi = 0.0;
  double pi = 0.0;
  double nu = 0.0;
  bool phi_out_of_space = false;  // phi not in (0, 1)
  bool pi_out_of_space = false;   // pi not in (0, 1]
  bool nu_out_of_space = false;   // nu <= 0
  bool any_flag() const { return phi_out_of_space || pi_out_of_space || nu_out_of_space; }
};

/// Invert observed moments for (phi, pi, nu), in that order. Out-of-space
/// values are returned as computed and flagged.
MomEstimate mom_from_moments(const SeriesMoments& observed);
MomEstimate mom_estimate(std::span<const std::int64_t> y);

struct MomStudyRow {
  double phi = 0.0;
  double pi = 0.0;
  std::size_t t_len = 0;
  double q10 = 0.0;
  double q50 = 0.0;
  double q90 = 0.0;
  std::string estimand;  // "phi", "pi" or "nu"
  std::size_t n_failed = 0;  // replicates where estimation was undefined
};

struct MomStudyConfig {
  std::vector<double> phis{0.2, 0.4, 0.6, 0.8};
  std::vector<double> pis{0.2, 0.4, 0.6, 0.8};
  double nu = 5.0;
  std::vector<std::size_t> lengths{50, 100, 500, 1000};
  std::size_t reps = 1000;
  std::size_t burn_in = 50;
  std::uint64_t seed = 1;
};

/// Sampling distribution of the moment estimators over a (phi, pi) grid.
std::vector<MomStudyRow> mom_study(const MomStudyConfig& config);

}  // namespace thinar
