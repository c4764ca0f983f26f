#include "thinar/moments.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "thinar/error.hpp"
#include "thinar/parallel.hpp"
#include "thinar/rng.hpp"
#include "thinar/simulate.hpp"
#include "thinar/stats.hpp"

namespace thinar {

SeriesMoments sample_moments(std::span<const std::int64_t> y) {
  if (y.size() < 3) throw ValidationError("sample_moments: need at least 3 observations");
  const auto n = static_cast<double>(y.size());
  double sum = 0.0;
  for (auto v : y) sum += static_cast<double>(v);
  const double mean = sum / n;
  double c0 = 0.0;
  double c1 = 0.0;
  double prev = static_cast<double>(y[0]) - mean;
  c0 += prev * prev;
  for (std::size_t t = 1; t < y.size(); ++t) {
    const double d = static_cast<double>(y[t]) - mean;
    c0 += d * d;
    c1 += d * prev;
    prev = d;
  }
  if (c0 == 0.0) throw NumericalError("sample_moments: constant series, lag-1 autocorrelation undefined");
  return {mean, c0 / n, c1 / c0};
}

SeriesMoments stationary_latent_moments(double nu, double phi) {
  if (!(nu > 0.0)) throw DomainError("stationary_latent_moments: nu must be positive");
  if (phi < 0.0) throw DomainError("stationary_latent_moments: phi must be nonnegative");
  if (phi >= 1.0) throw DomainError("stationary_latent_moments: phi >= 1, process is not stationary");
  const double mu = nu / (1.0 - phi);
  return {mu, mu / (1.0 - phi * phi), phi};
}

SeriesMoments observed_moments_from_latent(const SeriesMoments& latent, double phi, double pi) {
  if (!(pi > 0.0 && pi <= 1.0)) throw DomainError("observed_moments_from_latent: pi must lie in (0, 1]");
  const double mean = pi * latent.mean;
  const double variance = pi * pi * latent.variance + pi * (1.0 - pi) * latent.mean;
  if (!(variance > 0.0)) throw NumericalError("observed_moments_from_latent: zero observed variance");
  const double acf1 = (1.0 - (1.0 - pi) * mean / variance) * phi;
  return {mean, variance, acf1};
}

MomEstimate mom_from_moments(const SeriesMoments& m) {
  if (m.acf1 == 0.0) throw NumericalError("mom_estimate: lag-1 autocorrelation is zero, phi undefined");
  MomEstimate est;
  est.phi = (1.0 - m.mean / m.variance) / m.acf1;
  if (est.phi == 0.0) throw NumericalError("mom_estimate: phi estimate is zero, pi undefined");
  est.pi = 1.0 - (m.variance / m.mean) * (1.0 - m.acf1 / est.phi);
  if (est.pi == 0.0) throw NumericalError("mom_estimate: pi estimate is zero, nu undefined");
  est.nu = (1.0 - est.phi) * m.mean / est.pi;
  est.phi_out_of_space = !(est.phi > 0.0 && est.phi < 1.0);
  est.pi_out_of_space = !(est.pi > 0.0 && est.pi <= 1.0);
  est.nu_out_of_space = !(est.nu > 0.0);
  return est;
}

MomEstimate mom_estimate(std::span<const std::int64_t> y) { return mom_from_moments(sample_moments(y)); }

std::vector<MomStudyRow> mom_study(const MomStudyConfig& config) {
  if (config.reps == 0) throw ValidationError("mom_study: reps must be positive");
  if (config.lengths.empty() || config.phis.empty() || config.pis.empty()) {
    throw ValidationError("mom_study: empty grid");
  }
  struct Cell {
    double phi, pi;
    std::size_t t_len;
    std::uint64_t seed;
  };
  std::vector<Cell> cells;
  for (double phi : config.phis) {
    for (double pi : config.pis) {
      for (std::size_t t_len : config.lengths) {
        ThinnedArParams p{config.nu, phi, pi};
        p.validate();
        const auto tag = static_cast<std::uint64_t>(cells.size());
        cells.push_back({phi, pi, t_len, derive_seed(config.seed, tag)});
      }
    }
  }

  std::vector<std::array<MomStudyRow, 3>> results(cells.size());
  parallel_for(cells.size(), [&](std::size_t c) {
    const Cell& cell = cells[c];
    std::array<std::vector<double>, 3> est;
    std::size_t failed = 0;
    for (std::size_t r = 0; r < config.reps; ++r) {
      const auto sim = simulate_thinned_pois_ar({config.nu, cell.phi, cell.pi}, cell.t_len, config.burn_in, cell.seed, r);
      try {
        const auto e = mom_estimate(sim.y);
        est[0].push_back(e.phi);
        est[1].push_back(e.pi);
        est[2].push_back(e.nu);
      } catch (const NumericalError&) {
        ++failed;
      }
    }
    static constexpr const char* kNames[3] = {"phi", "pi", "nu"};
    for (int k = 0; k < 3; ++k) {
      MomStudyRow row{cell.phi, cell.pi, cell.t_len, NAN, NAN, NAN, kNames[k], failed};
      if (!est[k].empty()) {
        std::sort(est[k].begin(), est[k].end());
        row.q10 = stats::quantile_type7_sorted(est[k], 0.1);
        row.q50 = stats::quantile_type7_sorted(est[k], 0.5);
        row.q90 = stats::quantile_type7_sorted(est[k], 0.9);
      }
      results[c][k] = row;
    }
  });

  std::vector<MomStudyRow> rows;
  rows.reserve(cells.size() * 3);
  for (auto& triple : results) {
    for (auto& row : triple) rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace thinar
