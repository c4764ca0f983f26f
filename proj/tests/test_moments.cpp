#include <cmath>
#include <cstdint>
#include <vector>

#include "doctest.h"
#include "thinar/error.hpp"
#include "thinar/moments.hpp"
#include "thinar/simulate.hpp"

using namespace thinar;

namespace {

// Direct transcription of the 1/T moment definitions.
SeriesMoments moments_oracle(const std::vector<std::int64_t>& y) {
  const double n = static_cast<double>(y.size());
  double m = 0.0;
  for (auto v : y) m += static_cast<double>(v);
  m /= n;
  double c0 = 0.0, c1 = 0.0;
  for (std::size_t t = 0; t < y.size(); ++t) {
    const double d = static_cast<double>(y[t]) - m;
    c0 += d * d;
    if (t + 1 < y.size()) c1 += d * (static_cast<double>(y[t + 1]) - m);
  }
  return {m, c0 / n, c1 / c0};
}

// Spread of an estimator across non-overlapping batches, scaled to the full series.
template <class Stat>
double batch_se(const std::vector<std::int64_t>& y, std::size_t batches, Stat stat) {
  const std::size_t len = y.size() / batches;
  std::vector<double> v;
  for (std::size_t b = 0; b < batches; ++b) {
    std::vector<std::int64_t> part(y.begin() + static_cast<std::ptrdiff_t>(b * len),
                                   y.begin() + static_cast<std::ptrdiff_t>((b + 1) * len));
    v.push_back(stat(part));
  }
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
}

}  // namespace

TEST_SUITE("moments") {
  TEST_CASE("constant series is degenerate") {
    const std::vector<std::int64_t> y{5, 5, 5, 5};
    CHECK_THROWS_AS(sample_moments(y), NumericalError);
    const std::vector<std::int64_t> short_y{1, 2};
    CHECK_THROWS_AS(sample_moments(short_y), ValidationError);
  }

  TEST_CASE("alternating series") {
    std::vector<std::int64_t> y(1000000);
    for (std::size_t t = 0; t < y.size(); ++t) y[t] = static_cast<std::int64_t>(t % 2);
    const SeriesMoments m = sample_moments(y);
    CHECK(m.mean == 0.5);
    CHECK(std::abs(m.acf1 + 1.0) < 1e-3);
    const SeriesMoments o = moments_oracle(y);
    CHECK(std::abs(m.variance - o.variance) < 1e-12);
    CHECK(std::abs(m.acf1 - o.acf1) < 1e-12);
  }

  TEST_CASE("sample moments match the direct definitions") {
    const std::vector<std::int64_t> y{3, 0, 7, 2, 2, 9, 4, 1, 0, 5};
    const SeriesMoments m = sample_moments(y);
    const SeriesMoments o = moments_oracle(y);
    CHECK(std::abs(m.mean - o.mean) < 1e-14);
    CHECK(std::abs(m.variance - o.variance) < 1e-12);
    CHECK(std::abs(m.acf1 - o.acf1) < 1e-12);
  }

  TEST_CASE("lag-one autocorrelation of a fully reported simulation") {
    const SimOutput s = simulate_thinned_pois_ar({10.0, 0.4, 1.0}, 1000000, 100, 2);
    const double se = batch_se(s.y, 100, [](const std::vector<std::int64_t>& v) { return sample_moments(v).acf1; });
    CHECK(std::abs(sample_moments(s.y).acf1 - 0.4) < 3.0 * se);
  }

  TEST_CASE("stationary latent moments") {
    const SeriesMoments a = stationary_latent_moments(10.0, 0.4);
    CHECK(std::abs(a.mean - 16.6667) < 1e-4);
    CHECK(std::abs(a.variance - 19.8413) < 1e-4);
    CHECK(a.acf1 == 0.4);
    const SeriesMoments b = stationary_latent_moments(10.0, 0.8);
    CHECK(std::abs(b.mean - 50.0) < 1e-12);
    CHECK(std::abs(b.variance - 138.889) < 1e-3);
    const SeriesMoments c = stationary_latent_moments(7.0, 1e-12);
    CHECK(std::abs(c.mean - 7.0) < 1e-9);
    CHECK(std::abs(c.variance - 7.0) < 1e-9);
    CHECK_THROWS_AS(stationary_latent_moments(10.0, 1.0), DomainError);
    CHECK_THROWS_AS(stationary_latent_moments(10.0, 1.2), DomainError);
  }

  TEST_CASE("stationary latent moments against a long simulation") {
    const SimOutput s = simulate_thinned_pois_ar({10.0, 0.4, 1.0}, 1000000, 100, 8);
    const SeriesMoments m = sample_moments(s.x);
    const double se_mean = batch_se(s.x, 100, [](const std::vector<std::int64_t>& v) { return sample_moments(v).mean; });
    const double se_var =
        batch_se(s.x, 100, [](const std::vector<std::int64_t>& v) { return sample_moments(v).variance; });
    const SeriesMoments want = stationary_latent_moments(10.0, 0.4);
    CHECK(std::abs(m.mean - want.mean) < 3.0 * se_mean);
    CHECK(std::abs(m.variance - want.variance) < 3.0 * se_var);
  }

  TEST_CASE("observed moments from latent") {
    const SeriesMoments latent{16.6667, 19.8413, 0.4};
    const SeriesMoments same = observed_moments_from_latent(latent, 0.4, 1.0);
    CHECK(same.mean == latent.mean);
    CHECK(same.variance == latent.variance);
    CHECK(std::abs(same.acf1 - 0.4) < 1e-15);
    const SeriesMoments exact = stationary_latent_moments(10.0, 0.4);
    const SeriesMoments o = observed_moments_from_latent(exact, 0.4, 0.4);
    CHECK(std::abs(o.mean - 6.66667) < 1e-5);
    CHECK(std::abs(o.variance - 7.17460) < 1e-5);
    CHECK(std::abs(o.acf1 - 0.176991) < 1e-6);
    for (double pi : {0.1, 0.5, 0.9}) CHECK(observed_moments_from_latent({10.0, 10.0, 0.0}, 0.0, pi).acf1 == 0.0);
    CHECK_THROWS_AS(observed_moments_from_latent(exact, 0.4, 0.0), DomainError);
  }

  TEST_CASE("observed autocorrelation increases with reporting") {
    const SeriesMoments latent = stationary_latent_moments(4.0, 0.7);
    double prev = -1.0;
    for (int k = 1; k <= 100; ++k) {
      const double r = observed_moments_from_latent(latent, 0.7, k / 100.0).acf1;
      CHECK(r > prev);
      prev = r;
    }
  }

  TEST_CASE("moment inversion round trip on the grid") {
    // Exact observed moments of (nu, phi, pi) = (10, 0.4, 0.4).
    const SeriesMoments injected = observed_moments_from_latent(stationary_latent_moments(10.0, 0.4), 0.4, 0.4);
    const MomEstimate e = mom_from_moments(injected);
    CHECK(std::abs(e.phi - 0.4) < 1e-9);
    CHECK(std::abs(e.pi - 0.4) < 1e-9);
    CHECK(std::abs(e.nu - 10.0) < 1e-9);
    CHECK_FALSE(e.any_flag());
    for (double nu = 0.2; nu < 0.85; nu += 0.2) {
      for (double phi = 0.2; phi < 0.85; phi += 0.2) {
        for (double pi = 0.2; pi < 0.85; pi += 0.2) {
          const MomEstimate r =
              mom_from_moments(observed_moments_from_latent(stationary_latent_moments(nu, phi), phi, pi));
          CHECK(std::abs(r.phi - phi) < 1e-9);
          CHECK(std::abs(r.pi - pi) < 1e-9);
          CHECK(std::abs(r.nu - nu) < 1e-9);
        }
      }
    }
  }

  TEST_CASE("zero autocorrelation is an estimation failure") {
    CHECK_THROWS_AS(mom_from_moments({5.0, 6.0, 0.0}), NumericalError);
  }

  TEST_CASE("short series can produce flagged estimates") {
    int flagged = 0;
    for (std::uint64_t seed = 1; seed <= 200; ++seed) {
      const SimOutput s = simulate_thinned_pois_ar({5.0, 0.4, 0.4}, 20, 50, seed);
      try {
        const MomEstimate e = mom_estimate(s.y);
        if (e.any_flag()) ++flagged;
      } catch (const NumericalError&) {
      }
    }
    CHECK(flagged > 0);
  }

  TEST_CASE("moment estimates are consistent on the 3x3 study grid") {
    for (double pi : {0.4, 0.6, 0.8}) {
      for (double phi : {0.4, 0.6, 0.8}) {
        CAPTURE(pi);
        CAPTURE(phi);
        const SimOutput s = simulate_thinned_pois_ar({10.0, phi, pi}, 1000000, 100, 17);
        const MomEstimate e = mom_estimate(s.y);
        auto est = [](const std::vector<std::int64_t>& v) { return mom_estimate(v); };
        CHECK(std::abs(e.phi - phi) <
              3.0 * batch_se(s.y, 20, [&](const std::vector<std::int64_t>& v) { return est(v).phi; }));
        CHECK(std::abs(e.pi - pi) <
              3.0 * batch_se(s.y, 20, [&](const std::vector<std::int64_t>& v) { return est(v).pi; }));
        CHECK(std::abs(e.nu - 10.0) <
              3.0 * batch_se(s.y, 20, [&](const std::vector<std::int64_t>& v) { return est(v).nu; }));
      }
    }
  }

  TEST_CASE("full reporting gives a reporting estimate near one") {
    const SimOutput s = simulate_thinned_pois_ar({10.0, 0.6, 1.0}, 1000000, 100, 5);
    const double se =
        batch_se(s.y, 20, [](const std::vector<std::int64_t>& v) { return mom_estimate(v).pi; });
    CHECK(std::abs(mom_estimate(s.y).pi - 1.0) < 3.0 * se);
  }

  TEST_CASE("moment study") {
    MomStudyConfig one;
    one.phis = {0.6};
    one.pis = {0.6};
    one.lengths = {200};
    one.reps = 1;
    one.seed = 3;
    for (const auto& row : mom_study(one)) {
      CHECK(row.q10 == row.q50);
      CHECK(row.q50 == row.q90);
    }

    MomStudyConfig cfg;
    cfg.phis = {0.6};
    cfg.pis = {0.6};
    cfg.lengths = {50, 1000};
    cfg.reps = 300;
    cfg.seed = 4;
    const auto a = mom_study(cfg);
    const auto b = mom_study(cfg);
    REQUIRE(a.size() == b.size());
    for (std::size_t k = 0; k < a.size(); ++k) {
      CHECK(a[k].q10 == b[k].q10);
      CHECK(a[k].q50 == b[k].q50);
      CHECK(a[k].q90 == b[k].q90);
    }
    double short_err = -1.0, long_err = -1.0;
    for (const auto& row : a) {
      if (row.estimand != "phi") continue;
      (row.t_len == 50 ? short_err : long_err) = std::abs(row.q50 - 0.6);
      if (row.t_len == 1000) CHECK(row.q90 - row.q10 < 0.5);
    }
    CHECK(long_err < short_err);
    CHECK(long_err < 0.05);

    MomStudyConfig bad = cfg;
    bad.reps = 0;
    CHECK_THROWS_AS(mom_study(bad), ValidationError);
  }
}
