#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "doctest.h"
#include "thinar/design.hpp"
#include "thinar/error.hpp"
#include "thinar/model_spec.hpp"
#include "thinar/moments.hpp"
#include "thinar/simulate.hpp"
#include "thinar/transform.hpp"

using namespace thinar;

namespace {

double mean_of(const std::vector<std::int64_t>& v) {
  double s = 0.0;
  for (auto x : v) s += static_cast<double>(x);
  return s / static_cast<double>(v.size());
}

// Standard error of a statistic from non-overlapping batches of the series.
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

ModelSpec constant_spec(std::size_t strata, std::size_t t_len, const std::string& weights = "[1.0]") {
  ModelSpec spec = model_spec_from_json(R"({
    "serial_interval": {"mode": "fixed", "weights": )" + weights + R"(},
    "links": {
      "nu": {"constant": {"family": "normal_positive", "mean": 10, "sd": 5}},
      "phi": {"constant": {"family": "normal_unit", "mean": 0.5, "sd": 0.3}},
      "pi": {"constant": {"family": "normal_unit", "mean": 0.5, "sd": 0.3}}
    },
    "x1": {"mode": "known"}
  })");
  spec.strata = strata;
  spec.t_len = t_len;
  return spec;
}

std::vector<SimOutput> run_general(const ModelSpec& spec, double nu, double phi, double pi, std::size_t burn_in,
                                   std::uint64_t seed) {
  const Design design = build_design(spec, spec.strata, spec.t_len, {});
  const ParameterLayout layout = ParameterLayout::build(spec, design, false);
  std::vector<double> c(layout.constrained_size());
  c[layout.block(*layout.link_constant(LinkTarget::nu)).con_offset] = nu;
  c[layout.block(*layout.link_constant(LinkTarget::phi)).con_offset] = phi;
  c[layout.block(*layout.link_constant(LinkTarget::pi)).con_offset] = pi;
  return simulate_general(spec, design, layout, c, burn_in, seed);
}

}  // namespace

TEST_SUITE("simulate") {
  TEST_CASE("observed mean at nu 10, phi 0.4, pi 0.4") {
    const ThinnedArParams p{10.0, 0.4, 0.4};
    const SimOutput s = simulate_thinned_pois_ar(p, 1000000, 100, 1);
    // Long-run variance of the thinned series from its autocorrelations.
    const SeriesMoments obs = observed_moments_from_latent(stationary_latent_moments(10.0, 0.4), 0.4, 0.4);
    const double lrv = obs.variance * (1.0 + 2.0 * obs.acf1 / (1.0 - 0.4));
    const double se = std::sqrt(lrv / 1e6);
    CHECK(std::abs(mean_of(s.y) - 20.0 / 3.0) < 3.0 * se);
  }

  TEST_CASE("full reporting copies the latent counts") {
    const SimOutput s = simulate_thinned_pois_ar({5.0, 0.5, 1.0}, 2000, 10, 3);
    CHECK(s.x == s.y);
  }

  TEST_CASE("iid Poisson when phi is zero") {
    const SimOutput s = simulate_thinned_pois_ar({10.0, 0.0, 1.0}, 1000000, 0, 4);
    CHECK(std::abs(mean_of(s.y) - 10.0) < 3.0 * std::sqrt(10.0 / 1e6));
  }

  TEST_CASE("thinning never exceeds the latent count") {
    const SimOutput s = simulate_thinned_pois_ar({3.0, 0.7, 0.3}, 10000, 100, 5);
    for (std::size_t t = 0; t < s.x.size(); ++t) {
      CHECK(s.y[t] >= 0);
      CHECK(s.y[t] <= s.x[t]);
    }
  }

  TEST_CASE("zero length is a domain error") {
    CHECK_THROWS_AS(simulate_thinned_pois_ar({10.0, 0.4, 0.4}, 0, 0, 1), DomainError);
  }

  TEST_CASE("same seed reproduces, different seeds differ") {
    const ThinnedArParams p{10.0, 0.6, 0.6};
    const SimOutput base = simulate_thinned_pois_ar(p, 500, 100, 9);
    CHECK(simulate_thinned_pois_ar(p, 500, 100, 9).y == base.y);
    for (std::uint64_t seed = 1; seed <= 8; ++seed) {
      const SimOutput other = simulate_thinned_pois_ar(p, 500, 100, 100 + seed);
      CHECK(other.y != base.y);
    }
  }

  TEST_CASE("sample moments match the moment map on the 3x3 study grid") {
    for (double pi : {0.4, 0.6, 0.8}) {
      for (double phi : {0.4, 0.6, 0.8}) {
        CAPTURE(pi);
        CAPTURE(phi);
        const SimOutput s = simulate_thinned_pois_ar({10.0, phi, pi}, 1000000, 100, 11);
        const SeriesMoments want = observed_moments_from_latent(stationary_latent_moments(10.0, phi), phi, pi);
        const SeriesMoments got = sample_moments(s.y);
        auto stat_mean = [](const std::vector<std::int64_t>& v) { return sample_moments(v).mean; };
        auto stat_var = [](const std::vector<std::int64_t>& v) { return sample_moments(v).variance; };
        auto stat_acf = [](const std::vector<std::int64_t>& v) { return sample_moments(v).acf1; };
        CHECK(std::abs(got.mean - want.mean) < 3.0 * batch_se(s.y, 100, stat_mean));
        CHECK(std::abs(got.variance - want.variance) < 3.0 * batch_se(s.y, 100, stat_var));
        CHECK(std::abs(got.acf1 - want.acf1) < 3.0 * batch_se(s.y, 100, stat_acf));
      }
    }
  }

  TEST_CASE("general simulator reduces to the canonical one") {
    const ModelSpec spec = constant_spec(1, 300);
    const auto general = run_general(spec, 10.0, 0.4, 0.4, 100, 21);
    const SimOutput canonical = simulate_thinned_pois_ar({10.0, 0.4, 0.4}, 300, 100, 21);
    REQUIRE(general.size() == 1);
    CHECK(general[0].x == canonical.x);
    CHECK(general[0].y == canonical.y);
  }

  TEST_CASE("serial interval weights must form a simplex") {
    auto build_and_run = [] {
      const ModelSpec spec = constant_spec(1, 50, "[0.6, 0.5]");
      run_general(spec, 10.0, 0.4, 0.4, 10, 1);
    };
    CHECK_THROWS_AS(build_and_run(), ValidationError);
  }

  TEST_CASE("strata evolve independently") {
    const std::size_t T = 100000;
    const double phi = 0.6;
    const ModelSpec spec = constant_spec(2, T);
    const auto sims = run_general(spec, 10.0, phi, 0.5, 100, 33);
    REQUIRE(sims.size() == 2);
    const double ma = mean_of(sims[0].x);
    const double mb = mean_of(sims[1].x);
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t t = 0; t < T; ++t) {
      const double a = static_cast<double>(sims[0].x[t]) - ma;
      const double b = static_cast<double>(sims[1].x[t]) - mb;
      sab += a * b;
      saa += a * a;
      sbb += b * b;
    }
    const double r = sab / std::sqrt(saa * sbb);
    // Bartlett: var(r) = (1 + phi^2) / ((1 - phi^2) T) for two independent AR(1) series.
    const double se = std::sqrt((1.0 + phi * phi) / ((1.0 - phi * phi) * static_cast<double>(T)));
    CHECK(std::abs(r) < 3.0 * se);
    CHECK(sims[0].x != sims[1].x);
  }

  TEST_CASE("non-stationary parameters are flagged") {
    const ModelSpec spec = constant_spec(1, 30);
    const auto sims = run_general(spec, 1.0, 1.05, 0.5, 0, 2);
    CHECK_FALSE(sims[0].stationary);
    CHECK(run_general(spec, 1.0, 0.5, 0.5, 0, 2)[0].stationary);
  }
}
