#include <algorithm>
#include <cmath>
#include <sstream>
#include <vector>

#include "doctest.h"
#include "thinar/error.hpp"
#include "thinar/numerics.hpp"
#include "thinar/reconstruct.hpp"
#include "thinar/rng.hpp"
#include "thinar/stats.hpp"

using namespace thinar;

namespace {

// Poisson median by summing the pmf directly.
std::int64_t median_by_summation(double lambda) {
  double cdf = 0.0;
  double pmf = std::exp(-lambda);
  for (std::int64_t k = 0;; ++k) {
    cdf += pmf;
    if (cdf >= 0.5) return k;
    pmf *= lambda / static_cast<double>(k + 1);
  }
}

ReconstructionSummary summary_of(std::vector<std::int64_t> m, std::vector<std::int64_t> lo,
                                 std::vector<std::int64_t> hi) {
  ReconstructionSummary s;
  s.strata = 1;
  s.t_len = m.size();
  s.median = std::move(m);
  s.lo = std::move(lo);
  s.hi = std::move(hi);
  return s;
}

}  // namespace

TEST_SUITE("reconstruct") {
  TEST_CASE("z* = 0 maps to the Poisson median") {
    const std::vector<double> z = {0.0}, l = {10.0};
    const auto r = reconstruct_counts(z, l, 1, 1);
    CHECK(r.values[0] == median_by_summation(10.0));
    CHECK(r.values[0] == 10);
  }

  TEST_CASE("extreme lower tail gives zero") {
    for (double lambda : {0.5, 1.0, 5.0}) {
      const std::vector<double> z = {-8.0}, l = {lambda};
      CHECK(reconstruct_counts(z, l, 1, 1).values[0] == 0);
    }
  }

  TEST_CASE("monotone in z* at fixed rate") {
    Rng rng(3, 0);
    std::vector<double> z(2000);
    for (double& v : z) v = rng.normal();
    std::sort(z.begin(), z.end());
    const std::vector<double> l(z.size(), 50.0);
    const auto r = reconstruct_counts(z, l, 1, 1);
    CHECK(std::is_sorted(r.values.begin(), r.values.end()));
  }

  TEST_CASE("non-positive rates exclude the draw") {
    const std::vector<double> z = {0.0, 0.0, 0.0, 0.0}, l = {5.0, 5.0, -1.0, 5.0};
    const auto r = reconstruct_counts(z, l, 1, 2);
    CHECK(r.excluded == 1);
    CHECK(r.n_draws() == 1);
    CHECK_THROWS_AS(reconstruct_counts(z, std::vector<double>{1.0}, 1, 2), ValidationError);
  }

  TEST_CASE("reconstructed counts follow Poisson(lambda) marginally") {
    for (double lambda : {5.0, 50.0, 500.0}) {
      Rng rng(17, static_cast<std::uint64_t>(lambda));
      std::vector<double> z(100000);
      for (double& v : z) v = rng.normal();
      const std::vector<double> l(z.size(), lambda);
      const auto r = reconstruct_counts(z, l, 1, 1);
      const auto test =
          stats::chi_squared_gof(r.values, [lambda](std::int64_t k) { return numerics::poisson_pmf(k, lambda); });
      CHECK(test.p_value > 0.01);
    }
  }

  TEST_CASE("negative binomial reconstruction has the right mean and variance") {
    Rng rng(5, 0);
    const double mean = 20.0, size = 4.0;
    std::vector<double> z(100000), l(z.size(), mean), psi(z.size(), size);
    for (double& v : z) v = rng.normal();
    const auto r = reconstruct_counts(z, l, 1, 1, psi);
    double m = 0.0, v = 0.0;
    for (auto x : r.values) m += static_cast<double>(x);
    m /= static_cast<double>(r.values.size());
    for (auto x : r.values) v += (static_cast<double>(x) - m) * (static_cast<double>(x) - m);
    v /= static_cast<double>(r.values.size() - 1);
    CHECK(std::abs(m - mean) < 0.2);
    CHECK(std::abs(v / (mean + mean * mean / size) - 1.0) < 0.05);
  }

  TEST_CASE("chi-squared survival function") {
    CHECK(std::abs(stats::chi_squared_sf(3.841458820694124, 1.0) - 0.05) < 1e-9);
    CHECK(std::abs(stats::chi_squared_sf(2.0, 2.0) - std::exp(-1.0)) < 1e-12);
    CHECK(std::abs(stats::chi_squared_sf(100.0, 100.0) - 0.48119168452795674) < 1e-10);
  }

  TEST_CASE("summaries use attained values and the lower median") {
    CountDraws d;
    d.strata = 1;
    d.t_len = 1;
    d.values = {4, 1, 3, 2};
    const auto s = summarize_counts(d, 0.5);
    CHECK(s.median[0] == 2);
    CHECK(s.lo[0] == 1);
    CHECK(s.hi[0] == 3);
    CHECK(s.lo[0] <= s.median[0]);
    CHECK(s.median[0] <= s.hi[0]);
  }

  TEST_CASE("perfect match rate") {
    const auto a = summary_of({5, 6, 7}, {3, 4, 5}, {8, 9, 10});
    CHECK(perfect_match_rate(a, a) == doctest::Approx(100.0));
    auto b = a;
    for (auto& v : b.hi) v += 1;
    CHECK(perfect_match_rate(a, b) == doctest::Approx(200.0 / 3.0));
    CHECK(perfect_match_rate(b, a) == perfect_match_rate(a, b));
    auto c = a;
    c.median[0] = 0;
    CHECK(perfect_match_rate(a, c, 1) == doctest::Approx(100.0));
    const auto short_one = summary_of({5}, {3}, {8});
    CHECK_THROWS_AS(perfect_match_rate(a, short_one), ValidationError);
  }

  TEST_CASE("prevalence rollup") {
    CountDraws d;
    d.strata = 1;
    d.t_len = 20;
    d.values.assign(20, 3);
    const std::vector<double> pop = {1000.0};
    const auto one = prevalence_rollup(d, 1, pop);
    CHECK(one.values[7] == doctest::Approx(3.0 / 1000.0));
    const auto full = prevalence_rollup(d, 14, pop);
    CHECK(full.values[0] == doctest::Approx(3.0 / 1000.0));
    for (std::size_t t = 13; t < 20; ++t) CHECK(full.values[t] == doctest::Approx(42.0 / 1000.0));

    // Random draws against a direct convolution over two strata.
    Rng rng(9, 0);
    CountDraws r;
    r.strata = 2;
    r.t_len = 30;
    r.values.resize(5 * 60);
    for (auto& v : r.values) v = rng.poisson(20.0);
    const std::vector<double> pops = {500.0, 800.0};
    const auto got = prevalence_rollup(r, 14, pops);
    for (std::size_t dd = 0; dd < 5; ++dd) {
      for (std::size_t i = 0; i < 2; ++i) {
        for (std::size_t t = 0; t < 30; ++t) {
          double s = 0.0;
          for (std::size_t k = 0; k < 14 && k <= t; ++k) s += static_cast<double>(r.values[dd * 60 + i * 30 + t - k]);
          CHECK(got.values[dd * 60 + i * 30 + t] == doctest::Approx(s / pops[i]).epsilon(1e-12));
        }
      }
    }
    // Linearity: rollup(a + b) = rollup(a) + rollup(b).
    CountDraws sum = r;
    for (std::size_t k = 0; k < sum.values.size(); ++k) sum.values[k] += r.values[k];
    const auto twice = prevalence_rollup(sum, 14, pops);
    for (std::size_t k = 0; k < twice.values.size(); ++k) CHECK(twice.values[k] == doctest::Approx(2.0 * got.values[k]));
    CHECK_THROWS_AS(prevalence_rollup(r, 0, pops), ValidationError);
  }

  TEST_CASE("reconstruction CSV") {
    const auto a = summary_of({5, 6}, {3, 4}, {8, 9});
    auto s = a;
    s.level = 0.9;
    std::ostringstream out;
    write_reconstruction_csv(s, out);
    CHECK(out.str() == "stratum,t,median,lo,hi,level\n1,1,5,3,8,0.9\n1,2,6,4,9,0.9\n");
  }

  TEST_CASE("smoothing a single balanced survey") {
    ChainConfig cfg;
    cfg.n_iter = 2000;
    cfg.n_warmup = 1000;
    const auto out = smooth_prevalence({{0, 7, 100, 50}}, cfg);
    REQUIRE(out.summary.size() == 1);
    CHECK(std::abs(out.summary[0].median - 0.5) < 0.03);
  }

  TEST_CASE("constant survey proportions give a flat smooth") {
    std::vector<SurveyRow> rows;
    for (std::size_t w = 1; w <= 10; ++w) rows.push_back({0, 7 * w, 400, 40});
    ChainConfig cfg;
    cfg.n_iter = 2000;
    cfg.n_warmup = 1000;
    const auto out = smooth_prevalence(rows, cfg);
    double lo = 1.0, hi = 0.0, sd = 0.0;
    for (std::size_t k = 0; k < out.summary.size(); ++k) {
      lo = std::min(lo, out.summary[k].median);
      hi = std::max(hi, out.summary[k].median);
    }
    for (const auto& s : summarize(out.draws)) {
      if (s.name.rfind("xi[", 0) == 0) sd = std::max(sd, s.sd);
    }
    CHECK(hi - lo < sd);
  }

  TEST_CASE("smoothed intervals cover a simulated random walk") {
    std::size_t covered = 0, total = 0;
    for (std::uint64_t rep = 0; rep < 5; ++rep) {
      Rng rng(100 + rep, 0);
      std::vector<SurveyRow> rows;
      std::vector<double> truth;
      double eta = numerics::logit(0.05);
      for (std::size_t w = 1; w <= 20; ++w) {
        eta += 0.1 * rng.normal();
        truth.push_back(numerics::logistic(eta));
        rows.push_back({0, w, 1000, rng.binomial(1000, truth.back())});
      }
      ChainConfig cfg;
      cfg.n_iter = 1500;
      cfg.n_warmup = 750;
      cfg.seed = rep + 1;
      const auto out = smooth_prevalence(rows, cfg);
      for (std::size_t k = 0; k < truth.size(); ++k) {
        covered += out.summary[k].lo <= truth[k] && truth[k] <= out.summary[k].hi;
        ++total;
      }
    }
    CHECK(static_cast<double>(covered) >= 0.85 * static_cast<double>(total));
  }

  TEST_CASE("smoothing rejects empty or invalid surveys") {
    ChainConfig cfg;
    CHECK_THROWS_AS(smooth_prevalence({}, cfg), ValidationError);
    CHECK_THROWS_AS(smooth_prevalence({{0, 1, 10, 11}}, cfg), ValidationError);
    CHECK_THROWS_AS(smooth_prevalence({{0, 1, 10, 1}, {0, 1, 10, 2}}, cfg), ValidationError);
  }
}
