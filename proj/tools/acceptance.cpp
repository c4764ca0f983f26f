// Acceptance checks. Usage: acceptance [criterion ...]; no arguments runs 1-8.
// Prints one PASS/FAIL line per criterion; exits 1 when any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "nlohmann/json.hpp"
#include "thinar/approx_model.hpp"
#include "thinar/cli.hpp"
#include "thinar/consequences.hpp"
#include "thinar/error.hpp"
#include "thinar/exact_model.hpp"
#include "thinar/mcmc.hpp"
#include "thinar/model_spec.hpp"
#include "thinar/moments.hpp"
#include "thinar/numerics.hpp"
#include "thinar/reconstruct.hpp"
#include "thinar/rng.hpp"
#include "thinar/simulate.hpp"
#include "thinar/stats.hpp"

using namespace thinar;
namespace fs = std::filesystem;

namespace {

const fs::path kSource = THINAR_SOURCE_DIR;

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int digits = 6) {
  std::ostringstream s;
  s << std::setprecision(digits) << v;
  return s.str();
}

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

double bisect(const std::function<double(double)>& f, double lo, double hi, double tol) {
  double flo = f(lo);
  while (hi - lo > tol) {
    const double mid = 0.5 * (lo + hi);
    const double fm = f(mid);
    if ((fm < 0.0) == (flo < 0.0)) {
      lo = mid;
      flo = fm;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

double quantile_of(std::vector<double> v, double p) {
  std::sort(v.begin(), v.end());
  const double pos = p * static_cast<double>(v.size() - 1);
  const auto k = static_cast<std::size_t>(pos);
  return k + 1 < v.size() ? v[k] + (pos - static_cast<double>(k)) * (v[k + 1] - v[k]) : v.back();
}

// 1. Sample moments of long simulations against the moment map.
Verdict moment_map() {
  int ok = 0, total = 0;
  double worst = 0.0;
  for (double pi : {0.4, 0.6, 0.8}) {
    for (double phi : {0.4, 0.6, 0.8}) {
      const SimOutput s = simulate_thinned_pois_ar({10.0, phi, pi}, 1000000, 100, 101);
      const SeriesMoments want = observed_moments_from_latent(stationary_latent_moments(10.0, phi), phi, pi);
      const SeriesMoments got = sample_moments(s.y);
      const double z[3] = {
          (got.mean - want.mean) /
              batch_se(s.y, 100, [](const std::vector<std::int64_t>& v) { return sample_moments(v).mean; }),
          (got.variance - want.variance) /
              batch_se(s.y, 100, [](const std::vector<std::int64_t>& v) { return sample_moments(v).variance; }),
          (got.acf1 - want.acf1) /
              batch_se(s.y, 100, [](const std::vector<std::int64_t>& v) { return sample_moments(v).acf1; })};
      for (double v : z) {
        ++total;
        ok += std::abs(v) < 3.0;
        worst = std::max(worst, std::abs(v));
      }
    }
  }
  return {ok == total, std::to_string(ok) + "/" + std::to_string(total) + " moments within 3 MC SEs, max |z| " +
                           fmt(worst, 3)};
}

// 2. Exact-moment inversion on a 27-point grid.
Verdict mom_round_trip() {
  double worst = 0.0;
  for (double nu : {2.0, 10.0, 50.0}) {
    for (double phi : {0.2, 0.5, 0.8}) {
      for (double pi : {0.2, 0.5, 0.8}) {
        const MomEstimate e = mom_from_moments(observed_moments_from_latent(stationary_latent_moments(nu, phi), phi, pi));
        worst = std::max({worst, std::abs(e.phi - phi), std::abs(e.pi - pi), std::abs(e.nu - nu) / nu});
      }
    }
  }
  return {worst < 1e-9, "max error " + fmt(worst, 3) + " over 27 points"};
}

// 3. Crossing of nu_lim(pi) = nu against the printed threshold root, and the
// naive MLE against its limits.
Verdict prop1() {
  const double nu = 5.0, phi = 0.8;
  const double cross = bisect([&](double p) { return naive_limits({nu, phi, p}).nu_lim - nu; }, 0.01, 0.99, 1e-12);
  const double printed = bisect([&](double p) { return printed_prop1_threshold(p) - phi; }, 0.01, 0.99, 1e-12);
  const bool crossing_ok = std::abs(cross - printed) < 1e-8;

  const SimOutput s = simulate_thinned_pois_ar({10.0, 0.4, 0.4}, 1000000, 100, 303);
  const NaiveFit f = naive_pois_ar_mle(s.y);
  const NaiveLimit l = naive_limits({10.0, 0.4, 0.4});
  const double z_phi = (f.phi_hat - l.phi_lim) / f.se_phi;
  const double z_nu = (f.nu_hat - l.nu_lim) / f.se_nu;
  const bool mle_ok = f.converged && std::abs(z_phi) < 3.0 && std::abs(z_nu) < 3.0;
  return {crossing_ok && mle_ok, "crossing pi " + fmt(cross, 10) + " vs printed root " + fmt(printed, 10) + " (" +
                                     (crossing_ok ? "match" : "differ") + "); MLE phi " + fmt(f.phi_hat) + " (lim " +
                                     fmt(l.phi_lim) + ", z " + fmt(z_phi, 3) + "), nu " + fmt(f.nu_hat) + " (lim " +
                                     fmt(l.nu_lim) + ", z " + fmt(z_nu, 3) + ")"};
}

// 4. Sign of d nu_lim / d pi against the two printed inequality forms.
Verdict prop2() {
  int agree = 0, forms_disagree = 0, corrected = 0;
  const double h = 1e-6;
  for (int i = 0; i < 50; ++i) {
    for (int j = 0; j < 50; ++j) {
      const double pi = 0.01 + 0.98 * i / 49.0;
      const double phi = 0.01 + 0.98 * j / 49.0;
      const bool negative = naive_limits({1.0, phi, pi + h}).nu_lim - naive_limits({1.0, phi, pi - h}).nu_lim < 0.0;
      const PropBounds b = prop_bounds(pi, phi);
      if (b.printed_main_claims_negative == negative || b.printed_appendix_claims_negative == negative) ++agree;
      if (b.printed_main_claims_negative != b.printed_appendix_claims_negative) {
        ++forms_disagree;
        std::clog << "  forms disagree at pi " << fmt(pi, 4) << " phi " << fmt(phi, 4) << "\n";
      }
      if (b.nu_prime_negative == negative) ++corrected;
    }
  }
  return {agree == 2500, std::to_string(agree) + "/2500 points agree with a printed form; forms disagree at " +
                             std::to_string(forms_disagree) + "; reversed orientation agrees at " +
                             std::to_string(corrected) + "/2500"};
}

struct PairedFit {
  double median_gap_phi = 0.0, tol_phi = 0.0;
  double median_gap_pi = 0.0, tol_pi = 0.0;
  double match_rate = 0.0;
  std::vector<double> exact_rhat;
};

PairedFit paired_fit(const ModelSpec& spec, double phi, double pi, std::uint64_t seed, std::size_t rep) {
  const SimOutput sim = simulate_thinned_pois_ar({10.0, phi, pi}, 50, 100, seed, rep);
  ObservedSeries data;
  data.strata = 1;
  data.t_len = 50;
  data.labels = {"1"};
  data.y = sim.y;
  data.x = sim.x;

  ChainConfig ex_cfg;
  ex_cfg.n_iter = 100000;
  ex_cfg.n_warmup = 50000;
  ex_cfg.thin = 10;
  ex_cfg.n_leapfrog = 8;
  ex_cfg.seed = seed * 1000 + rep;
  const ExactModel exact(spec, data);
  const DrawStore ex = run_exact_mcmc(exact, ex_cfg);

  ChainConfig ap_cfg;
  ap_cfg.n_iter = 7000;
  ap_cfg.n_warmup = 3000;
  ap_cfg.seed = seed * 1000 + rep;
  const ApproxModel approx(spec, data);
  const DrawStore ap = run_chains(make_approx_target(approx), ap_cfg);

  std::map<std::string, ParameterSummary> se, sa;
  for (const auto& r : summarize(ex)) se[r.name] = r;
  for (const auto& r : summarize(ap)) sa[r.name] = r;
  PairedFit out;
  auto gap = [&](const std::string& n, double& g, double& tol) {
    g = std::abs(sa[n].q50 - se[n].q50);
    tol = 2.0 * std::hypot(sa[n].mcse_median, se[n].mcse_median);
  };
  gap("phi", out.median_gap_phi, out.tol_phi);
  gap("pi", out.median_gap_pi, out.tol_pi);
  for (const char* n : {"nu", "phi", "pi"}) out.exact_rhat.push_back(se[n].rhat);

  const auto rec_a = summarize_counts(counts_from_approx_draws(ap, approx.spec()), 0.9);
  const auto rec_e = summarize_counts(counts_from_exact_draws(ex, 1, 50), 0.9);
  out.match_rate = perfect_match_rate(rec_a, rec_e, 1);
  return out;
}

// 5. Approximate against exact posteriors on the scaled simulation study.
Verdict approx_vs_exact() {
  const ModelSpec spec = load_model_spec((kSource / "configs" / "simulation_study.json").string());
  int close = 0, reps_total = 0, retained = 0;
  std::vector<double> rhats;
  double match_median_08 = 0.0;
  std::ostringstream detail;
  for (double level : {0.4, 0.6, 0.8}) {
    std::vector<double> rates;
    int close_here = 0;
    for (std::size_t rep = 0; rep < 10; ++rep) {
      ++reps_total;
      PairedFit p;
      try {
        p = paired_fit(spec, level, level, 500 + static_cast<std::uint64_t>(level * 10), rep);
      } catch (const NumericalError& e) {
        std::clog << "  scenario " << level << " rep " << rep << " dropped: " << e.what() << "\n";
        continue;
      }
      ++retained;
      const bool ok = p.median_gap_phi < p.tol_phi && p.median_gap_pi < p.tol_pi;
      close += ok;
      close_here += ok;
      rates.push_back(p.match_rate);
      rhats.insert(rhats.end(), p.exact_rhat.begin(), p.exact_rhat.end());
      std::clog << "  scenario " << level << " rep " << rep << ": |d phi| " << fmt(p.median_gap_phi, 3) << " (tol "
                << fmt(p.tol_phi, 3) << "), |d pi| " << fmt(p.median_gap_pi, 3) << " (tol " << fmt(p.tol_pi, 3)
                << "), match " << fmt(p.match_rate, 4) << "%\n";
    }
    const double med = rates.empty() ? 0.0 : quantile_of(rates, 0.5);
    if (level == 0.8) match_median_08 = med;
    detail << "(" << level << "," << level << "): close " << close_here << "/" << rates.size() << ", median match "
           << fmt(med, 4) << "%; ";
  }
  // The reference R-hat quantiles are printed to two decimals.
  const double rhat_q = rhats.empty() ? INFINITY : quantile_of(rhats, 0.975);
  const bool a_ok = close >= 0.8 * reps_total;
  const bool b_ok = match_median_08 >= 50.0 && match_median_08 <= 90.0;
  const bool r_ok = rhat_q < 1.015;
  detail << "(a) " << close << "/" << reps_total << (a_ok ? " ok" : " FAIL") << ", (b) " << (b_ok ? "ok" : "FAIL")
         << ", exact R-hat quantiles " << fmt(quantile_of(rhats, 0.025), 4) << " " << fmt(quantile_of(rhats, 0.5), 4)
         << " " << fmt(rhat_q, 4) << " over " << retained << " retained" << (r_ok ? "" : " FAIL");
  return {a_ok && b_ok && r_ok, detail.str()};
}

// 6. Reconstructed counts against Poisson(lambda).
Verdict latent_transform() {
  std::ostringstream detail;
  bool ok = true;
  for (double lambda : {5.0, 50.0, 500.0}) {
    Rng rng(606, static_cast<std::uint64_t>(lambda));
    std::vector<double> z(100000);
    for (double& v : z) v = rng.normal();
    const std::vector<double> l(z.size(), lambda);
    const CountDraws r = reconstruct_counts(z, l, 1, 1);
    const auto test =
        stats::chi_squared_gof(r.values, [lambda](std::int64_t k) { return numerics::poisson_pmf(k, lambda); });
    ok = ok && test.p_value > 0.01;
    detail << (lambda == 5.0 ? "" : "; ") << "lambda " << lambda << " p " << fmt(test.p_value, 3);
  }
  return {ok, detail.str()};
}

// 7. Latent update against enumeration, and HMC on a standard normal.
Verdict sampler() {
  const double nu = 2.0, phi = 0.5, pi = 0.5;
  const std::vector<std::int64_t> y = {1, 2, 1};
  std::map<std::pair<int, int>, double> exact;
  double norm = 0.0;
  for (int a = 0; a <= 40; ++a) {
    for (int b = 0; b <= 40; ++b) {
      const std::vector<std::int64_t> x = {3, a, b};
      const double lp = log_joint_exact({nu, phi, pi}, x, y);
      if (!std::isfinite(lp)) continue;
      exact[{a, b}] = std::exp(lp);
      norm += std::exp(lp);
    }
  }
  std::vector<std::int64_t> x = {3, 2, 2};
  Rng rng(707, 0);
  std::map<std::pair<int, int>, double> counts;
  const int sweeps = 2000000;
  for (int s = 0; s < sweeps; ++s) {
    update_latent_counts(x, y, ThinnedArParams{nu, phi, pi}, 3, rng);
    counts[{static_cast<int>(x[1]), static_cast<int>(x[2])}] += 1.0;
  }
  double tv = 0.0;
  for (const auto& [k, p] : exact) {
    const auto it = counts.find(k);
    tv += std::abs(p / norm - (it == counts.end() ? 0.0 : it->second / sweeps));
  }
  for (const auto& [k, n] : counts) {
    if (!exact.count(k)) tv += n / sweeps;
  }
  tv *= 0.5;

  TargetModel normal;
  normal.dim = 5;
  normal.log_density = [](std::span<const double> u, std::span<double> g) {
    double lp = 0.0;
    for (std::size_t k = 0; k < u.size(); ++k) {
      lp -= 0.5 * u[k] * u[k];
      if (!g.empty()) g[k] = -u[k];
    }
    return lp;
  };
  ChainConfig cfg;
  cfg.seed = 708;
  const DrawStore store = run_chains(normal, cfg);
  double worst = 0.0;
  for (std::size_t k = 0; k < 5; ++k) worst = std::max(worst, split_rhat(store.per_chain(k)));
  return {tv < 0.02 && worst < 1.01, "TV " + fmt(tv, 3) + ", max split R-hat " + fmt(worst, 5)};
}

// 8. Coverage of pi on the seasonal model, end to end through the tool.
Verdict rotavirus_coverage() {
  const fs::path dir = fs::temp_directory_path() / "thinar_acceptance_rotavirus";
  fs::remove_all(dir);
  const std::string config = (kSource / "configs" / "rotavirus.json").string();
  const std::string truth_path = (kSource / "configs" / "rotavirus.truth.json").string();
  std::ifstream truth_in(truth_path);
  const double pi_true = numerics::logistic(nlohmann::json::parse(truth_in)["pi.intercept"].get<double>());

  auto quiet = [](std::vector<std::string> args) {
    std::ostringstream sink;
    auto* old = std::cout.rdbuf(sink.rdbuf());
    const int code = run_subcommand(args);
    std::cout.rdbuf(old);
    return code;
  };
  if (quiet({"simulate", "--config", config, "--truth", truth_path, "--t", "364", "--burnin", "0", "--reps", "20",
             "--seed", "808", "--out", (dir / "data").string()}) != kExitOk) {
    return {false, "simulation failed"};
  }
  int covered = 0;
  std::ostringstream detail;
  for (int r = 1; r <= 20; ++r) {
    char name[32];
    std::snprintf(name, sizeof name, "series_%03d.csv", r);
    const fs::path fit_dir = dir / ("fit_" + std::to_string(r));
    if (quiet({"fit", "--engine", "approx", "--config", config, "--data", (dir / "data" / name).string(), "--chains",
               "4", "--iter", "4000", "--warmup", "2000", "--leapfrog", "128", "--seed", std::to_string(r), "--out", fit_dir.string()}) !=
        kExitOk) {
      std::clog << "  rep " << r << " fit failed\n";
      continue;
    }
    std::ifstream in(fit_dir / "summary.csv");
    std::string line;
    while (std::getline(in, line)) {
      if (line.rfind("pi", 0) != 0 || line.rfind("pi[", 0) == 0) continue;
      std::vector<double> f;
      std::stringstream ss(line.substr(line.find(',') + 1));
      for (std::string cell; std::getline(ss, cell, ',');) f.push_back(std::stod(cell));
      // mean, sd, q2.5, q5, q50, q95, q97.5, ess, rhat
      const double lo = numerics::logistic(f[2]), hi = numerics::logistic(f[6]);
      const bool hit = lo <= pi_true && pi_true <= hi;
      covered += hit;
      std::clog << "  rep " << r << ": pi 95% CrI [" << fmt(lo, 4) << ", " << fmt(hi, 4) << "]" << (hit ? "" : " miss")
                << ", R-hat " << fmt(f[8], 4) << "\n";
      break;
    }
  }
  detail << covered << "/20 intervals cover pi = " << fmt(pi_true, 4);
  return {covered >= 17, detail.str()};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<const char*, std::function<Verdict()>>> criteria = {
      {"moment map", moment_map},
      {"moment inversion round trip", mom_round_trip},
      {"naive over-estimation crossing and MLE limits", prop1},
      {"nu derivative sign forms", prop2},
      {"approximate vs exact posteriors", approx_vs_exact},
      {"latent Gaussian transform", latent_transform},
      {"samplers", sampler},
      {"seasonal model coverage of pi", rotavirus_coverage},
  };
  std::vector<std::size_t> selected;
  for (int k = 1; k < argc; ++k) {
    const int n = std::atoi(argv[k]);
    if (n < 1 || n > static_cast<int>(criteria.size())) {
      std::cerr << "unknown criterion '" << argv[k] << "'\n";
      return 2;
    }
    selected.push_back(static_cast<std::size_t>(n - 1));
  }
  if (selected.empty()) {
    for (std::size_t k = 0; k < criteria.size(); ++k) selected.push_back(k);
  }
  bool all = true;
  for (std::size_t k : selected) {
    const auto start = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = criteria[k].second();
    } catch (const std::exception& e) {
      v = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::cout << "criterion " << k + 1 << " " << (v.pass ? "PASS" : "FAIL") << " [" << criteria[k].first << "] "
              << v.detail << " (" << fmt(secs, 3) << " s)" << std::endl;
    all = all && v.pass;
  }
  return all ? 0 : 1;
}
