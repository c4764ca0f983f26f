#include "thinar/reconstruct.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <ostream>
#include <string>

#include "thinar/error.hpp"
#include "thinar/numerics.hpp"
#include "thinar/parallel.hpp"
#include "thinar/stats.hpp"

namespace thinar {

namespace {

// Smallest k with NegBin(mean, size) cdf >= p.
std::int64_t negbin_quantile(double p, double mean, double size) {
  const double log_q = std::log(size / (size + mean));
  const double log_r = std::log(mean / (size + mean));
  const double base = -std::lgamma(size) + size * log_q;
  double cdf = 0.0;
  for (std::int64_t k = 0;; ++k) {
    const double kd = static_cast<double>(k);
    cdf += std::exp(base + std::lgamma(kd + size) - std::lgamma(kd + 1.0) + kd * log_r);
    if (cdf >= p) return k;
    if (kd > mean + 1e4 * (1.0 + std::sqrt(mean + mean * mean / size))) return k;
  }
}

std::string cell_name(const char* base, std::size_t i, std::size_t t) {
  return std::string(base) + "[" + std::to_string(i + 1) + "," + std::to_string(t + 1) + "]";
}

}  // namespace

CountDraws reconstruct_counts(std::span<const double> zstar, std::span<const double> lambda, std::size_t strata,
                              std::size_t t_len, std::span<const double> psi) {
  const std::size_t cells = strata * t_len;
  if (cells == 0) throw ValidationError("reconstruct_counts: empty grid");
  if (zstar.size() != lambda.size() || zstar.size() % cells != 0) {
    throw ValidationError("reconstruct_counts: z* and lambda draws are not aligned");
  }
  const std::size_t n = zstar.size() / cells;
  if (!psi.empty() && psi.size() != n) throw ValidationError("reconstruct_counts: one psi per draw required");
  std::vector<char> keep(n, 1);
  for (std::size_t d = 0; d < n; ++d) {
    for (std::size_t k = 0; k < cells; ++k) {
      const double l = lambda[d * cells + k];
      if (!(l > 0.0) || !std::isfinite(l)) keep[d] = 0;
    }
    if (!psi.empty() && !(psi[d] > 0.0)) keep[d] = 0;
  }
  std::vector<std::size_t> kept;
  for (std::size_t d = 0; d < n; ++d) {
    if (keep[d]) kept.push_back(d);
  }
  CountDraws out;
  out.strata = strata;
  out.t_len = t_len;
  out.excluded = n - kept.size();
  out.values.resize(kept.size() * cells);
  parallel_for(kept.size(), [&](std::size_t j) {
    const std::size_t d = kept[j];
    for (std::size_t k = 0; k < cells; ++k) {
      const double u = numerics::clamp_interior(numerics::std_normal_cdf(zstar[d * cells + k])).value;
      const double l = lambda[d * cells + k];
      out.values[j * cells + k] = psi.empty() ? numerics::poisson_quantile(u, l) : negbin_quantile(u, l, psi[d]);
    }
  });
  return out;
}

CountDraws counts_from_approx_draws(const DrawStore& store, const ModelSpec& spec) {
  const std::size_t S = spec.strata;
  const std::size_t T = spec.t_len;
  const bool known = spec.x1.mode == X1Spec::Mode::known;
  const std::size_t first = known ? 1 : 0;
  if (S == 0 || T <= first) throw ValidationError("counts_from_approx_draws: spec has no latent time points");
  if (known && spec.x1.known_values.size() != S) {
    throw ValidationError("counts_from_approx_draws: known x1 values missing from the spec");
  }
  const std::size_t free_t = T - first;
  std::vector<std::size_t> z_cols, l_cols;
  for (std::size_t i = 0; i < S; ++i) {
    for (std::size_t t = first; t < T; ++t) {
      z_cols.push_back(store.column(cell_name("zstar", i, t)));
      l_cols.push_back(store.column(cell_name("lambda", i, t)));
    }
  }
  const bool negbin = spec.count_family == CountFamily::negbin;
  const std::size_t psi_col = negbin ? store.column("psi") : 0;
  const std::size_t n = store.n_chains() * store.n_draws();
  const std::size_t cells = S * free_t;
  std::vector<double> z(n * cells), l(n * cells), psi(negbin ? n : 0);
  std::size_t row = 0;
  for (std::size_t c = 0; c < store.n_chains(); ++c) {
    for (std::size_t d = 0; d < store.n_draws(); ++d, ++row) {
      for (std::size_t k = 0; k < cells; ++k) {
        z[row * cells + k] = store.at(c, d, z_cols[k]);
        l[row * cells + k] = store.at(c, d, l_cols[k]);
      }
      if (negbin) psi[row] = store.at(c, d, psi_col);
    }
  }
  const CountDraws part = reconstruct_counts(z, l, S, free_t, psi);
  if (!known) return part;
  CountDraws out;
  out.strata = S;
  out.t_len = T;
  out.excluded = part.excluded;
  out.values.resize(part.n_draws() * S * T);
  for (std::size_t d = 0; d < part.n_draws(); ++d) {
    for (std::size_t i = 0; i < S; ++i) {
      out.values[d * S * T + i * T] = std::llround(spec.x1.known_values[i]);
      for (std::size_t t = 1; t < T; ++t) {
        out.values[d * S * T + i * T + t] = part.values[d * cells + i * free_t + t - 1];
      }
    }
  }
  return out;
}

CountDraws counts_from_exact_draws(const DrawStore& store, std::size_t strata, std::size_t t_len) {
  CountDraws out;
  out.strata = strata;
  out.t_len = t_len;
  std::vector<std::size_t> cols;
  for (std::size_t i = 0; i < strata; ++i) {
    for (std::size_t t = 0; t < t_len; ++t) cols.push_back(store.column(cell_name("x", i, t)));
  }
  for (std::size_t c = 0; c < store.n_chains(); ++c) {
    for (std::size_t d = 0; d < store.n_draws(); ++d) {
      for (std::size_t col : cols) out.values.push_back(std::llround(store.at(c, d, col)));
    }
  }
  return out;
}

ReconstructionSummary summarize_counts(const CountDraws& draws, double level) {
  if (!(level > 0.0 && level < 1.0)) throw ValidationError("summarize_counts: level must lie in (0, 1)");
  const std::size_t n = draws.n_draws();
  if (n == 0) throw ValidationError("summarize_counts: no draws");
  const std::size_t cells = draws.cells();
  ReconstructionSummary s;
  s.strata = draws.strata;
  s.t_len = draws.t_len;
  s.level = level;
  s.median.resize(cells);
  s.lo.resize(cells);
  s.hi.resize(cells);
  const double tail = 0.5 * (1.0 - level);
  std::vector<std::int64_t> col(n);
  for (std::size_t k = 0; k < cells; ++k) {
    for (std::size_t d = 0; d < n; ++d) col[d] = draws.values[d * cells + k];
    s.median[k] = stats::quantile_inverse_ecdf(col, 0.5);
    s.lo[k] = stats::quantile_inverse_ecdf(col, tail);
    s.hi[k] = stats::quantile_inverse_ecdf(col, 1.0 - tail);
  }
  return s;
}

double perfect_match_rate(const ReconstructionSummary& a, const ReconstructionSummary& b, std::size_t skip_leading) {
  if (a.strata != b.strata || a.t_len != b.t_len || a.median.size() != b.median.size()) {
    throw ValidationError("perfect_match_rate: summaries have different shapes");
  }
  if (std::abs(a.level - b.level) > 1e-12) throw ValidationError("perfect_match_rate: credible levels differ");
  if (skip_leading >= a.t_len) throw ValidationError("perfect_match_rate: no time points left to compare");
  std::size_t total = 0, equal = 0;
  for (std::size_t i = 0; i < a.strata; ++i) {
    for (std::size_t t = skip_leading; t < a.t_len; ++t) {
      const std::size_t k = i * a.t_len + t;
      equal += (a.median[k] == b.median[k]) + (a.lo[k] == b.lo[k]) + (a.hi[k] == b.hi[k]);
      total += 3;
    }
  }
  return 100.0 * static_cast<double>(equal) / static_cast<double>(total);
}

void write_reconstruction_csv(const ReconstructionSummary& s, std::ostream& out) {
  out << "stratum,t,median,lo,hi,level\n";
  char level[32];
  std::snprintf(level, sizeof level, "%g", s.level);
  for (std::size_t i = 0; i < s.strata; ++i) {
    for (std::size_t t = 0; t < s.t_len; ++t) {
      const std::size_t k = i * s.t_len + t;
      out << i + 1 << ',' << t + 1 << ',' << s.median[k] << ',' << s.lo[k] << ',' << s.hi[k] << ',' << level << '\n';
    }
  }
}

PrevalenceDraws prevalence_rollup(const CountDraws& draws, std::size_t window, std::span<const double> population) {
  if (window < 1) throw ValidationError("prevalence_rollup: window must be >= 1");
  if (population.size() != 1 && population.size() != draws.strata) {
    throw ValidationError("prevalence_rollup: give one population or one per stratum");
  }
  for (double p : population) {
    if (!(p > 0.0) || !std::isfinite(p)) throw ValidationError("prevalence_rollup: population must be positive");
  }
  PrevalenceDraws out;
  out.strata = draws.strata;
  out.t_len = draws.t_len;
  out.values.resize(draws.values.size());
  const std::size_t T = draws.t_len;
  for (std::size_t d = 0; d < draws.n_draws(); ++d) {
    for (std::size_t i = 0; i < draws.strata; ++i) {
      const double pop = population.size() == 1 ? population[0] : population[i];
      const std::size_t base = d * draws.cells() + i * T;
      double running = 0.0;
      for (std::size_t t = 0; t < T; ++t) {
        running += static_cast<double>(draws.values[base + t]);
        if (t >= window) running -= static_cast<double>(draws.values[base + t - window]);
        out.values[base + t] = running / pop;
      }
    }
  }
  return out;
}

std::vector<IntervalRow> summarize_prevalence(const PrevalenceDraws& draws, double level) {
  if (!(level > 0.0 && level < 1.0)) throw ValidationError("summarize_prevalence: level must lie in (0, 1)");
  const std::size_t n = draws.n_draws();
  if (n == 0) throw ValidationError("summarize_prevalence: no draws");
  const double tail = 0.5 * (1.0 - level);
  std::vector<IntervalRow> rows;
  std::vector<double> col(n);
  for (std::size_t i = 0; i < draws.strata; ++i) {
    for (std::size_t t = 0; t < draws.t_len; ++t) {
      const std::size_t k = i * draws.t_len + t;
      for (std::size_t d = 0; d < n; ++d) col[d] = draws.values[d * draws.cells() + k];
      std::sort(col.begin(), col.end());
      rows.push_back({i + 1, t + 1, stats::quantile_type7_sorted(col, 0.5), stats::quantile_type7_sorted(col, tail),
                      stats::quantile_type7_sorted(col, 1.0 - tail)});
    }
  }
  return rows;
}

void write_interval_csv(const std::vector<IntervalRow>& rows, std::ostream& out) {
  out << "stratum,t,median,lo,hi\n";
  char buf[160];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%zu,%zu,%.10g,%.10g,%.10g\n", r.stratum, r.t, r.median, r.lo, r.hi);
    out << buf;
  }
}

SmoothedPrevalence smooth_prevalence(const std::vector<SurveyRow>& rows, const ChainConfig& config, double level) {
  if (rows.empty()) throw ValidationError("smooth_prevalence: survey is empty");
  std::map<std::size_t, std::vector<SurveyRow>> by_stratum;
  for (const auto& r : rows) {
    if (r.tests < 0 || r.positives < 0 || r.positives > r.tests) {
      throw ValidationError("smooth_prevalence: need 0 <= positives <= tests (stratum " +
                            std::to_string(r.stratum + 1) + ", day " + std::to_string(r.day) + ")");
    }
    by_stratum[r.stratum].push_back(r);
  }
  struct Group {
    std::size_t stratum;
    std::size_t offset;  // of log sigma; innovations follow
    std::vector<SurveyRow> rows;
  };
  std::vector<Group> groups;
  std::size_t dim = 0;
  for (auto& [stratum, g] : by_stratum) {
    std::sort(g.begin(), g.end(), [](const SurveyRow& a, const SurveyRow& b) { return a.day < b.day; });
    for (std::size_t k = 1; k < g.size(); ++k) {
      if (g[k].day == g[k - 1].day) {
        throw ValidationError("smooth_prevalence: duplicate survey day " + std::to_string(g[k].day) + " in stratum " +
                              std::to_string(stratum + 1));
      }
    }
    groups.push_back({stratum, dim, g});
    dim += 1 + g.size();
  }

  constexpr double kRate = 0.01;
  constexpr double kFirstSd = 5.0;
  TargetModel target;
  target.dim = dim;
  target.log_density = [&groups](std::span<const double> u, std::span<double> grad) {
    const bool want = !grad.empty();
    double lp = 0.0;
    std::vector<double> g_eta;
    for (const auto& grp : groups) {
      const std::size_t n = grp.rows.size();
      const double s = u[grp.offset];
      const double sigma = std::exp(s);
      lp += std::log(kRate) - kRate * sigma + s;
      double eta = 0.0;
      g_eta.assign(n, 0.0);
      for (std::size_t k = 0; k < n; ++k) {
        const double e = u[grp.offset + 1 + k];
        eta = k == 0 ? kFirstSd * e : eta + sigma * e;
        lp -= 0.5 * e * e;
        const auto& r = grp.rows[k];
        const double pos = static_cast<double>(r.positives);
        const double neg = static_cast<double>(r.tests - r.positives);
        // log xi = -log1p(exp(-eta)), log(1 - xi) = -log1p(exp(eta))
        lp -= pos * numerics::log1p_exp(-eta) + neg * numerics::log1p_exp(eta);
        g_eta[k] = pos - static_cast<double>(r.tests) * numerics::logistic(eta);
      }
      if (!want) continue;
      double suffix = 0.0;
      for (std::size_t k = n; k-- > 0;) {
        suffix += g_eta[k];
        const double e = u[grp.offset + 1 + k];
        grad[grp.offset + 1 + k] = -e + (k == 0 ? kFirstSd : sigma) * suffix;
      }
      double g_s = 1.0 - kRate * sigma;
      double walk = 0.0;
      for (std::size_t k = 1; k < n; ++k) {
        walk += u[grp.offset + 1 + k];
        g_s += sigma * g_eta[k] * walk;
      }
      grad[grp.offset] = g_s;
    }
    return lp;
  };
  for (const auto& grp : groups) {
    target.names.push_back("sigma_xi[" + std::to_string(grp.stratum + 1) + "]");
    for (const auto& r : grp.rows) {
      target.names.push_back("xi[" + std::to_string(grp.stratum + 1) + "," + std::to_string(r.day) + "]");
    }
  }
  target.to_constrained = [&groups](std::span<const double> u) {
    std::vector<double> c(u.size());
    for (const auto& grp : groups) {
      const double sigma = std::exp(u[grp.offset]);
      c[grp.offset] = sigma;
      double eta = 0.0;
      for (std::size_t k = 0; k < grp.rows.size(); ++k) {
        const double e = u[grp.offset + 1 + k];
        eta = k == 0 ? kFirstSd * e : eta + sigma * e;
        c[grp.offset + 1 + k] = numerics::logistic(eta);
      }
    }
    return c;
  };
  target.initial_point = [&groups, dim](Rng& rng) {
    // Start near the empirical logits with a moderate walk scale.
    std::vector<double> u(dim);
    for (const auto& grp : groups) {
      const double sigma = 0.5;
      u[grp.offset] = std::log(sigma) + 0.5 * (2.0 * rng.uniform() - 1.0);
      double prev = 0.0;
      for (std::size_t k = 0; k < grp.rows.size(); ++k) {
        const auto& r = grp.rows[k];
        const double p = (static_cast<double>(r.positives) + 0.5) / (static_cast<double>(r.tests) + 1.0);
        const double eta = numerics::logit(p) + 0.1 * (2.0 * rng.uniform() - 1.0);
        u[grp.offset + 1 + k] = k == 0 ? eta / kFirstSd : (eta - prev) / std::exp(u[grp.offset]);
        prev = k == 0 ? kFirstSd * u[grp.offset + 1] : prev + std::exp(u[grp.offset]) * u[grp.offset + 1 + k];
      }
    }
    return u;
  };

  SmoothedPrevalence out;
  out.draws = run_chains(target, config);
  const double tail = 0.5 * (1.0 - level);
  for (const auto& grp : groups) {
    for (std::size_t k = 0; k < grp.rows.size(); ++k) {
      std::vector<double> col = out.draws.pooled(grp.offset + 1 + k);
      std::sort(col.begin(), col.end());
      out.summary.push_back({grp.stratum + 1, grp.rows[k].day, stats::quantile_type7_sorted(col, 0.5),
                             stats::quantile_type7_sorted(col, tail), stats::quantile_type7_sorted(col, 1.0 - tail)});
    }
  }
  return out;
}

}  // namespace thinar
