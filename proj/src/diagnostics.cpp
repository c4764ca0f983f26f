#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <ostream>

#include "thinar/error.hpp"
#include "thinar/mcmc.hpp"
#include "thinar/stats.hpp"

namespace thinar {

namespace {

double mean_of(const std::vector<double>& v, std::size_t begin, std::size_t end) {
  double s = 0.0;
  for (std::size_t k = begin; k < end; ++k) s += v[k];
  return s / static_cast<double>(end - begin);
}

double var_of(const std::vector<double>& v, std::size_t begin, std::size_t end, double m) {
  double s = 0.0;
  for (std::size_t k = begin; k < end; ++k) s += (v[k] - m) * (v[k] - m);
  return s / static_cast<double>(end - begin - 1);
}

std::size_t common_length(const std::vector<std::vector<double>>& chains) {
  std::size_t n = std::numeric_limits<std::size_t>::max();
  for (const auto& c : chains) n = std::min(n, c.size());
  return chains.empty() ? 0 : n;
}

}  // namespace

double split_rhat(const std::vector<std::vector<double>>& chains) {
  if (chains.size() < 2) throw ValidationError("split_rhat: need at least 2 chains");
  const std::size_t len = common_length(chains);
  if (len < 4) throw ValidationError("split_rhat: need at least 4 draws per chain");
  const std::size_t n = len / 2;
  std::vector<double> means;
  std::vector<double> vars;
  for (const auto& c : chains) {
    // An odd middle draw is dropped.
    for (std::size_t begin : {std::size_t{0}, len - n}) {
      const double m = mean_of(c, begin, begin + n);
      means.push_back(m);
      vars.push_back(var_of(c, begin, begin + n, m));
    }
  }
  const double m_count = static_cast<double>(means.size());
  const double nd = static_cast<double>(n);
  const double grand = std::accumulate(means.begin(), means.end(), 0.0) / m_count;
  double b = 0.0;
  for (double m : means) b += (m - grand) * (m - grand);
  b *= nd / (m_count - 1.0);
  const double w = std::accumulate(vars.begin(), vars.end(), 0.0) / m_count;
  if (!(w > 0.0)) return std::numeric_limits<double>::infinity();
  const double var_plus = (nd - 1.0) / nd * w + b / nd;
  return std::sqrt(var_plus / w);
}

double effective_sample_size(const std::vector<std::vector<double>>& chains) {
  const std::size_t m = chains.size();
  const std::size_t n = common_length(chains);
  if (m == 0 || n < 4) return std::numeric_limits<double>::quiet_NaN();
  const double nd = static_cast<double>(n);
  std::vector<double> means(m);
  for (std::size_t c = 0; c < m; ++c) means[c] = mean_of(chains[c], 0, n);
  auto mean_acov = [&](std::size_t lag) {
    double total = 0.0;
    for (std::size_t c = 0; c < m; ++c) {
      const auto& x = chains[c];
      double s = 0.0;
      for (std::size_t k = 0; k + lag < n; ++k) s += (x[k] - means[c]) * (x[k + lag] - means[c]);
      total += s / nd;
    }
    return total / static_cast<double>(m);
  };
  const double acov0 = mean_acov(0);
  const double mean_var = acov0 * nd / (nd - 1.0);
  double var_plus = mean_var * (nd - 1.0) / nd;
  if (m > 1) {
    const double grand = std::accumulate(means.begin(), means.end(), 0.0) / static_cast<double>(m);
    double b = 0.0;
    for (double mu : means) b += (mu - grand) * (mu - grand);
    var_plus += b / static_cast<double>(m - 1);
  }
  if (!(var_plus > 0.0)) return std::numeric_limits<double>::quiet_NaN();
  auto rho = [&](std::size_t lag) { return 1.0 - (mean_var - mean_acov(lag)) / var_plus; };

  // Geyer's initial positive, monotone sequence over pairs (rho_2k, rho_2k+1).
  double sum = 0.0;
  double prev_pair = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; 2 * k + 1 < n - 2; ++k) {
    const double even = k == 0 ? 1.0 : rho(2 * k);
    double pair = even + rho(2 * k + 1);
    if (!(pair > 0.0)) break;
    pair = std::min(pair, prev_pair);
    prev_pair = pair;
    sum += pair;
  }
  const double tau = std::max(-1.0 + 2.0 * sum, 1.0 / std::log10(static_cast<double>(m) * nd));
  return static_cast<double>(m) * nd / tau;
}

double mcse_quantile(const std::vector<std::vector<double>>& chains, double p) {
  std::vector<double> pooled;
  for (const auto& c : chains) pooled.insert(pooled.end(), c.begin(), c.end());
  if (pooled.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(pooled.begin(), pooled.end());
  const double q = stats::quantile_type7_sorted(pooled, p);
  std::vector<std::vector<double>> indicator(chains.size());
  for (std::size_t c = 0; c < chains.size(); ++c) {
    indicator[c].reserve(chains[c].size());
    for (double v : chains[c]) indicator[c].push_back(v <= q ? 1.0 : 0.0);
  }
  const double ess = effective_sample_size(indicator);
  if (!std::isfinite(ess)) return 0.0;
  const double se = std::sqrt(p * (1.0 - p) / ess);
  const double lo = stats::quantile_type7_sorted(pooled, std::clamp(p - se, 0.0, 1.0));
  const double hi = stats::quantile_type7_sorted(pooled, std::clamp(p + se, 0.0, 1.0));
  return 0.5 * (hi - lo);
}

std::vector<ParameterSummary> summarize(const DrawStore& store) {
  if (store.n_chains() == 0 || store.n_draws() == 0) throw ValidationError("summarize: no draws");
  std::vector<ParameterSummary> rows;
  rows.reserve(store.n_params());
  for (std::size_t col = 0; col < store.n_params(); ++col) {
    const auto chains = store.per_chain(col);
    std::vector<double> pooled = store.pooled(col);
    std::sort(pooled.begin(), pooled.end());
    ParameterSummary s;
    s.name = store.names[col];
    s.mean = stats::mean(pooled);
    double ss = 0.0;
    for (double v : pooled) ss += (v - s.mean) * (v - s.mean);
    s.sd = pooled.size() > 1 ? std::sqrt(ss / static_cast<double>(pooled.size() - 1)) : 0.0;
    s.q025 = stats::quantile_type7_sorted(pooled, 0.025);
    s.q05 = stats::quantile_type7_sorted(pooled, 0.05);
    s.q50 = stats::quantile_type7_sorted(pooled, 0.5);
    s.q95 = stats::quantile_type7_sorted(pooled, 0.95);
    s.q975 = stats::quantile_type7_sorted(pooled, 0.975);
    s.ess = effective_sample_size(chains);
    s.rhat = chains.size() >= 2 && store.n_draws() >= 4 ? split_rhat(chains) : std::numeric_limits<double>::quiet_NaN();
    s.mcse_median = mcse_quantile(chains, 0.5);
    rows.push_back(std::move(s));
  }
  return rows;
}

void write_summary_csv(const std::vector<ParameterSummary>& rows, std::ostream& out) {
  out << "parameter,mean,sd,q2.5,q5,q50,q95,q97.5,ess,rhat,mcse_median\n";
  char buf[512];
  auto fmt = [](double v, char* b) {
    if (std::isnan(v)) return std::snprintf(b, 32, "NA");
    if (std::isinf(v)) return std::snprintf(b, 32, v > 0 ? "Inf" : "-Inf");
    return std::snprintf(b, 32, "%.10g", v);
  };
  for (const auto& r : rows) {
    out << r.name;
    for (double v : {r.mean, r.sd, r.q025, r.q05, r.q50, r.q95, r.q975, r.ess, r.rhat, r.mcse_median}) {
      fmt(v, buf);
      out << ',' << buf;
    }
    out << '\n';
  }
}

}  // namespace thinar
