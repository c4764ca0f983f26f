#include "thinar/approx_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "thinar/error.hpp"
#include "thinar/numerics.hpp"

namespace thinar {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kAuxClampLo = 1e-10;
constexpr double kAuxClampHi = 1.0 - 1e-10;

}  // namespace

ModelSpec align_spec(ModelSpec spec, const ObservedSeries& data) {
  if (data.strata == 0 || data.t_len == 0) throw ValidationError("data: empty series");
  if (data.y.size() != data.strata * data.t_len) throw ValidationError("data: y has the wrong number of cells");
  if (spec.strata != 0 && spec.strata != data.strata) {
    throw ValidationError("model has " + std::to_string(spec.strata) + " strata but data has " +
                          std::to_string(data.strata));
  }
  if (spec.t_len != 0 && spec.t_len != data.t_len) {
    throw ValidationError("model has t_len " + std::to_string(spec.t_len) + " but data has " +
                          std::to_string(data.t_len));
  }
  spec.strata = data.strata;
  spec.t_len = data.t_len;
  for (auto v : data.y) {
    if (v < 0) throw ValidationError("data: negative count");
  }
  if (spec.aux.present && spec.aux.population.size() != spec.strata) {
    throw ValidationError("aux: population needs one value per stratum");
  }
  if (spec.x1.mode == X1Spec::Mode::known) {
    if (spec.x1.known_values.empty()) {
      if (!data.has_truth()) throw ValidationError("x1 is known but neither the config nor the data supply it");
      for (std::size_t i = 0; i < data.strata; ++i) {
        spec.x1.known_values.push_back(static_cast<double>(data.x[data.index(i, 0)]));
      }
    }
    if (spec.x1.known_values.size() != spec.strata) throw ValidationError("x1: need one known value per stratum");
    for (std::size_t i = 0; i < spec.strata; ++i) {
      const double v = spec.x1.known_values[i];
      if (!(v >= 0.0) || v < static_cast<double>(data.y_at(i, 0))) {
        throw ValidationError("x1: known value below the reported count in stratum " + std::to_string(i + 1));
      }
    }
  }
  spec.validate();
  return spec;
}

struct ApproxModel::Work {
  LinkValues links;
  std::vector<double> theta;
  double psi = std::numeric_limits<double>::infinity();
  std::vector<double> z;
  std::vector<double> lam;
  std::vector<double> sd;
  std::vector<double> ssum;
};

ApproxModel::ApproxModel(ModelSpec spec, const ObservedSeries& data, std::vector<SurveyRow> survey)
    : spec_(align_spec(std::move(spec), data)), survey_(std::move(survey)) {
  design_ = build_design(spec_, spec_.strata, spec_.t_len, data.covariates);
  layout_ = ParameterLayout::build(spec_, design_);
  y_.assign(data.y.begin(), data.y.end());
  x1_ = spec_.x1.known_values;
  if (!survey_.empty() && !spec_.aux.present) throw ValidationError("survey rows supplied but the model has no aux block");
  for (const auto& row : survey_) {
    if (row.stratum >= spec_.strata) throw ValidationError("survey: stratum out of range");
    if (row.day < 1 || row.day > spec_.t_len) throw ValidationError("survey: day outside the series");
    if (row.tests < 0 || row.positives < 0 || row.positives > row.tests) {
      throw ValidationError("survey: need 0 <= positives <= tests");
    }
  }
}

double ApproxModel::latent_pass(std::span<const double> c, Work& w) const {
  const std::size_t S = spec_.strata;
  const std::size_t T = spec_.t_len;
  const bool nc = spec_.parametrization == Parametrization::noncentred;
  const bool negbin = spec_.count_family == CountFamily::negbin;
  const bool known = spec_.x1.mode == X1Spec::Mode::known;
  w.links = evaluate_links(spec_, design_, layout_, c);
  w.theta = theta_values(spec_, layout_, c);
  if (negbin) w.psi = c[layout_.block(*layout_.negbin_block()).con_offset];
  const std::size_t n = S * T;
  w.z.assign(n, 0.0);
  w.lam.assign(n, NAN);
  w.sd.assign(n, NAN);
  w.ssum.assign(n, NAN);
  const std::size_t first = layout_.latent_first_t();
  const std::size_t n_lat = T - first;
  const std::size_t lat = layout_.latent_block() ? layout_.block(*layout_.latent_block()).con_offset : 0;
  const std::size_t l1 = layout_.lambda1_block() ? layout_.block(*layout_.lambda1_block()).con_offset : 0;
  const std::size_t J = w.theta.size();
  double lp = 0.0;
  for (std::size_t i = 0; i < S; ++i) {
    for (std::size_t t = 0; t < T; ++t) {
      const std::size_t r = i * T + t;
      if (t == 0 && known) {
        w.z[r] = x1_[i];
        continue;
      }
      double L;
      if (t == 0) {
        L = c[l1 + i];
      } else {
        double s = 0.0;
        for (std::size_t j = 1; j <= std::min(J, t); ++j) s += w.theta[j - 1] * w.z[r - j];
        w.ssum[r] = s;
        L = w.links.nu[r] + w.links.phi[r] * s;
      }
      if (!(L > 0.0) || !std::isfinite(L)) return kNegInf;
      const double sdv = std::sqrt(negbin ? L + L * L / w.psi : L);
      w.lam[r] = L;
      w.sd[r] = sdv;
      const double v = c[lat + i * n_lat + (t - first)];
      double z;
      if (nc) {
        z = L + sdv * v;
        lp += numerics::std_normal_logpdf(v);
      } else {
        z = v;
        lp += numerics::normal_logpdf(v, L, sdv);
      }
      if (!(z > spec_.z_floor)) return kNegInf;
      w.z[r] = z;
    }
  }
  return lp;
}

double ApproxModel::log_density(std::span<const double> u, std::span<double> grad) const {
  const bool want = !grad.empty();
  if (want) {
    if (grad.size() != u.size()) throw ValidationError("log_density: gradient size mismatch");
    std::fill(grad.begin(), grad.end(), 0.0);
  }
  const std::size_t S = spec_.strata;
  const std::size_t T = spec_.t_len;
  const std::size_t n = S * T;
  std::vector<double> c(layout_.constrained_size());
  double lp;
  try {
    lp = layout_.constrain(u, c);
  } catch (const DomainError&) {
    return kNegInf;
  }
  for (double v : c) {
    if (!std::isfinite(v)) return kNegInf;
  }
  std::vector<double> gc(want ? c.size() : 0, 0.0);
  lp += log_prior_blocks(layout_, c, gc);
  if (!std::isfinite(lp)) return kNegInf;

  Work w;
  const double lat_lp = latent_pass(c, w);
  if (!std::isfinite(lat_lp)) return kNegInf;
  lp += lat_lp;

  std::vector<double> g_z(want ? n : 0, 0.0);
  std::vector<double> g_pi(want ? n : 0, 0.0);
  const double half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
  for (std::size_t r = 0; r < n; ++r) {
    const double p = w.links.pi[r];
    const double z = w.z[r];
    double sdo = std::sqrt(p * (1.0 - p) * z);
    const bool floored = !(sdo >= spec_.sd_floor);
    if (floored) sdo = spec_.sd_floor;
    const double res = y_[r] - p * z;
    lp += -half_log_2pi - std::log(sdo) - 0.5 * res * res / (sdo * sdo);
    if (want) {
      const double d_mean = res / (sdo * sdo);
      g_z[r] += d_mean * p;
      g_pi[r] += d_mean * z;
      if (!floored) {
        const double d_sd = -1.0 / sdo + res * res / (sdo * sdo * sdo);
        g_z[r] += d_sd * p * (1.0 - p) / (2.0 * sdo);
        g_pi[r] += d_sd * (1.0 - 2.0 * p) * z / (2.0 * sdo);
      }
    }
  }

  for (const auto& row : survey_) {
    const std::size_t base = row.stratum * T;
    const std::size_t last = row.day - 1;
    const std::size_t lo = last + 1 > spec_.aux.window ? last + 1 - spec_.aux.window : 0;
    double s = 0.0;
    for (std::size_t t = lo; t <= last; ++t) s += w.z[base + t];
    const double pop = spec_.aux.population[row.stratum];
    const double raw = s / pop;
    const double p = std::clamp(raw, kAuxClampLo, kAuxClampHi);
    lp += numerics::binomial_logpmf(row.positives, row.tests, p);
    if (want && p == raw) {
      const double dp = static_cast<double>(row.positives) / p - static_cast<double>(row.tests - row.positives) / (1.0 - p);
      for (std::size_t t = lo; t <= last; ++t) g_z[base + t] += dp / pop;
    }
  }
  if (!std::isfinite(lp)) return kNegInf;
  if (!want) return lp;

  // Reverse pass through the latent recursion.
  const bool nc = spec_.parametrization == Parametrization::noncentred;
  const bool negbin = spec_.count_family == CountFamily::negbin;
  const bool known = spec_.x1.mode == X1Spec::Mode::known;
  const std::size_t first = layout_.latent_first_t();
  const std::size_t n_lat = T - first;
  const std::size_t lat = layout_.latent_block() ? layout_.block(*layout_.latent_block()).con_offset : 0;
  const std::size_t l1 = layout_.lambda1_block() ? layout_.block(*layout_.lambda1_block()).con_offset : 0;
  const std::size_t J = w.theta.size();
  std::vector<double> g_nu(n, 0.0), g_phi(n, 0.0), g_theta(J, 0.0);
  double g_psi = 0.0;
  for (std::size_t i = 0; i < S; ++i) {
    for (std::size_t t = T; t-- > 0;) {
      if (t == 0 && known) continue;
      const std::size_t r = i * T + t;
      const std::size_t idx = lat + i * n_lat + (t - first);
      const double L = w.lam[r];
      const double sdv = w.sd[r];
      const double dsd_dl = negbin ? (1.0 + 2.0 * L / w.psi) / (2.0 * sdv) : 1.0 / (2.0 * sdv);
      double g_l;
      double g_sd;
      if (nc) {
        const double zs = c[idx];
        gc[idx] += -zs + g_z[r] * sdv;
        g_l = g_z[r];
        g_sd = g_z[r] * zs;
      } else {
        const double d = w.z[r] - L;
        const double v = sdv * sdv;
        gc[idx] += g_z[r] - d / v;
        g_l = d / v;
        g_sd = -1.0 / sdv + d * d / (v * sdv);
      }
      g_l += g_sd * dsd_dl;
      if (negbin) g_psi += g_sd * (-(L * L) / (w.psi * w.psi)) / (2.0 * sdv);
      if (t == 0) {
        gc[l1 + i] += g_l;
        continue;
      }
      g_nu[r] += g_l;
      g_phi[r] += g_l * w.ssum[r];
      const double g_s = g_l * w.links.phi[r];
      for (std::size_t j = 1; j <= std::min(J, t); ++j) {
        g_z[r - j] += g_s * w.theta[j - 1];
        g_theta[j - 1] += g_s * w.z[r - j];
      }
    }
  }
  backprop_links(spec_, design_, layout_, c, w.links, g_nu, g_phi, g_pi, gc);
  if (const auto b = layout_.theta_block()) {
    const std::size_t off = layout_.block(*b).con_offset;
    for (std::size_t j = 0; j < J; ++j) gc[off + j] += g_theta[j];
  }
  if (negbin) gc[layout_.block(*layout_.negbin_block()).con_offset] += g_psi;
  layout_.backprop(u, c, gc, grad);
  return lp;
}

ApproxFields ApproxModel::fields(std::span<const double> c) const {
  Work w;
  ApproxFields f;
  f.strata = spec_.strata;
  f.t_len = spec_.t_len;
  f.valid = std::isfinite(latent_pass(c, w));
  f.z = std::move(w.z);
  f.lambda = std::move(w.lam);
  f.zstar.assign(f.z.size(), NAN);
  for (std::size_t r = 0; r < f.z.size(); ++r) {
    if (std::isfinite(w.sd[r])) f.zstar[r] = (f.z[r] - f.lambda[r]) / w.sd[r];
  }
  f.links = std::move(w.links);
  return f;
}

std::vector<double> ApproxModel::initial_point(Rng& rng, double jitter) const {
  const std::size_t S = spec_.strata;
  const std::size_t T = spec_.t_len;
  std::vector<double> c(layout_.constrained_size(), 0.0);
  for (const auto& b : layout_.blocks()) {
    for (std::size_t k = 0; k < b.con_size; ++k) {
      double v = 0.0;
      switch (b.role) {
        case BlockRole::link_constant:
        case BlockRole::re_scale:
        case BlockRole::negbin_size:
          v = b.prior.median();
          break;
        case BlockRole::theta:
          v = 1.0 / static_cast<double>(b.con_size);
          break;
        case BlockRole::lambda1:
          v = std::max(y_[k * T], 1.0);
          break;
        case BlockRole::coefficients:
          // phi = 1 makes the non-centred recursion explosive and the start stiff.
          if (b.link == LinkTarget::phi && spec_.link(LinkTarget::phi).terms[b.term].kind == TermKind::intercept) {
            v = std::log(0.5);
          }
          break;
        default:
          break;
      }
      c[b.con_offset + k] = v;
    }
  }
  std::vector<double> u(layout_.unconstrained_size());
  layout_.unconstrain(c, u);
  const std::size_t lat_u = layout_.latent_block() ? layout_.block(*layout_.latent_block()).unc_offset : u.size();
  for (std::size_t k = 0; k < lat_u; ++k) u[k] += jitter * (2.0 * rng.uniform() - 1.0);
  layout_.constrain(u, c);

  // Place the latent states on Z = max(y / pi, 1).
  const bool nc = spec_.parametrization == Parametrization::noncentred;
  const bool negbin = spec_.count_family == CountFamily::negbin;
  const bool known = spec_.x1.mode == X1Spec::Mode::known;
  const LinkValues links = evaluate_links(spec_, design_, layout_, c);
  const std::vector<double> theta = theta_values(spec_, layout_, c);
  const double psi = negbin ? c[layout_.block(*layout_.negbin_block()).con_offset] : 0.0;
  const std::size_t first = layout_.latent_first_t();
  const std::size_t n_lat = T - first;
  const std::size_t lat = layout_.latent_block() ? layout_.block(*layout_.latent_block()).con_offset : 0;
  const std::size_t l1 = layout_.lambda1_block() ? layout_.block(*layout_.lambda1_block()).con_offset : 0;
  std::vector<double> z(S * T, 0.0);
  for (std::size_t i = 0; i < S; ++i) {
    for (std::size_t t = 0; t < T; ++t) {
      const std::size_t r = i * T + t;
      if (t == 0 && known) {
        z[r] = x1_[i];
        continue;
      }
      const double target = std::max(y_[r] / links.pi[r], 1.0);
      double L;
      if (t == 0) {
        c[l1 + i] = target;
        L = target;
      } else {
        double s = 0.0;
        for (std::size_t j = 1; j <= std::min(theta.size(), t); ++j) s += theta[j - 1] * z[r - j];
        L = links.nu[r] + links.phi[r] * s;
      }
      L = std::max(L, 1e-3);
      const double sdv = std::sqrt(negbin ? L + L * L / psi : L);
      c[lat + i * n_lat + (t - first)] = nc ? (target - L) / sdv : target;
      z[r] = target;
    }
  }
  layout_.unconstrain(c, u);
  return u;
}

double log_posterior_approx(const ApproxModel& model, std::span<const double> u, std::span<double> grad) {
  return model.log_density(u, grad);
}

}  // namespace thinar
