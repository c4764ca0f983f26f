#include "thinar/design.hpp"

#include <cmath>
#include <numbers>

#include "thinar/error.hpp"

namespace thinar {

const LinkDesign& Design::link(LinkTarget t) const {
  switch (t) {
    case LinkTarget::nu: return nu;
    case LinkTarget::phi: return phi;
    case LinkTarget::pi: return pi;
  }
  return nu;
}

std::vector<double> bspline_basis(double x, int df, double lo, double hi) {
  constexpr int degree = 3;
  const int n_interior = df - degree - 1;
  std::vector<double> knots;
  knots.reserve(static_cast<std::size_t>(df + degree + 1));
  for (int k = 0; k <= degree; ++k) knots.push_back(lo);
  for (int k = 1; k <= n_interior; ++k) knots.push_back(lo + (hi - lo) * k / (n_interior + 1));
  for (int k = 0; k <= degree; ++k) knots.push_back(hi);

  // Cox-de Boor, starting from the indicator of the knot span holding x.
  const int n_knots = static_cast<int>(knots.size());
  std::vector<double> basis(static_cast<std::size_t>(n_knots - 1), 0.0);
  if (x >= hi) {
    basis[static_cast<std::size_t>(df - 1)] = 1.0;  // right end belongs to the last span
  } else {
    for (int k = 0; k < n_knots - 1; ++k) {
      if (x >= knots[k] && x < knots[k + 1]) {
        basis[static_cast<std::size_t>(k)] = 1.0;
        break;
      }
    }
  }
  if (x < hi) {
    for (int d = 1; d <= degree; ++d) {
      for (int k = 0; k < n_knots - 1 - d; ++k) {
        double value = 0.0;
        const double left_den = knots[k + d] - knots[k];
        const double right_den = knots[k + d + 1] - knots[k + 1];
        if (left_den > 0.0) value += (x - knots[k]) / left_den * basis[k];
        if (right_den > 0.0) value += (knots[k + d + 1] - x) / right_den * basis[k + 1];
        basis[static_cast<std::size_t>(k)] = value;
      }
    }
  }
  basis.resize(static_cast<std::size_t>(df));
  return basis;
}

namespace {

TermDesign build_term(const LinkTerm& term, std::size_t strata, std::size_t t_len, const CovariateTable& covariates) {
  TermDesign d;
  d.name = term.name;
  d.kind = term.kind;
  d.per_stratum = term.per_stratum;
  const std::size_t rows = strata * t_len;
  switch (term.kind) {
    case TermKind::intercept:
      d.n_cols = 1;
      d.values.assign(rows, 1.0);
      break;
    case TermKind::fourier:
      d.n_cols = 2;
      d.values.resize(rows * 2);
      for (std::size_t r = 0; r < rows; ++r) {
        const double t = static_cast<double>(r % t_len + 1);
        const double angle = 2.0 * std::numbers::pi * t / term.period;
        d.values[2 * r] = std::sin(angle);
        d.values[2 * r + 1] = std::cos(angle);
      }
      break;
    case TermKind::bspline: {
      d.n_cols = static_cast<std::size_t>(term.df);
      d.values.resize(rows * d.n_cols);
      const double hi = t_len > 1 ? static_cast<double>(t_len) : 2.0;
      for (std::size_t t0 = 0; t0 < t_len; ++t0) {
        const auto basis = bspline_basis(static_cast<double>(t0 + 1), term.df, 1.0, hi);
        for (std::size_t i = 0; i < strata; ++i) {
          std::copy(basis.begin(), basis.end(), d.values.begin() + static_cast<std::ptrdiff_t>((i * t_len + t0) * d.n_cols));
        }
      }
      break;
    }
    case TermKind::dow:
      d.n_cols = 7;
      d.values.assign(rows * 7, 0.0);
      for (std::size_t r = 0; r < rows; ++r) {
        const auto t0 = static_cast<long long>(r % t_len);
        const auto day = static_cast<std::size_t>(((t0 + term.dow_offset) % 7 + 7) % 7);
        d.values[r * 7 + day] = 1.0;
      }
      break;
    case TermKind::covariate: {
      const auto it = covariates.find(term.covariate);
      if (it == covariates.end()) throw ValidationError("unknown covariate '" + term.covariate + "'");
      if (it->second.size() < rows) {
        throw ValidationError("covariate '" + term.covariate + "' is shorter than strata * t_len");
      }
      d.n_cols = 1;
      d.values.assign(it->second.begin(), it->second.begin() + static_cast<std::ptrdiff_t>(rows));
      break;
    }
    case TermKind::random_intercept:
      d.n_cols = 0;
      break;
  }
  return d;
}

}  // namespace

Design build_design(const ModelSpec& spec, std::size_t strata, std::size_t t_len, const CovariateTable& covariates) {
  if (strata == 0 || t_len == 0) throw ValidationError("design: strata and t_len must be positive");
  Design design;
  design.strata = strata;
  design.t_len = t_len;
  for (LinkTarget target : {LinkTarget::nu, LinkTarget::phi, LinkTarget::pi}) {
    const LinkBlock& block = spec.link(target);
    if (!block.present || block.constant) continue;
    LinkDesign& out = target == LinkTarget::nu ? design.nu : target == LinkTarget::phi ? design.phi : design.pi;
    for (const auto& term : block.terms) out.terms.push_back(build_term(term, strata, t_len, covariates));
  }
  return design;
}

}  // namespace thinar
