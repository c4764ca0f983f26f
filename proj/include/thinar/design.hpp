#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "thinar/model_spec.hpp"

namespace thinar {

/// Columns contributed by one link term, evaluated at every (stratum, t)
/// cell; row r = i * t_len + (t - 1), row-major with `n_cols` columns.
/// Random-intercept terms have no columns.
struct TermDesign {
  std::string name;
  TermKind kind = TermKind::intercept;
  std::size_t n_cols = 0;
  bool per_stratum = false;
  std::vector<double> values;

  double at(std::size_t row, std::size_t col) const { return values[row * n_cols + col]; }
};

struct LinkDesign {
  std::vector<TermDesign> terms;
};

struct Design {
  std::size_t strata = 0;
  std::size_t t_len = 0;
  LinkDesign nu;
  LinkDesign phi;
  LinkDesign pi;

  const LinkDesign& link(LinkTarget t) const;
};

using CovariateTable = std::map<std::string, std::vector<double>>;

/// Build design matrices for every link term. Covariate columns must hold
/// strata * t_len values; unknown or short columns raise ValidationError.
Design build_design(const ModelSpec& spec, std::size_t strata, std::size_t t_len, const CovariateTable& covariates);

/// Clamped cubic B-spline basis with `df` functions on equally spaced
/// interior knots over [lo, hi], evaluated at x.
std::vector<double> bspline_basis(double x, int df, double lo, double hi);

}  // namespace thinar
