#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace thinar {

/// Reported counts for one or more strata on a common time grid t = 1..t_len.
/// Cell (i, t) lives at index i * t_len + (t - 1).
struct ObservedSeries {
  std::size_t strata = 0;
  std::size_t t_len = 0;
  std::vector<std::string> labels;
  std::vector<std::int64_t> y;
  /// True counts when known (simulated fixtures); empty otherwise.
  std::vector<std::int64_t> x;
  std::map<std::string, std::vector<double>> covariates;

  std::size_t index(std::size_t stratum, std::size_t t0) const { return stratum * t_len + t0; }
  std::int64_t y_at(std::size_t stratum, std::size_t t0) const { return y[index(stratum, t0)]; }
  bool has_truth() const { return !x.empty(); }
};

/// One row of a prevalence survey: `positives` of `tests` on day `day` (1-based).
struct SurveyRow {
  std::size_t stratum = 0;
  std::size_t day = 0;
  std::int64_t tests = 0;
  std::int64_t positives = 0;
};

}  // namespace thinar
