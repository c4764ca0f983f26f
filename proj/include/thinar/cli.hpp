#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "thinar/series.hpp"

namespace thinar {

inline constexpr const char* kToolVersion = "0.1.0";

/// Exit codes of the command-line tool.
enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitValidation = 2, kExitNumerical = 3 };

/// Reported series from CSV with header `stratum,t,` then `y`, an optional
/// `x` and covariates in any order.
/// Strata are labelled by their first appearance; each must cover
/// t = 1..T without gaps, with the same T for every stratum. A column
/// named `x` holds true counts (simulated fixtures); all other extra
/// columns are numeric covariates.
ObservedSeries load_series(const std::string& path);
ObservedSeries parse_series(std::istream& in, const std::string& source);
/// CSV `stratum,t,[x,]y[,covariate...]`.
void write_series_csv(const ObservedSeries& series, std::ostream& out, bool with_x);

/// Survey CSV `stratum,day,tests,positives`. Stratum labels are matched to
/// `labels` when given, otherwise numbered by first appearance.
std::vector<SurveyRow> load_survey(const std::string& path, const std::vector<std::string>& labels = {});

struct RunManifest {
  std::string subcommand;
  std::optional<std::string> config_path;
  std::vector<std::string> input_paths;
  std::optional<std::uint64_t> seed;
  std::string output_dir;
  std::string tool_version = kToolVersion;
  /// FNV-1a 64 of the config file, or of the argument list when there is no config.
  std::string config_hash;
  std::vector<std::string> args;

  std::string to_json() const;
  void write(const std::string& dir) const;
};

std::string fnv1a_hex(const std::string& bytes);

/// Parse and run one subcommand; returns an ExitCode. Errors go to stderr.
int run_subcommand(const std::vector<std::string>& args);
int run_subcommand(int argc, const char* const* argv);

}  // namespace thinar
