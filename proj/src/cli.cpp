#include "thinar/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "thinar/approx_model.hpp"
#include "thinar/consequences.hpp"
#include "thinar/design.hpp"
#include "thinar/error.hpp"
#include "thinar/exact_model.hpp"
#include "thinar/mcmc.hpp"
#include "thinar/model_spec.hpp"
#include "thinar/moments.hpp"
#include "thinar/reconstruct.hpp"
#include "thinar/rng.hpp"
#include "thinar/simulate.hpp"
#include "thinar/transform.hpp"

namespace thinar {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

// ---- CSV helpers -----------------------------------------------------------

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers;
};

CsvTable read_csv(std::istream& in, const std::string& source) {
  CsvTable t;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto cells = split_csv_line(line);
    if (t.header.empty()) {
      t.header = std::move(cells);
      continue;
    }
    if (cells.size() != t.header.size()) {
      throw ValidationError(source + ": line " + std::to_string(line_no) + " has " + std::to_string(cells.size()) +
                            " fields, expected " + std::to_string(t.header.size()));
    }
    t.rows.push_back(std::move(cells));
    t.line_numbers.push_back(line_no);
  }
  if (t.header.empty()) throw ValidationError(source + ": empty file");
  return t;
}

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open '" + path + "'");
  return in;
}

std::int64_t parse_int(const std::string& s, const std::string& where) {
  std::int64_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw ValidationError(where + ": '" + s + "' is not an integer");
  return v;
}

double parse_double(const std::string& s, const std::string& where) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) {
    throw ValidationError(where + ": '" + s + "' is not a finite number");
  }
  return v;
}

std::string fmt(double v) {
  if (std::isnan(v)) return "NA";
  if (std::isinf(v)) return v > 0 ? "Inf" : "-Inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::string fmt_exact(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// ---- output ---------------------------------------------------------------

struct Output {
  fs::path dir;

  std::ofstream open(const std::string& name) const {
    std::ofstream out(dir / name, std::ios::binary);
    if (!out) throw ValidationError("cannot write '" + (dir / name).string() + "'");
    return out;
  }
};

Output prepare_output(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw ValidationError("cannot create output directory '" + dir + "': " + ec.message());
  return Output{fs::path(dir)};
}

std::string read_file(const std::string& path) {
  auto in = open_input(path);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

// ---- shared option bundles --------------------------------------------------

struct ChainOptions {
  std::size_t chains = 4;
  std::size_t iter = 7000;
  std::size_t warmup = 3000;
  std::size_t thin = 1;
  std::uint64_t seed = 1;
  int leapfrog = 32;
  std::string sampler = "hmc";
  std::optional<double> target_accept;

  void add_to(CLI::App* app) {
    app->add_option("--chains", chains, "Number of chains")->capture_default_str();
    app->add_option("--iter", iter, "Iterations per chain, including warmup")->capture_default_str();
    app->add_option("--warmup", warmup, "Warmup iterations per chain")->capture_default_str();
    app->add_option("--thin", thin, "Keep every n-th draw")->capture_default_str();
    app->add_option("--seed", seed, "Random seed")->capture_default_str();
    app->add_option("--leapfrog", leapfrog, "Leapfrog steps per HMC transition")->capture_default_str();
    app->add_option("--sampler", sampler, "Continuous-parameter sampler")
        ->check(CLI::IsMember({"hmc", "rwm"}))
        ->capture_default_str();
    app->add_option("--target-accept", target_accept, "Target acceptance rate");
  }

  ChainConfig config() const {
    ChainConfig c;
    c.n_chains = chains;
    c.n_iter = iter;
    c.n_warmup = warmup;
    c.thin = thin;
    c.seed = seed;
    c.n_leapfrog = leapfrog;
    c.sampler = sampler == "rwm" ? SamplerKind::rwm : SamplerKind::hmc;
    c.target_accept = target_accept;
    c.validate();
    return c;
  }
};

ModelSpec spec_or_default(const std::string& config_path) {
  return config_path.empty() ? ModelSpec::thinned_ar_default() : load_model_spec(config_path);
}

DrawStore load_draws(const std::string& path) {
  if (fs::path(path).extension() == ".bin") return read_draws_binary(path);
  auto in = open_input(path);
  return read_draws_csv(in);
}

void save_draws(const DrawStore& store, const Output& out, bool binary) {
  if (binary) {
    write_draws_binary(store, (out.dir / "draws.bin").string());
  } else {
    auto f = out.open("draws.csv");
    write_draws_csv(store, f);
  }
}

void save_summary(const DrawStore& store, const Output& out) {
  auto f = out.open("summary.csv");
  write_summary_csv(summarize(store), f);
}

bool is_exact_store(const DrawStore& store) { return store.find("x[1,1]").has_value(); }

ReconstructionSummary reconstruct_from_store(const DrawStore& store, const ModelSpec& aligned, double level,
                                             std::size_t& excluded) {
  const CountDraws counts = is_exact_store(store) ? counts_from_exact_draws(store, aligned.strata, aligned.t_len)
                                                  : counts_from_approx_draws(store, aligned);
  excluded = counts.excluded;
  return summarize_counts(counts, level);
}

CovariateTable load_covariates(const std::string& path, std::size_t strata, std::size_t t_len) {
  auto in = open_input(path);
  const CsvTable t = read_csv(in, path);
  if (t.header.size() < 3 || t.header[0] != "stratum" || t.header[1] != "t") {
    throw ValidationError(path + ": header must start with stratum,t followed by covariate columns");
  }
  std::map<std::string, std::size_t> stratum_index;
  CovariateTable cov;
  for (std::size_t c = 2; c < t.header.size(); ++c) cov[t.header[c]].assign(strata * t_len, NAN);
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const std::string where = path + ": line " + std::to_string(t.line_numbers[r]);
    const auto it = stratum_index.emplace(t.rows[r][0], stratum_index.size()).first;
    const std::size_t i = it->second;
    const std::int64_t tt = parse_int(t.rows[r][1], where);
    if (i >= strata || tt < 1 || static_cast<std::size_t>(tt) > t_len) {
      throw ValidationError(where + ": cell outside the " + std::to_string(strata) + " x " + std::to_string(t_len) +
                            " grid");
    }
    for (std::size_t c = 2; c < t.header.size(); ++c) {
      cov[t.header[c]][i * t_len + static_cast<std::size_t>(tt) - 1] = parse_double(t.rows[r][c], where);
    }
  }
  for (const auto& [name, v] : cov) {
    if (std::any_of(v.begin(), v.end(), [](double x) { return std::isnan(x); })) {
      throw ValidationError(path + ": covariate '" + name + "' does not cover every cell");
    }
  }
  return cov;
}

// ---- subcommands ------------------------------------------------------------

struct SimulateArgs {
  double nu = 10.0, phi = 0.6, pi = 0.6;
  std::optional<std::size_t> t_len;
  std::size_t burn_in = 100;
  std::size_t reps = 1;
  std::uint64_t seed = 1;
  bool no_x = false;
  std::string config, truth, covariates;
  std::size_t strata = 0;
  std::size_t survey_every = 0;
  std::int64_t survey_tests = 1000;
};

std::string series_file_name(std::size_t rep) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "series_%03zu.csv", rep + 1);
  return buf;
}

void cmd_simulate(const SimulateArgs& a, const Output& out) {
  if (a.reps < 1) throw ValidationError("--reps must be >= 1");
  if (a.config.empty()) {
    const ThinnedArParams p{a.nu, a.phi, a.pi};
    p.validate();
    for (std::size_t r = 0; r < a.reps; ++r) {
      const SimOutput sim = simulate_thinned_pois_ar(p, a.t_len.value_or(50), a.burn_in, a.seed, r);
      ObservedSeries s;
      s.strata = 1;
      s.t_len = a.t_len.value_or(50);
      s.labels = {"1"};
      s.y = sim.y;
      s.x = sim.x;
      auto f = out.open(series_file_name(r));
      write_series_csv(s, f, !a.no_x);
    }
    std::cout << "wrote " << a.reps << " series to " << out.dir.string() << "\n";
    return;
  }
  if (a.truth.empty()) throw ValidationError("--config needs --truth with the parameter values to simulate from");
  ModelSpec spec = load_model_spec(a.config);
  if (a.strata) spec.strata = a.strata;
  if (a.t_len) spec.t_len = *a.t_len;
  if (spec.t_len == 0) throw ValidationError("give t_len in the config or --t");
  if (spec.strata == 0) spec.strata = 1;
  if (spec.x1.mode == X1Spec::Mode::known && spec.x1.known_values.empty()) {
    throw ValidationError("simulation with known x1 needs x1.values in the config");
  }
  const CovariateTable cov =
      a.covariates.empty() ? CovariateTable{} : load_covariates(a.covariates, spec.strata, spec.t_len);
  const Design design = build_design(spec, spec.strata, spec.t_len, cov);
  const ParameterLayout layout = ParameterLayout::build(spec, design, false);
  json truth;
  try {
    truth = json::parse(read_file(a.truth));
  } catch (const json::exception& e) {
    throw ValidationError(a.truth + ": invalid JSON: " + e.what());
  }
  // Each block is given either whole, as a number or an array under the
  // block name, or element by element under names like "phi.intercept".
  std::vector<double> c(layout.constrained_size());
  std::vector<std::string> missing;
  for (const auto& b : layout.blocks()) {
    if (truth.contains(b.name) && truth[b.name].is_array()) {
      const auto v = truth[b.name].get<std::vector<double>>();
      if (v.size() != b.con_size) {
        throw ValidationError(a.truth + ": '" + b.name + "' needs " + std::to_string(b.con_size) + " values");
      }
      std::copy(v.begin(), v.end(), c.begin() + static_cast<std::ptrdiff_t>(b.con_offset));
      continue;
    }
    for (std::size_t k = 0; k < b.con_size; ++k) {
      const std::string name = b.element_name(k);
      if (truth.contains(name) && truth[name].is_number()) {
        c[b.con_offset + k] = truth[name].get<double>();
      } else if (b.con_size == 1 && truth.contains(b.name) && truth[b.name].is_number()) {
        c[b.con_offset] = truth[b.name].get<double>();
      } else {
        missing.push_back(name);
      }
    }
  }
  if (!missing.empty()) {
    std::string list;
    for (const auto& m : missing) list += (list.empty() ? "" : ", ") + m;
    throw ValidationError(a.truth + ": missing values for " + list);
  }
  if (a.survey_every > 0 && !spec.aux.present) throw ValidationError("--survey-every needs an aux block in the config");
  for (std::size_t r = 0; r < a.reps; ++r) {
    const auto sims = simulate_general(spec, design, layout, c, a.burn_in, derive_seed(a.seed, r));
    ObservedSeries s;
    s.strata = spec.strata;
    s.t_len = spec.t_len;
    s.covariates = cov;
    for (std::size_t i = 0; i < spec.strata; ++i) {
      s.labels.push_back(std::to_string(i + 1));
      s.y.insert(s.y.end(), sims[i].y.begin(), sims[i].y.end());
      s.x.insert(s.x.end(), sims[i].x.begin(), sims[i].x.end());
    }
    auto f = out.open(series_file_name(r));
    write_series_csv(s, f, !a.no_x);
    if (a.survey_every > 0) {
      // Survey positives out of `survey_tests` on every n-th day, with
      // prevalence the rolling window sum of true counts over population.
      Rng rng(derive_seed(a.seed, r), spec.strata);
      char name[32];
      std::snprintf(name, sizeof name, "survey_%03zu.csv", r + 1);
      auto sf = out.open(name);
      sf << "stratum,day,tests,positives\n";
      for (std::size_t i = 0; i < spec.strata; ++i) {
        for (std::size_t day = a.survey_every; day <= spec.t_len; day += a.survey_every) {
          double sum = 0.0;
          for (std::size_t k = 0; k < spec.aux.window && k < day; ++k) sum += static_cast<double>(s.x[s.index(i, day - 1 - k)]);
          const double prev = std::min(1.0, sum / spec.aux.population[i]);
          sf << s.labels[i] << ',' << day << ',' << a.survey_tests << ',' << rng.binomial(a.survey_tests, prev) << '\n';
        }
      }
    }
  }
  std::cout << "wrote " << a.reps << " series to " << out.dir.string() << "\n";
}

struct MomentsArgs {
  std::string data;
  std::optional<double> nu, phi, pi;
};

void cmd_moments(const MomentsArgs& a, const Output& out) {
  if (!a.data.empty()) {
    const ObservedSeries s = load_series(a.data);
    auto f = out.open("moments.csv");
    f << "stratum,mean,variance,acf1,phi,pi,nu,out_of_space\n";
    for (std::size_t i = 0; i < s.strata; ++i) {
      const std::span<const std::int64_t> y(s.y.data() + i * s.t_len, s.t_len);
      const SeriesMoments m = sample_moments(y);
      const MomEstimate e = mom_from_moments(m);
      f << s.labels[i] << ',' << fmt(m.mean) << ',' << fmt(m.variance) << ',' << fmt(m.acf1) << ',' << fmt(e.phi)
        << ',' << fmt(e.pi) << ',' << fmt(e.nu) << ',' << (e.any_flag() ? 1 : 0) << '\n';
    }
    return;
  }
  if (!a.nu || !a.phi || !a.pi) throw ValidationError("moments needs --data or all of --nu, --phi, --pi");
  const ThinnedArParams p{*a.nu, *a.phi, *a.pi};
  p.validate();
  if (!p.stationary()) throw ValidationError("moments need phi < 1");
  const SeriesMoments latent = stationary_latent_moments(p.nu, p.phi);
  const SeriesMoments observed = observed_moments_from_latent(latent, p.phi, p.pi);
  auto f = out.open("moments.csv");
  f << "series,mean,variance,acf1\n";
  f << "latent," << fmt(latent.mean) << ',' << fmt(latent.variance) << ',' << fmt(latent.acf1) << '\n';
  f << "observed," << fmt(observed.mean) << ',' << fmt(observed.variance) << ',' << fmt(observed.acf1) << '\n';
}

void cmd_mom_study(const MomStudyConfig& cfg, const Output& out) {
  const auto rows = mom_study(cfg);
  auto f = out.open("mom_study.csv");
  f << "phi,pi,T,q10,q50,q90,estimand\n";
  std::size_t failed = 0;
  for (const auto& r : rows) {
    f << fmt(r.phi) << ',' << fmt(r.pi) << ',' << r.t_len << ',' << fmt(r.q10) << ',' << fmt(r.q50) << ','
      << fmt(r.q90) << ',' << r.estimand << '\n';
    failed += r.n_failed;
  }
  if (failed) std::cout << failed << " replicate estimates were undefined and left out of the quantiles\n";
}

struct ConsequencesArgs {
  double nu = 5.0, phi = 0.8;
  std::size_t grid = 99;
  bool divide_by_pi = false;
  std::string data;
  std::optional<double> pi;
};

void cmd_consequences(const ConsequencesArgs& a, const Output& out) {
  if (a.divide_by_pi) {
    if (a.data.empty() || !a.pi) throw ValidationError("--divide-by-pi needs --data and --pi");
    if (!(*a.pi > 0.0 && *a.pi <= 1.0)) throw ValidationError("--pi must lie in (0, 1]");
    const ObservedSeries s = load_series(a.data);
    auto f = out.open("divided.csv");
    f << "stratum,t,y,y_over_pi\n";
    for (std::size_t i = 0; i < s.strata; ++i) {
      for (std::size_t t = 0; t < s.t_len; ++t) {
        const auto y = s.y_at(i, t);
        f << s.labels[i] << ',' << t + 1 << ',' << y << ',' << fmt(static_cast<double>(y) / *a.pi) << '\n';
      }
    }
    return;
  }
  if (a.grid < 1) throw ValidationError("--grid must be >= 1");
  const ThinnedArParams base{a.nu, a.phi, 1.0};
  base.validate();
  if (!base.stationary()) throw ValidationError("consequences need phi < 1");
  auto f = out.open("consequences.csv");
  f << "pi,phi_lim,nu_lim,phi_prime,nu_prime,prop1_threshold,overestimates_nu,printed_bound_overestimates,"
       "nu_prime_negative,consistency_warning\n";
  for (std::size_t k = 1; k <= a.grid; ++k) {
    const double pi = static_cast<double>(k) / static_cast<double>(a.grid + 1);
    const ThinnedArParams p{a.nu, a.phi, pi};
    const NaiveLimit lim = naive_limits(p);
    const NaiveDerivatives d = derivative_formulas(p);
    const PropBounds b = prop_bounds(pi, a.phi);
    f << fmt(pi) << ',' << fmt(lim.phi_lim) << ',' << fmt(lim.nu_lim) << ',' << fmt(d.phi_prime) << ','
      << fmt(d.nu_prime) << ',' << fmt(b.prop1_threshold) << ',' << b.overestimates_nu << ','
      << b.printed_bound_overestimates << ',' << b.nu_prime_negative << ',' << b.consistency_warning << '\n';
  }
}

struct FitArgs {
  std::string engine = "approx";
  std::string config, data, survey;
  ChainOptions chain;
  double level = 0.95;
  bool binary = false;
};

void cmd_fit(const FitArgs& a, const Output& out) {
  const ObservedSeries data = load_series(a.data);
  if (a.engine == "naive") {
    auto f = out.open("naive.csv");
    f << "stratum,nu_hat,phi_hat,se_nu,se_phi,loglik,converged,at_boundary\n";
    for (std::size_t i = 0; i < data.strata; ++i) {
      const std::span<const std::int64_t> y(data.y.data() + i * data.t_len, data.t_len);
      const NaiveFit n = naive_pois_ar_mle(y);
      f << data.labels[i] << ',' << fmt(n.nu_hat) << ',' << fmt(n.phi_hat) << ',' << fmt(n.se_nu) << ','
        << fmt(n.se_phi) << ',' << fmt(n.loglik) << ',' << n.converged << ',' << n.at_boundary << '\n';
    }
    return;
  }
  if (a.engine == "mom") {
    auto f = out.open("mom.csv");
    f << "stratum,phi,pi,nu,phi_out_of_space,pi_out_of_space,nu_out_of_space\n";
    for (std::size_t i = 0; i < data.strata; ++i) {
      const std::span<const std::int64_t> y(data.y.data() + i * data.t_len, data.t_len);
      const MomEstimate e = mom_estimate(y);
      f << data.labels[i] << ',' << fmt(e.phi) << ',' << fmt(e.pi) << ',' << fmt(e.nu) << ',' << e.phi_out_of_space
        << ',' << e.pi_out_of_space << ',' << e.nu_out_of_space << '\n';
    }
    return;
  }
  const ChainConfig cfg = a.chain.config();
  ModelSpec spec = spec_or_default(a.config);
  DrawStore store;
  ModelSpec aligned;
  if (a.engine == "approx") {
    const auto survey = a.survey.empty() ? std::vector<SurveyRow>{} : load_survey(a.survey, data.labels);
    const ApproxModel model(std::move(spec), data, survey);
    aligned = model.spec();
    store = run_chains(make_approx_target(model), cfg);
  } else if (a.engine == "exact") {
    if (!a.survey.empty()) throw ValidationError("the exact engine does not take survey data");
    const ExactModel model(std::move(spec), data);
    aligned = model.spec();
    store = run_exact_mcmc(model, cfg);
  } else {
    throw ValidationError("unknown engine '" + a.engine + "'");
  }
  save_draws(store, out, a.binary);
  save_summary(store, out);
  std::size_t excluded = 0;
  const ReconstructionSummary rec = reconstruct_from_store(store, aligned, a.level, excluded);
  auto f = out.open("reconstruction.csv");
  write_reconstruction_csv(rec, f);
  for (std::size_t c = 0; c < store.n_chains(); ++c) {
    std::cout << "chain " << c + 1 << ": acceptance " << fmt(store.accept_rate[c]) << "\n";
  }
  if (excluded) std::cout << excluded << " draws excluded from the reconstruction (non-positive rate)\n";
}

struct ReconstructArgs {
  std::string draws, config, data;
  double level = 0.95;
};

void cmd_reconstruct(const ReconstructArgs& a, const Output& out) {
  const DrawStore store = load_draws(a.draws);
  const ObservedSeries data = load_series(a.data);
  const ModelSpec aligned = align_spec(spec_or_default(a.config), data);
  std::size_t excluded = 0;
  const ReconstructionSummary rec = reconstruct_from_store(store, aligned, a.level, excluded);
  auto f = out.open("reconstruction.csv");
  write_reconstruction_csv(rec, f);
  if (excluded) std::cout << excluded << " draws excluded (non-positive rate)\n";
}

struct PrevalenceArgs {
  std::string draws, config, data, survey;
  std::vector<double> population;
  std::optional<std::size_t> window;
  double level = 0.95;
  ChainOptions chain;
};

void cmd_prevalence(PrevalenceArgs a, const Output& out) {
  if (a.draws.empty() && a.survey.empty()) throw ValidationError("prevalence needs --draws, --survey or both");
  std::vector<std::string> labels;
  if (!a.draws.empty()) {
    if (a.data.empty()) throw ValidationError("--draws needs --data");
    const ObservedSeries data = load_series(a.data);
    labels = data.labels;
    const ModelSpec aligned = align_spec(spec_or_default(a.config), data);
    std::vector<double> pop = a.population;
    if (pop.empty() && aligned.aux.present) pop = aligned.aux.population;
    if (pop.empty()) throw ValidationError("prevalence needs --population or an aux block in the config");
    const std::size_t window = a.window.value_or(aligned.aux.present ? aligned.aux.window : 14);
    const DrawStore store = load_draws(a.draws);
    const CountDraws counts = is_exact_store(store) ? counts_from_exact_draws(store, aligned.strata, aligned.t_len)
                                                    : counts_from_approx_draws(store, aligned);
    const PrevalenceDraws prev = prevalence_rollup(counts, window, pop);
    const auto rows = summarize_prevalence(prev, a.level);
    auto f = out.open("prevalence.csv");
    write_interval_csv(rows, f);
    std::size_t above = 0;
    for (const auto& r : rows) above += r.hi > 1.0;
    if (above) std::cout << above << " cells have an upper bound above 1 (model misspecification)\n";
  }
  if (!a.survey.empty()) {
    ChainConfig cfg = a.chain.config();
    const auto rows = load_survey(a.survey, labels);
    const SmoothedPrevalence sm = smooth_prevalence(rows, cfg, a.level);
    auto f = out.open("survey_smooth.csv");
    write_interval_csv(sm.summary, f);
    auto d = out.open("survey_draws.csv");
    write_draws_csv(sm.draws, d);
  }
}

void cmd_diagnose(const std::string& draws, double rhat_threshold, const Output& out) {
  const DrawStore store = load_draws(draws);
  const auto rows = summarize(store);
  auto f = out.open("summary.csv");
  write_summary_csv(rows, f);
  double worst = 0.0;
  double min_ess = INFINITY;
  std::size_t flagged = 0;
  for (const auto& r : rows) {
    if (std::isfinite(r.rhat)) worst = std::max(worst, r.rhat);
    if (std::isfinite(r.ess)) min_ess = std::min(min_ess, r.ess);
    flagged += !(r.rhat <= rhat_threshold) && !std::isnan(r.rhat);
  }
  std::cout << "parameters: " << rows.size() << "\nmax rhat: " << fmt(worst) << "\nmin ess: " << fmt(min_ess)
            << "\nrhat above " << fmt(rhat_threshold) << ": " << flagged << "\n";
}

}  // namespace

// ---- loaders ----------------------------------------------------------------

ObservedSeries parse_series(std::istream& in, const std::string& source) {
  const CsvTable t = read_csv(in, source);
  if (t.header.size() < 3 || t.header[0] != "stratum" || t.header[1] != "t") {
    throw ValidationError(source + ": header must start with stratum,t and include y");
  }
  std::optional<std::size_t> x_col, y_col;
  std::vector<std::pair<std::string, std::size_t>> cov_cols;
  for (std::size_t c = 2; c < t.header.size(); ++c) {
    if (t.header[c] == "y") {
      y_col = c;
    } else if (t.header[c] == "x") {
      x_col = c;
    } else {
      cov_cols.emplace_back(t.header[c], c);
    }
  }
  if (!y_col) throw ValidationError(source + ": no y column");
  std::vector<std::string> labels;
  std::map<std::string, std::size_t> index;
  struct Cell {
    std::size_t t;
    std::size_t row;
  };
  std::vector<std::vector<Cell>> cells;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const std::string where = source + ": line " + std::to_string(t.line_numbers[r]);
    const auto [it, fresh] = index.emplace(t.rows[r][0], labels.size());
    if (fresh) {
      labels.push_back(t.rows[r][0]);
      cells.emplace_back();
    }
    const std::int64_t tt = parse_int(t.rows[r][1], where);
    if (tt < 1) throw ValidationError(where + ": t must be >= 1");
    const std::int64_t y = parse_int(t.rows[r][*y_col], where);
    if (y < 0) throw ValidationError(where + ": negative count y = " + std::to_string(y));
    cells[it->second].push_back({static_cast<std::size_t>(tt), r});
  }
  if (labels.empty()) throw ValidationError(source + ": no data rows");
  std::size_t t_len = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    auto& c = cells[i];
    std::sort(c.begin(), c.end(), [](const Cell& a, const Cell& b) { return a.t < b.t; });
    for (std::size_t k = 0; k < c.size(); ++k) {
      if (c[k].t == k + 1) continue;
      if (c[k].t < k + 1) {
        throw ValidationError(source + ": stratum " + labels[i] + " repeats t = " + std::to_string(c[k].t));
      }
      throw ValidationError(source + ": stratum " + labels[i] + " has a gap at t = " + std::to_string(k + 1) +
                            " (missing observations are not supported)");
    }
    if (i == 0) t_len = c.size();
    if (c.size() != t_len) {
      throw ValidationError(source + ": stratum " + labels[i] + " has " + std::to_string(c.size()) +
                            " time points, expected " + std::to_string(t_len));
    }
  }
  ObservedSeries s;
  s.strata = labels.size();
  s.t_len = t_len;
  s.labels = labels;
  s.y.resize(s.strata * t_len);
  if (x_col) s.x.resize(s.strata * t_len);
  for (const auto& [name, col] : cov_cols) s.covariates[name].resize(s.strata * t_len);
  for (std::size_t i = 0; i < s.strata; ++i) {
    for (const Cell& c : cells[i]) {
      const auto& row = t.rows[c.row];
      const std::string where = source + ": line " + std::to_string(t.line_numbers[c.row]);
      const std::size_t k = s.index(i, c.t - 1);
      s.y[k] = parse_int(row[*y_col], where);
      if (x_col) {
        s.x[k] = parse_int(row[*x_col], where);
        if (s.x[k] < s.y[k]) throw ValidationError(where + ": true count x below reported count y");
      }
      for (const auto& [name, col] : cov_cols) s.covariates[name][k] = parse_double(row[col], where);
    }
  }
  return s;
}

ObservedSeries load_series(const std::string& path) {
  auto in = open_input(path);
  return parse_series(in, path);
}

void write_series_csv(const ObservedSeries& s, std::ostream& out, bool with_x) {
  const bool x = with_x && s.has_truth();
  out << "stratum,t" << (x ? ",x" : "") << ",y";
  for (const auto& [name, v] : s.covariates) out << ',' << name;
  out << '\n';
  for (std::size_t i = 0; i < s.strata; ++i) {
    const std::string label = i < s.labels.size() ? s.labels[i] : std::to_string(i + 1);
    for (std::size_t t = 0; t < s.t_len; ++t) {
      const std::size_t k = s.index(i, t);
      out << label << ',' << t + 1;
      if (x) out << ',' << s.x[k];
      out << ',' << s.y[k];
      for (const auto& [name, v] : s.covariates) out << ',' << fmt_exact(v[k]);
      out << '\n';
    }
  }
}

std::vector<SurveyRow> load_survey(const std::string& path, const std::vector<std::string>& labels) {
  auto in = open_input(path);
  const CsvTable t = read_csv(in, path);
  if (t.header != std::vector<std::string>{"stratum", "day", "tests", "positives"}) {
    throw ValidationError(path + ": header must be stratum,day,tests,positives");
  }
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < labels.size(); ++i) index[labels[i]] = i;
  std::vector<SurveyRow> rows;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const std::string where = path + ": line " + std::to_string(t.line_numbers[r]);
    const auto& row = t.rows[r];
    SurveyRow s;
    if (labels.empty()) {
      s.stratum = index.emplace(row[0], index.size()).first->second;
    } else {
      const auto it = index.find(row[0]);
      if (it == index.end()) throw ValidationError(where + ": unknown stratum '" + row[0] + "'");
      s.stratum = it->second;
    }
    const std::int64_t day = parse_int(row[1], where);
    if (day < 1) throw ValidationError(where + ": day must be >= 1");
    s.day = static_cast<std::size_t>(day);
    s.tests = parse_int(row[2], where);
    s.positives = parse_int(row[3], where);
    if (s.tests < 0 || s.positives < 0 || s.positives > s.tests) {
      throw ValidationError(where + ": need 0 <= positives <= tests");
    }
    rows.push_back(s);
  }
  if (rows.empty()) throw ValidationError(path + ": survey has no rows");
  return rows;
}

// ---- manifest ---------------------------------------------------------------

std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string RunManifest::to_json() const {
  json j;
  j["subcommand"] = subcommand;
  j["config"] = config_path ? json(*config_path) : json(nullptr);
  j["inputs"] = input_paths;
  j["seed"] = seed ? json(*seed) : json(nullptr);
  j["output_dir"] = output_dir;
  j["tool_version"] = tool_version;
  j["config_hash"] = config_hash;
  j["args"] = args;
  return j.dump(2) + "\n";
}

void RunManifest::write(const std::string& dir) const {
  std::ofstream out(fs::path(dir) / "manifest.json", std::ios::binary);
  if (!out) throw ValidationError("cannot write manifest in '" + dir + "'");
  out << to_json();
}

// ---- entry point --------------------------------------------------------------

int run_subcommand(int argc, const char* const* argv) {
  std::vector<std::string> args;
  for (int k = 1; k < argc; ++k) args.emplace_back(argv[k]);
  return run_subcommand(args);
}

int run_subcommand(const std::vector<std::string>& args) {
  CLI::App app{"Thinned count autoregressions: simulation, fitting and reconstruction", "thinar"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);
  std::string out_dir = ".";

  auto add_out = [&out_dir](CLI::App* sub) {
    sub->add_option("--out", out_dir, "Output directory")->capture_default_str();
  };

  SimulateArgs sim;
  auto* s_sim = app.add_subcommand("simulate", "Simulate reported (and true) count series");
  s_sim->add_option("--nu", sim.nu, "Endemic rate")->capture_default_str();
  s_sim->add_option("--phi", sim.phi, "Autoregressive coefficient")->capture_default_str();
  s_sim->add_option("--pi", sim.pi, "Reporting probability")->capture_default_str();
  s_sim->add_option("--t", sim.t_len, "Series length (default 50, or t_len from --config)");
  s_sim->add_option("--burnin", sim.burn_in, "Discarded initial steps")->capture_default_str();
  s_sim->add_option("--reps", sim.reps, "Number of series")->capture_default_str();
  s_sim->add_option("--seed", sim.seed, "Random seed")->capture_default_str();
  s_sim->add_flag("--no-x", sim.no_x, "Omit the true counts column");
  s_sim->add_option("--config", sim.config, "Model config (general simulator)");
  s_sim->add_option("--truth", sim.truth, "JSON object of parameter values for --config");
  s_sim->add_option("--covariates", sim.covariates, "Covariate CSV stratum,t,... for --config");
  s_sim->add_option("--strata", sim.strata, "Number of strata for --config");
  s_sim->add_option("--survey-every", sim.survey_every, "Also write a prevalence survey every n days (aux configs)");
  s_sim->add_option("--survey-tests", sim.survey_tests, "Tests per survey row")->capture_default_str();
  add_out(s_sim);

  MomentsArgs mom;
  auto* s_mom = app.add_subcommand("moments", "Sample moments and moment estimates, or theoretical moments");
  s_mom->add_option("--data", mom.data, "Series CSV");
  s_mom->add_option("--nu", mom.nu, "Endemic rate");
  s_mom->add_option("--phi", mom.phi, "Autoregressive coefficient");
  s_mom->add_option("--pi", mom.pi, "Reporting probability");
  add_out(s_mom);

  MomStudyConfig study;
  auto* s_study = app.add_subcommand("mom-study", "Sampling distribution of the moment estimators");
  s_study->add_option("--phis", study.phis, "Grid of phi values")->delimiter(',')->capture_default_str();
  s_study->add_option("--pis", study.pis, "Grid of pi values")->delimiter(',')->capture_default_str();
  s_study->add_option("--nu", study.nu, "Endemic rate")->capture_default_str();
  s_study->add_option("--lengths", study.lengths, "Series lengths")->delimiter(',')->capture_default_str();
  s_study->add_option("--reps", study.reps, "Replicates per cell")->capture_default_str();
  s_study->add_option("--burnin", study.burn_in, "Discarded initial steps")->capture_default_str();
  s_study->add_option("--seed", study.seed, "Random seed")->capture_default_str();
  add_out(s_study);

  ConsequencesArgs cons;
  auto* s_cons = app.add_subcommand("consequences", "Limits of the naive fit across reporting probabilities");
  s_cons->add_option("--nu", cons.nu, "Endemic rate")->capture_default_str();
  s_cons->add_option("--phi", cons.phi, "Autoregressive coefficient")->capture_default_str();
  s_cons->add_option("--grid", cons.grid, "Number of interior pi grid points")->capture_default_str();
  s_cons->add_flag("--divide-by-pi", cons.divide_by_pi, "Write y / pi for a series instead");
  s_cons->add_option("--data", cons.data, "Series CSV for --divide-by-pi");
  s_cons->add_option("--pi", cons.pi, "Known reporting probability for --divide-by-pi");
  add_out(s_cons);

  FitArgs fit;
  auto* s_fit = app.add_subcommand("fit", "Fit a model to reported counts");
  s_fit->add_option("--engine", fit.engine, "Inference engine")
      ->check(CLI::IsMember({"approx", "exact", "naive", "mom"}))
      ->capture_default_str();
  s_fit->add_option("--config", fit.config, "Model config JSON (default: canonical model)");
  s_fit->add_option("--data", fit.data, "Series CSV")->required();
  s_fit->add_option("--survey", fit.survey, "Prevalence survey CSV (approx engine)");
  s_fit->add_option("--level", fit.level, "Credible level of the reconstruction")->capture_default_str();
  s_fit->add_flag("--binary", fit.binary, "Write draws.bin instead of draws.csv");
  fit.chain.add_to(s_fit);
  add_out(s_fit);

  ReconstructArgs rec;
  auto* s_rec = app.add_subcommand("reconstruct", "Integer epidemic curves from posterior draws");
  s_rec->add_option("--draws", rec.draws, "Draws CSV or .bin")->required();
  s_rec->add_option("--config", rec.config, "Model config JSON used for the fit");
  s_rec->add_option("--data", rec.data, "Series CSV used for the fit")->required();
  s_rec->add_option("--level", rec.level, "Credible level")->capture_default_str();
  add_out(s_rec);

  PrevalenceArgs prev;
  auto* s_prev = app.add_subcommand("prevalence", "Rolling prevalence from draws and/or smoothed survey prevalence");
  s_prev->add_option("--draws", prev.draws, "Draws CSV or .bin");
  s_prev->add_option("--config", prev.config, "Model config JSON used for the fit");
  s_prev->add_option("--data", prev.data, "Series CSV used for the fit");
  s_prev->add_option("--survey", prev.survey, "Survey CSV to smooth");
  s_prev->add_option("--population", prev.population, "Population size (one, or one per stratum)")->delimiter(',');
  s_prev->add_option("--window", prev.window, "Rolling window length");
  s_prev->add_option("--level", prev.level, "Credible level")->capture_default_str();
  prev.chain.iter = 2000;
  prev.chain.warmup = 1000;
  prev.chain.add_to(s_prev);
  add_out(s_prev);

  std::string diag_draws;
  double rhat_threshold = 1.01;
  auto* s_diag = app.add_subcommand("diagnose", "Convergence summary of stored draws");
  s_diag->add_option("--draws", diag_draws, "Draws CSV or .bin")->required();
  s_diag->add_option("--rhat-threshold", rhat_threshold, "Flag parameters above this R-hat")->capture_default_str();
  add_out(s_diag);

  std::vector<const char*> argv{"thinar"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  RunManifest manifest;
  manifest.args = args;
  manifest.output_dir = out_dir;
  std::string config;
  try {
    const Output out = prepare_output(out_dir);
    if (s_sim->parsed()) {
      manifest.subcommand = "simulate";
      manifest.seed = sim.seed;
      config = sim.config;
      if (!sim.truth.empty()) manifest.input_paths.push_back(sim.truth);
      if (!sim.covariates.empty()) manifest.input_paths.push_back(sim.covariates);
      cmd_simulate(sim, out);
    } else if (s_mom->parsed()) {
      manifest.subcommand = "moments";
      if (!mom.data.empty()) manifest.input_paths.push_back(mom.data);
      cmd_moments(mom, out);
    } else if (s_study->parsed()) {
      manifest.subcommand = "mom-study";
      manifest.seed = study.seed;
      cmd_mom_study(study, out);
    } else if (s_cons->parsed()) {
      manifest.subcommand = "consequences";
      if (!cons.data.empty()) manifest.input_paths.push_back(cons.data);
      cmd_consequences(cons, out);
    } else if (s_fit->parsed()) {
      manifest.subcommand = "fit";
      manifest.seed = fit.chain.seed;
      config = fit.config;
      manifest.input_paths.push_back(fit.data);
      if (!fit.survey.empty()) manifest.input_paths.push_back(fit.survey);
      cmd_fit(fit, out);
    } else if (s_rec->parsed()) {
      manifest.subcommand = "reconstruct";
      config = rec.config;
      manifest.input_paths = {rec.draws, rec.data};
      cmd_reconstruct(rec, out);
    } else if (s_prev->parsed()) {
      manifest.subcommand = "prevalence";
      config = prev.config;
      for (const auto* p : {&prev.draws, &prev.data, &prev.survey}) {
        if (!p->empty()) manifest.input_paths.push_back(*p);
      }
      if (!prev.survey.empty()) manifest.seed = prev.chain.seed;
      cmd_prevalence(prev, out);
    } else if (s_diag->parsed()) {
      manifest.subcommand = "diagnose";
      manifest.input_paths.push_back(diag_draws);
      cmd_diagnose(diag_draws, rhat_threshold, out);
    }
    if (!config.empty()) manifest.config_path = config;
    std::string hashed;
    if (!config.empty()) {
      hashed = read_file(config);
    } else {
      for (const auto& a : args) hashed += a + '\n';
    }
    manifest.config_hash = fnv1a_hex(hashed);
    manifest.write(out_dir);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const DomainError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  }
  return kExitOk;
}

}  // namespace thinar
