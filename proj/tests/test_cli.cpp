#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "nlohmann/json.hpp"
#include "thinar/cli.hpp"
#include "thinar/error.hpp"

using namespace thinar;
namespace fs = std::filesystem;

namespace {

const fs::path kSource = THINAR_SOURCE_DIR;

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "thinar_cli_tests" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// Runs the tool with stdout and stderr captured.
int run_quiet(const std::vector<std::string>& args, std::string* err = nullptr) {
  std::ostringstream out_buf, err_buf;
  auto* old_out = std::cout.rdbuf(out_buf.rdbuf());
  auto* old_err = std::cerr.rdbuf(err_buf.rdbuf());
  const int code = run_subcommand(args);
  std::cout.rdbuf(old_out);
  std::cerr.rdbuf(old_err);
  if (err) *err = err_buf.str();
  return code;
}

std::string validation_message(const std::string& csv) {
  std::istringstream in(csv);
  try {
    parse_series(in, "series.csv");
  } catch (const ValidationError& e) {
    return e.what();
  }
  return "";
}

struct GoldenCase {
  std::string name;
  std::vector<std::string> args;  // "{src}" and "{golden}" are expanded
};

std::string expand(std::string s) {
  for (const auto& [key, value] : {std::pair<std::string, std::string>{"{src}", kSource.string()},
                                   {"{golden}", (kSource / "tests" / "golden").string()}}) {
    for (std::size_t at; (at = s.find(key)) != std::string::npos;) s.replace(at, key.size(), value);
  }
  return s;
}

const std::vector<GoldenCase>& golden_cases() {
  static const std::vector<GoldenCase> cases = {
      {"simulate_canonical",
       {"simulate", "--nu", "10", "--phi", "0.6", "--pi", "0.6", "--t", "50", "--burnin", "100", "--reps", "3",
        "--seed", "1"}},
      {"simulate_general",
       {"simulate", "--config", "{src}/configs/conurbations.json", "--truth", "{src}/configs/conurbations.truth.json",
        "--covariates", "{src}/configs/fixtures/conurbations_covariates.csv", "--t", "120", "--burnin", "0",
        "--seed", "6", "--survey-every", "7", "--survey-tests", "5000"}},
      {"moments_data", {"moments", "--data", "{src}/configs/fixtures/simulation_study_series.csv"}},
      {"moments_params", {"moments", "--nu", "10", "--phi", "0.4", "--pi", "0.4"}},
      {"mom_study",
       {"mom-study", "--phis", "0.4,0.8", "--pis", "0.4,0.8", "--lengths", "50,200", "--reps", "50", "--seed", "2"}},
      {"consequences", {"consequences", "--nu", "5", "--phi", "0.8", "--grid", "99"}},
      {"divide_by_pi",
       {"consequences", "--divide-by-pi", "--data", "{src}/configs/fixtures/simulation_study_series.csv", "--pi",
        "0.6"}},
      {"fit_naive", {"fit", "--engine", "naive", "--data", "{src}/configs/fixtures/simulation_study_series.csv"}},
      {"fit_mom", {"fit", "--engine", "mom", "--data", "{src}/configs/fixtures/simulation_study_series.csv"}},
      {"fit_approx",
       {"fit", "--engine", "approx", "--config", "{src}/configs/simulation_study.json", "--data",
        "{src}/configs/fixtures/simulation_study_series.csv", "--chains", "2", "--iter", "300", "--warmup", "150",
        "--seed", "1"}},
      {"fit_exact",
       {"fit", "--engine", "exact", "--config", "{src}/configs/simulation_study.json", "--data",
        "{src}/configs/fixtures/simulation_study_series.csv", "--chains", "2", "--iter", "600", "--warmup", "300",
        "--leapfrog", "8", "--seed", "1"}},
      {"fit_conurbations",
       {"fit", "--engine", "approx", "--config", "{src}/configs/conurbations.json", "--data",
        "{src}/configs/fixtures/conurbations_series.csv", "--survey", "{src}/configs/fixtures/conurbations_survey.csv",
        "--chains", "1", "--iter", "10", "--warmup", "5", "--leapfrog", "4", "--seed", "3"}},
      {"reconstruct",
       {"reconstruct", "--draws", "{golden}/fit_approx/draws.csv", "--config", "{src}/configs/simulation_study.json",
        "--data", "{src}/configs/fixtures/simulation_study_series.csv", "--level", "0.9"}},
      {"prevalence",
       {"prevalence", "--draws", "{golden}/fit_conurbations/draws.csv", "--config", "{src}/configs/conurbations.json",
        "--data", "{src}/configs/fixtures/conurbations_series.csv", "--survey",
        "{src}/configs/fixtures/conurbations_survey.csv", "--chains", "2", "--iter", "200", "--warmup", "100",
        "--seed", "4"}},
      {"diagnose", {"diagnose", "--draws", "{golden}/fit_approx/draws.csv"}},
  };
  return cases;
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("two strata load with their shape") {
    std::ostringstream csv;
    csv << "stratum,t,y,temp\n";
    for (const char* s : {"north", "south"}) {
      for (int t = 1; t <= 10; ++t) csv << s << ',' << t << ',' << t * 2 << ',' << 0.5 * t << '\n';
    }
    std::istringstream in(csv.str());
    const ObservedSeries s = parse_series(in, "two.csv");
    CHECK(s.strata == 2);
    CHECK(s.t_len == 10);
    CHECK(s.labels == std::vector<std::string>{"north", "south"});
    CHECK(s.y_at(1, 9) == 20);
    CHECK(s.covariates.at("temp")[s.index(1, 2)] == 1.5);
    CHECK_FALSE(s.has_truth());
  }

  TEST_CASE("rows may come in any order and carry true counts") {
    std::istringstream in("stratum,t,x,y\nA,2,5,3\nA,1,4,4\nA,3,9,0\n");
    const ObservedSeries s = parse_series(in, "x.csv");
    CHECK(s.y == std::vector<std::int64_t>{4, 3, 0});
    CHECK(s.x == std::vector<std::int64_t>{4, 5, 9});
  }

  TEST_CASE("a gap names the stratum and time") {
    std::ostringstream csv;
    csv << "stratum,t,y\n";
    for (int t = 1; t <= 8; ++t) {
      if (t != 5) csv << "A," << t << ",3\n";
    }
    const std::string msg = validation_message(csv.str());
    CHECK(msg.find("stratum A") != std::string::npos);
    CHECK(msg.find("t = 5") != std::string::npos);
  }

  TEST_CASE("a negative count names its row") {
    const std::string msg = validation_message("stratum,t,y\nA,1,2\nA,2,-1\nA,3,4\n");
    CHECK(msg.find("line 3") != std::string::npos);
    CHECK(msg.find("negative count") != std::string::npos);
  }

  TEST_CASE("other malformed series") {
    CHECK(validation_message("stratum,t,y\nA,1,2\nA,1,3\n").find("repeats t = 1") != std::string::npos);
    CHECK(validation_message("stratum,t,y\nA,1,2\nA,2,3\nB,1,4\n").find("stratum B") != std::string::npos);
    CHECK(validation_message("time,y\n1,2\n").find("header") != std::string::npos);
    CHECK(validation_message("stratum,t,y\nA,1,two\n").find("not an integer") != std::string::npos);
    CHECK(validation_message("stratum,t,x,y\nA,1,1,2\n").find("below reported") != std::string::npos);
    CHECK_THROWS_AS(load_series("/nonexistent/series.csv"), ValidationError);
  }

  TEST_CASE("series CSV round trip") {
    std::istringstream in("stratum,t,x,y,cov\nA,1,5,3,0.25\nA,2,6,2,1\nB,1,7,7,-3\nB,2,1,0,2\n");
    const ObservedSeries s = parse_series(in, "in.csv");
    std::ostringstream out;
    write_series_csv(s, out, true);
    std::istringstream back_in(out.str());
    const ObservedSeries back = parse_series(back_in, "out.csv");
    CHECK(back.y == s.y);
    CHECK(back.x == s.x);
    CHECK(back.labels == s.labels);
    CHECK(back.covariates == s.covariates);
  }

  TEST_CASE("exit codes") {
    const fs::path dir = scratch_dir("exit_codes");
    CHECK(run_quiet({"consequences", "--help"}) == kExitOk);
    CHECK(run_quiet({}) == kExitUsage);
    CHECK(run_quiet({"frobnicate"}) == kExitUsage);
    CHECK(run_quiet({"simulate", "--bogus", "1"}) == kExitUsage);
    CHECK(run_quiet({"fit", "--engine", "approx"}) == kExitUsage);
    CHECK(run_quiet({"fit", "--engine", "quantum", "--data", "x.csv"}) == kExitUsage);
    std::string err;
    CHECK(run_quiet({"fit", "--engine", "naive", "--data", (dir / "missing.csv").string(), "--out", dir.string()},
                    &err) == kExitValidation);
    CHECK(err.find("missing.csv") != std::string::npos);
    CHECK(run_quiet({"simulate", "--nu", "-1", "--out", dir.string()}) == kExitValidation);
    CHECK(run_quiet({"moments", "--nu", "10", "--phi", "1.5", "--pi", "0.5", "--out", dir.string()}) ==
          kExitValidation);
    // A constant series has no lag-one autocorrelation.
    std::ofstream(dir / "flat.csv") << "stratum,t,y\nA,1,4\nA,2,4\nA,3,4\nA,4,4\n";
    CHECK(run_quiet({"fit", "--engine", "mom", "--data", (dir / "flat.csv").string(), "--out", dir.string()}) ==
          kExitNumerical);
  }

  TEST_CASE("every run writes a manifest") {
    const fs::path dir = scratch_dir("manifest");
    const fs::path cfg = kSource / "configs" / "simulation_study.json";
    const fs::path data = kSource / "configs" / "fixtures" / "simulation_study_series.csv";
    REQUIRE(run_quiet({"fit", "--engine", "naive", "--config", cfg.string(), "--data", data.string(), "--out",
                       dir.string()}) == kExitOk);
    const auto m = nlohmann::json::parse(slurp(dir / "manifest.json"));
    CHECK(m["subcommand"] == "fit");
    CHECK(m["config"] == cfg.string());
    CHECK(m["inputs"][0] == data.string());
    CHECK(m["tool_version"] == kToolVersion);
    CHECK(m["config_hash"] == fnv1a_hex(slurp(cfg)));
    CHECK(m["output_dir"] == dir.string());
    CHECK(m["args"].size() > 4);
  }

  TEST_CASE("fnv1a reference values") {
    CHECK(fnv1a_hex("") == "cbf29ce484222325");
    CHECK(fnv1a_hex("a") == "af63dc4c8601ec8c");
  }

  TEST_CASE("golden outputs") {
    const bool update = std::getenv("THINAR_UPDATE_GOLDEN") != nullptr;
    for (const auto& gc : golden_cases()) {
      CAPTURE(gc.name);
      const fs::path out = scratch_dir("golden_" + gc.name);
      std::vector<std::string> args;
      for (const auto& a : gc.args) args.push_back(expand(a));
      args.push_back("--out");
      args.push_back(out.string());
      std::string err;
      REQUIRE_MESSAGE(run_quiet(args, &err) == kExitOk, err);
      REQUIRE(fs::exists(out / "manifest.json"));

      std::set<std::string> produced;
      for (const auto& e : fs::directory_iterator(out)) {
        if (e.path().filename() != "manifest.json") produced.insert(e.path().filename().string());
      }
      const fs::path golden = kSource / "tests" / "golden" / gc.name;
      if (update) {
        fs::remove_all(golden);
        fs::create_directories(golden);
        for (const auto& f : produced) fs::copy_file(out / f, golden / f);
      }
      std::set<std::string> expected;
      if (fs::exists(golden)) {
        for (const auto& e : fs::directory_iterator(golden)) expected.insert(e.path().filename().string());
      }
      CHECK(produced == expected);
      for (const auto& f : expected) {
        CAPTURE(f);
        CHECK(slurp(out / f) == slurp(golden / f));
      }
    }
  }

  TEST_CASE("reruns are bit-identical") {
    const fs::path a = scratch_dir("rerun_a");
    const fs::path b = scratch_dir("rerun_b");
    for (const auto& dir : {a, b}) {
      REQUIRE(run_quiet({"simulate", "--nu", "5", "--phi", "0.5", "--pi", "0.3", "--t", "40", "--reps", "2",
                         "--seed", "9", "--out", dir.string()}) == kExitOk);
    }
    CHECK(slurp(a / "series_001.csv") == slurp(b / "series_001.csv"));
    CHECK(slurp(a / "series_002.csv") == slurp(b / "series_002.csv"));
    CHECK(slurp(a / "series_001.csv") != slurp(a / "series_002.csv"));
  }
}
