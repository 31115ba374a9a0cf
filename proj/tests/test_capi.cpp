#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "impulse.h"

namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("ic_capi_" + tag);
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  const char* c_str() const { return path.c_str(); }
};

ic_run_options options(const char* preset, const char* out) {
  ic_run_options o{};
  o.preset = preset;
  o.out_dir = out;
  o.seed = 5;
  o.threads = 2;
  return o;
}

}  // namespace

TEST_CASE("version and error channel") {
  CHECK(std::string(ic_version()) == "1.0.0");
  ic_problem* p = ic_problem_from_preset("heat-kernel");
  REQUIRE(p != nullptr);
  CHECK(std::string(ic_last_error()).empty());
  ic_problem_free(p);
}

TEST_CASE("unknown preset reports through last_error") {
  ic_problem* p = ic_problem_from_preset("no-such-scenario");
  CHECK(p == nullptr);
  CHECK(std::string(ic_last_error()).find("unknown preset") !=
        std::string::npos);
  CHECK(ic_problem_from_preset(nullptr) == nullptr);
}

TEST_CASE("validate and cost through the handle") {
  ic_problem* p = ic_problem_from_preset("heat-kernel");
  REQUIRE(p != nullptr);
  CHECK(ic_problem_validate(p, 200, 7) == 1);

  double mean = 0.0, se = 0.0;
  REQUIRE(ic_problem_cost(p, 0.0, 8000, 64, 3, 2, &mean, &se) == IC_OK);
  CHECK(std::abs(mean - (1.0 + std::exp(-0.5))) < 3.0 * se + 2e-3);
  CHECK(ic_problem_cost(p, 0.0, 100, 10, 1, 1, nullptr, &se) ==
        IC_ERR_INVALID_ARGUMENT);
  ic_problem_free(p);

  CHECK(ic_problem_validate(nullptr, 200, 7) == IC_ERR_INVALID_ARGUMENT);
}

TEST_CASE("problem from a config file") {
  TempDir dir("cfg");
  fs::path cfg = dir.path / "p.ini";
  std::ofstream(cfg) << "[problem]\npreset = loan\nhorizon = 1.25\n";
  ic_problem* p = ic_problem_from_config(cfg.c_str());
  REQUIRE(p != nullptr);
  ic_problem_free(p);

  CHECK(ic_problem_from_config((dir.path / "missing.ini").c_str()) == nullptr);
  CHECK(std::string(ic_last_error()).find("malformed config") !=
        std::string::npos);
}

TEST_CASE("ic_run exit codes") {
  TempDir dir("run");

  SUBCASE("validate writes its artifact and succeeds") {
    ic_run_options o = options("heat-kernel", dir.c_str());
    CHECK(ic_run("validate", &o) == IC_OK);
    CHECK(fs::exists(dir.path / "assumption_report.json"));
    CHECK(fs::exists(dir.path / "manifest.json"));
  }

  SUBCASE("simulate with explicit sizes") {
    ic_run_options o = options("loan", dir.c_str());
    o.paths = 500;
    o.steps = 40;
    CHECK(ic_run("simulate", &o) == IC_OK);
    CHECK(fs::exists(dir.path / "cost.json"));
    CHECK(fs::exists(dir.path / "trajectory.csv"));
  }

  SUBCASE("unknown preset") {
    ic_run_options o = options("bogus", dir.c_str());
    CHECK(ic_run("validate", &o) == IC_ERR_UNKNOWN_PRESET);
  }

  SUBCASE("missing config file") {
    ic_run_options o = options(nullptr, dir.c_str());
    o.config_path = "/nonexistent/path.ini";
    CHECK(ic_run("validate", &o) == IC_ERR_BAD_CONFIG);
  }

  SUBCASE("config without a problem") {
    fs::path cfg = dir.path / "empty.ini";
    std::ofstream(cfg) << "[problem]\nhorizon = 1\n";
    ic_run_options o = options(nullptr, dir.c_str());
    o.config_path = cfg.string().c_str();
    std::string keep = cfg.string();
    o.config_path = keep.c_str();
    CHECK(ic_run("validate", &o) == IC_ERR_BAD_CONFIG);
  }

  SUBCASE("unknown command") {
    ic_run_options o = options("loan", dir.c_str());
    CHECK(ic_run("frobnicate", &o) == IC_ERR_BAD_CONFIG);
  }

  SUBCASE("check-mp before adjoint reports the missing artifact") {
    ic_run_options o = options("linear-adjoint", dir.c_str());
    CHECK(ic_run("check-mp", &o) == IC_ERR_MISSING_ARTIFACT);
  }

  SUBCASE("null arguments") {
    CHECK(ic_run("validate", nullptr) == IC_ERR_INVALID_ARGUMENT);
    ic_run_options o = options("loan", nullptr);
    CHECK(ic_run("validate", &o) == IC_ERR_INVALID_ARGUMENT);
  }
}
