#include "impulse.h"

#include <string>

#include "impulse/config.hpp"
#include "impulse/presets.hpp"
#include "impulse/run.hpp"
#include "impulse/simulate.hpp"

namespace {

thread_local std::string g_last_error;

void set_error(const std::string& msg) { g_last_error = msg; }
void clear_error() { g_last_error.clear(); }

}  // namespace

struct ic_problem {
  ic::ProblemSpec spec;
};

extern "C" {

const char* ic_version(void) { return "1.0.0"; }

const char* ic_last_error(void) { return g_last_error.c_str(); }

ic_problem* ic_problem_from_preset(const char* name) {
  clear_error();
  if (!name) {
    set_error("null preset name");
    return nullptr;
  }
  try {
    auto* p = new ic_problem{ic::make_preset(name)};
    return p;
  } catch (const std::exception& e) {
    set_error(e.what());
    return nullptr;
  }
}

ic_problem* ic_problem_from_config(const char* path) {
  clear_error();
  if (!path) {
    set_error("null config path");
    return nullptr;
  }
  try {
    ic::KeyTree tree = ic::KeyTree::parse_file(path);
    auto* p = new ic_problem{ic::problem_from_tree(tree)};
    return p;
  } catch (const std::exception& e) {
    set_error(e.what());
    return nullptr;
  }
}

void ic_problem_free(ic_problem* problem) { delete problem; }

int ic_problem_validate(const ic_problem* problem, int samples,
                        uint64_t seed) {
  clear_error();
  if (!problem) {
    set_error("null problem handle");
    return IC_ERR_INVALID_ARGUMENT;
  }
  try {
    ic::AssumptionReport rep =
        ic::validate_problem(problem->spec, samples, seed);
    return rep.all_ok() ? 1 : 0;
  } catch (const std::exception& e) {
    set_error(e.what());
    return IC_ERR_INTERNAL;
  }
}

int ic_problem_cost(const ic_problem* problem, double x0, size_t paths,
                    int steps, uint64_t seed, int threads, double* mean,
                    double* stderr_out) {
  clear_error();
  if (!problem || !mean || !stderr_out) {
    set_error("null argument");
    return IC_ERR_INVALID_ARGUMENT;
  }
  try {
    ic::Vec x0v = ic::vzero();
    x0v[0] = x0;
    ic::CostEstimate est = ic::estimate_cost(
        problem->spec, ic::ImpulseControl{}, x0v, paths, steps, seed, threads);
    *mean = est.mean;
    *stderr_out = est.stderr_;
    return IC_OK;
  } catch (const std::exception& e) {
    set_error(e.what());
    return IC_ERR_INTERNAL;
  }
}

int ic_run(const char* command, const ic_run_options* opts) {
  clear_error();
  if (!command || !opts || !opts->out_dir) {
    set_error("null command or options");
    return IC_ERR_INVALID_ARGUMENT;
  }
  try {
    ic::RunConfig cfg;
    if (opts->config_path)
      cfg.tree = ic::KeyTree::parse_file(opts->config_path);
    if (opts->preset) cfg.preset = opts->preset;
    cfg.out_dir = opts->out_dir;
    cfg.seed = opts->seed;
    cfg.threads = opts->threads > 0 ? opts->threads : 1;
    cfg.paths = opts->paths;
    cfg.steps = opts->steps;
    return ic::run_command(command, cfg);
  } catch (const std::exception& e) {
    set_error(e.what());
    std::string what = e.what();
    if (what.rfind("malformed config", 0) == 0) return IC_ERR_BAD_CONFIG;
    return IC_ERR_INTERNAL;
  }
}

}  // extern "C"
