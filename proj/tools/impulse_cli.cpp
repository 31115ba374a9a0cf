// Command-line front end; a thin wrapper over the shared-library C API.

#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "impulse.h"

int main(int argc, char** argv) {
  CLI::App app{"Impulse-control toolkit: simulation, QVI solving, adjoint "
               "equations and maximum-principle checks"};
  app.require_subcommand(1);

  std::string config, preset, out = "out";
  std::uint64_t seed = 1;
  int threads = 1, steps = 0;
  std::size_t paths = 0;

  const char* commands[] = {"validate",  "simulate",  "solve-qvi",
                            "check-dpp", "adjoint",   "check-mp",
                            "expansion-order", "report"};
  const char* blurbs[] = {
      "run the sampled assumption checks",
      "Monte Carlo cost of a configured impulse control",
      "solve the obstacle problem and extract the policy",
      "dynamic-programming consistency probe",
      "solve both adjoint backward equations along a control",
      "score the maximum-principle conditions (needs a prior adjoint run)",
      "Taylor expansion order study for spike perturbations",
      "aggregate prior artifacts in the output directory"};
  std::vector<CLI::App*> subs;
  for (std::size_t i = 0; i < std::size(commands); ++i) {
    CLI::App* sub = app.add_subcommand(commands[i], blurbs[i]);
    sub->add_option("--config", config, "key-tree config file");
    sub->add_option("--preset", preset, "named problem scenario");
    sub->add_option("--seed", seed, "random seed");
    sub->add_option("--out", out, "output directory");
    sub->add_option("--threads", threads, "worker cap");
    sub->add_option("--paths", paths, "Monte Carlo path count override");
    sub->add_option("--steps", steps, "time step count override");
    subs.push_back(sub);
  }

  CLI11_PARSE(app, argc, argv);

  std::string command;
  for (std::size_t i = 0; i < subs.size(); ++i)
    if (subs[i]->parsed()) command = commands[i];

  ic_run_options opts{};
  opts.config_path = config.empty() ? nullptr : config.c_str();
  opts.preset = preset.empty() ? nullptr : preset.c_str();
  opts.out_dir = out.c_str();
  opts.seed = seed;
  opts.threads = threads;
  opts.paths = paths;
  opts.steps = steps;

  int rc = ic_run(command.c_str(), &opts);
  if (rc < 0) {
    std::fprintf(stderr, "%s\n", ic_last_error());
    return 1;
  }
  return rc;
}
