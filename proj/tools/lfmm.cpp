// SPDX-License-Identifier: Apache-2.0
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "lfmm/experiment.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Fixed-point theory and simulation for ridge classifiers on linear factor mixtures"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  int workers = 0;
  std::uint64_t seed = 0;

  auto add = [&](const std::string& name, const std::string& help) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", config_path, "JSON config file")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", out_dir, "output directory (overrides config)");
    sub->add_option("--workers", workers, "worker threads (overrides config)")
        ->check(CLI::PositiveNumber);
    sub->add_option("--seed", seed, "base seed (overrides config)");
    return sub;
  };
  CLI::App* solve = add("solve", "solve the fixed point over the lambda list");
  CLI::App* simulate = add("simulate", "compare theory with Monte Carlo trials");
  CLI::App* histogram = add("histogram", "score histogram against the theoretical density");
  CLI::App* universality = add("universality", "Gaussian universality audit");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : lfmm::kExitUsage;
  }

  try {
    lfmm::ExperimentConfig cfg = lfmm::load_config(config_path);
    if (!out_dir.empty()) cfg.out = out_dir;
    if (workers > 0) cfg.workers = workers;
    if (app.get_subcommands().front()->count("--seed") > 0) cfg.seed = seed;

    int code = lfmm::kExitOk;
    if (solve->parsed()) code = lfmm::cmd_solve(cfg);
    else if (simulate->parsed()) code = lfmm::cmd_simulate(cfg);
    else if (histogram->parsed()) code = lfmm::cmd_histogram(cfg);
    else if (universality->parsed()) code = lfmm::cmd_universality(cfg);
    if (code != lfmm::kExitOk)
      std::cerr << "lfmm: failed, see " << (cfg.out / "error.json").string() << '\n';
    return code;
  } catch (const lfmm::ConfigError& e) {
    std::cerr << "lfmm: " << e.what() << '\n';
    return lfmm::kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "lfmm: " << e.what() << '\n';
    return lfmm::kExitFailure;
  }
}
