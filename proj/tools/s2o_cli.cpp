#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "s2o/error.hpp"
#include "s2o/harness.hpp"

namespace fs = std::filesystem;
using namespace s2o;

int main(int argc, char** argv) {
  CLI::App app{"Adversarial training with second-order weight statistics"};
  app.require_subcommand(1);

  std::string config_path, out_dir;
  std::optional<std::uint64_t> seed;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON run configuration")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", out_dir, "output directory (overrides output_dir)");
    sub->add_option("--seed", seed, "master seed (overrides train.seed)");
  };
  auto* train = app.add_subcommand("train", "train a network; writes metrics.csv and checkpoint.json");
  auto* evaluate = app.add_subcommand("evaluate", "clean and attacked test accuracy; writes eval.csv");
  auto* stats = app.add_subcommand("stats", "weight correlation statistics; writes stats_*.csv");
  auto* bound = app.add_subcommand("bound", "generalization complexity terms; writes bound.json");
  auto* simulate = app.add_subcommand("simulate", "correlation-family simulation; writes fig3_*.csv");
  for (auto* sub : {train, evaluate, stats, bound, simulate}) add_common(sub);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    harness::RunConfig cfg = harness::load_config(config_path);
    if (seed) cfg.train.seed = *seed;
    if (!out_dir.empty()) {
      // a checkpoint left implicit follows the output directory
      cfg.output_dir = out_dir;
    }
    const fs::path out = cfg.output_dir;

    if (train->parsed()) {
      const auto rec = harness::train(cfg, out);
      const auto& last = rec.metrics.back();
      std::cout << harness::to_string(cfg.train.method) << " epochs=" << cfg.train.epochs
                << " clean_test=" << last.clean_test << " pgd_test=" << last.pgd_test << '\n';
    } else if (evaluate->parsed()) {
      harness::evaluate_cmd(cfg, out);
    } else if (stats->parsed()) {
      const auto all = harness::stats_cmd(cfg, out);
      std::cout << "wrote " << all.size() << " stats records\n";
    } else if (bound->parsed()) {
      harness::bound_cmd(cfg, out);
    } else if (simulate->parsed()) {
      harness::simulate_cmd(cfg, out);
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return harness::exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
