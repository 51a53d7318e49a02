// Command-line front end: run / suite / snapshot / validate.

#include <CLI11.hpp>
#include <cstdint>
#include <iostream>
#include <string>

#include "fedgraph/errors.hpp"
#include "fedgraph/harness.hpp"

namespace {

struct CommonOptions {
  std::string config_path;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string out_dir;
  int reps = 0;
};

fedgraph::ExperimentConfig load_with_overrides(const CommonOptions& opts) {
  fedgraph::ExperimentConfig cfg = fedgraph::parse_config_file(opts.config_path);
  if (opts.seed_set) cfg.seed = opts.seed;
  if (!opts.out_dir.empty()) cfg.output_dir = opts.out_dir;
  if (opts.reps > 0) cfg.repetitions = opts.reps;
  cfg.validate();
  return cfg;
}

void add_common(CLI::App* cmd, CommonOptions& opts, bool with_outputs) {
  cmd->add_option("--config", opts.config_path, "experiment config file")
      ->required();
  cmd->add_option("--seed", opts.seed, "override the config seed")
      ->each([&opts](const std::string&) { opts.seed_set = true; });
  if (with_outputs) {
    cmd->add_option("--out", opts.out_dir, "override the output directory");
    cmd->add_option("--reps", opts.reps, "override the repetition count");
  }
}

bool parse_round_range(const std::string& text, int& lo, int& hi) {
  const auto colon = text.find(':');
  try {
    if (colon == std::string::npos) {
      lo = hi = std::stoi(text);
    } else {
      lo = std::stoi(text.substr(0, colon));
      hi = std::stoi(text.substr(colon + 1));
    }
  } catch (const std::exception&) {
    return false;
  }
  return lo >= 0 && hi >= lo;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fedgraph: a deterministic federated subgraph GNN simulator"};
  app.require_subcommand(1);

  CommonOptions run_opts, suite_opts, validate_opts;
  std::string flow_csv, snapshot_out = "snapshots", round_range;

  CLI::App* run = app.add_subcommand("run", "run one experiment configuration");
  add_common(run, run_opts, true);

  CLI::App* suite = app.add_subcommand(
      "suite", "run every strategy for K in {5, 10, 30} on the same data");
  add_common(suite, suite_opts, true);

  CLI::App* validate =
      app.add_subcommand("validate", "check a config and print the resolved form");
  add_common(validate, validate_opts, false);

  CLI::App* snapshot = app.add_subcommand(
      "snapshot", "aggregate a flow log into per-round edge-list snapshots");
  snapshot->add_option("flow_csv", flow_csv, "flow log produced by `run`")
      ->required();
  snapshot->add_option("--out", snapshot_out, "snapshot output directory");
  snapshot->add_option("--rounds", round_range, "round or round range, e.g. 3:17");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (run->parsed()) {
      return fedgraph::cmd_run(load_with_overrides(run_opts), std::cout);
    }
    if (suite->parsed()) {
      return fedgraph::cmd_suite(load_with_overrides(suite_opts), std::cout);
    }
    if (validate->parsed()) {
      return fedgraph::cmd_validate(validate_opts.config_path, std::cout);
    }
    if (snapshot->parsed()) {
      int lo = -1, hi = -1;
      if (!round_range.empty() && !parse_round_range(round_range, lo, hi)) {
        std::cerr << "error: --rounds expects '<round>' or '<lo>:<hi>'\n";
        return 1;
      }
      return fedgraph::cmd_snapshot(flow_csv, snapshot_out, lo, hi, std::cout);
    }
  } catch (const fedgraph::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
