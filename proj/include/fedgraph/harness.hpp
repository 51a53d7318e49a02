#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "fedgraph/config.hpp"

namespace fedgraph {

// Seeded data pipeline for one repetition: graph, Dirichlet partition,
// per-client masks. All streams derive from rep_seed.
std::vector<ClientDataset> build_datasets(const ExperimentConfig& cfg,
                                          std::uint64_t rep_seed);

// Seed for repetition `rep` of a configured experiment.
std::uint64_t repetition_seed(const ExperimentConfig& cfg, int rep);

// Aggregates flow records of rounds [round_min, round_max] into per-round
// `snapshot_<t>.txt` edge lists (`src dst volume`; -1 is the coordinator).
void write_snapshots(const std::vector<FlowRecord>& flow,
                     const std::string& out_dir, int round_min, int round_max);

// Subcommands; all return a process exit code (0 ok, 1 config error,
// 2 runtime error) and report progress on `log`.
int cmd_run(const ExperimentConfig& cfg, std::ostream& log);
int cmd_suite(const ExperimentConfig& cfg, std::ostream& log);
int cmd_snapshot(const std::string& flow_csv, const std::string& out_dir,
                 int round_min, int round_max, std::ostream& log);
int cmd_validate(const std::string& config_path, std::ostream& log);

}  // namespace fedgraph
