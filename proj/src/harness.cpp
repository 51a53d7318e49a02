#include "fedgraph/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>

#include "fedgraph/errors.hpp"
#include "fedgraph/rng.hpp"

namespace fedgraph {

namespace fs = std::filesystem;

namespace {

std::vector<ClientDataset> build_datasets_for(const ExperimentConfig& cfg,
                                              std::uint64_t rep_seed,
                                              int num_clients) {
  SbmSpec spec = cfg.data;
  spec.seed = substream_seed(rep_seed, "harness.data");
  const Graph graph = generate_sbm(spec);
  Partition part = partition_clients(graph, num_clients, cfg.alpha,
                                     substream_seed(rep_seed, "harness.partition"));
  std::vector<ClientDataset> clients;
  clients.reserve(part.clients.size());
  for (std::size_t k = 0; k < part.clients.size(); ++k) {
    clients.push_back(split_masks(
        std::move(part.clients[k]),
        substream_seed(rep_seed, "harness.masks", static_cast<std::uint64_t>(k))));
  }
  return clients;
}

std::optional<DriftSpec> drift_of(const ExperimentConfig& cfg) {
  if (!cfg.drift_enabled) return std::nullopt;
  return DriftSpec{cfg.drift, cfg.drift_scale};
}

std::string rep_dir_name(int rep) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "rep_%03d", rep);
  return buf;
}

std::string format_pct(double fraction) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", fraction * 100.0);
  return buf;
}

struct Summary {
  double mean = 0.0;  // over repetitions, as a fraction
  double stddev = 0.0;
};

Summary summarize(const std::vector<double>& values) {
  Summary s;
  if (values.empty()) return s;
  for (double v : values) s.mean += v;
  s.mean /= static_cast<double>(values.size());
  if (values.size() > 1) {
    double var = 0.0;
    for (double v : values) var += (v - s.mean) * (v - s.mean);
    var /= static_cast<double>(values.size() - 1);
    s.stddev = std::sqrt(var);
  }
  return s;
}

std::string cell_text(const Summary& s) {
  return format_pct(s.mean) + "\xC2\xB1" + format_pct(s.stddev);
}

ExperimentResult run_one(const ExperimentConfig& cfg, const RoundConfig& round,
                         std::uint64_t rep_seed, int num_clients,
                         const ExperimentSinks& sinks = {}) {
  auto datasets = build_datasets_for(cfg, rep_seed, num_clients);
  return run_experiment(round, std::move(datasets), drift_of(cfg), rep_seed,
                        cfg.model, sinks);
}

}  // namespace

std::vector<ClientDataset> build_datasets(const ExperimentConfig& cfg,
                                          std::uint64_t rep_seed) {
  return build_datasets_for(cfg, rep_seed, cfg.num_clients);
}

std::uint64_t repetition_seed(const ExperimentConfig& cfg, int rep) {
  return substream_seed(cfg.seed, "harness.rep", static_cast<std::uint64_t>(rep));
}

void write_snapshots(const std::vector<FlowRecord>& flow,
                     const std::string& out_dir, int round_min, int round_max) {
  fs::create_directories(out_dir);
  // (round, src, dst) -> aggregated volume; -1 marks the coordinator.
  std::map<std::tuple<int, int, int>, long> volumes;
  for (const auto& rec : flow) {
    const int src = rec.direction == FlowDirection::up ? rec.client_id : -1;
    const int dst = rec.direction == FlowDirection::up ? -1 : rec.client_id;
    volumes[{rec.round, src, dst}] += rec.param_count;
  }
  for (int round = round_min; round <= round_max; ++round) {
    std::ofstream out(fs::path(out_dir) / ("snapshot_" + std::to_string(round) + ".txt"));
    if (!out) throw ConfigError("cannot write snapshots under " + out_dir);
    const auto begin = volumes.lower_bound({round, std::numeric_limits<int>::min(),
                                            std::numeric_limits<int>::min()});
    for (auto it = begin; it != volumes.end() && std::get<0>(it->first) == round;
         ++it) {
      out << std::get<1>(it->first) << ' ' << std::get<2>(it->first) << ' '
          << it->second << '\n';
    }
  }
}

int cmd_run(const ExperimentConfig& cfg, std::ostream& log) {
  fs::create_directories(cfg.output_dir);
  {
    std::ofstream resolved(fs::path(cfg.output_dir) / "resolved.config");
    resolved << emit_config(cfg);
  }

  std::vector<double> accuracies;
  for (int rep = 0; rep < cfg.repetitions; ++rep) {
    const std::uint64_t rep_seed = repetition_seed(cfg, rep);
    const fs::path dir = fs::path(cfg.output_dir) / rep_dir_name(rep);
    fs::create_directories(dir);

    std::ofstream metrics(dir / "metrics.csv");
    std::ofstream flow(dir / "flow.csv");
    if (!metrics || !flow)
      throw ConfigError("cannot create output files under " + dir.string());
    ExperimentSinks sinks{&metrics, &flow};

    const ExperimentResult result =
        run_one(cfg, cfg.round, rep_seed, cfg.num_clients, sinks);
    write_snapshots(result.flow, (dir / "snapshots").string(), 0,
                    cfg.round.num_rounds - 1);
    accuracies.push_back(result.mean_test_accuracy);
    log << "rep " << rep << ": mean test accuracy "
        << format_double(result.mean_test_accuracy) << '\n';
  }

  const Summary summary = summarize(accuracies);
  const std::string line = to_string(cfg.round.strategy) + " " +
                           std::to_string(cfg.num_clients) + " " +
                           cell_text(summary);
  {
    std::ofstream out(fs::path(cfg.output_dir) / "summary.txt");
    out << line << '\n';
    out << "mean = " << format_double(summary.mean) << '\n';
    out << "std = " << format_double(summary.stddev) << '\n';
    for (std::size_t rep = 0; rep < accuracies.size(); ++rep) {
      out << "rep " << rep << " = " << format_double(accuracies[rep]) << '\n';
    }
  }
  log << line << '\n';
  return 0;
}

int cmd_suite(const ExperimentConfig& cfg, std::ostream& log) {
  const std::vector<int> k_values = {5, 10, 30};
  const std::vector<Strategy> rows = {Strategy::local, Strategy::global,
                                      Strategy::fedavg, Strategy::fedprox,
                                      Strategy::hfgnn};
  fs::create_directories(cfg.output_dir);

  // accs[strategy][k] over repetitions; global holds one column, replicated.
  std::map<Strategy, std::map<int, std::vector<double>>> accs;
  for (int rep = 0; rep < cfg.repetitions; ++rep) {
    const std::uint64_t rep_seed = repetition_seed(cfg, rep);

    RoundConfig global_round = cfg.round;
    global_round.strategy = Strategy::global;
    global_round.clients_per_round = 1;
    const double global_acc =
        run_one(cfg, global_round, rep_seed, 1).mean_test_accuracy;
    for (int k : k_values) accs[Strategy::global][k].push_back(global_acc);

    for (int k : k_values) {
      for (Strategy strategy : rows) {
        if (strategy == Strategy::global) continue;
        RoundConfig round = cfg.round;
        round.strategy = strategy;
        round.clients_per_round = std::min(cfg.round.clients_per_round, k);
        accs[strategy][k].push_back(
            run_one(cfg, round, rep_seed, k).mean_test_accuracy);
        log << "rep " << rep << " K=" << k << ' ' << to_string(strategy)
            << ": " << format_double(accs[strategy][k].back()) << '\n';
      }
    }
  }

  std::ofstream csv(fs::path(cfg.output_dir) / "suite.csv");
  std::ostringstream table;
  csv << "strategy";
  table << "strategy";
  for (int k : k_values) {
    csv << ",K=" << k;
    table << '\t' << "K=" << k;
  }
  csv << '\n';
  table << '\n';
  for (Strategy strategy : rows) {
    csv << to_string(strategy);
    table << to_string(strategy);
    for (int k : k_values) {
      const std::string cell = cell_text(summarize(accs[strategy][k]));
      csv << ',' << cell;
      table << '\t' << cell;
    }
    csv << '\n';
    table << '\n';
  }
  {
    std::ofstream txt(fs::path(cfg.output_dir) / "suite.txt");
    txt << table.str();
  }
  log << table.str();
  return 0;
}

int cmd_snapshot(const std::string& flow_csv, const std::string& out_dir,
                 int round_min, int round_max, std::ostream& log) {
  std::ifstream in(flow_csv);
  if (!in) throw ConfigError("cannot open flow csv: " + flow_csv);
  const auto records = read_flow_csv(in);

  int lo = round_min, hi = round_max;
  if (lo < 0 || hi < 0) {  // default: cover the rounds present in the log
    if (records.empty()) {
      log << "flow log has no records; nothing to snapshot\n";
      return 0;
    }
    lo = hi = records.front().round;
    for (const auto& rec : records) {
      lo = std::min(lo, rec.round);
      hi = std::max(hi, rec.round);
    }
  }
  write_snapshots(records, out_dir, lo, hi);
  log << "wrote snapshots for rounds " << lo << ".." << hi << " to " << out_dir
      << '\n';
  return 0;
}

int cmd_validate(const std::string& config_path, std::ostream& log) {
  const ExperimentConfig cfg = parse_config_file(config_path);
  log << emit_config(cfg);
  return 0;
}

}  // namespace fedgraph
