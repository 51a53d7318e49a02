#include "fedgraph/config.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>

#include "fedgraph/errors.hpp"

namespace fedgraph {

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

std::vector<std::string> split_ws(const std::string& s) {
  std::vector<std::string> parts;
  std::stringstream ss(s);
  std::string tok;
  while (ss >> tok) parts.push_back(tok);
  return parts;
}

struct Parser {
  std::string origin;
  std::map<std::string, std::pair<std::string, int>> values;  // key -> (raw, line)

  [[noreturn]] void fail(const std::string& key, const std::string& message) const {
    auto it = values.find(key);
    std::string where = origin;
    if (it != values.end()) where += ":" + std::to_string(it->second.second);
    throw ConfigError(where + ": " + key + ": " + message);
  }

  bool has(const std::string& key) const { return values.count(key) > 0; }

  std::string raw(const std::string& key) const { return values.at(key).first; }

  double get_double(const std::string& key, double fallback) {
    if (!has(key)) return fallback;
    const std::string v = raw(key);
    char* end = nullptr;
    const double parsed = std::strtod(v.c_str(), &end);
    if (end == v.c_str() || *end != '\0') fail(key, "expected a number, got '" + v + "'");
    return parsed;
  }

  long long get_int(const std::string& key, long long fallback) {
    if (!has(key)) return fallback;
    const std::string v = raw(key);
    char* end = nullptr;
    const long long parsed = std::strtoll(v.c_str(), &end, 10);
    if (end == v.c_str() || *end != '\0') fail(key, "expected an integer, got '" + v + "'");
    return parsed;
  }

  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) {
    if (!has(key)) return fallback;
    const std::string v = raw(key);
    char* end = nullptr;
    const unsigned long long parsed = std::strtoull(v.c_str(), &end, 10);
    if (end == v.c_str() || *end != '\0')
      fail(key, "expected an unsigned integer, got '" + v + "'");
    return parsed;
  }

  bool get_bool(const std::string& key, bool fallback) {
    if (!has(key)) return fallback;
    const std::string v = raw(key);
    if (v == "true") return true;
    if (v == "false") return false;
    fail(key, "expected true or false, got '" + v + "'");
  }

  std::string get_string(const std::string& key, const std::string& fallback) {
    return has(key) ? raw(key) : fallback;
  }

  std::vector<int> get_int_list(const std::string& key) {
    std::vector<int> out;
    for (const auto& tok : split_ws(raw(key))) {
      char* end = nullptr;
      const long parsed = std::strtol(tok.c_str(), &end, 10);
      if (end == tok.c_str() || *end != '\0')
        fail(key, "expected integers, got '" + tok + "'");
      out.push_back(static_cast<int>(parsed));
    }
    if (out.empty()) fail(key, "expected a nonempty list");
    return out;
  }

  Vector get_vector(const std::string& key) {
    const auto parts = split_ws(raw(key));
    if (parts.empty()) fail(key, "expected a nonempty vector");
    Vector out(parts.size());
    for (std::size_t i = 0; i < parts.size(); ++i) {
      char* end = nullptr;
      out[i] = std::strtod(parts[i].c_str(), &end);
      if (end == parts[i].c_str() || *end != '\0')
        fail(key, "expected numbers, got '" + parts[i] + "'");
    }
    return out;
  }

  Matrix get_matrix(const std::string& key) {
    std::vector<Vector> rows;
    std::stringstream ss(raw(key));
    std::string row_text;
    while (std::getline(ss, row_text, ';')) {
      const auto parts = split_ws(row_text);
      if (parts.empty()) fail(key, "empty matrix row");
      Vector row(parts.size());
      for (std::size_t i = 0; i < parts.size(); ++i) {
        char* end = nullptr;
        row[i] = std::strtod(parts[i].c_str(), &end);
        if (end == parts[i].c_str() || *end != '\0')
          fail(key, "expected numbers, got '" + parts[i] + "'");
      }
      rows.push_back(row);
    }
    if (rows.empty()) fail(key, "expected a nonempty matrix");
    Matrix out(rows.size(), rows[0].size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (rows[r].size() != out.cols()) fail(key, "ragged matrix rows");
      out.row(r) = rows[r].transpose();
    }
    return out;
  }
};

const char* const kKnownKeys[] = {
    "data.block_sizes", "data.p_in", "data.p_out", "data.feature_dim",
    "data.feature_noise", "data.clients", "data.alpha", "data.client_names",
    "round.strategy", "round.rounds", "round.clients_per_round",
    "round.propagation_depth", "round.similarity_temperature",
    "round.self_floor", "round.personalization_retention",
    "round.topology_scope", "round.force_uniform_weights",
    "train.learning_rate", "train.batch_size", "train.local_epochs",
    "train.weight_decay", "train.optimizer", "train.prox_coefficient",
    "model.hidden_dim", "model.layers",
    "drift.enabled", "drift.scale", "drift.initial", "drift.transition",
    "drift.emission",
    "seed", "out", "repetitions",
};

bool is_known_key(const std::string& key) {
  for (const char* k : kKnownKeys) {
    if (key == k) return true;
  }
  return false;
}

}  // namespace

ExperimentConfig parse_config_text(const std::string& text,
                                   const std::string& origin) {
  Parser p;
  p.origin = origin;

  std::stringstream lines(text);
  std::string line;
  int line_no = 0;
  while (std::getline(lines, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(origin + ":" + std::to_string(line_no) +
                        ": expected 'key = value', got '" + line + "'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (!is_known_key(key))
      throw ConfigError(origin + ":" + std::to_string(line_no) +
                        ": unknown key '" + key + "'");
    if (p.values.count(key))
      throw ConfigError(origin + ":" + std::to_string(line_no) +
                        ": duplicate key '" + key + "'");
    p.values[key] = {value, line_no};
  }

  ExperimentConfig cfg;

  if (!p.has("data.block_sizes"))
    throw ConfigError(origin + ": missing required key 'data.block_sizes'");
  cfg.data.block_sizes = p.get_int_list("data.block_sizes");
  cfg.data.p_in = p.get_double("data.p_in", cfg.data.p_in);
  cfg.data.p_out = p.get_double("data.p_out", cfg.data.p_out);
  cfg.data.feature_dim =
      static_cast<int>(p.get_int("data.feature_dim", cfg.data.feature_dim));
  cfg.data.feature_noise = p.get_double("data.feature_noise", cfg.data.feature_noise);
  cfg.num_clients = static_cast<int>(p.get_int("data.clients", cfg.num_clients));
  cfg.alpha = p.get_double("data.alpha", cfg.alpha);
  if (p.has("data.client_names")) cfg.client_names = split_ws(p.raw("data.client_names"));

  if (!p.has("round.strategy"))
    throw ConfigError(origin + ": missing required key 'round.strategy'");
  try {
    cfg.round.strategy = strategy_from_string(p.raw("round.strategy"));
  } catch (const ConfigError& e) {
    p.fail("round.strategy", e.what());
  }
  cfg.round.num_rounds = static_cast<int>(p.get_int("round.rounds", cfg.round.num_rounds));
  cfg.round.clients_per_round =
      static_cast<int>(p.get_int("round.clients_per_round", 0));
  if (cfg.round.clients_per_round == 0) cfg.round.clients_per_round = cfg.num_clients;
  cfg.round.propagation_depth = static_cast<int>(
      p.get_int("round.propagation_depth", cfg.round.propagation_depth));
  cfg.round.similarity_temperature = p.get_double(
      "round.similarity_temperature", cfg.round.similarity_temperature);
  cfg.round.self_floor = p.get_double("round.self_floor", cfg.round.self_floor);
  cfg.round.personalization_retention = p.get_double(
      "round.personalization_retention", cfg.round.personalization_retention);
  if (p.has("round.topology_scope")) {
    const std::string scope = p.raw("round.topology_scope");
    if (scope == "selected") {
      cfg.round.topology_scope = TopologyScope::selected_subset;
    } else if (scope == "all") {
      cfg.round.topology_scope = TopologyScope::all_clients;
    } else {
      p.fail("round.topology_scope", "expected selected or all, got '" + scope + "'");
    }
  }
  cfg.round.force_uniform_weights =
      p.get_bool("round.force_uniform_weights", cfg.round.force_uniform_weights);

  cfg.round.train.learning_rate =
      p.get_double("train.learning_rate", cfg.round.train.learning_rate);
  cfg.round.train.batch_size =
      static_cast<int>(p.get_int("train.batch_size", cfg.round.train.batch_size));
  cfg.round.train.local_epochs =
      static_cast<int>(p.get_int("train.local_epochs", cfg.round.train.local_epochs));
  cfg.round.train.weight_decay =
      p.get_double("train.weight_decay", cfg.round.train.weight_decay);
  if (p.has("train.optimizer")) {
    const std::string opt = p.raw("train.optimizer");
    if (opt == "sgd") {
      cfg.round.train.optimizer = OptimizerKind::sgd;
    } else if (opt == "adam") {
      cfg.round.train.optimizer = OptimizerKind::adam;
    } else {
      p.fail("train.optimizer", "expected sgd or adam, got '" + opt + "'");
    }
  }
  cfg.round.train.prox_coefficient =
      p.get_double("train.prox_coefficient", cfg.round.train.prox_coefficient);

  cfg.model.hidden_dim =
      static_cast<int>(p.get_int("model.hidden_dim", cfg.model.hidden_dim));
  cfg.model.num_layers =
      static_cast<int>(p.get_int("model.layers", cfg.model.num_layers));

  cfg.drift_enabled = p.get_bool("drift.enabled", cfg.drift_enabled);
  cfg.drift_scale = p.get_double("drift.scale", cfg.drift_scale);
  cfg.drift = default_drift_model();
  if (p.has("drift.initial")) cfg.drift.initial = p.get_vector("drift.initial");
  if (p.has("drift.transition")) cfg.drift.transition = p.get_matrix("drift.transition");
  if (p.has("drift.emission")) cfg.drift.emission = p.get_matrix("drift.emission");

  cfg.seed = p.get_u64("seed", cfg.seed);
  cfg.output_dir = p.get_string("out", cfg.output_dir);
  cfg.repetitions = static_cast<int>(p.get_int("repetitions", cfg.repetitions));

  // Materialize remaining defaults before validation.
  cfg.data.feature_dim = cfg.data.resolved_feature_dim();

  try {
    cfg.validate();
  } catch (const ConfigError& e) {
    // Attach the origin so diagnostics always name their source.
    throw ConfigError(origin + ": " + e.what());
  }
  return cfg;
}

ExperimentConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_config_text(buffer.str(), path);
}

void ExperimentConfig::validate() const {
  data.validate();
  if (num_clients < 1) throw ConfigError("data.clients: must be >= 1");
  if (num_clients > data.num_nodes())
    throw ConfigError("data.clients: more clients than graph nodes");
  if (!(alpha > 0.0)) throw ConfigError("data.alpha: must be positive");
  if (!client_names.empty() &&
      static_cast<int>(client_names.size()) != num_clients)
    throw ConfigError("data.client_names: expected one name per client");
  round.validate(num_clients);
  model.validate();
  if (drift_scale < 0.0) throw ConfigError("drift.scale: must be >= 0");
  try {
    drift.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("drift model: ") + e.what());
  } catch (const ShapeError& e) {
    throw ConfigError(std::string("drift model: ") + e.what());
  }
  if (repetitions < 1) throw ConfigError("repetitions: must be >= 1");
  if (output_dir.empty()) throw ConfigError("out: must not be empty");
}

namespace {

std::string join_ints(const std::vector<int>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i > 0) out += ' ';
    out += std::to_string(values[i]);
  }
  return out;
}

std::string join_doubles(const Vector& values) {
  std::string out;
  for (Eigen::Index i = 0; i < values.size(); ++i) {
    if (i > 0) out += ' ';
    out += format_double(values[i]);
  }
  return out;
}

std::string join_matrix(const Matrix& m) {
  std::string out;
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    if (r > 0) out += " ; ";
    out += join_doubles(m.row(r).transpose());
  }
  return out;
}

}  // namespace

std::string emit_config(const ExperimentConfig& cfg) {
  std::ostringstream out;
  out << "data.block_sizes = " << join_ints(cfg.data.block_sizes) << '\n';
  out << "data.p_in = " << format_double(cfg.data.p_in) << '\n';
  out << "data.p_out = " << format_double(cfg.data.p_out) << '\n';
  out << "data.feature_dim = " << cfg.data.resolved_feature_dim() << '\n';
  out << "data.feature_noise = " << format_double(cfg.data.feature_noise) << '\n';
  out << "data.clients = " << cfg.num_clients << '\n';
  out << "data.alpha = " << format_double(cfg.alpha) << '\n';
  if (!cfg.client_names.empty()) {
    out << "data.client_names =";
    for (const auto& name : cfg.client_names) out << ' ' << name;
    out << '\n';
  }
  out << "round.strategy = " << to_string(cfg.round.strategy) << '\n';
  out << "round.rounds = " << cfg.round.num_rounds << '\n';
  out << "round.clients_per_round = " << cfg.round.clients_per_round << '\n';
  out << "round.propagation_depth = " << cfg.round.propagation_depth << '\n';
  out << "round.similarity_temperature = "
      << format_double(cfg.round.similarity_temperature) << '\n';
  out << "round.self_floor = " << format_double(cfg.round.self_floor) << '\n';
  out << "round.personalization_retention = "
      << format_double(cfg.round.personalization_retention) << '\n';
  out << "round.topology_scope = "
      << (cfg.round.topology_scope == TopologyScope::selected_subset ? "selected"
                                                                     : "all")
      << '\n';
  out << "round.force_uniform_weights = "
      << (cfg.round.force_uniform_weights ? "true" : "false") << '\n';
  out << "train.learning_rate = " << format_double(cfg.round.train.learning_rate)
      << '\n';
  out << "train.batch_size = " << cfg.round.train.batch_size << '\n';
  out << "train.local_epochs = " << cfg.round.train.local_epochs << '\n';
  out << "train.weight_decay = " << format_double(cfg.round.train.weight_decay)
      << '\n';
  out << "train.optimizer = "
      << (cfg.round.train.optimizer == OptimizerKind::sgd ? "sgd" : "adam") << '\n';
  out << "train.prox_coefficient = "
      << format_double(cfg.round.train.prox_coefficient) << '\n';
  out << "model.hidden_dim = " << cfg.model.hidden_dim << '\n';
  out << "model.layers = " << cfg.model.num_layers << '\n';
  out << "drift.enabled = " << (cfg.drift_enabled ? "true" : "false") << '\n';
  out << "drift.scale = " << format_double(cfg.drift_scale) << '\n';
  out << "drift.initial = " << join_doubles(cfg.drift.initial) << '\n';
  out << "drift.transition = " << join_matrix(cfg.drift.transition) << '\n';
  out << "drift.emission = " << join_matrix(cfg.drift.emission) << '\n';
  out << "seed = " << cfg.seed << '\n';
  out << "out = " << cfg.output_dir << '\n';
  out << "repetitions = " << cfg.repetitions << '\n';
  return out.str();
}

}  // namespace fedgraph
