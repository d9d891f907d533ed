#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "gfn/core.hpp"

namespace gfn {

/// Recognized keys and their defaults. Anything else in a config file is an error.
inline const std::map<std::string, std::string>& config_defaults() {
  static const std::map<std::string, std::string> d = {
      {"run_id", "run"},
      {"seed", "0"},
      {"out_dir", "out"},
      {"env", "hypergrid"},
      {"grid.dim", "2"},
      {"grid.side", "8"},
      {"grid.r0", "0.001"},
      {"grid.r1", "0.5"},
      {"grid.r2", "2.0"},
      {"bits.n", "16"},
      {"bits.k", "8"},
      {"bits.modes", "20"},
      {"bits.mode_seed", "0"},
      {"algo", "softdqn"},
      {"net.hidden", "256"},
      {"net.layers", "2"},
      {"train.batch", "16"},
      {"train.iters", "1000"},
      {"train.lr", "0.001"},
      {"train.target_period", "3"},
      {"train.loss", "mse"},
      {"train.huber_delta", "1.0"},
      {"train.explore", "0"},
      {"subtb.lambda", "0.9"},
      {"ments.rounds", "16"},
      {"ments.eps", "0.01"},
      {"ments.terminal_reward_access", "false"},
      {"ments.use", "off"},
      {"replay.mode", "none"},
      {"replay.capacity", "100000"},
      {"replay.alpha", "0.5"},
      {"replay.beta0", "0.4"},
      {"eval.period", "100"},
      {"eval.samples", "200000"},
      {"eval.metric", "auto"},
      {"eval.test_seed", "0"},
      {"eval.backward_samples", "16"},
      {"eval.throughput_trajectories", "256"},
      {"checkpoint.period", "0"},
      {"oracle.max_states", "500000"},
  };
  return d;
}

inline bool is_env_key(const std::string& key) {
  return key == "env" || key.rfind("grid.", 0) == 0 || key.rfind("bits.", 0) == 0;
}

/// Flat `key = value` configuration; `#` starts a comment.
class RunConfig {
 public:
  RunConfig() : values_(config_defaults()) {}

  static RunConfig parse(std::istream& in) {
    RunConfig c;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
      line = trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos)
        throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
      c.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    c.validate();
    return c;
  }

  static RunConfig from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file: " + path);
    return parse(in);
  }

  static RunConfig from_map(const std::map<std::string, std::string>& kv) {
    RunConfig c;
    for (const auto& [k, v] : kv) c.set(k, v);
    c.validate();
    return c;
  }

  void set(const std::string& key, const std::string& value) {
    if (!config_defaults().count(key)) throw ConfigError("unknown config key: " + key);
    values_[key] = value;
  }

  const std::string& str(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("unknown config key: " + key);
    return it->second;
  }

  long integer(const std::string& key) const {
    const auto& s = str(key);
    std::size_t pos = 0;
    long v = 0;
    try {
      v = std::stol(s, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos != s.size() || s.empty()) throw ConfigError(key + ": expected an integer, got '" + s + "'");
    return v;
  }

  std::uint64_t unsigned_integer(const std::string& key) const {
    const long v = integer(key);
    if (v < 0) throw ConfigError(key + ": must be non-negative");
    return static_cast<std::uint64_t>(v);
  }

  double real(const std::string& key) const {
    const auto& s = str(key);
    std::size_t pos = 0;
    double v = 0;
    try {
      v = std::stod(s, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos != s.size() || s.empty()) throw ConfigError(key + ": expected a number, got '" + s + "'");
    return v;
  }

  bool boolean(const std::string& key) const {
    const auto& s = str(key);
    if (s == "true" || s == "1") return true;
    if (s == "false" || s == "0") return false;
    throw ConfigError(key + ": expected true/false, got '" + s + "'");
  }

  const std::map<std::string, std::string>& values() const { return values_; }

  /// Resolved configuration, one `key = value` per line, sorted by key.
  std::string echo() const {
    std::ostringstream os;
    for (const auto& [k, v] : values_) os << k << " = " << v << '\n';
    return os.str();
  }

  /// Value checks that do not need an environment.
  void validate() const {
    auto one_of = [&](const std::string& key, std::initializer_list<const char*> opts) {
      for (const char* o : opts)
        if (str(key) == o) return;
      throw ConfigError(key + ": unsupported value '" + str(key) + "'");
    };
    auto at_least = [&](const std::string& key, long lo) {
      if (integer(key) < lo) throw ConfigError(key + " must be >= " + std::to_string(lo));
    };
    one_of("env", {"hypergrid", "bitseq"});
    one_of("algo", {"softdqn", "subtb"});
    one_of("train.loss", {"mse", "huber"});
    one_of("ments.use", {"off", "inference", "train", "both"});
    one_of("replay.mode", {"none", "uniform", "prioritized"});
    one_of("eval.metric", {"auto", "l1", "spearman"});
    at_least("grid.dim", 1);
    at_least("grid.side", 2);
    at_least("bits.n", 8);
    at_least("bits.k", 1);
    at_least("bits.modes", 1);
    at_least("net.hidden", 1);
    at_least("net.layers", 0);
    at_least("train.batch", 1);
    at_least("train.iters", 0);
    at_least("train.target_period", 1);
    at_least("ments.rounds", 0);
    at_least("replay.capacity", 1);
    at_least("eval.period", 0);
    at_least("eval.samples", 1);
    at_least("eval.backward_samples", 1);
    at_least("eval.throughput_trajectories", 1);
    at_least("checkpoint.period", 0);
    unsigned_integer("seed");
    unsigned_integer("bits.mode_seed");
    unsigned_integer("eval.test_seed");
    if (real("train.lr") < 0) throw ConfigError("train.lr must be >= 0");
    if (real("ments.eps") < 0) throw ConfigError("ments.eps must be >= 0");
    if (real("train.huber_delta") <= 0) throw ConfigError("train.huber_delta must be > 0");
    if (const double x = real("train.explore"); x < 0 || x > 1)
      throw ConfigError("train.explore must be in [0, 1]");
    if (real("replay.alpha") < 0) throw ConfigError("replay.alpha must be >= 0");
    if (const double b = real("replay.beta0"); b < 0 || b > 1)
      throw ConfigError("replay.beta0 must be in [0, 1]");
    real("subtb.lambda");
    real("oracle.max_states");
    real("grid.r0");
    real("grid.r1");
    real("grid.r2");
    boolean("ments.terminal_reward_access");
    if (str("algo") == "subtb" && str("ments.use") != "off")
      throw ConfigError("ments.use requires algo = softdqn");
    if (str("algo") == "subtb" && str("replay.mode") != "none")
      throw ConfigError("replay buffers are only supported for algo = softdqn");
    if ((str("ments.use") == "train" || str("ments.use") == "both") && str("replay.mode") != "none")
      throw ConfigError("search-based targets cannot be combined with a replay buffer");
  }

  std::string metric() const {
    if (str("eval.metric") != "auto") return str("eval.metric");
    return str("env") == "hypergrid" ? "l1" : "spearman";
  }

 private:
  static std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
  }

  std::map<std::string, std::string> values_;
};

}  // namespace gfn
