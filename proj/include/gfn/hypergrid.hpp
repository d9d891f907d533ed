#pragma once

#include <cmath>
#include <cstring>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gfn/core.hpp"

namespace gfn {

struct HypergridConfig {
  int dim = 2;
  int side = 8;
  double r0 = 1e-3;
  double r1 = 0.5;
  double r2 = 2.0;
};

struct HypergridState {
  std::vector<int> coords;
  bool terminal = false;

  bool operator==(const HypergridState&) const = default;
};

/// D-dimensional grid. Actions 0..D-1 increment one coordinate; action D moves
/// to the terminal copy of the current point.
class Hypergrid {
 public:
  using State = HypergridState;

  explicit Hypergrid(HypergridConfig cfg) : cfg_(cfg) {
    if (cfg_.dim < 1) throw ConfigError("grid.dim must be >= 1");
    if (cfg_.side < 2) throw ConfigError("grid.side must be >= 2");
  }

  const HypergridConfig& config() const { return cfg_; }
  int dim() const { return cfg_.dim; }
  int side() const { return cfg_.side; }

  State initial() const { return {std::vector<int>(cfg_.dim, 0), false}; }
  bool is_terminal(const State& s) const { return s.terminal; }
  int num_actions() const { return cfg_.dim + 1; }
  int max_children() const { return cfg_.dim + 1; }
  int terminate_action() const { return cfg_.dim; }

  Mask mask(const State& s) const {
    Mask m(num_actions(), 0);
    if (s.terminal) return m;
    for (int i = 0; i < cfg_.dim; ++i) m[i] = s.coords[i] < cfg_.side - 1;
    m[cfg_.dim] = 1;
    return m;
  }

  State step(const State& s, int action) const {
    require(!s.terminal, "step: terminal state");
    require(action >= 0 && action <= cfg_.dim, "step: action out of range");
    State next = s;
    if (action == cfg_.dim) {
      next.terminal = true;
    } else {
      require(s.coords[action] < cfg_.side - 1, "step: invalid action");
      ++next.coords[action];
    }
    return next;
  }

  std::vector<Edge<State>> children(const State& s) const {
    require(!s.terminal, "children: terminal state");
    std::vector<Edge<State>> out;
    out.reserve(cfg_.dim + 1);
    for (int i = 0; i < cfg_.dim; ++i) {
      if (s.coords[i] < cfg_.side - 1) {
        State c = s;
        ++c.coords[i];
        out.push_back({i, std::move(c)});
      }
    }
    out.push_back({cfg_.dim, State{s.coords, true}});
    return out;
  }

  std::vector<Edge<State>> parents(const State& s) const {
    if (s.terminal) return {{cfg_.dim, State{s.coords, false}}};
    std::vector<Edge<State>> out;
    for (int i = 0; i < cfg_.dim; ++i) {
      if (s.coords[i] > 0) {
        State p = s;
        --p.coords[i];
        out.push_back({i, std::move(p)});
      }
    }
    require(!out.empty(), "parents: initial state has no parents");
    return out;
  }

  int num_parents(const State& s) const {
    if (s.terminal) return 1;
    int n = 0;
    for (int c : s.coords) n += c > 0;
    require(n > 0, "num_parents: initial state has no parents");
    return n;
  }

  /// D one-hot blocks of width H followed by a terminal-copy indicator.
  int encoding_size() const { return cfg_.dim * cfg_.side + 1; }

  void encode_into(const State& s, std::span<double> out) const {
    require(static_cast<int>(out.size()) == encoding_size(), "encode: size mismatch");
    std::fill(out.begin(), out.end(), 0.0);
    for (int i = 0; i < cfg_.dim; ++i) out[i * cfg_.side + s.coords[i]] = 1.0;
    out.back() = s.terminal ? 1.0 : 0.0;
  }

  std::string key(const State& s) const {
    std::string k(s.coords.size() * sizeof(int) + 1, '\0');
    std::memcpy(k.data(), s.coords.data(), s.coords.size() * sizeof(int));
    k.back() = s.terminal ? 1 : 0;
    return k;
  }

  /// "x0 x1 ..." with a trailing "T" for terminal copies.
  std::string describe(const State& s) const {
    std::string out;
    for (std::size_t i = 0; i < s.coords.size(); ++i) out += (i ? " " : "") + std::to_string(s.coords[i]);
    return s.terminal ? out + " T" : out;
  }

  double reward(std::span<const int> coords) const {
    require(static_cast<int>(coords.size()) == cfg_.dim, "reward: wrong dimension");
    bool outer = true;
    bool ring = true;
    // d = |c/(H-1) - 1/2| = |2c - m| / (2m) with m = H - 1, compared in
    // integers so that boundary cases are exact and mirror-symmetric.
    const long long m = cfg_.side - 1;
    for (int c : coords) {
      require(c >= 0 && c < cfg_.side, "reward: coordinate out of range");
      const long long twice = 2 * c - m < 0 ? m - 2 * c : 2 * c - m;  // 2m d
      outer = outer && (2 * twice > m);                                 // d > 1/4
      ring = ring && (5 * twice > 3 * m && 5 * twice < 4 * m);          // 3/10 < d < 4/10
    }
    return cfg_.r0 + cfg_.r1 * outer + cfg_.r2 * ring;
  }

  double log_reward(const State& s) const {
    require(s.terminal, "log_reward: state is not terminal");
    return std::log(reward(s.coords));
  }

  /// Non-terminal points plus their terminal copies.
  double state_count() const { return 2.0 * std::pow(static_cast<double>(cfg_.side), cfg_.dim); }

  double terminal_count() const { return std::pow(static_cast<double>(cfg_.side), cfg_.dim); }

  /// Every terminal point with its reward, in lexicographic order.
  std::vector<std::pair<State, double>> enumerate_terminals(double cap = 1e6) const {
    if (terminal_count() > cap)
      throw NotEnumerable("hypergrid: " + std::to_string(terminal_count()) +
                          " terminal states exceed the enumeration cap");
    std::vector<std::pair<State, double>> out;
    std::vector<int> c(cfg_.dim, 0);
    while (true) {
      out.push_back({State{c, true}, reward(c)});
      int i = cfg_.dim - 1;
      while (i >= 0 && ++c[i] == cfg_.side) c[i--] = 0;
      if (i < 0) break;
    }
    return out;
  }

 private:
  HypergridConfig cfg_;
};

static_assert(Environment<Hypergrid>);

}  // namespace gfn
