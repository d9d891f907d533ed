#pragma once

#include <cmath>
#include <string>
#include <unordered_map>
#include <vector>

#include "gfn/core.hpp"

namespace gfn {

/// Default state budget for exhaustive enumeration.
inline constexpr double kDefaultEnumerationCap = 5e5;

struct OracleEdge {
  int action;
  std::size_t child;
  double log_flow;  // Q*(s, s') = log F(s -> s')
};

/// Exact flows for a fixed uniform P_B. States are stored in topological
/// order, so states[0] is s0 and every parent precedes its children.
template <Environment Env>
struct OracleTables {
  using State = typename Env::State;

  std::vector<State> states;
  std::vector<std::uint8_t> terminal;
  std::vector<double> log_flow;  // V*(s) = log F(s); log R(x) on terminals
  std::vector<std::vector<OracleEdge>> edges;
  std::vector<std::size_t> terminals;  // indices of terminal states, in topological order
  std::unordered_map<std::string, std::size_t> index;
  double log_z = 0.0;

  std::size_t size() const { return states.size(); }

  std::size_t index_of(const Env& env, const State& s) const {
    auto it = index.find(env.key(s));
    require(it != index.end(), "OracleTables: unknown state");
    return it->second;
  }

  /// Q* over the global action space with kMaskedQ on invalid actions.
  std::vector<double> q_row(const Env& env, std::size_t i) const {
    std::vector<double> q(env.num_actions(), kMaskedQ);
    for (const auto& e : edges[i]) q[e.action] = e.log_flow;
    return q;
  }

  /// pi*(a | s) = F(s -> s') / F(s).
  std::vector<double> policy(const Env& env, std::size_t i) const {
    std::vector<double> p(env.num_actions(), 0.0);
    for (const auto& e : edges[i]) p[e.action] = std::exp(e.log_flow - log_flow[i]);
    return p;
  }

  /// R(x)/Z for each terminal, aligned with `terminals`.
  std::vector<double> terminal_probs() const {
    std::vector<double> p;
    p.reserve(terminals.size());
    for (auto t : terminals) p.push_back(std::exp(log_flow[t] - log_z));
    return p;
  }
};

/// Reverse-topological sweep: F(x) = R(x), F(s -> s') = P_B(s|s') F(s'),
/// F(s) = sum over children of F(s -> s'). Everything is kept in log space.
template <Environment Env>
OracleTables<Env> exact_flows(const Env& env, double max_states = kDefaultEnumerationCap) {
  if (env.state_count() > max_states)
    throw NotEnumerable("not enumerable: environment has " + std::to_string(static_cast<long long>(env.state_count())) +
                        " states, above the cap of " + std::to_string(static_cast<long long>(max_states)));
  using State = typename Env::State;
  OracleTables<Env> t;

  // Iterative DFS producing a post-order (children finish before parents).
  std::vector<State> found;
  std::unordered_map<std::string, std::size_t> found_index;
  std::vector<std::vector<Edge<State>>> kids;
  std::vector<std::size_t> post;
  std::vector<std::uint8_t> finished;

  auto discover = [&](State s) {
    found_index.emplace(env.key(s), found.size());
    kids.push_back(env.is_terminal(s) ? std::vector<Edge<State>>{} : env.children(s));
    found.push_back(std::move(s));
    finished.push_back(0);
    return found.size() - 1;
  };

  struct Frame {
    std::size_t node;
    std::size_t next_child;
  };
  std::vector<Frame> stack{{discover(env.initial()), 0}};
  while (!stack.empty()) {
    auto& f = stack.back();
    if (f.next_child < kids[f.node].size()) {
      const auto& child = kids[f.node][f.next_child++].state;
      auto it = found_index.find(env.key(child));
      if (it == found_index.end()) {
        const std::size_t id = discover(child);
        stack.push_back({id, 0});
      } else {
        require(finished[it->second], "exact_flows: cycle detected");
      }
    } else {
      finished[f.node] = 1;
      post.push_back(f.node);
      stack.pop_back();
    }
  }

  const std::size_t n = found.size();
  std::vector<double> log_f(n, 0.0);
  std::vector<std::vector<OracleEdge>> edges(n);
  for (std::size_t node : post) {
    if (env.is_terminal(found[node])) {
      log_f[node] = env.log_reward(found[node]);
      require(std::isfinite(log_f[node]), "exact_flows: reward must be positive");
      continue;
    }
    std::vector<double> edge_flows;
    for (const auto& k : kids[node]) {
      const std::size_t c = found_index.at(env.key(k.state));
      const double lf = log_pb_unchecked(env, k.state) + log_f[c];
      edges[node].push_back({k.action, c, lf});
      edge_flows.push_back(lf);
    }
    log_f[node] = logsumexp(edge_flows);
  }

  // Re-index in topological order (reverse post-order).
  std::vector<std::size_t> order(post.rbegin(), post.rend());
  std::vector<std::size_t> new_id(n);
  for (std::size_t i = 0; i < n; ++i) new_id[order[i]] = i;
  t.states.reserve(n);
  t.terminal.resize(n);
  t.log_flow.resize(n);
  t.edges.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t old = order[i];
    t.terminal[i] = env.is_terminal(found[old]);
    t.log_flow[i] = log_f[old];
    t.edges[i] = std::move(edges[old]);
    for (auto& e : t.edges[i]) e.child = new_id[e.child];
    t.index.emplace(env.key(found[old]), i);
    t.states.push_back(std::move(found[old]));
    if (t.terminal[i]) t.terminals.push_back(i);
  }
  t.log_z = t.log_flow[0];
  return t;
}

}  // namespace gfn
