#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "gfn/core.hpp"
#include "gfn/qfunction.hpp"

namespace gfn {

struct MentsConfig {
  int max_rounds = 16;  // N_max, the root visit cap
  double eps = 0.01;
  bool terminal_reward_access = false;
};

/// Where search is applied in a training run.
enum class MentsUse { Off, Inference, Train, Both };

inline MentsUse ments_use_from_string(const std::string& s) {
  if (s == "off") return MentsUse::Off;
  if (s == "inference") return MentsUse::Inference;
  if (s == "train") return MentsUse::Train;
  if (s == "both") return MentsUse::Both;
  throw ConfigError("unknown ments.use: " + s);
}

inline std::string to_string(MentsUse u) {
  switch (u) {
    case MentsUse::Off: return "off";
    case MentsUse::Inference: return "inference";
    case MentsUse::Train: return "train";
    case MentsUse::Both: return "both";
  }
  return "off";
}

inline bool ments_in_training(MentsUse u) { return u == MentsUse::Train || u == MentsUse::Both; }
inline bool ments_in_inference(MentsUse u) { return u == MentsUse::Inference || u == MentsUse::Both; }

/// Mixed tree policy: (1 - p) softmax(q) + p Uniform, p = min(1, eps |C| / ln(N + 2)).
inline std::vector<double> tree_policy_probs(std::span<const double> q, int visits, double eps) {
  require(!q.empty(), "tree_policy_probs: node has no children");
  const double c = static_cast<double>(q.size());
  const double p = std::min(1.0, eps * c / std::log(static_cast<double>(visits) + 2.0));
  auto probs = softmax(q);
  for (double& v : probs) v = (1.0 - p) * v + p / c;
  return probs;
}

/// Outcome of one act(): the root distribution that was sampled from and the
/// chosen edge.
template <class State>
struct ActResult {
  int action = 0;
  State next;
  double log_prob = 0.0;
  double q_tree = 0.0;        // Q_tree(root, next) at sampling time
  std::vector<int> actions;   // root edges, in child order
  std::vector<double> q;      // Q_tree(root, .)
  std::vector<double> probs;  // softmax(Q_tree(root, .))
  int rounds = 0;
  long q_evals = 0;
  std::size_t tree_nodes = 0;  // node count before re-rooting
};

/// Maximum-entropy search tree over paths of the DAG. Nodes and edges live in
/// arenas owned by the tree; the root is always node 0 and each node's edges
/// are contiguous.
template <Environment Env>
class SearchTree {
 public:
  using State = typename Env::State;

  struct Node {
    State state;
    int visits = 0;
    bool expanded = false;
    bool terminal = false;
    std::size_t first_edge = 0;
    std::size_t num_edges = 0;
  };

  struct TreeEdge {
    std::size_t child;
    double q;
    int action;
    double log_pb;  // log P_B(parent | child)
  };

  SearchTree(const Env& env, State root, MentsConfig cfg) : env_(&env), cfg_(cfg) {
    require(cfg.max_rounds >= 0, "SearchTree: max_rounds must be >= 0");
    require(cfg.eps >= 0.0, "SearchTree: eps must be >= 0");
    const bool term = env.is_terminal(root);
    nodes_.push_back({std::move(root), 0, false, term, 0, 0});
  }

  const Node& root() const { return nodes_[0]; }
  const Node& node(std::size_t i) const { return nodes_[i]; }
  std::size_t node_count() const { return nodes_.size(); }
  const MentsConfig& config() const { return cfg_; }
  long q_evaluations() const { return q_evals_; }

  std::span<const TreeEdge> edges(std::size_t node) const {
    const auto& n = nodes_[node];
    return {edges_.data() + n.first_edge, n.num_edges};
  }

  std::vector<double> edge_q(std::size_t node) const {
    std::vector<double> q;
    for (const auto& e : edges(node)) q.push_back(e.q);
    return q;
  }

  std::vector<double> tree_policy(std::size_t node) const {
    const auto& n = nodes_[node];
    require(n.expanded, "tree_policy: node is not expanded");
    return tree_policy_probs(edge_q(node), n.visits, cfg_.eps);
  }

  /// One selection / expansion / backup pass. The root's visit count is
  /// incremented at the start of every round.
  template <QFunction<State> Q>
  void round(Q& q, Rng& rng) {
    ++nodes_[0].visits;
    path_edges_.clear();
    std::size_t cur = 0;
    while (nodes_[cur].expanded) {
      const auto probs = tree_policy(cur);
      const std::size_t e = nodes_[cur].first_edge + sample_categorical(probs, rng);
      path_edges_.push_back(e);
      cur = edges_[e].child;
      ++nodes_[cur].visits;
    }
    if (!nodes_[cur].terminal) expand(cur, q);
    for (std::size_t i = path_edges_.size(); i-- > 0;) {
      TreeEdge& e = edges_[path_edges_[i]];
      const Node& child = nodes_[e.child];
      if (!child.terminal) {
        e.q = e.log_pb + logsumexp(edge_q(e.child));
      } else if (cfg_.terminal_reward_access) {
        e.q = e.log_pb + env_->log_reward(child.state);
      }
    }
  }

  /// Rounds until N(root) >= N_max. With N_max = 0 the root is only expanded,
  /// which reproduces the plain softmax(Q) policy.
  template <QFunction<State> Q>
  int search(Q& q, Rng& rng) {
    require(!nodes_[0].terminal, "search: root is terminal");
    int rounds = 0;
    while (nodes_[0].visits < cfg_.max_rounds) {
      round(q, rng);
      ++rounds;
    }
    if (!nodes_[0].expanded) expand(0, q);
    return rounds;
  }

  /// Search, then sample the next state from softmax(Q_tree(root, .)) without
  /// exploration and keep only the chosen child's subtree.
  template <QFunction<State> Q>
  ActResult<State> act(Q& q, Rng& rng) {
    const long evals_before = q_evals_;
    ActResult<State> r;
    r.rounds = search(q, rng);
    r.q_evals = q_evals_ - evals_before;
    r.tree_nodes = nodes_.size();
    r.q = edge_q(0);
    r.probs = softmax(r.q);
    for (const auto& e : edges(0)) r.actions.push_back(e.action);
    const std::size_t pick = sample_categorical(r.probs, rng);
    r.action = r.actions[pick];
    r.log_prob = std::log(r.probs[pick]);
    r.q_tree = r.q[pick];
    r.next = nodes_[edges(0)[pick].child].state;
    reroot(pick);
    return r;
  }

  /// Probability of `action` under softmax(Q_tree(root, .)) after searching,
  /// then re-root along that action.
  template <QFunction<State> Q>
  double forced_step(Q& q, int action, Rng& rng) {
    search(q, rng);
    const auto qs = edge_q(0);
    const auto probs = softmax(qs);
    const auto es = edges(0);
    for (std::size_t i = 0; i < es.size(); ++i) {
      if (es[i].action == action) {
        const double lp = std::log(probs[i]);
        reroot(i);
        return lp;
      }
    }
    throw ContractViolation("forced_step: action is not a child of the root");
  }

 private:
  template <class Q>
  void expand(std::size_t n, Q& q) {
    auto kids = env_->children(nodes_[n].state);
    const auto qv = q.q_values(nodes_[n].state);
    ++q_evals_;
    const std::size_t first = edges_.size();
    for (auto& k : kids) {
      const double lpb = log_pb_unchecked(*env_, k.state);
      const bool term = env_->is_terminal(k.state);
      edges_.push_back({nodes_.size(), qv[k.action], k.action, lpb});
      nodes_.push_back({std::move(k.state), 0, false, term, 0, 0});
    }
    nodes_[n].expanded = true;
    nodes_[n].first_edge = first;
    nodes_[n].num_edges = kids.size();
  }

  /// Copies the subtree under root edge `pick` into fresh arenas (BFS), which
  /// frees everything else.
  void reroot(std::size_t pick) {
    const std::size_t new_root = edges_[nodes_[0].first_edge + pick].child;
    std::vector<Node> nodes;
    std::vector<TreeEdge> edges;
    std::vector<std::size_t> queue{new_root};
    nodes.push_back(std::move(nodes_[new_root]));
    for (std::size_t head = 0; head < queue.size(); ++head) {
      if (!nodes[head].expanded) continue;
      const std::size_t old_first = nodes[head].first_edge;
      const std::size_t count = nodes[head].num_edges;
      nodes[head].first_edge = edges.size();
      for (std::size_t i = 0; i < count; ++i) {
        TreeEdge e = edges_[old_first + i];
        queue.push_back(e.child);
        nodes.push_back(std::move(nodes_[e.child]));
        e.child = nodes.size() - 1;
        edges.push_back(e);
      }
    }
    nodes_ = std::move(nodes);
    edges_ = std::move(edges);
  }

  const Env* env_;
  MentsConfig cfg_;
  std::vector<Node> nodes_;
  std::vector<TreeEdge> edges_;
  std::vector<std::size_t> path_edges_;
  long q_evals_ = 0;
};

/// A trajectory sampled with search, plus what each root looked like.
template <class State>
struct MentsTrajectory {
  Trajectory<State> trajectory;
  std::vector<std::vector<int>> root_actions;
  std::vector<std::vector<double>> root_probs;
  std::vector<double> q_tree;  // Q_tree(s_t, s_{t+1}) when s_t was the root
  std::vector<int> rounds;
  std::vector<std::size_t> tree_nodes;
  long q_evals = 0;
};

/// Repeated act() from s0 until a terminal state, reusing subtrees.
template <Environment Env, QFunction<typename Env::State> Q>
MentsTrajectory<typename Env::State> sample_trajectory_ments(const Env& env, Q& q,
                                                             const MentsConfig& cfg, Rng& rng) {
  MentsTrajectory<typename Env::State> out;
  auto& tau = out.trajectory;
  tau.states.push_back(env.initial());
  SearchTree<Env> tree(env, env.initial(), cfg);
  while (!env.is_terminal(tau.states.back())) {
    auto r = tree.act(q, rng);
    tau.actions.push_back(r.action);
    tau.log_pf.push_back(r.log_prob);
    tau.log_pb.push_back(log_pb_unchecked(env, r.next));
    tau.states.push_back(std::move(r.next));
    out.root_actions.push_back(std::move(r.actions));
    out.root_probs.push_back(std::move(r.probs));
    out.q_tree.push_back(r.q_tree);
    out.rounds.push_back(r.rounds);
    out.tree_nodes.push_back(r.tree_nodes);
    out.q_evals += r.q_evals;
  }
  tau.log_reward = env.log_reward(tau.states.back());
  return out;
}

/// Sum of log softmax(Q_tree(root, .)) along a given forward path, searching
/// at each root as act() would.
template <Environment Env, QFunction<typename Env::State> Q>
double ments_path_log_pf(const Env& env, Q& q, const MentsConfig& cfg,
                         const Trajectory<typename Env::State>& tau, Rng& rng) {
  SearchTree<Env> tree(env, tau.states.front(), cfg);
  double lp = 0.0;
  for (int a : tau.actions) lp += tree.forced_step(q, a, rng);
  return lp;
}

/// Training targets along a search-sampled trajectory: Q_tree(s, s') read at
/// the root for non-terminal children, log P_B(s|s') + log R(s') otherwise.
template <Environment Env>
std::vector<double> ments_training_targets(const Env& env,
                                           const MentsTrajectory<typename Env::State>& mt) {
  const auto& tau = mt.trajectory;
  std::vector<double> targets;
  for (std::size_t t = 0; t < tau.length(); ++t) {
    const auto& child = tau.states[t + 1];
    if (env.is_terminal(child))
      targets.push_back(tau.log_pb[t] + env.log_reward(child));
    else
      targets.push_back(mt.q_tree[t]);
  }
  return targets;
}

}  // namespace gfn
