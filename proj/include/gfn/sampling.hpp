#pragma once

#include <vector>

#include "gfn/core.hpp"

namespace gfn {

/// Forward rollout from s0. `policy(state)` returns action probabilities over
/// the global action space (zero on invalid actions).
template <Environment Env, class Policy>
Trajectory<typename Env::State> sample_forward(const Env& env, Policy&& policy, Rng& rng) {
  Trajectory<typename Env::State> tau;
  tau.states.push_back(env.initial());
  while (!env.is_terminal(tau.states.back())) {
    const auto& s = tau.states.back();
    const std::vector<double> probs = policy(s);
    const int a = static_cast<int>(sample_categorical(probs, rng));
    require(probs[a] > 0.0, "sample_forward: sampled a zero-probability action");
    auto next = env.step(s, a);
    tau.log_pf.push_back(std::log(probs[a]));
    tau.log_pb.push_back(log_pb_unchecked(env, next));
    tau.actions.push_back(a);
    tau.states.push_back(std::move(next));
  }
  tau.log_reward = env.log_reward(tau.states.back());
  return tau;
}

/// Backward rollout from terminal x to s0 under uniform P_B. The result is
/// returned in forward order; log_pf is left at zero for the caller to fill.
template <Environment Env>
Trajectory<typename Env::State> sample_backward(const Env& env, const typename Env::State& x,
                                                Rng& rng) {
  require(env.is_terminal(x), "sample_backward: start state is not terminal");
  std::vector<typename Env::State> rev{x};
  std::vector<int> rev_actions;
  std::vector<double> rev_log_pb;
  const auto s0 = env.initial();
  while (!(rev.back() == s0)) {
    auto ps = env.parents(rev.back());
    const auto pick = uniform_index(rng, ps.size());
    rev_log_pb.push_back(-std::log(static_cast<double>(ps.size())));
    rev_actions.push_back(ps[pick].action);
    rev.push_back(std::move(ps[pick].state));
  }
  Trajectory<typename Env::State> tau;
  tau.states.assign(rev.rbegin(), rev.rend());
  tau.actions.assign(rev_actions.rbegin(), rev_actions.rend());
  tau.log_pb.assign(rev_log_pb.rbegin(), rev_log_pb.rend());
  tau.log_pf.assign(tau.actions.size(), 0.0);
  tau.log_reward = env.log_reward(x);
  return tau;
}

}  // namespace gfn
