#pragma once

#include <concepts>
#include <string>
#include <unordered_map>
#include <vector>

#include "gfn/core.hpp"
#include "gfn/mlp.hpp"
#include "gfn/oracle.hpp"

namespace gfn {

/// Anything that maps a state to per-action soft Q-values over the global
/// action space, with kMaskedQ on invalid actions.
template <class Q, class State>
concept QFunction = requires(Q& q, const State& s) {
  { q.q_values(s) } -> std::same_as<std::vector<double>>;
};

/// Q-values from a network snapshot. Holds references; the caller keeps the
/// environment and parameters alive.
template <Environment Env>
class MlpQ {
 public:
  MlpQ(const Env& env, const Mlp& net) : env_(&env), net_(&net), buf_(env.encoding_size()) {
    require(net.input_size() == env.encoding_size(), "MlpQ: input size mismatch");
    require(net.output_size() >= env.num_actions(), "MlpQ: output size mismatch");
  }

  std::vector<double> q_values(const typename Env::State& s) {
    ++evaluations_;
    env_->encode_into(s, buf_);
    auto q = net_->forward(buf_);
    q.resize(env_->num_actions());  // drops any extra heads
    const Mask m = env_->mask(s);
    for (std::size_t i = 0; i < q.size(); ++i)
      if (!m[i]) q[i] = kMaskedQ;
    return q;
  }

  long evaluations() const { return evaluations_; }

 private:
  const Env* env_;
  const Mlp* net_;
  std::vector<double> buf_;
  long evaluations_ = 0;
};

/// Memoizes an inner Q-function by state key. Valid only while the inner
/// function is fixed (one parameter snapshot).
template <Environment Env, class Inner>
class CachedQ {
 public:
  CachedQ(const Env& env, Inner inner) : env_(&env), inner_(std::move(inner)) {}

  std::vector<double> q_values(const typename Env::State& s) {
    ++lookups_;
    auto key = env_->key(s);
    auto it = cache_.find(key);
    if (it != cache_.end()) return it->second;
    auto q = inner_.q_values(s);
    cache_.emplace(std::move(key), q);
    return q;
  }

  void clear() { cache_.clear(); }
  long lookups() const { return lookups_; }
  std::size_t cached() const { return cache_.size(); }
  Inner& inner() { return inner_; }

 private:
  const Env* env_;
  Inner inner_;
  std::unordered_map<std::string, std::vector<double>> cache_;
  long lookups_ = 0;
};

/// Per-(state, action) lookup table with the same contract as a network.
template <Environment Env>
class TabularQ {
 public:
  using Table = std::unordered_map<std::string, std::vector<double>>;

  TabularQ(const Env& env, Table table) : env_(&env), table_(std::move(table)) {
    require(!table_.empty(), "TabularQ: empty table");
  }

  /// Q*(s, s') = log F(s -> s') for every non-terminal state.
  static TabularQ from_oracle(const Env& env, const OracleTables<Env>& oracle) {
    Table t;
    for (std::size_t i = 0; i < oracle.size(); ++i)
      if (!oracle.terminal[i]) t.emplace(env.key(oracle.states[i]), oracle.q_row(env, i));
    return TabularQ(env, std::move(t));
  }

  std::vector<double> q_values(const typename Env::State& s) {
    ++evaluations_;
    auto it = table_.find(env_->key(s));
    require(it != table_.end(), "TabularQ: state not in table");
    return it->second;
  }

  Table& table() { return table_; }
  const Table& table() const { return table_; }
  long evaluations() const { return evaluations_; }

 private:
  const Env* env_;
  Table table_;
  long evaluations_ = 0;
};

}  // namespace gfn
