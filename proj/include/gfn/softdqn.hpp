#pragma once

#include <cmath>
#include <optional>
#include <vector>

#include "gfn/core.hpp"
#include "gfn/ments.hpp"
#include "gfn/mlp.hpp"
#include "gfn/qfunction.hpp"
#include "gfn/replay.hpp"
#include "gfn/sampling.hpp"

namespace gfn {

/// pi(. | s) = softmax(Q(s, .)) over valid actions; invalid actions get exactly 0.
inline std::vector<double> policy_from_q(std::span<const double> q, const Mask& mask) {
  return masked_softmax(q, mask);
}

/// Behavior policy: (1 - mix) softmax(Q) + mix Uniform(valid actions).
inline std::vector<double> behavior_probs(std::span<const double> q, const Mask& mask, double mix) {
  auto p = policy_from_q(q, mask);
  if (mix <= 0.0) return p;
  double valid = 0;
  for (auto m : mask) valid += m;
  for (std::size_t i = 0; i < p.size(); ++i)
    if (mask[i]) p[i] = (1.0 - mix) * p[i] + mix / valid;
  return p;
}

/// log P_B(s|s') + logsumexp Q_target(s', .) for non-terminal s', or
/// log P_B(s|s') + log R(s') for terminal s'.
template <Environment Env, QFunction<typename Env::State> Q>
double td_target(const Env& env, const TransitionRecord<typename Env::State>& rec, Q& target) {
  if (rec.terminal) {
    if (!std::isfinite(rec.log_reward))
      throw std::domain_error("td_target: terminal reward must be positive");
    return rec.log_pb + rec.log_reward;
  }
  const auto q = target.q_values(rec.child);
  return rec.log_pb + logsumexp(q, env.mask(rec.child));
}

template <Environment Env>
std::vector<TransitionRecord<typename Env::State>> transitions_of(
    const Env& env, const Trajectory<typename Env::State>& tau) {
  std::vector<TransitionRecord<typename Env::State>> out;
  for (std::size_t t = 0; t < tau.length(); ++t) {
    const auto& child = tau.states[t + 1];
    const bool term = env.is_terminal(child);
    out.push_back({tau.states[t], tau.actions[t], child, term, tau.log_pb[t],
                   term ? tau.log_reward : 0.0});
  }
  return out;
}

struct SoftDqnConfig {
  int batch = 16;
  double lr = 1e-3;
  int target_period = 3;
  Loss loss{};
  double explore = 0.0;  // uniform mix in the behavior policy
  long iters = 1000;     // horizon for the replay beta schedule
};

struct IterationStats {
  long trajectories = 0;
  long reward_calls = 0;
  long transitions = 0;
  double loss = 0.0;
};

/// Entropy-regularized Q-learning with a hard-updated target network. The
/// trained policy softmax(Q_theta) is the GFlowNet forward policy.
template <Environment Env>
class SoftDqnTrainer {
 public:
  using State = typename Env::State;
  using TargetQ = CachedQ<Env, MlpQ<Env>>;

  SoftDqnTrainer(const Env& env, Mlp online, SoftDqnConfig cfg, ReplayConfig replay,
                 std::optional<MentsConfig> ments_targets, std::uint64_t seed)
      : env_(&env),
        cfg_(cfg),
        replay_cfg_(replay),
        ments_(ments_targets),
        online_(std::move(online)),
        target_(online_),
        adam_(AdamState::for_params(online_, cfg.lr)),
        rng_(seed) {
    require(cfg_.target_period >= 1, "SoftDqn: target period must be >= 1");
    require(cfg_.batch >= 1, "SoftDqn: batch must be >= 1");
    require(online_.input_size() == env.encoding_size() && online_.output_size() == env.num_actions(),
            "SoftDqn: network shape does not match the environment");
    if (ments_ && replay.mode != ReplayMode::None)
      throw ConfigError("search-based targets cannot be combined with a replay buffer");
    if (replay.mode != ReplayMode::None)
      buffer_.emplace(replay.mode, replay.capacity, replay.alpha);
    reset_target_cache();
  }

  SoftDqnTrainer(const SoftDqnTrainer&) = delete;
  SoftDqnTrainer& operator=(const SoftDqnTrainer&) = delete;

  IterationStats train_iteration() {
    IterationStats st;
    std::vector<QSample> samples;
    std::vector<TransitionRecord<State>> fresh;

    if (ments_) {
      for (int b = 0; b < cfg_.batch; ++b) {
        auto mt = sample_trajectory_ments(*env_, *target_q_, *ments_, rng_);
        const auto targets = ments_training_targets(*env_, mt);
        const auto& tau = mt.trajectory;
        for (std::size_t t = 0; t < tau.length(); ++t)
          samples.push_back(make_sample(tau.states[t], tau.actions[t], targets[t], 1.0));
        ++st.trajectories;
      }
    } else {
      CachedQ<Env, MlpQ<Env>> behavior(*env_, MlpQ<Env>(*env_, online_));
      for (int b = 0; b < cfg_.batch; ++b) {
        auto tau = sample_forward(
            *env_,
            [&](const State& s) {
              return behavior_probs(behavior.q_values(s), env_->mask(s), cfg_.explore);
            },
            rng_);
        for (auto& rec : transitions_of(*env_, tau)) fresh.push_back(std::move(rec));
        ++st.trajectories;
      }
    }
    st.reward_calls = st.trajectories;

    std::optional<ReplaySample<TransitionRecord<State>>> drawn;
    if (!ments_) {
      if (buffer_) {
        const std::size_t n = fresh.size();
        for (auto& rec : fresh) buffer_->push(std::move(rec));
        drawn = buffer_->sample(n, beta(), rng_);
        for (std::size_t i = 0; i < drawn->records.size(); ++i) {
          const auto& rec = drawn->records[i];
          samples.push_back(make_sample(rec.parent, rec.action, td_target(*env_, rec, *target_q_),
                                        drawn->weights[i]));
        }
      } else {
        for (const auto& rec : fresh)
          samples.push_back(
              make_sample(rec.parent, rec.action, td_target(*env_, rec, *target_q_), 1.0));
      }
    }

    const auto res = q_regression(online_, samples, cfg_.loss);
    adam_step(online_, adam_, res.grad);
    if (drawn) buffer_->update_priorities(drawn->indices, res.residuals);

    ++iteration_;
    if (iteration_ % cfg_.target_period == 0) {
      hard_update(target_, online_);
      reset_target_cache();
    }
    st.transitions = static_cast<long>(samples.size());
    st.loss = res.loss;
    return st;
  }

  const Mlp& online() const { return online_; }
  const Mlp& target() const { return target_; }
  Mlp& online() { return online_; }
  Mlp& target() { return target_; }
  AdamState& adam() { return adam_; }
  const AdamState& adam() const { return adam_; }
  Rng& rng() { return rng_; }
  long iteration() const { return iteration_; }
  void set_iteration(long it) { iteration_ = it; }
  const SoftDqnConfig& config() const { return cfg_; }
  const ReplayBuffer<TransitionRecord<State>>* buffer() const {
    return buffer_ ? &*buffer_ : nullptr;
  }

  /// Call after the target parameters are changed externally.
  void reset_target_cache() { target_q_.emplace(*env_, MlpQ<Env>(*env_, target_)); }

 private:
  QSample make_sample(const State& s, int action, double target, double weight) const {
    return {encode(*env_, s), env_->mask(s), action, target, weight};
  }

  double beta() const {
    const double progress =
        cfg_.iters > 0 ? std::min(1.0, static_cast<double>(iteration_) / cfg_.iters) : 1.0;
    return replay_cfg_.beta0 + (1.0 - replay_cfg_.beta0) * progress;
  }

  const Env* env_;
  SoftDqnConfig cfg_;
  ReplayConfig replay_cfg_;
  std::optional<MentsConfig> ments_;
  Mlp online_;
  Mlp target_;
  AdamState adam_;
  Rng rng_;
  std::optional<TargetQ> target_q_;
  std::optional<ReplayBuffer<TransitionRecord<State>>> buffer_;
  long iteration_ = 0;
};

}  // namespace gfn
