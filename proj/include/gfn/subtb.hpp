#pragma once

#include <cmath>
#include <vector>

#include "gfn/core.hpp"
#include "gfn/mlp.hpp"
#include "gfn/qfunction.hpp"
#include "gfn/sampling.hpp"
#include "gfn/softdqn.hpp"

namespace gfn {

struct SubTbResult {
  double loss = 0.0;
  std::vector<double> d_log_flow;  // dL/dlog F(s_i), i < n (the terminal value is fixed)
  std::vector<double> d_log_pf;    // dL/dlog P_F(step t), t = 0..n-1
};

/// Subtrajectory balance for one trajectory s_0..s_n. `log_flow[i]` is the
/// predicted log F(s_i) for i < n; the terminal end uses log R(x).
///   A(i, j) = log F(s_i) + sum log P_F - log F~(s_j) - sum log P_B
///   loss    = sum_{i<j} lambda^(j-i) A(i,j)^2 / sum_{i<j} lambda^(j-i)
inline SubTbResult subtb_loss(std::span<const double> log_flow, std::span<const double> log_pf,
                              std::span<const double> log_pb, double log_reward, double lambda) {
  const std::size_t n = log_pf.size();
  require(n >= 1 && log_pb.size() == n && log_flow.size() == n, "subtb_loss: inconsistent lengths");
  std::vector<double> f(log_flow.begin(), log_flow.end());
  f.push_back(log_reward);
  std::vector<double> cum(n + 1, 0.0);  // cum[t] = sum_{u<t} (log_pf[u] - log_pb[u])
  for (std::size_t t = 0; t < n; ++t) cum[t + 1] = cum[t] + log_pf[t] - log_pb[t];

  double weight_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j <= n; ++j) weight_sum += std::pow(lambda, double(j - i));

  SubTbResult r;
  r.d_log_flow.assign(n, 0.0);
  r.d_log_pf.assign(n, 0.0);
  std::vector<double> diff(n + 1, 0.0);  // difference array over steps
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j <= n; ++j) {
      const double w = std::pow(lambda, double(j - i)) / weight_sum;
      const double a = f[i] + cum[j] - cum[i] - f[j];
      r.loss += w * a * a;
      const double g = 2.0 * w * a;
      r.d_log_flow[i] += g;
      if (j < n) r.d_log_flow[j] -= g;
      diff[i] += g;  // steps i..j-1 are inside the subtrajectory
      diff[j] -= g;
    }
  }
  double run = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    run += diff[t];
    r.d_log_pf[t] = run;
  }
  return r;
}

struct SubTbBatchResult {
  double loss = 0.0;  // mean over trajectories
  MlpGrad grad;
  long columns = 0;
};

/// Mean subtrajectory-balance loss of `batch` and its parameter gradient for
/// a shared-trunk network (outputs [0, A) are logits, output A is log F).
template <Environment Env>
SubTbBatchResult subtb_batch(const Env& env, const Mlp& net,
                             const std::vector<Trajectory<typename Env::State>>& batch, double lambda) {
  std::size_t cols = 0;
  for (const auto& tau : batch) cols += tau.length();
  Eigen::MatrixXd x(net.input_size(), static_cast<Eigen::Index>(cols));
  std::vector<Mask> masks;
  std::size_t c = 0;
  for (const auto& tau : batch) {
    for (std::size_t t = 0; t < tau.length(); ++t, ++c) {
      env.encode_into(tau.states[t], std::span<double>(x.col(c).data(), x.rows()));
      masks.push_back(env.mask(tau.states[t]));
    }
  }
  const auto trace = forward_trace(net, x);
  const auto& out = trace.output();
  const int flow_row = env.num_actions();
  Eigen::MatrixXd d_out = Eigen::MatrixXd::Zero(out.rows(), out.cols());

  SubTbBatchResult res;
  c = 0;
  const double scale = 1.0 / static_cast<double>(batch.size());
  for (const auto& tau : batch) {
    const std::size_t n = tau.length();
    std::vector<double> log_flow(n), log_pf(n);
    std::vector<std::vector<double>> probs(n);
    for (std::size_t t = 0; t < n; ++t) {
      std::vector<double> logits(out.col(c + t).data(), out.col(c + t).data() + flow_row);
      log_pf[t] = logits[tau.actions[t]] - logsumexp(logits, masks[c + t]);
      probs[t] = masked_softmax(logits, masks[c + t]);
      log_flow[t] = out(flow_row, c + t);
    }
    const auto r = subtb_loss(log_flow, log_pf, tau.log_pb, tau.log_reward, lambda);
    res.loss += scale * r.loss;
    for (std::size_t t = 0; t < n; ++t) {
      const auto col = static_cast<Eigen::Index>(c + t);
      d_out(flow_row, col) = scale * r.d_log_flow[t];
      // d log_softmax(z)[a] / dz_b = [b == a] - p_b over valid b
      for (int b = 0; b < flow_row; ++b)
        if (masks[c + t][b]) d_out(b, col) = scale * r.d_log_pf[t] * ((b == tau.actions[t]) - probs[t][b]);
    }
    c += n;
  }
  res.grad = backward(net, trace, d_out);
  res.columns = static_cast<long>(cols);
  return res;
}

struct SubTbConfig {
  int batch = 16;
  double lr = 1e-3;
  double lambda = 0.9;
};

/// Shared-trunk network: outputs [0, A) are policy logits, output A is log F(s).
template <Environment Env>
class SubTbTrainer {
 public:
  using State = typename Env::State;

  SubTbTrainer(const Env& env, Mlp net, SubTbConfig cfg, std::uint64_t seed)
      : env_(&env), cfg_(cfg), net_(std::move(net)), adam_(AdamState::for_params(net_, cfg.lr)),
        rng_(seed) {
    require(net_.input_size() == env.encoding_size() && net_.output_size() == env.num_actions() + 1,
            "SubTb: network shape does not match the environment");
  }

  SubTbTrainer(const SubTbTrainer&) = delete;
  SubTbTrainer& operator=(const SubTbTrainer&) = delete;

  /// The policy head as a Q-function (logits play the role of Q).
  MlpQ<Env> policy_q() const { return MlpQ<Env>(*env_, net_); }

  IterationStats train_iteration() {
    IterationStats st;
    std::vector<Trajectory<State>> batch;
    {
      CachedQ<Env, MlpQ<Env>> pol(*env_, policy_q());
      for (int b = 0; b < cfg_.batch; ++b)
        batch.push_back(sample_forward(
            *env_, [&](const State& s) { return policy_from_q(pol.q_values(s), env_->mask(s)); },
            rng_));
    }
    st.trajectories = cfg_.batch;
    st.reward_calls = cfg_.batch;

    const auto res = subtb_batch(*env_, net_, batch, cfg_.lambda);
    adam_step(net_, adam_, res.grad);
    ++iteration_;
    st.transitions = res.columns;
    st.loss = res.loss;
    return st;
  }

  const Mlp& net() const { return net_; }
  Mlp& net() { return net_; }
  AdamState& adam() { return adam_; }
  const AdamState& adam() const { return adam_; }
  Rng& rng() { return rng_; }
  long iteration() const { return iteration_; }
  void set_iteration(long it) { iteration_ = it; }

 private:
  const Env* env_;
  SubTbConfig cfg_;
  Mlp net_;
  AdamState adam_;
  Rng rng_;
  long iteration_ = 0;
};

}  // namespace gfn
