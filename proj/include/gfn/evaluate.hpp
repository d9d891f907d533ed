#pragma once

#include <chrono>
#include <optional>
#include <vector>

#include "gfn/bitseq.hpp"
#include "gfn/core.hpp"
#include "gfn/ments.hpp"
#include "gfn/metrics.hpp"
#include "gfn/oracle.hpp"
#include "gfn/qfunction.hpp"
#include "gfn/sampling.hpp"
#include "gfn/softdqn.hpp"

namespace gfn {

/// Samples per parallel work unit. Fixed so results do not depend on the
/// number of workers.
inline constexpr long kEvalChunk = 4096;

/// One forward sample from softmax(Q), or from search over Q when `ments` is set.
template <Environment Env, class Q>
typename Env::State sample_terminal(const Env& env, Q& q, const std::optional<MentsConfig>& ments,
                                    Rng& rng) {
  if (ments) return sample_trajectory_ments(env, q, *ments, rng).trajectory.terminal();
  return sample_forward(
             env, [&](const auto& s) { return policy_from_q(q.q_values(s), env.mask(s)); }, rng)
      .terminal();
}

/// Terminal visit counts aligned with oracle.terminals. `make_q()` returns a
/// fresh Q-function for each work unit.
template <Environment Env, class MakeQ>
std::vector<double> terminal_counts(const Env& env, const OracleTables<Env>& oracle, MakeQ&& make_q,
                                    const std::optional<MentsConfig>& ments, long samples,
                                    std::uint64_t seed) {
  std::vector<long> position(oracle.size(), -1);
  for (std::size_t i = 0; i < oracle.terminals.size(); ++i) position[oracle.terminals[i]] = static_cast<long>(i);

  const std::size_t chunks = static_cast<std::size_t>((samples + kEvalChunk - 1) / kEvalChunk);
  std::vector<std::vector<double>> partial(chunks);
  parallel_chunks(chunks, [&](std::size_t c) {
    Rng rng(derive_seed(seed, stream::kEval, c));
    auto q = make_q();
    std::vector<double> counts(oracle.terminals.size(), 0.0);
    const long begin = static_cast<long>(c) * kEvalChunk;
    const long end = std::min(samples, begin + kEvalChunk);
    for (long i = begin; i < end; ++i) {
      const auto x = sample_terminal(env, q, ments, rng);
      counts[position[oracle.index_of(env, x)]] += 1.0;
    }
    partial[c] = std::move(counts);
  });
  std::vector<double> total(oracle.terminals.size(), 0.0);
  for (const auto& p : partial)
    for (std::size_t i = 0; i < p.size(); ++i) total[i] += p[i];
  return total;
}

template <Environment Env, class MakeQ>
double evaluate_l1(const Env& env, const OracleTables<Env>& oracle, MakeQ&& make_q,
                   const std::optional<MentsConfig>& ments, long samples, std::uint64_t seed) {
  const auto counts = terminal_counts(env, oracle, make_q, ments, samples, seed);
  return l1_distance(counts, oracle.terminal_probs());
}

/// Monte Carlo log P_theta(x) for every test string. Backward paths and tree
/// randomness use separate per-string streams, so different search budgets
/// see the same backward paths.
template <class MakeQ>
std::vector<double> estimate_test_log_probs(const Bitseq& env, const std::vector<BitString>& test,
                                            MakeQ&& make_q, const std::optional<MentsConfig>& ments,
                                            int backward_samples, std::uint64_t seed) {
  constexpr std::size_t kPerChunk = 16;
  std::vector<double> out(test.size());
  const std::size_t chunks = (test.size() + kPerChunk - 1) / kPerChunk;
  parallel_chunks(chunks, [&](std::size_t c) {
    auto q = make_q();
    for (std::size_t i = c * kPerChunk; i < std::min(test.size(), (c + 1) * kPerChunk); ++i) {
      Rng paths(derive_seed(seed, stream::kEval, 2 * i));
      Rng tree(derive_seed(seed, stream::kMents, 2 * i + 1));
      auto log_pf = [&](const Trajectory<Bitseq::State>& tau) {
        if (ments) return ments_path_log_pf(env, q, *ments, tau, tree);
        double lp = 0.0;
        for (std::size_t t = 0; t < tau.length(); ++t) {
          const auto& s = tau.states[t];
          const auto qv = q.q_values(s);
          lp += qv[tau.actions[t]] - logsumexp(qv, env.mask(s));
        }
        return lp;
      };
      out[i] = estimate_log_ptheta(env, env.from_bits(test[i]), log_pf, backward_samples, paths);
    }
  });
  return out;
}

template <class MakeQ>
double evaluate_spearman(const Bitseq& env, const std::vector<BitString>& test, MakeQ&& make_q,
                         const std::optional<MentsConfig>& ments, int backward_samples,
                         std::uint64_t seed) {
  const auto log_p = estimate_test_log_probs(env, test, make_q, ments, backward_samples, seed);
  std::vector<double> log_r;
  log_r.reserve(test.size());
  for (const auto& x : test) log_r.push_back(-2.0 * env.modes().min_distance(x));
  return spearman(log_r, log_p);
}

/// Single-threaded trajectories per second, evaluating the network on every request.
template <Environment Env>
double inference_throughput(const Env& env, const Mlp& net, const std::optional<MentsConfig>& ments,
                            long trajectories, std::uint64_t seed) {
  Rng rng(seed);
  MlpQ<Env> q(env, net);
  const auto t0 = std::chrono::steady_clock::now();
  for (long i = 0; i < trajectories; ++i) sample_terminal(env, q, ments, rng);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return static_cast<double>(trajectories) / std::max(secs, 1e-9);
}

}  // namespace gfn
