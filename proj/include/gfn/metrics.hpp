#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "gfn/core.hpp"
#include "gfn/oracle.hpp"
#include "gfn/sampling.hpp"

namespace gfn {

/// sum log P_F - log R(x) + log Z - sum log P_B; zero iff the trajectory is balanced.
template <class State>
double tb_residual(const Trajectory<State>& tau, double log_z) {
  double r = log_z - tau.log_reward;
  for (double v : tau.log_pf) r += v;
  for (double v : tau.log_pb) r -= v;
  return r;
}

/// sum_x |count(x)/total - p(x)|.
inline double l1_distance(std::span<const double> counts, std::span<const double> probs) {
  require(counts.size() == probs.size(), "l1_distance: size mismatch");
  const double total = std::accumulate(counts.begin(), counts.end(), 0.0);
  require(total > 0.0, "l1_distance: no samples");
  double d = 0.0;
  for (std::size_t i = 0; i < counts.size(); ++i) d += std::abs(counts[i] / total - probs[i]);
  return d;
}

/// 1-based ranks with ties given their average rank.
inline std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = r;
    i = j + 1;
  }
  return ranks;
}

inline double pearson(std::span<const double> x, std::span<const double> y) {
  require(x.size() == y.size() && x.size() >= 2, "pearson: need two equal-length samples");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) throw std::domain_error("correlation undefined: zero variance");
  return sxy / std::sqrt(sxx * syy);
}

inline double spearman(std::span<const double> x, std::span<const double> y) {
  require(x.size() == y.size() && x.size() >= 2, "spearman: need two equal-length samples");
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  return pearson(rx, ry);
}

/// log of (1/N) sum_i P_F(tau_i)/P_B(tau_i | x) with tau_i ~ P_B(. | x).
/// `log_pf(tau)` returns the summed forward log-probability of a forward-ordered path.
template <Environment Env, class LogPf>
double estimate_log_ptheta(const Env& env, const typename Env::State& x, LogPf&& log_pf, int n,
                           Rng& rng) {
  require(n >= 1, "estimate_log_ptheta: need at least one sample");
  std::vector<double> terms;
  terms.reserve(n);
  for (int i = 0; i < n; ++i) {
    auto tau = sample_backward(env, x, rng);
    double lpb = 0.0;
    for (double v : tau.log_pb) lpb += v;
    terms.push_back(log_pf(tau) - lpb);
  }
  return logsumexp(terms) - std::log(static_cast<double>(n));
}

// ---------------------------------------------------------------------------

struct OracleReport {
  double flow_match_rel = 0.0;   // max |in-flow / F(s) - 1| over interior states
  double out_flow_rel = 0.0;     // max |sum out / F(s) - 1|
  double bellman_abs = 0.0;      // max |log F(s->s') - log P_B - V*(s')|
  double policy_dual_abs = 0.0;  // max |softmax(Q*) - F(s->s')/F(s)|
  double tb_residual_abs = 0.0;  // max |TB residual| of pi* on sampled trajectories
  std::size_t states = 0;
  std::size_t edges = 0;

  bool ok(double tol) const {
    return flow_match_rel <= tol && out_flow_rel <= tol && bellman_abs <= tol &&
           policy_dual_abs <= tol && tb_residual_abs <= tol;
  }
};

/// Flow matching, soft Bellman fixed point, two routes to pi*, and trajectory
/// balance of pi* on `n_traj` forward samples.
template <Environment Env>
OracleReport check_oracle(const Env& env, const OracleTables<Env>& t, int n_traj, Rng& rng) {
  OracleReport rep;
  rep.states = t.size();
  std::vector<std::vector<double>> in_flows(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) {
    rep.edges += t.edges[i].size();
    for (const auto& e : t.edges[i]) in_flows[e.child].push_back(e.log_flow);
  }
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (!t.terminal[i]) {
      double out = 0.0;
      for (const auto& e : t.edges[i]) out += std::exp(e.log_flow - t.log_flow[i]);
      rep.out_flow_rel = std::max(rep.out_flow_rel, std::abs(out - 1.0));
      if (i != 0) {
        double in = 0.0;
        for (double lf : in_flows[i]) in += std::exp(lf - t.log_flow[i]);
        rep.flow_match_rel = std::max(rep.flow_match_rel, std::abs(in - 1.0));
      }
      // Two routes to pi*: softmax over Q* and edge/state flow ratio.
      const auto q = t.q_row(env, i);
      const auto mask = env.mask(t.states[i]);
      const auto soft = masked_softmax(q, mask);
      const auto ratio = t.policy(env, i);
      for (std::size_t a = 0; a < q.size(); ++a)
        rep.policy_dual_abs = std::max(rep.policy_dual_abs, std::abs(soft[a] - ratio[a]));
    }
    for (const auto& e : t.edges[i]) {
      const auto& child = t.states[e.child];
      double v;
      if (t.terminal[e.child]) {
        v = env.log_reward(child);
      } else {
        std::vector<double> outs;
        for (const auto& ce : t.edges[e.child]) outs.push_back(ce.log_flow);
        v = logsumexp(outs);
      }
      const double rhs = log_pb_unchecked(env, child) + v;
      rep.bellman_abs = std::max(rep.bellman_abs, std::abs(e.log_flow - rhs));
    }
  }
  for (int n = 0; n < n_traj; ++n) {
    auto tau = sample_forward(
        env, [&](const auto& s) { return t.policy(env, t.index_of(env, s)); }, rng);
    rep.tb_residual_abs = std::max(rep.tb_residual_abs, std::abs(tb_residual(tau, t.log_z)));
  }
  return rep;
}

// ---------------------------------------------------------------------------

struct MetricsRecord {
  std::string run_id;
  std::string algo;
  std::string env;
  std::uint64_t seed = 0;
  long iteration = 0;
  long trajectories = 0;
  long reward_calls = 0;
  std::string metric;
  double value = 0.0;
  double wall_s = 0.0;
};

inline constexpr const char* kMetricsHeader =
    "run_id,algo,env,seed,iteration,trajectories,reward_calls,metric,value,wall_s";

inline std::string format_metrics_row(const MetricsRecord& r) {
  char value[64];
  char wall[32];
  std::snprintf(value, sizeof value, "%.17g", r.value);
  std::snprintf(wall, sizeof wall, "%.3f", r.wall_s);
  return r.run_id + "," + r.algo + "," + r.env + "," + std::to_string(r.seed) + "," +
         std::to_string(r.iteration) + "," + std::to_string(r.trajectories) + "," +
         std::to_string(r.reward_calls) + "," + r.metric + "," + value + "," + wall;
}

/// Appends rows to a metrics CSV, writing the header when the file is new.
class MetricsCsv {
 public:
  explicit MetricsCsv(const std::string& path) {
    const bool exists = std::ifstream(path).good();
    out_.open(path, std::ios::app);
    if (!out_) throw std::runtime_error("cannot open metrics file: " + path);
    if (!exists) out_ << kMetricsHeader << '\n';
  }

  void write(const MetricsRecord& r) {
    out_ << format_metrics_row(r) << '\n';
    out_.flush();
  }

 private:
  std::ofstream out_;
};

}  // namespace gfn
