#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "gfn/bitseq.hpp"
#include "gfn/checkpoint.hpp"
#include "gfn/config.hpp"
#include "gfn/evaluate.hpp"
#include "gfn/hypergrid.hpp"
#include "gfn/metrics.hpp"
#include "gfn/ments.hpp"
#include "gfn/oracle.hpp"
#include "gfn/softdqn.hpp"
#include "gfn/subtb.hpp"

#ifndef GFN_BUILD_ID
#define GFN_BUILD_ID "unknown"
#endif

namespace gfn {

inline HypergridConfig hypergrid_config(const RunConfig& c) {
  return {static_cast<int>(c.integer("grid.dim")), static_cast<int>(c.integer("grid.side")),
          c.real("grid.r0"), c.real("grid.r1"), c.real("grid.r2")};
}

inline BitseqConfig bitseq_config(const RunConfig& c) {
  return {static_cast<int>(c.integer("bits.n")), static_cast<int>(c.integer("bits.k")),
          static_cast<int>(c.integer("bits.modes")), c.unsigned_integer("bits.mode_seed")};
}

inline MentsConfig ments_config(const RunConfig& c) {
  return {static_cast<int>(c.integer("ments.rounds")), c.real("ments.eps"),
          c.boolean("ments.terminal_reward_access")};
}

/// Constructs the configured environment and hands it to `fn`.
template <class Fn>
auto with_env(const RunConfig& c, Fn&& fn) {
  if (c.str("env") == "hypergrid") {
    const Hypergrid env(hypergrid_config(c));
    return fn(env);
  }
  const Bitseq env(bitseq_config(c));
  return fn(env);
}

inline std::vector<int> layer_sizes(const RunConfig& c, int in, int out) {
  std::vector<int> sizes{in};
  for (long l = 0; l < c.integer("net.layers"); ++l) sizes.push_back(static_cast<int>(c.integer("net.hidden")));
  sizes.push_back(out);
  return sizes;
}

/// Metric evaluator bound to an environment: holds the oracle (L1) or the
/// test set (Spearman).
template <Environment Env>
class Evaluator {
 public:
  Evaluator(const Env& env, const RunConfig& c) : env_(&env), metric_(c.metric()), cfg_(c) {
    if (metric_ == "l1") {
      oracle_.emplace(exact_flows(env, c.real("oracle.max_states")));
    } else if constexpr (std::is_same_v<Env, Bitseq>) {
      test_ = build_test_set(env.modes(), c.unsigned_integer("eval.test_seed"));
    } else {
      throw ConfigError("eval.metric = spearman requires env = bitseq");
    }
  }

  const std::string& metric() const { return metric_; }

  double operator()(const Mlp& net, const std::optional<MentsConfig>& ments, std::uint64_t seed) const {
    auto make_q = [&] { return CachedQ<Env, MlpQ<Env>>(*env_, MlpQ<Env>(*env_, net)); };
    if (metric_ == "l1")
      return evaluate_l1(*env_, *oracle_, make_q, ments, cfg_.integer("eval.samples"), seed);
    if constexpr (std::is_same_v<Env, Bitseq>) {
      return evaluate_spearman(*env_, test_, make_q, ments,
                               static_cast<int>(cfg_.integer("eval.backward_samples")), seed);
    }
    throw ConfigError("unsupported metric");
  }

 private:
  const Env* env_;
  std::string metric_;
  RunConfig cfg_;
  std::optional<OracleTables<Env>> oracle_;
  std::vector<BitString> test_;
};

struct TrainResult {
  std::vector<MetricsRecord> rows;
  Checkpoint checkpoint;
};

/// Runs a full training job. With `write_outputs`, writes metrics.csv,
/// checkpoints, the resolved config and manifest.json into out_dir.
inline TrainResult run_train(const RunConfig& c, bool write_outputs = true) {
  namespace fs = std::filesystem;
  const auto t0 = std::chrono::steady_clock::now();
  auto wall = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(); };
  const std::uint64_t seed = c.unsigned_integer("seed");
  const fs::path out_dir = c.str("out_dir");
  std::optional<MetricsCsv> csv;
  if (write_outputs) {
    fs::create_directories(out_dir);
    fs::remove(out_dir / "metrics.csv");
    csv.emplace((out_dir / "metrics.csv").string());
    std::ofstream(out_dir / "config.resolved") << c.echo();
    nlohmann::json manifest = {{"run_id", c.str("run_id")},
                               {"seed", seed},
                               {"build_id", GFN_BUILD_ID},
                               {"algo", c.str("algo")},
                               {"env", c.str("env")},
                               {"config", c.values()}};
    std::ofstream(out_dir / "manifest.json") << manifest.dump(2) << '\n';
  }

  return with_env(c, [&](const auto& env) -> TrainResult {
    using Env = std::decay_t<decltype(env)>;
    TrainResult result;
    const bool subtb = c.str("algo") == "subtb";
    const auto use = ments_use_from_string(c.str("ments.use"));
    const MentsConfig mcfg = ments_config(c);
    const long iters = c.integer("train.iters");
    const long period = c.integer("eval.period");
    const long ckpt_period = c.integer("checkpoint.period");
    Evaluator<Env> evaluator(env, c);

    Rng init_rng(derive_seed(seed, stream::kInit));
    Mlp net = Mlp::init(layer_sizes(c, env.encoding_size(), env.num_actions() + (subtb ? 1 : 0)), init_rng);

    std::optional<SoftDqnTrainer<Env>> dqn;
    std::optional<SubTbTrainer<Env>> stb;
    if (subtb) {
      stb.emplace(env, std::move(net), SubTbConfig{static_cast<int>(c.integer("train.batch")), c.real("train.lr"),
                                                   c.real("subtb.lambda")},
                  derive_seed(seed, stream::kTrainer));
    } else {
      SoftDqnConfig dc;
      dc.batch = static_cast<int>(c.integer("train.batch"));
      dc.lr = c.real("train.lr");
      dc.target_period = static_cast<int>(c.integer("train.target_period"));
      dc.loss = Loss{loss_from_string(c.str("train.loss")), c.real("train.huber_delta")};
      dc.explore = c.real("train.explore");
      dc.iters = iters;
      ReplayConfig rc{replay_mode_from_string(c.str("replay.mode")),
                      static_cast<std::size_t>(c.integer("replay.capacity")), c.real("replay.alpha"),
                      c.real("replay.beta0")};
      std::optional<MentsConfig> targets;
      if (ments_in_training(use)) targets = mcfg;
      dqn.emplace(env, std::move(net), dc, rc, targets, derive_seed(seed, stream::kTrainer));
    }
    auto online = [&]() -> const Mlp& { return subtb ? stb->net() : dqn->online(); };

    long trajectories = 0;
    long reward_calls = 0;
    auto record = [&](long it, const std::string& metric, double value) {
      MetricsRecord r{c.str("run_id"), c.str("algo"), c.str("env"), seed, it, trajectories,
                      reward_calls, metric, value, wall()};
      if (csv) csv->write(r);
      result.rows.push_back(std::move(r));
    };
    std::optional<MentsConfig> eval_ments;
    if (ments_in_inference(use)) eval_ments = mcfg;
    auto evaluate = [&](long it) {
      record(it, evaluator.metric(), evaluator(online(), eval_ments, derive_seed(seed, stream::kEval, it)));
    };
    auto snapshot = [&](long it) {
      Checkpoint ck;
      ck.config = c.values();
      ck.algo = c.str("algo");
      ck.online = online();
      if (dqn) ck.target = dqn->target();
      ck.adam = subtb ? stb->adam() : dqn->adam();
      ck.rng_state = rng_to_string(subtb ? stb->rng() : dqn->rng());
      ck.iteration = it;
      return ck;
    };

    if (period > 0) evaluate(0);
    for (long it = 1; it <= iters; ++it) {
      const IterationStats st = subtb ? stb->train_iteration() : dqn->train_iteration();
      trajectories += st.trajectories;
      reward_calls += st.reward_calls;
      record(it, "loss", st.loss);
      if (period > 0 && (it % period == 0 || it == iters)) evaluate(it);
      if (write_outputs && ckpt_period > 0 && it % ckpt_period == 0)
        save_checkpoint((out_dir / ("checkpoint_" + std::to_string(it) + ".json")).string(), snapshot(it));
    }
    result.checkpoint = snapshot(iters);
    if (write_outputs) save_checkpoint((out_dir / "checkpoint_final.json").string(), result.checkpoint);
    return result;
  });
}

/// Builds the effective config for evaluating a checkpoint. Overrides of
/// environment keys must agree with the checkpoint.
inline RunConfig eval_config(const Checkpoint& ck, const std::map<std::string, std::string>& overrides) {
  auto values = ck.config;
  for (const auto& [k, v] : overrides) {
    if (is_env_key(k)) {
      auto it = ck.config.find(k);
      if (it == ck.config.end() || it->second != v)
        throw ConfigError("environment mismatch with checkpoint on key " + k);
    }
    values[k] = v;
  }
  return RunConfig::from_map(values);
}

/// Metric and throughput at each search budget; rounds = 0 is the plain policy.
inline std::vector<MetricsRecord> run_eval(const Checkpoint& ck, const RunConfig& c,
                                           const std::vector<int>& rounds,
                                           const std::string& csv_path = "") {
  const auto t0 = std::chrono::steady_clock::now();
  std::optional<MetricsCsv> csv;
  if (!csv_path.empty()) csv.emplace(csv_path);
  const std::uint64_t seed = c.unsigned_integer("seed");
  return with_env(c, [&](const auto& env) {
    using Env = std::decay_t<decltype(env)>;
    if (ck.online.input_size() != env.encoding_size() || ck.online.output_size() < env.num_actions())
      throw ConfigError("environment mismatch with checkpoint network shape");
    Evaluator<Env> evaluator(env, c);
    std::vector<MetricsRecord> rows;
    for (int r : rounds) {
      if (r < 0) throw ConfigError("rounds must be >= 0");
      if (r > 0 && ck.algo != "softdqn") throw ConfigError("search requires a softdqn checkpoint");
      std::optional<MentsConfig> m;
      if (r > 0) m = MentsConfig{r, c.real("ments.eps"), c.boolean("ments.terminal_reward_access")};
      const double value = evaluator(ck.online, m, derive_seed(seed, stream::kEval, 1'000'000 + r));
      const double tput = inference_throughput(env, ck.online, m, c.integer("eval.throughput_trajectories"),
                                               derive_seed(seed, stream::kEval, 2'000'000 + r));
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      const std::string suffix = "@rounds=" + std::to_string(r);
      for (auto [name, v] : {std::pair{evaluator.metric(), value}, std::pair{std::string("throughput"), tput}}) {
        MetricsRecord rec{c.str("run_id"), ck.algo, c.str("env"), seed, ck.iteration, 0, 0, name + suffix, v, secs};
        if (csv) csv->write(rec);
        rows.push_back(std::move(rec));
      }
    }
    return rows;
  });
}

/// Exhaustive flows plus the invariant suite. Returns the process exit code.
inline int run_oracle(const RunConfig& c, std::ostream& out, double tol = 1e-9) {
  namespace fs = std::filesystem;
  return with_env(c, [&](const auto& env) {
    const auto tables = exact_flows(env, c.real("oracle.max_states"));
    Rng rng(derive_seed(c.unsigned_integer("seed"), stream::kEval));
    const auto rep = check_oracle(env, tables, 1000, rng);
    char buf[256];
    std::snprintf(buf, sizeof buf, "states %zu edges %zu terminals %zu\nlog_Z %.17g\nZ %.17g\n", rep.states,
                  rep.edges, tables.terminals.size(), tables.log_z, std::exp(tables.log_z));
    out << buf;
    std::snprintf(buf, sizeof buf,
                  "flow_match %.3e out_flow %.3e bellman %.3e policy_dual %.3e tb_residual %.3e\n",
                  rep.flow_match_rel, rep.out_flow_rel, rep.bellman_abs, rep.policy_dual_abs,
                  rep.tb_residual_abs);
    out << buf;
    const fs::path dir = c.str("out_dir");
    fs::create_directories(dir);
    std::ofstream terms(dir / "oracle_terminals.csv");
    terms << "terminal,reward,probability\n";
    const auto probs = tables.terminal_probs();
    for (std::size_t i = 0; i < tables.terminals.size(); ++i) {
      const auto& x = tables.states[tables.terminals[i]];
      std::snprintf(buf, sizeof buf, ",%.17g,%.17g\n", std::exp(tables.log_flow[tables.terminals[i]]), probs[i]);
      terms << env.describe(x) << buf;
    }
    if (!rep.ok(tol)) {
      out << "oracle invariant violated (tolerance " << tol << ")\n";
      return 1;
    }
    out << "all oracle invariants hold\n";
    return 0;
  });
}

}  // namespace gfn
