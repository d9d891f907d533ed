#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <limits>
#include <mutex>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace gfn {

/// Value placed on invalid actions after a forward pass. Masked entries are
/// skipped structurally by logsumexp/softmax; this is only what a caller sees.
inline constexpr double kMaskedQ = -1e9;

struct ContractViolation : std::logic_error {
  using std::logic_error::logic_error;
};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NotEnumerable : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline void require(bool cond, const char* what) {
  if (!cond) throw ContractViolation(what);
}

using Mask = std::vector<std::uint8_t>;
using Rng = std::mt19937_64;

template <class State>
struct Edge {
  int action;
  State state;
};

/// A complete path s0 -> ... -> x. log_pf/log_pb/actions are per step, so
/// they have states.size() - 1 entries.
template <class State>
struct Trajectory {
  std::vector<State> states;
  std::vector<int> actions;
  std::vector<double> log_pf;
  std::vector<double> log_pb;
  double log_reward = 0.0;

  std::size_t length() const { return actions.size(); }
  const State& terminal() const { return states.back(); }
};

/// Deterministic DAG environment. States are value types with a canonical
/// byte key; actions live in a fixed global index space with validity masks.
template <class E>
concept Environment = requires(const E& env, const typename E::State& s, int a) {
  typename E::State;
  { env.initial() } -> std::same_as<typename E::State>;
  { env.is_terminal(s) } -> std::convertible_to<bool>;
  { env.num_actions() } -> std::convertible_to<int>;
  { env.mask(s) } -> std::same_as<Mask>;
  { env.children(s) } -> std::same_as<std::vector<Edge<typename E::State>>>;
  { env.parents(s) } -> std::same_as<std::vector<Edge<typename E::State>>>;
  { env.step(s, a) } -> std::same_as<typename E::State>;
  { env.num_parents(s) } -> std::convertible_to<int>;
  { env.encoding_size() } -> std::convertible_to<int>;
  { env.encode_into(s, std::span<double>{}) };
  { env.key(s) } -> std::same_as<std::string>;
  { env.log_reward(s) } -> std::convertible_to<double>;
  { env.state_count() } -> std::convertible_to<double>;
  { env.max_children() } -> std::convertible_to<int>;
};

template <Environment Env>
std::vector<double> encode(const Env& env, const typename Env::State& s) {
  std::vector<double> out(static_cast<std::size_t>(env.encoding_size()), 0.0);
  env.encode_into(s, out);
  return out;
}

/// log P_B(parent | child) under the uniform backward policy, with the edge
/// checked against the parent list.
template <Environment Env>
double log_pb_uniform(const Env& env, const typename Env::State& parent,
                      const typename Env::State& child) {
  for (const auto& p : env.parents(child)) {
    if (p.state == parent) return -std::log(static_cast<double>(env.num_parents(child)));
  }
  throw ContractViolation("log_pb_uniform: pair is not an edge");
}

template <Environment Env>
double log_pb_unchecked(const Env& env, const typename Env::State& child) {
  return -std::log(static_cast<double>(env.num_parents(child)));
}

// ---------------------------------------------------------------------------
// Masked reductions. Invalid entries never enter a sum.

inline double logsumexp(std::span<const double> v, const Mask& mask) {
  double m = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < v.size(); ++i)
    if (mask[i]) m = std::max(m, v[i]);
  require(std::isfinite(m), "logsumexp: no valid entry");
  double s = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i)
    if (mask[i]) s += std::exp(v[i] - m);
  return m + std::log(s);
}

inline double logsumexp(std::span<const double> v) {
  require(!v.empty(), "logsumexp: empty input");
  double m = *std::max_element(v.begin(), v.end());
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

inline std::vector<double> masked_softmax(std::span<const double> v, const Mask& mask) {
  const double lse = logsumexp(v, mask);
  std::vector<double> p(v.size(), 0.0);
  for (std::size_t i = 0; i < v.size(); ++i)
    if (mask[i]) p[i] = std::exp(v[i] - lse);
  return p;
}

inline std::vector<double> softmax(std::span<const double> v) {
  const double lse = logsumexp(v);
  std::vector<double> p(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) p[i] = std::exp(v[i] - lse);
  return p;
}

// ---------------------------------------------------------------------------
// Randomness. Uniforms are built from raw engine bits so sequences do not
// depend on the standard library's distribution implementations.

inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Unbiased integer in [0, n).
inline std::uint64_t uniform_index(Rng& rng, std::uint64_t n) {
  require(n > 0, "uniform_index: empty range");
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return x % n;
}

/// Inverse-CDF draw from unnormalized non-negative weights.
inline std::size_t sample_categorical(std::span<const double> probs, Rng& rng) {
  double total = 0.0;
  for (double p : probs) total += p;
  require(total > 0.0, "sample_categorical: zero mass");
  const double u = uniform01(rng) * total;
  double acc = 0.0;
  std::size_t last = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i] <= 0.0) continue;
    acc += probs[i];
    last = i;
    if (u < acc) return i;
  }
  return last;
}

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Independent stream for a named component under one master seed.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream,
                                 std::uint64_t index = 0) {
  return splitmix64(splitmix64(splitmix64(master) ^ stream) + index);
}

namespace stream {
inline constexpr std::uint64_t kEnvModes = 1;
inline constexpr std::uint64_t kTrainer = 2;
inline constexpr std::uint64_t kMents = 3;
inline constexpr std::uint64_t kEval = 4;
inline constexpr std::uint64_t kInit = 5;
inline constexpr std::uint64_t kReplay = 6;
}  // namespace stream

// ---------------------------------------------------------------------------

/// Worker count from GFLOW_THREADS, defaulting to hardware concurrency.
inline int worker_count() {
  if (const char* env = std::getenv("GFLOW_THREADS")) {
    const int n = std::atoi(env);
    if (n >= 1) return n;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs fn(chunk) for chunk in [0, n_chunks) on up to worker_count() threads.
/// Callers write results into per-chunk slots so merges are order-stable.
template <class Fn>
void parallel_chunks(std::size_t n_chunks, Fn&& fn) {
  const std::size_t workers = std::min<std::size_t>(n_chunks, worker_count());
  if (workers <= 1) {
    for (std::size_t c = 0; c < n_chunks; ++c) fn(c);
    return;
  }
  std::vector<std::thread> pool;
  std::exception_ptr error;
  std::mutex error_mu;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t c = w; c < n_chunks; c += workers) fn(c);
      } catch (...) {
        std::lock_guard lock(error_mu);
        if (!error) error = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace gfn
