#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "gfn/core.hpp"

namespace gfn {

/// Flat binary sum tree: leaves at [cap, 2*cap), node i holds the sum of
/// nodes 2i and 2i+1, node 1 holds the total.
class SumTree {
 public:
  explicit SumTree(std::size_t capacity) : size_(capacity) {
    require(capacity > 0, "SumTree: zero capacity");
    leaves_ = 1;
    while (leaves_ < capacity) leaves_ <<= 1;
    tree_.assign(2 * leaves_, 0.0);
  }

  void set(std::size_t i, double value) {
    require(i < size_, "SumTree::set: index out of range");
    require(value >= 0.0, "SumTree::set: negative value");
    std::size_t node = i + leaves_;
    tree_[node] = value;
    for (node >>= 1; node >= 1; node >>= 1) tree_[node] = tree_[2 * node] + tree_[2 * node + 1];
  }

  double get(std::size_t i) const { return tree_[i + leaves_]; }
  double total() const { return tree_[1]; }
  std::size_t capacity() const { return size_; }

  /// Leaf whose cumulative range contains u, for u in [0, total()).
  std::size_t find(double u) const {
    std::size_t node = 1;
    while (node < leaves_) {
      const double left = tree_[2 * node];
      if (u < left || tree_[2 * node + 1] <= 0.0) {
        node = 2 * node;
      } else {
        u -= left;
        node = 2 * node + 1;
      }
    }
    return std::min(node - leaves_, size_ - 1);
  }

 private:
  std::size_t size_;
  std::size_t leaves_;
  std::vector<double> tree_;
};

enum class ReplayMode { None, Uniform, Prioritized };

inline ReplayMode replay_mode_from_string(const std::string& s) {
  if (s == "none") return ReplayMode::None;
  if (s == "uniform") return ReplayMode::Uniform;
  if (s == "prioritized") return ReplayMode::Prioritized;
  throw ConfigError("unknown replay.mode: " + s);
}

struct ReplayConfig {
  ReplayMode mode = ReplayMode::None;
  std::size_t capacity = 100000;
  double alpha = 0.5;
  double beta0 = 0.4;
};

/// One SoftDQN transition s -> s'. log_reward is meaningful only when the
/// child is terminal.
template <class State>
struct TransitionRecord {
  State parent;
  int action = 0;
  State child;
  bool terminal = false;
  double log_pb = 0.0;
  double log_reward = 0.0;
};

/// Slot plus insertion serial; the serial detects slots overwritten since sampling.
struct ReplayIndex {
  std::size_t slot;
  std::uint64_t serial;
};

template <class Record>
struct ReplaySample {
  std::vector<Record> records;
  std::vector<ReplayIndex> indices;
  std::vector<double> weights;
};

/// FIFO ring buffer with optional proportional prioritization.
template <class Record>
class ReplayBuffer {
 public:
  ReplayBuffer(ReplayMode mode, std::size_t capacity, double alpha)
      : mode_(mode), capacity_(capacity), alpha_(alpha), tree_(std::max<std::size_t>(capacity, 1)) {
    require(capacity > 0, "ReplayBuffer: zero capacity");
    require(mode != ReplayMode::None, "ReplayBuffer: mode none has no buffer");
    require(alpha >= 0.0, "ReplayBuffer: alpha must be >= 0");
    records_.reserve(std::min<std::size_t>(capacity, 1 << 16));
  }

  std::size_t size() const { return records_.size(); }
  std::size_t capacity() const { return capacity_; }
  ReplayMode mode() const { return mode_; }
  double max_priority() const { return max_priority_; }
  long stale_updates() const { return stale_updates_; }
  double total_mass() const { return tree_.total(); }
  double priority(std::size_t slot) const { return priorities_[slot]; }
  const Record& at(std::size_t slot) const { return records_[slot]; }

  /// New records get the largest priority seen so far.
  void push(Record r) {
    std::size_t slot;
    if (records_.size() < capacity_) {
      slot = records_.size();
      records_.push_back(std::move(r));
      priorities_.push_back(max_priority_);
      serials_.push_back(next_serial_++);
    } else {
      slot = head_;
      head_ = (head_ + 1) % capacity_;
      records_[slot] = std::move(r);
      priorities_[slot] = max_priority_;
      serials_[slot] = next_serial_++;
    }
    tree_.set(slot, std::pow(max_priority_, alpha_));
  }

  /// With-replacement draw. Prioritized: P(i) ~ p_i^alpha and
  /// w_i = (N P(i))^-beta divided by the batch maximum; uniform: w_i = 1.
  ReplaySample<Record> sample(std::size_t batch, double beta, Rng& rng) const {
    if (records_.empty()) throw std::runtime_error("ReplayBuffer::sample: empty buffer");
    ReplaySample<Record> out;
    const double n = static_cast<double>(records_.size());
    for (std::size_t b = 0; b < batch; ++b) {
      std::size_t slot;
      double w = 1.0;
      if (mode_ == ReplayMode::Uniform) {
        slot = uniform_index(rng, records_.size());
      } else {
        const double total = tree_.total();
        slot = tree_.find(uniform01(rng) * total);
        const double p = tree_.get(slot) / total;
        w = std::pow(n * p, -beta);
      }
      out.records.push_back(records_[slot]);
      out.indices.push_back({slot, serials_[slot]});
      out.weights.push_back(w);
    }
    if (mode_ == ReplayMode::Prioritized) {
      const double wmax = *std::max_element(out.weights.begin(), out.weights.end());
      for (double& w : out.weights) w /= wmax;
    }
    return out;
  }

  /// priority = |td| + 1e-6. Indices whose slot was overwritten are skipped.
  void update_priorities(const std::vector<ReplayIndex>& idx, const std::vector<double>& td) {
    require(idx.size() == td.size(), "update_priorities: size mismatch");
    for (std::size_t i = 0; i < idx.size(); ++i) {
      require(idx[i].slot < records_.size(), "update_priorities: index out of range");
      if (serials_[idx[i].slot] != idx[i].serial) {
        ++stale_updates_;
        continue;
      }
      const double p = std::abs(td[i]) + 1e-6;
      priorities_[idx[i].slot] = p;
      max_priority_ = std::max(max_priority_, p);
      tree_.set(idx[i].slot, std::pow(p, alpha_));
    }
  }

 private:
  ReplayMode mode_;
  std::size_t capacity_;
  double alpha_;
  SumTree tree_;
  std::vector<Record> records_;
  std::vector<double> priorities_;
  std::vector<std::uint64_t> serials_;
  std::size_t head_ = 0;
  std::uint64_t next_serial_ = 0;
  double max_priority_ = 1.0;
  long stale_updates_ = 0;
};

}  // namespace gfn
