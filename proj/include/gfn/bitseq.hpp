#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "gfn/core.hpp"

namespace gfn {

struct BitseqConfig {
  int n = 16;
  int k = 8;
  int num_modes = 20;
  std::uint64_t mode_seed = 0;
};

/// Binary string stored one bit per byte; bit 0 is the leftmost character.
using BitString = std::vector<std::uint8_t>;

inline BitString bits_from_string(const std::string& s) {
  BitString b;
  b.reserve(s.size());
  for (char c : s) {
    require(c == '0' || c == '1', "bits_from_string: not a binary string");
    b.push_back(c == '1');
  }
  return b;
}

inline std::string bits_to_string(const BitString& b) {
  std::string s;
  s.reserve(b.size());
  for (auto v : b) s.push_back(v ? '1' : '0');
  return s;
}

/// Base blocks every mode is assembled from.
inline const std::vector<std::string>& mode_blocks() {
  static const std::vector<std::string> blocks = {"00000000", "11111111", "11110000",
                                                  "00001111", "00111100"};
  return blocks;
}

/// Modes plus a packed copy used for popcount Hamming queries.
class ModeSet {
 public:
  ModeSet() = default;
  ModeSet(std::vector<BitString> modes) : modes_(std::move(modes)) {
    require(!modes_.empty(), "ModeSet: no modes");
    length_ = static_cast<int>(modes_.front().size());
    for (const auto& m : modes_) {
      require(static_cast<int>(m.size()) == length_, "ModeSet: ragged modes");
      packed_.push_back(pack(m));
    }
  }

  const std::vector<BitString>& modes() const { return modes_; }
  std::size_t size() const { return modes_.size(); }
  int length() const { return length_; }

  std::size_t distinct_count() const {
    std::set<BitString> s(modes_.begin(), modes_.end());
    return s.size();
  }

  int min_distance(const BitString& x) const {
    require(static_cast<int>(x.size()) == length_, "min_distance: length mismatch");
    const auto px = pack(x);
    int best = length_;
    for (const auto& pm : packed_) {
      int d = 0;
      for (std::size_t w = 0; w < px.size(); ++w) d += std::popcount(px[w] ^ pm[w]);
      best = std::min(best, d);
    }
    return best;
  }

 private:
  static std::vector<std::uint64_t> pack(const BitString& b) {
    std::vector<std::uint64_t> out((b.size() + 63) / 64, 0);
    for (std::size_t i = 0; i < b.size(); ++i)
      if (b[i]) out[i / 64] |= std::uint64_t{1} << (i % 64);
    return out;
  }

  std::vector<BitString> modes_;
  std::vector<std::vector<std::uint64_t>> packed_;
  int length_ = 0;
};

/// Each mode concatenates n/8 blocks drawn uniformly with replacement.
/// Duplicate modes are kept.
inline ModeSet build_modes(const BitseqConfig& cfg) {
  if (cfg.n <= 0 || cfg.n % 8 != 0) throw ConfigError("bits.n must be a positive multiple of 8");
  if (cfg.num_modes < 1) throw ConfigError("bits.modes must be >= 1");
  Rng rng(cfg.mode_seed);
  const auto& blocks = mode_blocks();
  std::vector<BitString> modes;
  for (int m = 0; m < cfg.num_modes; ++m) {
    std::string s;
    for (int b = 0; b < cfg.n / 8; ++b) s += blocks[uniform_index(rng, blocks.size())];
    modes.push_back(bits_from_string(s));
  }
  return ModeSet(std::move(modes));
}

/// For every mode and every 0 <= i < n, the mode with i distinct positions
/// flipped. Entries are grouped by mode, then ordered by i.
inline std::vector<BitString> build_test_set(const ModeSet& modes, std::uint64_t seed) {
  Rng rng(seed);
  const int n = modes.length();
  std::vector<BitString> out;
  out.reserve(modes.size() * n);
  std::vector<int> positions(n);
  for (const auto& mode : modes.modes()) {
    for (int i = 0; i < n; ++i) {
      for (int p = 0; p < n; ++p) positions[p] = p;
      // Partial Fisher-Yates: the first i entries are a uniform i-subset.
      for (int j = 0; j < i; ++j) {
        const int r = j + static_cast<int>(uniform_index(rng, n - j));
        std::swap(positions[j], positions[r]);
      }
      BitString x = mode;
      for (int j = 0; j < i; ++j) x[positions[j]] ^= 1;
      out.push_back(std::move(x));
    }
  }
  return out;
}

struct BitseqState {
  std::vector<int> words;  // word id per slot; 2^k marks an empty slot

  bool operator==(const BitseqState&) const = default;
};

/// Strings of n bits built by filling n/k word slots in any order.
/// action = slot * 2^k + word_id, with words packed most significant bit first.
class Bitseq {
 public:
  using State = BitseqState;

  explicit Bitseq(BitseqConfig cfg) : cfg_(cfg) {
    if (cfg_.n <= 0 || cfg_.n % 8 != 0) throw ConfigError("bits.n must be a positive multiple of 8");
    if (cfg_.k < 1 || cfg_.k > 16 || cfg_.n % cfg_.k != 0)
      throw ConfigError("bits.k must divide bits.n and be in [1, 16]");
    slots_ = cfg_.n / cfg_.k;
    vocab_ = 1 << cfg_.k;
    modes_ = build_modes(cfg_);
  }

  Bitseq(BitseqConfig cfg, ModeSet modes) : Bitseq(cfg) {
    require(modes.length() == cfg_.n, "Bitseq: mode length mismatch");
    modes_ = std::move(modes);
  }

  const BitseqConfig& config() const { return cfg_; }
  const ModeSet& modes() const { return modes_; }
  int slots() const { return slots_; }
  int vocab() const { return vocab_; }
  int empty_word() const { return vocab_; }

  State initial() const { return {std::vector<int>(slots_, vocab_)}; }

  bool is_terminal(const State& s) const {
    for (int w : s.words)
      if (w == vocab_) return false;
    return true;
  }

  int num_actions() const { return slots_ * vocab_; }
  int max_children() const { return slots_ * vocab_; }

  Mask mask(const State& s) const {
    Mask m(num_actions(), 0);
    for (int slot = 0; slot < slots_; ++slot)
      if (s.words[slot] == vocab_) std::fill_n(m.begin() + slot * vocab_, vocab_, 1);
    return m;
  }

  State step(const State& s, int action) const {
    require(action >= 0 && action < num_actions(), "step: action out of range");
    const int slot = action / vocab_;
    require(s.words[slot] == vocab_, "step: slot already filled");
    State next = s;
    next.words[slot] = action % vocab_;
    return next;
  }

  std::vector<Edge<State>> children(const State& s) const {
    require(!is_terminal(s), "children: terminal state");
    std::vector<Edge<State>> out;
    for (int slot = 0; slot < slots_; ++slot) {
      if (s.words[slot] != vocab_) continue;
      for (int w = 0; w < vocab_; ++w) {
        State c = s;
        c.words[slot] = w;
        out.push_back({slot * vocab_ + w, std::move(c)});
      }
    }
    return out;
  }

  std::vector<Edge<State>> parents(const State& s) const {
    std::vector<Edge<State>> out;
    for (int slot = 0; slot < slots_; ++slot) {
      if (s.words[slot] == vocab_) continue;
      State p = s;
      p.words[slot] = vocab_;
      out.push_back({slot * vocab_ + s.words[slot], std::move(p)});
    }
    require(!out.empty(), "parents: initial state has no parents");
    return out;
  }

  int num_parents(const State& s) const {
    int n = 0;
    for (int w : s.words) n += w != vocab_;
    require(n > 0, "num_parents: initial state has no parents");
    return n;
  }

  /// n/k one-hot blocks of width 2^k + 1; the last column of each block is the
  /// empty word.
  int encoding_size() const { return slots_ * (vocab_ + 1); }

  void encode_into(const State& s, std::span<double> out) const {
    require(static_cast<int>(out.size()) == encoding_size(), "encode: size mismatch");
    std::fill(out.begin(), out.end(), 0.0);
    for (int slot = 0; slot < slots_; ++slot) out[slot * (vocab_ + 1) + s.words[slot]] = 1.0;
  }

  std::string key(const State& s) const {
    std::string k(s.words.size() * 2, '\0');
    for (std::size_t i = 0; i < s.words.size(); ++i) {
      k[2 * i] = static_cast<char>(s.words[i] & 0xff);
      k[2 * i + 1] = static_cast<char>((s.words[i] >> 8) & 0xff);
    }
    return k;
  }

  /// Bit string for terminal states; "_" marks an empty slot otherwise.
  std::string describe(const State& s) const {
    if (is_terminal(s)) return bits_to_string(to_bits(s));
    std::string out;
    for (int w : s.words) {
      if (w == vocab_) {
        out += std::string(cfg_.k, '_');
        continue;
      }
      for (int j = cfg_.k - 1; j >= 0; --j) out += ((w >> j) & 1) ? '1' : '0';
    }
    return out;
  }

  BitString to_bits(const State& s) const {
    require(is_terminal(s), "to_bits: state is not terminal");
    BitString b(cfg_.n);
    for (int slot = 0; slot < slots_; ++slot)
      for (int j = 0; j < cfg_.k; ++j) b[slot * cfg_.k + j] = (s.words[slot] >> (cfg_.k - 1 - j)) & 1;
    return b;
  }

  State from_bits(const BitString& b) const {
    require(static_cast<int>(b.size()) == cfg_.n, "from_bits: length mismatch");
    State s{std::vector<int>(slots_, 0)};
    for (int slot = 0; slot < slots_; ++slot)
      for (int j = 0; j < cfg_.k; ++j) s.words[slot] = (s.words[slot] << 1) | b[slot * cfg_.k + j];
    return s;
  }

  double reward(const BitString& x) const {
    require(static_cast<int>(x.size()) == cfg_.n, "reward: length mismatch");
    return std::exp(-2.0 * modes_.min_distance(x));
  }

  double log_reward(const State& s) const {
    return -2.0 * modes_.min_distance(to_bits(s));
  }

  double state_count() const { return std::pow(static_cast<double>(vocab_ + 1), slots_); }

 private:
  BitseqConfig cfg_;
  int slots_ = 0;
  int vocab_ = 0;
  ModeSet modes_;
};

static_assert(Environment<Bitseq>);

}  // namespace gfn
