#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace paser {

/// Counter-based deterministic random stream (splitmix64 core).
///
/// Streams are cheap values: `split(tag)` derives an independent child stream
/// without advancing the parent, so per-sample / per-epoch substreams can be
/// handed out in any order (or across threads) and still reproduce bit-exactly.
/// All stochastic code in this project draws from an explicitly passed Rng;
/// nothing reads global state.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(mix(seed + kGolden)) {}

  std::uint64_t next_u64() {
    state_ += kGolden;
    return mix(state_);
  }

  /// Child stream keyed by an integer tag; the parent is not advanced.
  Rng split(std::uint64_t tag) const {
    Rng child(0);
    child.state_ = mix(state_ ^ mix(tag + 0xD6E8FEB86659FD93ull));
    return child;
  }

  /// Child stream keyed by a label (FNV-1a hash of the bytes).
  Rng split(std::string_view label) const {
    std::uint64_t h = 0xCBF29CE484222325ull;
    for (unsigned char c : label) {
      h ^= c;
      h *= 0x100000001B3ull;
    }
    return split(h);
  }

  /// Uniform double in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Standard normal via Box-Muller. Implemented directly (not via
  /// std::normal_distribution, whose output is implementation-defined).
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  /// Uniform integer in [0, n).
  int uniform_int(int n) {
    int v = static_cast<int>(uniform() * n);
    return v >= n ? n - 1 : v;
  }

 private:
  static constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ull;
  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  std::uint64_t state_;
};

}  // namespace paser
