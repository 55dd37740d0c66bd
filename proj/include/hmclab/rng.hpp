#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

#include "hmclab/types.hpp"

namespace hmclab {

/// Counter-based random stream: the k-th output word is a pure function of
/// (seed, stream, k), so identical seeds reproduce trajectories bit-for-bit
/// and disjoint streams can be handed to replicas without coordination.
///
/// Each Gaussian consumes exactly two words, each uniform exactly one, which
/// makes draw accounting (`words_used`, `normals_drawn`) exact.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed, std::uint64_t stream = 0)
      : key1_(mix(seed ^ 0x9e3779b97f4a7c15ull)),
        key2_(mix(mix(seed + 0x6a09e667f3bcc909ull) ^ stream)),
        seed_(seed),
        stream_(stream) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }

  /// Independent stream derived from this one; replica i of a parallel
  /// experiment should use substream(i).
  RngStream substream(std::uint64_t i) const {
    return RngStream(seed_, mix(stream_ ^ mix(i + 0x2545f4914f6cdd1dull)));
  }

  std::uint64_t next_u64() { return word(counter_++); }

  /// Uniform in [0, 1), 53-bit resolution.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double a, double b) { return a + (b - a) * uniform(); }

  /// Standard normal via Box-Muller; always consumes two words.
  double normal() {
    const double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;  // (0, 1]
    const double u2 = uniform();
    ++normals_;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  Vec normal_vector(Eigen::Index d) {
    Vec g(d);
    for (Eigen::Index i = 0; i < d; ++i) g[i] = normal();
    return g;
  }

  std::uint64_t words_used() const { return counter_; }
  std::uint64_t normals_drawn() const { return normals_; }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z ^= z >> 33;
    z *= 0xff51afd7ed558ccdull;
    z ^= z >> 33;
    z *= 0xc4ceb9fe1a85ec53ull;
    z ^= z >> 33;
    return z;
  }

  std::uint64_t word(std::uint64_t i) const {
    return mix(mix(i * 0x9e3779b97f4a7c15ull + key1_) ^ key2_);
  }

  std::uint64_t key1_;
  std::uint64_t key2_;
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t counter_ = 0;
  std::uint64_t normals_ = 0;
};

}  // namespace hmclab
