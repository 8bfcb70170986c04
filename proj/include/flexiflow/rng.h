//
// SPDX-License-Identifier: Apache-2.0
//

#ifndef FLEXIFLOW_RNG_H_
#define FLEXIFLOW_RNG_H_

#include <cstdint>
#include <random>
#include <sstream>
#include <string>

namespace flexiflow {

/// Seeded random stream. Callers own their Rng; independent streams are
/// derived with `derive` so parallel work never shares state.
class Rng {
public:
  explicit Rng(std::uint64_t seed = 42): seed_(seed), engine_(mix(seed)) { }

  std::uint64_t seed() const { return seed_; }

  double uniform() { return std::uniform_real_distribution<double>()(engine_); }

  double uniform(double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(engine_);
  }

  double normal() { return std::normal_distribution<double>()(engine_); }

  double normal(double mean, double stddev) {
    return std::normal_distribution<double>(mean, stddev)(engine_);
  }

  /// Beta(alpha, beta) via the ratio of two gamma variates.
  double beta(double alpha, double beta) {
    const double a = std::gamma_distribution<double>(alpha, 1.0)(engine_);
    const double b = std::gamma_distribution<double>(beta, 1.0)(engine_);
    return a / (a + b);
  }

  /// Uniform integer in [0, n).
  int index(int n) { return std::uniform_int_distribution<int>(0, n - 1)(engine_); }

  std::uint64_t next_u64() { return engine_(); }

  /// A child stream that depends only on this stream's seed and `key`.
  Rng derive(std::uint64_t key) const { return Rng(mix(seed_ ^ mix(key + 1))); }

  std::mt19937_64 &engine() { return engine_; }

  std::string state() const {
    std::ostringstream os;
    os << engine_;
    return os.str();
  }

  void set_state(const std::string &state) {
    std::istringstream is(state);
    is >> engine_;
  }

  /// SplitMix64 finalizer.
  static std::uint64_t mix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

}  // namespace flexiflow

#endif  // FLEXIFLOW_RNG_H_
