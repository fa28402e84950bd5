#pragma once

#include <cstddef>
#include <cstdint>
#include <random>

namespace svtr {

std::uint64_t splitmix64(std::uint64_t x);

/// Uniform [0,1) that depends only on (seed, stream, index).
double counter_uniform(std::uint64_t seed, std::uint64_t stream, std::uint64_t index);

/// Seeded generator whose draws are identical across standard libraries
/// (std distributions are implementation-defined, the engine is not).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// [0, 1)
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// [0, n)
  std::size_t index(std::size_t n);
  double normal();
  /// Normal(0, sigma) redrawn until within two sigma.
  double truncated_normal(double sigma);

  template <typename It>
  void shuffle(It first, It last) {
    const auto n = static_cast<std::size_t>(last - first);
    for (std::size_t i = n; i > 1; --i) std::swap(first[i - 1], first[index(i)]);
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace svtr
