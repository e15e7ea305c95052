#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace xflood {

/// Seeded 64-bit generator with distribution helpers that do not depend on the
/// standard library's distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) { return n == 0 ? 0 : engine_() % n; }

  double normal();

  /// Seed derived from a base seed and a label, so independent streams stay stable
  /// when unrelated streams are added.
  static std::uint64_t derive(std::uint64_t seed, std::string_view label);

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace xflood
