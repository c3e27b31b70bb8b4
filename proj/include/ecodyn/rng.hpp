#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>

namespace ecodyn {

/// 64-bit FNV-1a hash, used to turn labels into stream keys.
std::uint64_t fnv1a(std::string_view text);

/// Derives an independent stream seed from a root seed and a sequence of keys
/// (country, model, run, ...) by SplitMix64 chaining. The result depends only
/// on the key values, never on scheduling.
std::uint64_t derive_seed(std::uint64_t root, std::initializer_list<std::uint64_t> keys);

/// Seeded random stream with platform-independent uniform and normal draws.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Standard normal via Box-Muller (the second variate is cached).
  double normal();
  double normal(double mean, double sd) { return mean + sd * normal(); }

 private:
  std::mt19937_64 engine_;
  double cached_ = 0.0;
  bool has_cached_ = false;
};

}  // namespace ecodyn
