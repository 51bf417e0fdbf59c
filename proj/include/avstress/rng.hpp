#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace avstress {

// All randomness flows through Rng. mt19937_64's output sequence is fixed by
// the standard; the floating-point conversions below are done by hand so that
// results do not depend on the standard library's distribution classes.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  double normal();

  friend bool operator==(const Rng&, const Rng&) = default;

 private:
  std::mt19937_64 engine_;
};

std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);

// stream = hash(master_seed, label, index). Every derived RNG stream in the
// toolkit is obtained this way.
std::uint64_t derive_seed(std::uint64_t master_seed, std::string_view label, std::uint64_t index = 0);

inline Rng derive_rng(std::uint64_t master_seed, std::string_view label, std::uint64_t index = 0) {
  return Rng(derive_seed(master_seed, label, index));
}

}  // namespace avstress
