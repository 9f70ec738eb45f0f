#pragma once

#include <cstddef>
#include <cstdint>
#include <random>

#include "retarget/quat.hpp"

namespace retarget {

// Independent stream seed for (seed, stream); used wherever work is split by
// index so results do not depend on how the work is scheduled.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) noexcept;

// Thin wrapper over mt19937_64 with distribution code that does not depend
// on the standard library implementation.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  // Uniform in [0, 1).
  double uniform();
  double uniform(double lo, double hi);
  // Uniform in [0, n). n must be positive.
  std::size_t index(std::size_t n);
  bool coin(double p_true);
  // Uniform direction on the unit sphere.
  Vec3 unit_vector();

 private:
  std::mt19937_64 engine_;
};

}  // namespace retarget
