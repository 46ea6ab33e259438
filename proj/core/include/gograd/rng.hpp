#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace gograd {

// Finalizer from the splitmix64 generator; used to turn seeds and stream
// indices into well-mixed engine states.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Seeded random stream with counter-based splitting. Substreams derived from
// the same (seed, index) pair are identical across runs and thread layouts,
// so parallel loops stay reproducible as long as each task owns its index.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed)
      : root_(seed), engine_(splitmix64(seed)) {}

  RngStream substream(std::uint64_t index) const {
    return RngStream(splitmix64(root_ ^ (0x9e3779b97f4a7c15ull * (index + 1))));
  }

  std::uint64_t seed() const { return root_; }

  std::uint64_t next_u64() { return engine_(); }

  // Uniform on the open interval (0, 1); never returns 0 or 1, so log(u)
  // and log1p(-u) are always finite.
  double uniform() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  // Standard normal via Box-Muller (cosine branch only, no cached state).
  double normal() {
    const double u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(kTwoPi * u2);
  }

 private:
  static constexpr double kTwoPi = 6.283185307179586476925286766559;
  std::uint64_t root_;
  std::mt19937_64 engine_;
};

}  // namespace gograd
