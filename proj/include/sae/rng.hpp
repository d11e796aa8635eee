#ifndef SAE_RNG_HPP
#define SAE_RNG_HPP

#include <cmath>
#include <cstdint>

namespace sae {

// SplitMix64: fast, well-mixed, and identical on every platform, so simulated
// studies reproduce bit for bit from the seed alone.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

 private:
  std::uint64_t state_;
};

// Counter-mix seed derivation: replicate b of a study uses mix_seed(base, b),
// so any subset of replicates can be re-run in isolation.
inline std::uint64_t mix_seed(std::uint64_t base, std::uint64_t counter) {
  SplitMix64 gen(base ^ (0x632BE59BD9B4E019ULL + 0x9E3779B97F4A7C15ULL * counter));
  gen.next();
  return gen.next();
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  // uniform on [0, 1)
  double uniform() {
    return static_cast<double>(gen_.next() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // standard normal via Box-Muller; the paired draw is cached
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 6.283185307179586476925287 * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

  double normal(double mean, double sd) { return mean + sd * normal(); }

 private:
  SplitMix64 gen_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace sae

#endif
