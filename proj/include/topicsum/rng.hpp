#ifndef TOPICSUM_RNG_HPP
#define TOPICSUM_RNG_HPP

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace topicsum {

/**
 * Deterministic random source. std::mt19937_64 produces a portable bit
 * stream, but the standard library distributions do not, so the value
 * conversions are done by hand to keep outputs byte-stable across
 * platforms and standard library versions.
 */
class Rng {
public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  // uniform in [0, 1)
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // standard normal via Box-Muller
  double normal() {
    double u1 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  // integer in [0, n)
  std::size_t below(std::size_t n) { return n == 0 ? 0 : next_u64() % n; }

  // Fisher-Yates; std::shuffle is implementation-defined, this is not.
  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[below(i)]);
    }
  }

private:
  std::mt19937_64 gen_;
};

}  // namespace topicsum

#endif  // TOPICSUM_RNG_HPP
