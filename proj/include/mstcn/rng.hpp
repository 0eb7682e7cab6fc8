#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace mstcn {

// Deterministic RNG with named sub-streams. All randomness in the project
// flows from one root seed; each concern (data, init, augment, eval, ...)
// derives its own stream so toggling one feature does not shift another's
// draws. Distributions are hand-rolled on top of mt19937_64 raw output so
// results do not depend on the standard library's distribution internals.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  // Sub-stream derivation: root seed mixed with a stream name and index.
  static Rng stream(std::uint64_t root, std::string_view name,
                    std::uint64_t index = 0) {
    std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
    for (char c : name) {
      h ^= static_cast<unsigned char>(c);
      h *= 0x100000001b3ULL;
    }
    return Rng(splitmix(splitmix(root ^ h) + index));
  }

  std::uint64_t next_u64() { return eng_(); }

  // [0, 1)
  double uniform() {
    return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // [0, n), n > 0. Rejection sampling keeps the draw unbiased.
  std::uint64_t uniform_int(std::uint64_t n) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
      x = eng_();
    } while (x >= limit);
    return x % n;
  }

  // Standard normal via Box-Muller.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1, u2;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  bool bernoulli(double p) { return uniform() < p; }

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[uniform_int(i)]);
    }
  }

 private:
  static std::uint64_t splitmix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  }

  std::mt19937_64 eng_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace mstcn
