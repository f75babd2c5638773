#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace racl {

// Deterministic RNG wrapper. Normal draws use Box-Muller on the raw engine
// output so the stream depends only on the mt19937_64 state
// (std::normal_distribution caches a spare value and its algorithm is
// implementation-defined, which breaks checkpoint round trips).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  // [0, 1)
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  double normal() {
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kTwoPi * u2);
  }

  std::uint64_t raw() { return eng_(); }

  // unbiased-enough index draw (Lemire multiply-shift)
  std::size_t index(std::size_t n) {
    return static_cast<std::size_t>(
        (static_cast<unsigned __int128>(eng_()) * n) >> 64);
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[index(i)]);
    }
  }

  std::string save() const {
    std::ostringstream os;
    os << eng_;
    return os.str();
  }

  void load(const std::string& state) {
    std::istringstream is(state);
    is >> eng_;
  }

  // Stable per-purpose stream derivation: fold a tag into the seed.
  static std::uint64_t derive(std::uint64_t seed, std::string_view tag) {
    std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
    for (unsigned char c : tag) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
    std::uint64_t z = seed ^ h;
    z += 0x9e3779b97f4a7c15ULL;  // splitmix64 finalizer
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

 private:
  static constexpr double kTwoPi = 6.283185307179586476925286766559;
  std::mt19937_64 eng_;
};

}  // namespace racl
