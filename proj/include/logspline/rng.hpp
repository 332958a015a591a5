#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace logspline {

/// splitmix64 finalizer; the 64-bit mixing function used for every seed derivation.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// FNV-1a over a label, so string labels can enter seed derivation.
constexpr std::uint64_t hash_label(std::string_view label) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : label) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Derives an independent stream seed from a root seed and a tuple of labels.
constexpr std::uint64_t derive_seed(std::uint64_t root, std::string_view label, std::uint64_t a = 0,
                                    std::uint64_t b = 0) noexcept {
  std::uint64_t s = mix64(root ^ hash_label(label));
  s = mix64(s ^ mix64(a + 0x632be59bd9b4e019ULL));
  s = mix64(s ^ mix64(b + 0x8cb92ba72f3d8dd7ULL));
  return s;
}

/// Seeded random stream. The engine is std::mt19937_64, whose output sequence is fixed by
/// the standard; the transforms below are written out so draws are identical across
/// standard library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform on (0, 1).
  double uniform_open() {
    double u;
    do {
      u = uniform();
    } while (u == 0.0);
    return u;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return x % n;
  }

  /// Standard normal via the Marsaglia polar method.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * uniform() - 1.0;
      v = 2.0 * uniform() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double f = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * f;
    has_spare_ = true;
    return u * f;
  }

  /// Chi-square with `dof` degrees of freedom for integer dof (sum of squared normals).
  double chi_square(int dof) {
    double acc = 0.0;
    for (int i = 0; i < dof; ++i) {
      const double z = normal();
      acc += z * z;
    }
    return acc;
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace logspline
