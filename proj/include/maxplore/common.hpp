#pragma once

// Shared plumbing: error taxonomy, deterministic rng streams, small helpers.

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace maxplore {

// Malformed or out-of-contract inputs.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Non-finite values or diverging computations.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operation invoked in a state that does not permit it.
class StateError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Deterministic random stream. Sub-streams are derived from the stored seed
// (never from generator state), so derivation order does not matter and the
// full stream tree is reproducible from the master seed alone.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), gen_(splitmix64(seed)) {}

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64() { return gen_(); }

  // [0, 1)
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Box-Muller; second value cached to keep the draw count predictable.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
  }

  double normal(double mu, double sigma) { return mu + sigma * normal(); }

  // [0, n) without distribution-object portability concerns.
  int uniform_int(int n) {
    if (n <= 0) throw ValidationError("uniform_int: n must be positive");
    return static_cast<int>((static_cast<unsigned __int128>(gen_()) *
                             static_cast<unsigned __int128>(n)) >>
                            64);
  }

  std::uint64_t stream_seed(std::string_view name, std::uint64_t index = 0) const {
    return splitmix64(seed_ ^ fnv1a64(name) ^ (0x9e3779b97f4a7c15ULL * (index + 1)));
  }

  Rng stream(std::string_view name, std::uint64_t index = 0) const {
    return Rng(stream_seed(name, index));
  }

 private:
  std::uint64_t seed_;
  std::mt19937_64 gen_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

inline bool all_finite(const std::vector<double>& v) {
  for (double x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

}  // namespace maxplore
