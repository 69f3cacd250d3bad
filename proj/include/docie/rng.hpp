#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>

namespace docie {

// splitmix64; used to derive per-stage seeds from the single run seed.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view stage) {
  std::uint64_t h = seed;
  for (char c : stage) {
    h ^= static_cast<std::uint64_t>(static_cast<unsigned char>(c));
    splitmix64(h);
  }
  return splitmix64(h);
}

// Small deterministic generator. std::mt19937_64 is portable but the standard
// distributions are not, so uniform/normal are implemented here directly.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed ? seed : 0x5851f42d4c957f2dULL) {}

  std::uint64_t next_u64() { return splitmix64(state_); }

  // uniform in [0, 1)
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // uniform integer in [lo, hi] inclusive
  int uniform_int(int lo, int hi) {
    return lo + static_cast<int>(next_u64() % static_cast<std::uint64_t>(hi - lo + 1));
  }

  bool bernoulli(double p) { return uniform() < p; }

  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 2.0 * M_PI * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
  }

  Rng fork(std::string_view stage) { return Rng(derive_seed(next_u64(), stage)); }

 private:
  std::uint64_t state_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace docie
