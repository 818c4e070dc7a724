#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace fcapm {

// splitmix64; used only to spread a master seed into independent stream seeds
inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// Seed for stream `id` of a master seed. Every (stock, day) pair draws from
// its own stream so results do not depend on loop order or thread schedule.
inline std::uint64_t stream_seed(std::uint64_t master, std::uint64_t id) {
  std::uint64_t s = master + 0x9e3779b97f4a7c15ull * (id + 1);
  return splitmix64(s);
}

inline std::uint64_t stock_day_stream(std::uint64_t stock, std::uint64_t day) {
  return (stock << 32) | day;
}

// mt19937_64 has a standard-pinned output sequence, so the raw 64-bit stream
// is portable. Normals go through Box-Muller on 53-bit uniforms because
// std::normal_distribution is implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  // uniform on (0,1]; never 0 so log() below is safe
  double uniform01() { return double((gen_() >> 11) + 1) * 0x1.0p-53; }

  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    constexpr double two_pi = 6.283185307179586476925286766559;
    double u1 = uniform01();
    double u2 = uniform01();
    double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(two_pi * u2);
    have_spare_ = true;
    return r * std::cos(two_pi * u2);
  }

 private:
  std::mt19937_64 gen_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace fcapm
