#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>

namespace lowrank {

// splitmix64, used to derive independent stream seeds from a base seed.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> tags) {
    std::uint64_t s = splitmix64(base);
    for (auto t : tags) s = splitmix64(s ^ (t + 0x9e3779b97f4a7c15ull));
    return s;
}

// Deterministic RNG stream. std::mt19937_64 is fully specified by the standard;
// the distributions below are hand-rolled because std::normal_distribution is
// implementation-defined and would break bit-identical traces across platforms.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    double uniform() {  // [0, 1)
        return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Box-Muller. The sine partner is discarded to keep the stream stateless.
    double normal() {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

    double normal(double mean, double std) { return mean + std * normal(); }

    std::uint64_t integer(std::uint64_t n) {  // [0, n), unbiased enough for episode draws
        return gen_() % n;
    }

  private:
    std::mt19937_64 gen_;
};

}  // namespace lowrank
