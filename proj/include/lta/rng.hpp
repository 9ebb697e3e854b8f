#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace lta {

// Deterministic RNG. Wraps mt19937_64 but performs all variate transforms
// by hand so that draws are reproducible across standard libraries.
class Rng {
  public:
    explicit Rng(uint64_t seed) : gen_(seed) {}

    uint64_t next_u64() { return gen_(); }

    // Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Unbiased integer in [0, n) via rejection.
    uint64_t uniform_int(uint64_t n) {
        const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        uint64_t x;
        do {
            x = gen_();
        } while (x >= limit);
        return x % n;
    }

    bool coin() { return (gen_() & 1u) != 0; }

    // Standard normal via Box-Muller; caches the second variate.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * 3.14159265358979323846 * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

  private:
    std::mt19937_64 gen_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

namespace detail {
inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}
}  // namespace detail

// Derives an independent substream seed from a master seed and a tag.
// Same inputs always give the same seed; used so every phase of the
// pipeline is independently reproducible.
inline uint64_t substream(uint64_t master, std::string_view tag) {
    uint64_t h = 0xcbf29ce484222325ull;  // FNV-1a
    for (char c : tag) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ull;
    }
    return detail::splitmix64(master ^ detail::splitmix64(h));
}

inline uint64_t substream(uint64_t master, std::string_view tag, uint64_t a) {
    return detail::splitmix64(substream(master, tag) ^ detail::splitmix64(a + 0x51ed2701ull));
}

inline uint64_t substream(uint64_t master, std::string_view tag, uint64_t a, uint64_t b) {
    return detail::splitmix64(substream(master, tag, a) ^
                              detail::splitmix64(b + 0x2545f491ull));
}

}  // namespace lta
