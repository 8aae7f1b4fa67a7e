#ifndef DFQ_RANDOM_HPP
#define DFQ_RANDOM_HPP

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>

namespace dfq {

/// Seeded random source. Draws are built from raw 64-bit engine output so a
/// seed reproduces the same stream regardless of standard-library
/// distribution implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

    /// Independent child seed for a (seed, stream...) tuple, e.g. (seed, epoch, batch).
    static std::uint64_t derive(std::uint64_t seed, std::initializer_list<std::uint64_t> streams) {
        std::uint64_t h = splitmix(seed);
        for (std::uint64_t s : streams) h = splitmix(h ^ splitmix(s + 0x632be59bd9b4e019ULL));
        return h;
    }

    std::uint64_t next() { return engine_(); }

    /// Uniform in [0, 1).
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    bool bernoulli(double p) { return uniform() < p; }

    /// Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n) {
        // rejection sampling removes modulo bias
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x = engine_();
        while (x >= limit) x = engine_();
        return x % n;
    }

    /// Approximately standard normal (Box-Muller).
    double normal();

private:
    static std::uint64_t splitmix(std::uint64_t x) {
        x += 0x9e3779b97f4a7c15ULL;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
        return x ^ (x >> 31);
    }

    std::mt19937_64 engine_;
};

inline double Rng::normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

}  // namespace dfq

#endif  // DFQ_RANDOM_HPP
