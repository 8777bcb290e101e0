#ifndef VSTAIN_RNG_HPP
#define VSTAIN_RNG_HPP

#include <cmath>
#include <cstdint>

namespace vstain {

// Counter-based deterministic generator. Every draw is a pure function of the
// key tuple, so draws are bit-reproducible regardless of evaluation order and
// a subset of keys always yields the identical subset of values. Keys absorb
// components sequentially through a splitmix64-style avalanche.
struct Rng {
    static constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ull;

    static std::uint64_t mix(std::uint64_t z) {
        z += kGolden;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    std::uint64_t state;

    explicit Rng(std::uint64_t seed) : state(mix(seed)) {}

    // derive an independent stream; used for (run, step, sample, ...) lineage
    Rng fork(std::uint64_t component) const { return Rng::from_state(mix(state ^ component)); }

    std::uint64_t bits(std::uint64_t counter) const { return mix(state ^ mix(counter ^ 0x5bf0363546e32745ull)); }

    // uniform in (0, 1]; never returns 0 so log() below is safe
    double uniform(std::uint64_t counter) const {
        return (static_cast<double>(bits(counter) >> 11) + 1.0) * 0x1.0p-53;
    }

    // one standard normal per counter via Box-Muller (cosine branch)
    double gaussian(std::uint64_t counter) const {
        const std::uint64_t h = bits(counter);
        const double u1 = (static_cast<double>(h >> 32) + 1.0) * 0x1.0p-32;      // (0,1]
        const double u2 = static_cast<double>(h & 0xffffffffull) * 0x1.0p-32;    // [0,1)
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
    }

    // uniform integer in [0, n)
    std::uint64_t below(std::uint64_t counter, std::uint64_t n) const { return bits(counter) % n; }

private:
    static Rng from_state(std::uint64_t s) {
        Rng r(0);
        r.state = s;
        return r;
    }
};

} // namespace vstain

#endif
