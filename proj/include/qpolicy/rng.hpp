#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "qpolicy/util.hpp"

namespace qp {

inline u64 splitmix64(u64& state) {
    u64 z = (state += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

// Derive an independent stream seed from a base seed and a stream tag.
inline u64 derive_seed(u64 base, u64 stream) {
    u64 s = base ^ (0x9e3779b97f4a7c15ull * (stream + 1));
    return splitmix64(s);
}

// Deterministic RNG. mt19937_64 is bit-exact across platforms; the
// distributions here are hand-rolled because the std ones are not.
class Rng {
public:
    explicit Rng(u64 seed) : eng_(seed) {}

    u64 next_u64() { return eng_(); }

    // uniform in [0, 1)
    double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // uniform integer in [lo, hi] inclusive
    i64 uniform_int(i64 lo, i64 hi) {
        u64 span = static_cast<u64>(hi - lo) + 1;
        if (span == 0) return static_cast<i64>(eng_());  // full 64-bit range
        u64 limit = UINT64_MAX - UINT64_MAX % span;
        u64 v;
        do { v = eng_(); } while (v >= limit);
        return lo + static_cast<i64>(v % span);
    }

    // standard normal via Box-Muller; the spare value is cached
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = (static_cast<double>(eng_() >> 11) + 1.0) * 0x1.0p-53;  // (0, 1]
        double u2 = static_cast<double>(eng_() >> 11) * 0x1.0p-53;
        double r = std::sqrt(-2.0 * std::log(u1));
        double t = 2.0 * 3.14159265358979323846 * u2;
        spare_ = r * std::sin(t);
        has_spare_ = true;
        return r * std::cos(t);
    }

    double normal(double mean, double std) { return mean + std * normal(); }

private:
    std::mt19937_64 eng_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace qp
