#pragma once

#include <algorithm>
#include <cmath>
#include <charconv>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace qp {

using i64 = std::int64_t;
using u64 = std::uint64_t;
using i128 = __int128;

// Round-half-to-even, independent of the FP environment's rounding mode.
// One rounding rule shared by the fake-quant and integer paths.
inline double round_half_even(double x) {
    const double fl = std::floor(x);
    const double diff = x - fl;
    if (diff > 0.5) return fl + 1.0;
    if (diff < 0.5) return fl;
    // exact tie: pick the even neighbor
    return (std::fmod(fl, 2.0) == 0.0) ? fl : fl + 1.0;
}

// Odd-symmetric tanh. Both the fake-quant forward and the lookup table
// builder go through this so their outputs agree bitwise.
inline double odd_tanh(double x) {
    return x < 0.0 ? -std::tanh(-x) : std::tanh(x);
}

// Shortest decimal string that round-trips the double exactly.
inline std::string dtos(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline double stod_exact(const std::string& s) {
    double v = 0.0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
        throw std::invalid_argument("bad numeric string: '" + s + "'");
    return v;
}

// FNV-1a 64-bit, used for content hashes and graph checksums.
struct Fnv1a {
    u64 h = 1469598103934665603ull;
    void update(const void* data, std::size_t n) {
        const auto* p = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < n; ++i) {
            h ^= p[i];
            h *= 1099511628211ull;
        }
    }
    void update_str(const std::string& s) { update(s.data(), s.size()); }
    void update_i64(i64 v) { update(&v, sizeof(v)); }
    void update_double(double v) { update(&v, sizeof(v)); }
    u64 digest() const { return h; }
};

inline std::string hex64(u64 v) {
    char buf[17];
    static const char* k = "0123456789abcdef";
    for (int i = 15; i >= 0; --i) { buf[i] = k[v & 0xf]; v >>= 4; }
    buf[16] = '\0';
    return std::string(buf);
}

// Linear-interpolated percentile (p in [0,100]) of a copy of the data.
inline double percentile(std::vector<double> v, double p) {
    if (v.empty()) throw std::invalid_argument("percentile of empty set");
    std::sort(v.begin(), v.end());
    if (v.size() == 1) return v[0];
    double rank = p / 100.0 * static_cast<double>(v.size() - 1);
    auto lo = static_cast<std::size_t>(std::floor(rank));
    auto hi = std::min(lo + 1, v.size() - 1);
    double frac = rank - static_cast<double>(lo);
    return v[lo] + frac * (v[hi] - v[lo]);
}

inline double mean_of(const std::vector<double>& v) {
    if (v.empty()) return 0.0;
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

// Sample standard deviation (ddof=1); 0 for fewer than two points.
inline double stddev_of(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    double m = mean_of(v), s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size() - 1));
}

}  // namespace qp
