#include "qpolicy/intrt.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace qp {

namespace {

// count of thresholds <= acc; binary search for larger tables
i64 threshold_count(const std::vector<i64>& t, i64 acc) {
    if (t.size() <= 8) {
        i64 n = 0;
        for (i64 v : t) {
            if (acc >= v) ++n;
            else break;
        }
        return n;
    }
    return std::upper_bound(t.begin(), t.end(), acc) - t.begin();
}

}  // namespace

IntRunResult run_integer_normalized(const IntegerGraph& g, std::span<const double> z_raw) {
    if (z_raw.size() != g.obs_dim()) throw std::invalid_argument("run_integer: obs dim mismatch");

    IntRunResult out;
    std::vector<i64> x(z_raw.size());
    for (std::size_t i = 0; i < z_raw.size(); ++i) {
        double z = std::clamp(z_raw[i], -g.obs_clip, g.obs_clip);
        x[i] = quantize_int(z, g.input_spec);
    }
    out.trace.codes.push_back(x);

    for (const IntLayer& L : g.layers) {
        if (x.size() != L.fan_in()) throw std::invalid_argument("run_integer: graph shape mismatch");
        const i64 acc_lo = -(i64(1) << (L.acc_bits - 1));
        const i64 acc_hi = (i64(1) << (L.acc_bits - 1)) - 1;
        std::vector<i64> y(L.fan_out());
        for (std::size_t r = 0; r < L.fan_out(); ++r) {
            i64 acc = 0;
            const auto& wr = L.int_weights[r];
            for (std::size_t c = 0; c < wr.size(); ++c) {
                i64 prod, sum;
                if (__builtin_mul_overflow(wr[c], x[c], &prod) ||
                    __builtin_add_overflow(acc, prod, &sum))
                    throw std::runtime_error("run_integer: 64-bit accumulator overflow");
                acc = sum;
            }
            if (acc < acc_lo || acc > acc_hi)
                throw std::runtime_error(
                    "run_integer: accumulator exceeds acc_bits (accumulator_bits bug)");
            i64 code = L.out_spec.q_min() + threshold_count(L.thresholds[r], acc);
            if (code < L.out_spec.q_min() || code > L.out_spec.q_max())
                throw std::runtime_error("run_integer: activation out of range");
            y[r] = code;
        }
        out.trace.codes.push_back(y);
        x = std::move(y);
    }

    const QuantSpec& os = g.layers.back().out_spec;
    out.action.resize(x.size());
    for (std::size_t i = 0; i < x.size(); ++i)
        out.action[i] = g.tanh_lut[static_cast<std::size_t>(x[i] - os.q_min())];
    return out;
}

IntRunResult run_integer(const IntegerGraph& g, std::span<const double> obs) {
    std::vector<double> z(obs.size());
    g.norm.normalize(obs, z);
    return run_integer_normalized(g, z);
}

i64 count_macs(const IntegerGraph& g) {
    i64 n = 0;
    for (const auto& l : g.layers)
        n += static_cast<i64>(l.fan_out()) * static_cast<i64>(l.fan_in());
    return n;
}

u64 checksum(const IntegerGraph& g) {
    Fnv1a h;
    h.update_str("qpolicy.graph");
    h.update_i64(g.input_spec.bits);
    h.update_i64(g.input_spec.sgn == Signedness::Signed ? 1 : 0);
    h.update_double(g.input_spec.scale);
    h.update_double(g.obs_clip);
    h.update_double(g.norm.count);
    for (double v : g.norm.mean) h.update_double(v);
    for (double v : g.norm.m2) h.update_double(v);
    for (const auto& l : g.layers) {
        h.update_i64(static_cast<i64>(l.fan_out()));
        h.update_i64(static_cast<i64>(l.fan_in()));
        h.update_i64(l.acc_bits);
        h.update_i64(l.out_spec.bits);
        h.update_i64(l.out_spec.sgn == Signedness::Signed ? 1 : 0);
        h.update_double(l.out_spec.scale);
        for (const auto& row : l.int_weights)
            for (i64 w : row) h.update_i64(w);
        for (const auto& row : l.thresholds)
            for (i64 t : row) h.update_i64(t);
    }
    for (double v : g.tanh_lut) h.update_double(v);
    return h.digest();
}

}  // namespace qp
