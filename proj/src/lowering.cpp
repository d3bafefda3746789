#include "qpolicy/lowering.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "qpolicy/intrt.hpp"

namespace qp {

namespace {

// round_half_even((a + bias)*m) as a function of the integer accumulator,
// evaluated in int128 to match the fake-quant path exactly
double requant_at(i64 a, i64 bias_int, double m) {
    return requant_raw(static_cast<i128>(a) + bias_int, m);
}

}  // namespace

std::vector<i64> compute_thresholds(double m, i64 bias_int, const QuantSpec& out_spec) {
    if (!(m > 0.0) || !std::isfinite(m))
        throw std::invalid_argument("compute_thresholds: requant multiplier must be positive");
    const i64 lo = out_spec.q_min(), hi = out_spec.q_max();
    const i64 count = hi - lo;  // 2^b - 1 thresholds
    std::vector<i64> t;
    t.reserve(static_cast<std::size_t>(count));
    for (i64 k = 1; k <= count; ++k) {
        const double target = static_cast<double>(lo + k);
        // analytic seed, then walk to the exact flip point of the shared
        // rounding function (absorbs FP error and tie parity)
        double seed_f = std::ceil((target - 0.5) / m) - static_cast<double>(bias_int);
        i64 a = static_cast<i64>(std::llround(seed_f));
        while (requant_at(a, bias_int, m) >= target) --a;
        while (requant_at(a, bias_int, m) < target) ++a;
        t.push_back(a);
    }
    for (std::size_t i = 1; i < t.size(); ++i)
        if (t[i] < t[i - 1]) throw std::logic_error("compute_thresholds: non-monotone table");
    return t;
}

int accumulator_bits(const std::vector<std::vector<i64>>& int_weights, const QuantSpec& in_spec,
                     const std::vector<i64>& bias_codes) {
    const i64 xmax = std::max(std::llabs(in_spec.q_min()), std::llabs(in_spec.q_max()));
    int bits = 2;
    for (std::size_t i = 0; i < int_weights.size(); ++i) {
        i128 amax = 0;
        for (i64 w : int_weights[i]) amax += static_cast<i128>(std::llabs(w)) * xmax;
        if (!bias_codes.empty()) {
            i64 b = bias_codes[i];
            amax += static_cast<i128>(b < 0 ? -b : b);
        }
        int n = 2;
        while (amax > (static_cast<i128>(1) << (n - 1)) - 1) ++n;
        bits = std::max(bits, n);
    }
    return bits;
}

std::vector<double> build_tanh_lut(const QuantSpec& out_spec) {
    if (out_spec.sgn != Signedness::Signed)
        throw std::invalid_argument("build_tanh_lut: output spec must be signed");
    std::vector<double> lut;
    lut.reserve(static_cast<std::size_t>(out_spec.q_max() - out_spec.q_min() + 1));
    for (i64 k = out_spec.q_min(); k <= out_spec.q_max(); ++k)
        lut.push_back(odd_tanh(out_spec.step() * static_cast<double>(k)));
    return lut;
}

IntegerGraph lower(const PolicyNet& net) {
    if (!net.frozen) throw std::logic_error("lower: net must be frozen (scales fixed)");
    if (!net.quantized) throw std::logic_error("lower: net has no quantizers");

    IntegerGraph g;
    g.norm = net.norm;
    g.obs_clip = net.obs_clip;
    g.input_spec = net.input_q.spec;

    QuantSpec in_spec = net.input_q.spec;
    for (std::size_t li = 0; li < net.layers.size(); ++li) {
        const LayerParams& L = net.layers[li];
        const double w_scale = net.frozen_w_scales[li];
        QuantSpec wspec{L.weight_bits, Signedness::Signed, w_scale};
        const std::size_t out = L.fan_out(), in = L.fan_in();

        IntLayer il;
        il.out_spec = L.out_q.spec;
        il.int_weights.assign(out, std::vector<i64>(in, 0));
        for (std::size_t r = 0; r < out; ++r)
            for (std::size_t c = 0; c < in; ++c)
                il.int_weights[r][c] = quantize_int(L.W.at(r, c), wspec);

        const double delta =
            in_spec.scale * w_scale /
            (static_cast<double>(in_spec.q_s()) * static_cast<double>(wspec.q_s()));
        BiasQuant bq = quantize_bias(L.b, delta, L.bias_bits);

        const double m = delta * static_cast<double>(il.out_spec.q_s()) / il.out_spec.scale;
        if (!(m > 0.0) || !std::isfinite(m))
            throw std::runtime_error("lower: non-finite requant multiplier");

        il.thresholds.reserve(out);
        for (std::size_t r = 0; r < out; ++r)
            il.thresholds.push_back(compute_thresholds(m, bq.codes[r], il.out_spec));
        il.acc_bits = accumulator_bits(il.int_weights, in_spec, bq.codes);

        g.layers.push_back(std::move(il));
        in_spec = L.out_q.spec;
    }

    g.tanh_lut = build_tanh_lut(net.layers.back().out_q.spec);

    // bit-exactness check against the fake-quant path on a probe set
    PolicyNet probe_net = net;
    Rng probe_rng(0xC0FFEEull ^ (net.obs_dim() * 1315423911ull) ^ net.hidden_width());
    const std::size_t n_probe = 16;
    for (std::size_t p = 0; p < n_probe; ++p) {
        Matrix obs(1, net.obs_dim());
        for (auto& v : obs.data) v = p == 0 ? 0.0 : probe_rng.uniform(-5.0, 5.0);
        ForwardTape t = forward_fakequant(probe_net, obs, /*train=*/false);
        auto want = code_trace(t);
        IntTrace got = run_integer(g, obs.row(0)).trace;
        for (std::size_t l = 0; l < want.size(); ++l)
            if (want[l] != got.codes[l])
                throw std::runtime_error(
                    "lower: integer path disagrees with fake-quant path (rounding or "
                    "scale bookkeeping bug)");
    }
    return g;
}

}  // namespace qp
