#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "qpolicy/util.hpp"

namespace qp {

// Floor for every scale; keeps dead channels from dividing by zero.
inline constexpr double kScaleEps = 1e-8;

// Activation-scale warm-up: EMA of a high percentile of |batch|.
inline constexpr double kWarmupPercentile = 99.9;
inline constexpr double kWarmupBeta = 0.9;
inline constexpr int kWarmupSteps = 300;

enum class Signedness { Signed, Unsigned };

enum class SteMode { Clipped, PassThrough };

// One quantizer: bitwidth, signedness, scale.
// signed:   codes in [-2^(b-1), 2^(b-1)-1], q_s = 2^(b-1)
// unsigned: codes in [0, 2^b-1],            q_s = 2^b-1
struct QuantSpec {
    int bits = 8;
    Signedness sgn = Signedness::Signed;
    double scale = 1.0;

    i64 q_min() const { return sgn == Signedness::Signed ? -(i64(1) << (bits - 1)) : 0; }
    i64 q_max() const {
        return sgn == Signedness::Signed ? (i64(1) << (bits - 1)) - 1 : (i64(1) << bits) - 1;
    }
    i64 q_s() const {
        return sgn == Signedness::Signed ? (i64(1) << (bits - 1)) : (i64(1) << bits) - 1;
    }
    // real-valued quantization step
    double step() const { return scale / static_cast<double>(q_s()); }

    void validate() const {
        if (bits < 2 || bits > 62) throw std::invalid_argument("QuantSpec: bits out of range");
        if (!(scale > 0.0) || !std::isfinite(scale))
            throw std::invalid_argument("QuantSpec: scale must be positive and finite");
    }

    bool operator==(const QuantSpec& o) const {
        return bits == o.bits && sgn == o.sgn && scale == o.scale;
    }
};

// Eq-style integer quantization: clip(round_half_even(x/scale * q_s), q_min, q_max).
inline i64 quantize_int(double x, const QuantSpec& spec) {
    if (!std::isfinite(x))
        throw std::invalid_argument("quantize_int: non-finite input (corrupted upstream state)");
    double v = x / spec.scale * static_cast<double>(spec.q_s());
    double r = round_half_even(v);
    double lo = static_cast<double>(spec.q_min());
    double hi = static_cast<double>(spec.q_max());
    if (r < lo) r = lo;
    if (r > hi) r = hi;
    return static_cast<i64>(r);
}

// Quantize/De-Quantize: project onto the integer lattice, map back to real.
inline double qdq(double x, const QuantSpec& spec) {
    return spec.step() * static_cast<double>(quantize_int(x, spec));
}

// Straight-through gradient of qdq. Clipped STE zeroes the gradient when
// the scaled input falls outside [q_min, q_max].
inline double qdq_backward(double upstream_grad, double x, const QuantSpec& spec,
                           SteMode mode = SteMode::Clipped) {
    if (mode == SteMode::PassThrough) return upstream_grad;
    double v = x / spec.scale * static_cast<double>(spec.q_s());
    if (v < static_cast<double>(spec.q_min()) || v > static_cast<double>(spec.q_max())) return 0.0;
    return upstream_grad;
}

// Gradient of qdq w.r.t. its scale (LSQ-style), for learned activation scales.
//   in range:  (round(v) - v) / q_s     with v = x/scale * q_s
//   clipped:   q_min/q_s or q_max/q_s
inline double qdq_scale_grad(double upstream_grad, double x, const QuantSpec& spec) {
    double qs = static_cast<double>(spec.q_s());
    double v = x / spec.scale * qs;
    double lo = static_cast<double>(spec.q_min());
    double hi = static_cast<double>(spec.q_max());
    if (v < lo) return upstream_grad * lo / qs;
    if (v > hi) return upstream_grad * hi / qs;
    return upstream_grad * (round_half_even(v) - v) / qs;
}

// Warm-up/learned state of one activation scale.
struct ScaleState {
    QuantSpec spec;
    int warmup_steps_remaining = kWarmupSteps;
    double ema_statistic = 0.0;
    bool learnable = true;
    double log_scale = 0.0;  // gradient parameterization, valid once warm-up ends

    bool warming_up() const { return warmup_steps_remaining > 0; }

    void freeze() {
        warmup_steps_remaining = 0;
        learnable = false;
    }

    void set_fixed(double s) {
        spec.scale = s;
        log_scale = std::log(s);
        freeze();
    }

    // Called when warm-up hits zero so gradient learning starts from the
    // statistics-derived scale.
    void finish_warmup() { log_scale = std::log(spec.scale); }

    void apply_log_scale() { spec.scale = std::exp(log_scale); }
};

// One warm-up update: EMA of the high percentile of |batch|, floored.
inline void update_scale_warmup(ScaleState& state, std::span<const double> batch) {
    if (!state.warming_up()) throw std::logic_error("update_scale_warmup: warm-up already over");
    if (batch.empty()) throw std::invalid_argument("update_scale_warmup: empty batch");
    std::vector<double> mags(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) mags[i] = std::fabs(batch[i]);
    double stat = percentile(std::move(mags), kWarmupPercentile);
    state.ema_statistic = kWarmupBeta * state.ema_statistic + (1.0 - kWarmupBeta) * stat;
    state.spec.scale = std::max(state.ema_statistic, kScaleEps);
    state.warmup_steps_remaining -= 1;
    if (state.warmup_steps_remaining == 0) state.finish_warmup();
}

// Per-tensor weight scale: absolute maximum, floored. Recomputed from the
// live weights at every forward pass while training.
inline double weight_scale(std::span<const double> weights) {
    if (weights.empty()) throw std::invalid_argument("weight_scale: empty matrix");
    double m = 0.0;
    for (double w : weights) m = std::max(m, std::fabs(w));
    return std::max(m, kScaleEps);
}

}  // namespace qp
