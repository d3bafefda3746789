#pragma once

#include <vector>

#include "qpolicy/net.hpp"
#include "qpolicy/normalizer.hpp"
#include "qpolicy/quant.hpp"

namespace qp {

// One lowered layer: integer weights, per-neuron requantization thresholds
// (bias folded in), accumulator width, output quantizer metadata.
struct IntLayer {
    std::vector<std::vector<i64>> int_weights;  // out rows × in cols
    std::vector<std::vector<i64>> thresholds;   // out rows × (2^b_out - 1), ascending
    int acc_bits = 2;
    QuantSpec out_spec;

    std::size_t fan_out() const { return int_weights.size(); }
    std::size_t fan_in() const { return int_weights.empty() ? 0 : int_weights.front().size(); }
};

// Integer-only network: between the input quantization and the final tanh
// lookup no real-valued arithmetic appears.
struct IntegerGraph {
    Normalizer norm;
    double obs_clip = 10.0;
    QuantSpec input_spec;
    std::vector<IntLayer> layers;
    std::vector<double> tanh_lut;  // indexed by code - q_min, 2^b_out entries

    std::size_t obs_dim() const { return layers.front().fan_in(); }
    std::size_t action_dim() const { return layers.back().fan_out(); }
};

// T_k = smallest accumulator value a with round_half_even((a + bias)*m)
// >= out_spec.q_min + k, for k = 1 .. (q_max - q_min). Seeded analytically,
// corrected by a local scan against the shared requant function.
std::vector<i64> compute_thresholds(double m, i64 bias_int, const QuantSpec& out_spec);

// Minimal two's-complement width that holds any reachable accumulator value
// plus the folded bias, with one sign bit; never below 2.
int accumulator_bits(const std::vector<std::vector<i64>>& int_weights, const QuantSpec& in_spec,
                     const std::vector<i64>& bias_codes);

// Lookup table entry for code k is tanh(k * scale / q_s).
std::vector<double> build_tanh_lut(const QuantSpec& out_spec);

// Compile a frozen fake-quant policy to its integer form. Verifies
// bit-exactness against the fake-quant forward on a probe set before
// returning; a mismatch means a rounding or scale bookkeeping bug.
IntegerGraph lower(const PolicyNet& net);

}  // namespace qp
