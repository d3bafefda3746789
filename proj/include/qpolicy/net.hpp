#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "qpolicy/matrix.hpp"
#include "qpolicy/normalizer.hpp"
#include "qpolicy/quant.hpp"
#include "qpolicy/rng.hpp"

namespace qp {

// Requantization reference semantics: one pure function of the integer
// accumulator shared by the fake-quant forward, the threshold builder and
// the integer runtime. Keeping a single definition is what makes the
// integer lowering bit-exact instead of tolerance-based.
inline double requant_raw(i128 acc_plus_bias, double m) {
    return round_half_even(static_cast<double>(acc_plus_bias) * m);
}

inline i64 requant_code(i128 acc_plus_bias, double m, i64 code_lo, i64 code_hi) {
    double r = requant_raw(acc_plus_bias, m);
    if (r < static_cast<double>(code_lo)) return code_lo;
    if (r > static_cast<double>(code_hi)) return code_hi;
    return static_cast<i64>(r);
}

// Bias quantized onto the accumulator lattice (step = delta) so adding it
// stays exact in the integer path. Width starts at min_bits and widens when
// the lattice is too fine to cover the bias range (high-precision configs).
struct BiasQuant {
    std::vector<i64> codes;
    std::vector<std::uint8_t> ste_mask;
    int bits_eff = 24;
    QuantSpec spec;
};

BiasQuant quantize_bias(std::span<const double> bias, double delta, int min_bits);

// Which quantizers a policy carries and at what widths.
struct QuantConfig {
    bool enabled = true;
    int input_bits = 8;   // signed, on the normalized observation
    int weight_bits = 8;  // signed, every weight matrix
    int act_bits = 8;     // unsigned, after each hidden ReLU
    int output_bits = 8;  // signed, before the final tanh
    int bias_bits = 24;
    SteMode ste = SteMode::Clipped;
    // > 0 pins the scale and disables warm-up/learning for that quantizer
    double fixed_input_scale = 0.0;
    double fixed_act_scale = 0.0;
    double fixed_output_scale = 0.0;

    static QuantConfig off() {
        QuantConfig q;
        q.enabled = false;
        return q;
    }
};

struct LayerParams {
    Matrix W;  // out×in
    Vector b;
    int weight_bits = 8;
    int bias_bits = 24;
    ScaleState out_q;  // hidden: unsigned post-ReLU; output layer: signed pre-tanh
    bool is_output = false;

    std::size_t fan_in() const { return W.cols; }
    std::size_t fan_out() const { return W.rows; }
};

// SAC's FP32 sigma head; training only, dropped at lowering.
struct SigmaBranch {
    Matrix W1;
    Vector b1;
    Matrix W2;
    Vector b2;
};

inline constexpr double kLogStdMin = -5.0;
inline constexpr double kLogStdMax = 2.0;

struct PolicyNet {
    Normalizer norm;
    double obs_clip = 10.0;
    bool quantized = true;
    bool frozen = false;
    SteMode ste = SteMode::Clipped;
    ScaleState input_q;               // signed
    std::vector<LayerParams> layers;  // 2 hidden + output
    std::optional<SigmaBranch> sigma;
    std::vector<double> frozen_w_scales;

    std::size_t obs_dim() const { return layers.front().fan_in(); }
    std::size_t action_dim() const { return layers.back().fan_out(); }
    std::size_t hidden_width() const { return layers.front().fan_out(); }

    // Current weight scale of a layer (recomputed live, cached when frozen).
    double w_scale(std::size_t li) const {
        return frozen ? frozen_w_scales[li] : weight_scale(layers[li].W.flat());
    }

    // Freeze everything that must not move after training: normalizer,
    // activation scales, weight scales.
    void freeze();
};

PolicyNet make_policy_net(std::size_t obs_dim, std::size_t act_dim, std::size_t hidden,
                          const QuantConfig& qc, bool with_sigma_branch, Rng& rng);

// Per-layer forward cache for one batch.
struct LayerFwd {
    Matrix in_vals;   // B×in lattice values entering the matvec
    Matrix in_codes;  // B×in integer codes (as doubles), quantized mode only
    Matrix preact;    // B×out pre-activation reals
    Matrix out_vals;  // B×out after ReLU+QDQ (hidden) or QDQ (output)
    std::vector<i64> out_codes;             // B×out flat
    std::vector<std::uint8_t> act_mask;     // B×out STE mask of the out quantizer
    Matrix w_hat;                           // dequantized weights
    Matrix w_codes;                         // codes as doubles
    std::vector<std::uint8_t> w_mask;       // STE mask per weight
    Vector b_hat;
    BiasQuant bias_q;
    double w_scale = 1.0;
    double delta = 1.0;  // accumulator LSB: s_in*s_w/(qs_in*qs_w)
    double m_req = 1.0;  // requant multiplier: delta*qs_out/s_out
};

struct ForwardTape {
    std::size_t batch = 0;
    Matrix normed;                         // B×obs after clip
    Matrix x0_vals;                        // value after input QDQ
    Matrix x0_codes;                       // codes as doubles
    std::vector<std::uint8_t> input_mask;  // input QDQ STE mask
    std::vector<LayerFwd> layers;
    Matrix mu;      // B×act pre-tanh output value
    Matrix action;  // tanh(mu)
    // sigma branch caches
    Matrix sig_h, sig_raw, sig_logstd;
};

// Forward through the deployment path (and sigma branch if present).
// train=true ticks scale warm-up from the batch statistics before
// quantizing; obs are raw environment observations.
ForwardTape forward_fakequant(PolicyNet& net, const Matrix& obs, bool train);

// Same, but from already-normalized (pre-clip) inputs. This is the hook
// noise injection uses: perturb the normalized state, then quantize.
ForwardTape forward_from_normalized(PolicyNet& net, const Matrix& z_raw, bool train);

// Single-observation convenience wrapper.
std::vector<double> act_deterministic(PolicyNet& net, std::span<const double> obs);

struct PolicyGrads {
    std::vector<Matrix> dW;
    std::vector<Vector> db;
    std::vector<double> dlog_out_scale;  // per layer
    double dlog_input_scale = 0.0;
    Matrix dW1s, dW2s;
    Vector db1s, db2s;

    explicit PolicyGrads(const PolicyNet& net);
    void zero();
};

// Reverse pass. dmu is dL/d(pre-tanh output), B×act. dlogstd may be empty
// when the sigma branch is absent or unused by the loss.
void backward(const PolicyNet& net, const ForwardTape& tape, const Matrix& dmu,
              const Matrix& dlogstd, PolicyGrads& grads);

// Integer-code trace of a forward pass, for differential testing against
// the lowered graph: input codes then one code vector per layer.
std::vector<std::vector<i64>> code_trace(const ForwardTape& tape);

}  // namespace qp
