#include "qpolicy/net.hpp"

#include <cmath>
#include <stdexcept>

namespace qp {

BiasQuant quantize_bias(std::span<const double> bias, double delta, int min_bits) {
    if (!(delta > 0.0) || !std::isfinite(delta))
        throw std::invalid_argument("quantize_bias: bad accumulator step");
    double absmax = 0.0;
    for (double b : bias) absmax = std::max(absmax, std::fabs(b));
    int bits = min_bits;
    // widen until the lattice covers the bias range (caps at int64 codes)
    while (bits < 62 && absmax / delta > static_cast<double>((i64(1) << (bits - 1)) - 1)) ++bits;
    BiasQuant out;
    out.bits_eff = bits;
    out.spec =
        QuantSpec{bits, Signedness::Signed, delta * static_cast<double>(i64(1) << (bits - 1))};
    out.codes.resize(bias.size());
    out.ste_mask.resize(bias.size());
    for (std::size_t i = 0; i < bias.size(); ++i) {
        out.codes[i] = quantize_int(bias[i], out.spec);
        double v = bias[i] / out.spec.scale * static_cast<double>(out.spec.q_s());
        out.ste_mask[i] = v >= static_cast<double>(out.spec.q_min()) &&
                          v <= static_cast<double>(out.spec.q_max());
    }
    return out;
}

void PolicyNet::freeze() {
    norm.frozen = true;
    input_q.freeze();
    frozen_w_scales.clear();
    for (auto& l : layers) {
        l.out_q.freeze();
        frozen_w_scales.push_back(weight_scale(l.W.flat()));
    }
    frozen = true;
}

static void init_linear(Matrix& W, Vector& b, Rng& rng) {
    double bound = 1.0 / std::sqrt(static_cast<double>(W.cols));
    for (auto& w : W.data) w = rng.uniform(-bound, bound);
    for (auto& x : b) x = rng.uniform(-bound, bound);
}

PolicyNet make_policy_net(std::size_t obs_dim, std::size_t act_dim, std::size_t hidden,
                          const QuantConfig& qc, bool with_sigma_branch, Rng& rng) {
    PolicyNet net;
    net.norm = Normalizer(obs_dim);
    net.quantized = qc.enabled;
    net.ste = qc.ste;

    net.input_q.spec = QuantSpec{qc.input_bits, Signedness::Signed, 1.0};
    if (qc.fixed_input_scale > 0.0) net.input_q.set_fixed(qc.fixed_input_scale);

    auto make_layer = [&](std::size_t in, std::size_t out, bool is_out) {
        LayerParams l;
        l.W = Matrix(out, in);
        l.b = Vector(out, 0.0);
        init_linear(l.W, l.b, rng);
        l.weight_bits = qc.weight_bits;
        l.bias_bits = qc.bias_bits;
        l.is_output = is_out;
        l.out_q.spec = is_out ? QuantSpec{qc.output_bits, Signedness::Signed, 1.0}
                              : QuantSpec{qc.act_bits, Signedness::Unsigned, 1.0};
        double fixed = is_out ? qc.fixed_output_scale : qc.fixed_act_scale;
        if (fixed > 0.0) l.out_q.set_fixed(fixed);
        return l;
    };
    net.layers.push_back(make_layer(obs_dim, hidden, false));
    net.layers.push_back(make_layer(hidden, hidden, false));
    net.layers.push_back(make_layer(hidden, act_dim, true));

    if (with_sigma_branch) {
        SigmaBranch sb;
        sb.W1 = Matrix(64, obs_dim);
        sb.b1 = Vector(64, 0.0);
        sb.W2 = Matrix(act_dim, 64);
        sb.b2 = Vector(act_dim, 0.0);
        init_linear(sb.W1, sb.b1, rng);
        init_linear(sb.W2, sb.b2, rng);
        net.sigma = std::move(sb);
    }
    return net;
}

// true when every code product summed over fan_in stays exactly
// representable in a double, so the batched code matvec can use dgemm
static bool gemm_safe(const QuantSpec& in_spec, int w_bits, std::size_t fan_in) {
    double in_max =
        static_cast<double>(std::max(std::llabs(in_spec.q_min()), std::llabs(in_spec.q_max())));
    double w_max = static_cast<double>(i64(1) << (w_bits - 1));
    return in_max * w_max * static_cast<double>(fan_in) < 0x1.0p52;
}

ForwardTape forward_fakequant(PolicyNet& net, const Matrix& obs, bool train) {
    if (obs.cols != net.obs_dim()) throw std::invalid_argument("forward: obs dim mismatch");
    Matrix z(obs.rows, obs.cols);
    for (std::size_t r = 0; r < obs.rows; ++r) net.norm.normalize(obs.row(r), z.row(r));
    return forward_from_normalized(net, z, train);
}

ForwardTape forward_from_normalized(PolicyNet& net, const Matrix& z_raw, bool train) {
    if (z_raw.cols != net.obs_dim()) throw std::invalid_argument("forward: obs dim mismatch");

    const std::size_t B = z_raw.rows;
    ForwardTape t;
    t.batch = B;

    t.normed = z_raw;
    for (auto& v : t.normed.data) v = std::clamp(v, -net.obs_clip, net.obs_clip);

    const bool q = net.quantized;

    // input QDQ
    if (q) {
        if (train && !net.frozen && net.input_q.warming_up())
            update_scale_warmup(net.input_q, t.normed.flat());
        const QuantSpec& s = net.input_q.spec;
        t.x0_vals = Matrix(B, z_raw.cols);
        t.x0_codes = Matrix(B, z_raw.cols);
        t.input_mask.resize(B * z_raw.cols);
        double qs = static_cast<double>(s.q_s());
        for (std::size_t i = 0; i < t.normed.data.size(); ++i) {
            double z = t.normed.data[i];
            i64 code = quantize_int(z, s);
            t.x0_codes.data[i] = static_cast<double>(code);
            t.x0_vals.data[i] = s.step() * static_cast<double>(code);
            double v = z / s.scale * qs;
            t.input_mask[i] =
                v >= static_cast<double>(s.q_min()) && v <= static_cast<double>(s.q_max());
        }
    } else {
        t.x0_vals = t.normed;
    }

    Matrix cur_vals = t.x0_vals;
    Matrix cur_codes = q ? t.x0_codes : Matrix();
    QuantSpec in_spec = q ? net.input_q.spec : QuantSpec{};

    t.layers.resize(net.layers.size());
    for (std::size_t li = 0; li < net.layers.size(); ++li) {
        LayerParams& L = net.layers[li];
        LayerFwd& f = t.layers[li];
        const std::size_t out = L.fan_out(), in = L.fan_in();
        f.in_vals = std::move(cur_vals);
        f.preact = Matrix(B, out);
        f.out_vals = Matrix(B, out);

        if (!q) {
            gemm(false, true, 1.0, f.in_vals, L.W, 0.0, f.preact);
            for (std::size_t r = 0; r < B; ++r)
                for (std::size_t c = 0; c < out; ++c) f.preact.at(r, c) += L.b[c];
            if (L.is_output) {
                f.out_vals = f.preact;
            } else {
                for (std::size_t i = 0; i < f.preact.data.size(); ++i)
                    f.out_vals.data[i] = std::max(0.0, f.preact.data[i]);
            }
            cur_vals = f.out_vals;
            continue;
        }

        f.in_codes = std::move(cur_codes);
        f.w_scale = net.frozen ? net.frozen_w_scales[li] : weight_scale(L.W.flat());
        QuantSpec wspec{L.weight_bits, Signedness::Signed, f.w_scale};
        f.w_codes = Matrix(out, in);
        f.w_hat = Matrix(out, in);
        f.w_mask.resize(out * in);
        double wqs = static_cast<double>(wspec.q_s());
        for (std::size_t i = 0; i < L.W.data.size(); ++i) {
            i64 code = quantize_int(L.W.data[i], wspec);
            f.w_codes.data[i] = static_cast<double>(code);
            f.w_hat.data[i] = wspec.step() * static_cast<double>(code);
            double v = L.W.data[i] / wspec.scale * wqs;
            f.w_mask[i] =
                v >= static_cast<double>(wspec.q_min()) && v <= static_cast<double>(wspec.q_max());
        }

        f.delta = in_spec.scale * f.w_scale / (static_cast<double>(in_spec.q_s()) * wqs);
        f.bias_q = quantize_bias(L.b, f.delta, L.bias_bits);
        f.b_hat = Vector(out);
        for (std::size_t c = 0; c < out; ++c)
            f.b_hat[c] = f.delta * static_cast<double>(f.bias_q.codes[c]);

        // exact integer accumulators: dgemm when products fit in the double
        // mantissa, otherwise an int128 scalar path (wide-bit configs)
        std::vector<i128> acc(B * out);
        if (gemm_safe(in_spec, L.weight_bits, in)) {
            Matrix accd(B, out);
            gemm(false, true, 1.0, f.in_codes, f.w_codes, 0.0, accd);
            for (std::size_t i = 0; i < acc.size(); ++i)
                acc[i] = static_cast<i128>(static_cast<i64>(accd.data[i]));
        } else {
            for (std::size_t r = 0; r < B; ++r)
                for (std::size_t c = 0; c < out; ++c) {
                    i128 s = 0;
                    const double* xr = f.in_codes.row(r).data();
                    const double* wr = f.w_codes.row(c).data();
                    for (std::size_t k = 0; k < in; ++k)
                        s += static_cast<i128>(static_cast<i64>(xr[k])) *
                             static_cast<i64>(wr[k]);
                    acc[r * out + c] = s;
                }
        }

        // pre-activations (exact integers times the accumulator step)
        for (std::size_t r = 0; r < B; ++r)
            for (std::size_t c = 0; c < out; ++c)
                f.preact.at(r, c) =
                    static_cast<double>(acc[r * out + c] + f.bias_q.codes[c]) * f.delta;

        // warm-up statistics from the values the quantizer will see
        if (train && !net.frozen && L.out_q.warming_up()) {
            std::vector<double> stats(B * out);
            for (std::size_t i = 0; i < stats.size(); ++i)
                stats[i] = L.is_output ? f.preact.data[i] : std::max(0.0, f.preact.data[i]);
            update_scale_warmup(L.out_q, stats);
        }

        const QuantSpec& oq = L.out_q.spec;
        f.m_req = f.delta * static_cast<double>(oq.q_s()) / oq.scale;
        const i64 lo = oq.q_min(), hi = oq.q_max();
        const double oqs = static_cast<double>(oq.q_s());
        f.out_codes.resize(B * out);
        f.act_mask.resize(B * out);
        cur_codes = Matrix(B, out);
        for (std::size_t r = 0; r < B; ++r)
            for (std::size_t c = 0; c < out; ++c) {
                const std::size_t i = r * out + c;
                i64 code = requant_code(acc[i] + f.bias_q.codes[c], f.m_req, lo, hi);
                f.out_codes[i] = code;
                f.out_vals.at(r, c) = oq.step() * static_cast<double>(code);
                cur_codes.data[i] = static_cast<double>(code);
                double a = f.preact.at(r, c);
                double pre_q = L.is_output ? a : std::max(0.0, a);
                double v = pre_q / oq.scale * oqs;
                f.act_mask[i] = v >= static_cast<double>(lo) && v <= static_cast<double>(hi);
            }
        cur_vals = f.out_vals;
        in_spec = oq;
    }

    const LayerFwd& last = t.layers.back();
    t.mu = last.out_vals;
    t.action = Matrix(B, net.action_dim());
    for (std::size_t i = 0; i < t.mu.data.size(); ++i) t.action.data[i] = odd_tanh(t.mu.data[i]);

    if (net.sigma) {
        const SigmaBranch& sb = *net.sigma;
        t.sig_h = Matrix(B, sb.W1.rows);
        gemm(false, true, 1.0, t.normed, sb.W1, 0.0, t.sig_h);
        for (std::size_t r = 0; r < B; ++r)
            for (std::size_t c = 0; c < sb.W1.rows; ++c)
                t.sig_h.at(r, c) = std::max(0.0, t.sig_h.at(r, c) + sb.b1[c]);
        t.sig_raw = Matrix(B, sb.W2.rows);
        gemm(false, true, 1.0, t.sig_h, sb.W2, 0.0, t.sig_raw);
        t.sig_logstd = Matrix(B, sb.W2.rows);
        for (std::size_t r = 0; r < B; ++r)
            for (std::size_t c = 0; c < sb.W2.rows; ++c) {
                double raw = t.sig_raw.at(r, c) + sb.b2[c];
                t.sig_raw.at(r, c) = raw;
                t.sig_logstd.at(r, c) =
                    kLogStdMin + 0.5 * (kLogStdMax - kLogStdMin) * (std::tanh(raw) + 1.0);
            }
    }
    return t;
}

std::vector<double> act_deterministic(PolicyNet& net, std::span<const double> obs) {
    Matrix m(1, obs.size());
    std::copy(obs.begin(), obs.end(), m.data.begin());
    ForwardTape t = forward_fakequant(net, m, /*train=*/false);
    return {t.action.data.begin(), t.action.data.end()};
}

PolicyGrads::PolicyGrads(const PolicyNet& net) {
    for (const auto& l : net.layers) {
        dW.emplace_back(l.W.rows, l.W.cols);
        db.emplace_back(l.b.size(), 0.0);
        dlog_out_scale.push_back(0.0);
    }
    if (net.sigma) {
        dW1s = Matrix(net.sigma->W1.rows, net.sigma->W1.cols);
        db1s = Vector(net.sigma->b1.size(), 0.0);
        dW2s = Matrix(net.sigma->W2.rows, net.sigma->W2.cols);
        db2s = Vector(net.sigma->b2.size(), 0.0);
    }
}

void PolicyGrads::zero() {
    for (auto& m : dW) m.zero();
    for (auto& v : db) std::fill(v.begin(), v.end(), 0.0);
    std::fill(dlog_out_scale.begin(), dlog_out_scale.end(), 0.0);
    dlog_input_scale = 0.0;
    dW1s.zero();
    dW2s.zero();
    std::fill(db1s.begin(), db1s.end(), 0.0);
    std::fill(db2s.begin(), db2s.end(), 0.0);
}

void backward(const PolicyNet& net, const ForwardTape& tape, const Matrix& dmu,
              const Matrix& dlogstd, PolicyGrads& grads) {
    const std::size_t B = tape.batch;
    const bool q = net.quantized;
    const bool pass = net.ste == SteMode::PassThrough;

    Matrix g = dmu;  // dL/d(out_vals of current layer), walked backwards
    for (std::size_t li = net.layers.size(); li-- > 0;) {
        const LayerParams& L = net.layers[li];
        const LayerFwd& f = tape.layers[li];
        const std::size_t out = L.fan_out(), in = L.fan_in();

        // through the out quantizer (STE) and ReLU to the pre-activation
        Matrix ga(B, out);
        for (std::size_t r = 0; r < B; ++r)
            for (std::size_t c = 0; c < out; ++c) {
                const std::size_t i = r * out + c;
                double gv = g.at(r, c);
                if (q) {
                    const QuantSpec& oq = L.out_q.spec;
                    double a = f.preact.at(r, c);
                    double pre_q = L.is_output ? a : std::max(0.0, a);
                    if (L.out_q.learnable && !L.out_q.warming_up() && !net.frozen) {
                        double code = static_cast<double>(f.out_codes[i]);
                        double v = pre_q / oq.scale * static_cast<double>(oq.q_s());
                        double ds =
                            gv * (code - (f.act_mask[i] ? v : 0.0)) / static_cast<double>(oq.q_s());
                        grads.dlog_out_scale[li] += ds * oq.scale;
                    }
                    if (!pass && !f.act_mask[i]) gv = 0.0;
                }
                if (!L.is_output && f.preact.at(r, c) <= 0.0) gv = 0.0;
                ga.at(r, c) = gv;
            }

        // bias (STE through the bias quantizer)
        for (std::size_t r = 0; r < B; ++r)
            for (std::size_t c = 0; c < out; ++c) {
                double gb = ga.at(r, c);
                if (q && !pass && !f.bias_q.ste_mask[c]) gb = 0.0;
                grads.db[li][c] += gb;
            }

        // weights: dW = ga^T * in_vals, then the weight-quantizer STE mask
        Matrix dw(out, in);
        gemm(true, false, 1.0, ga, f.in_vals, 0.0, dw);
        if (q && !pass)
            for (std::size_t i = 0; i < dw.data.size(); ++i)
                if (!f.w_mask[i]) dw.data[i] = 0.0;
        for (std::size_t i = 0; i < dw.data.size(); ++i) grads.dW[li].data[i] += dw.data[i];

        // input values: dX = ga * W_hat (raw W when unquantized)
        Matrix gx(B, in);
        gemm(false, false, 1.0, ga, q ? f.w_hat : L.W, 0.0, gx);
        g = std::move(gx);
    }

    // input quantizer scale
    if (q && net.input_q.learnable && !net.input_q.warming_up() && !net.frozen) {
        const QuantSpec& s = net.input_q.spec;
        for (std::size_t i = 0; i < g.data.size(); ++i)
            grads.dlog_input_scale += qdq_scale_grad(g.data[i], tape.normed.data[i], s) * s.scale;
    }

    // sigma branch
    if (net.sigma && dlogstd.data.size() == B * net.action_dim()) {
        const SigmaBranch& sb = *net.sigma;
        const std::size_t A = net.action_dim();
        Matrix graw(B, A);
        for (std::size_t i = 0; i < B * A; ++i) {
            double th = std::tanh(tape.sig_raw.data[i]);
            graw.data[i] = dlogstd.data[i] * 0.5 * (kLogStdMax - kLogStdMin) * (1.0 - th * th);
        }
        for (std::size_t r = 0; r < B; ++r)
            for (std::size_t c = 0; c < A; ++c) grads.db2s[c] += graw.at(r, c);
        gemm(true, false, 1.0, graw, tape.sig_h, 1.0, grads.dW2s);
        Matrix gh(B, sb.W1.rows);
        gemm(false, false, 1.0, graw, sb.W2, 0.0, gh);
        for (std::size_t i = 0; i < gh.data.size(); ++i)
            if (tape.sig_h.data[i] <= 0.0) gh.data[i] = 0.0;
        for (std::size_t r = 0; r < B; ++r)
            for (std::size_t c = 0; c < sb.W1.rows; ++c) grads.db1s[c] += gh.at(r, c);
        gemm(true, false, 1.0, gh, tape.normed, 1.0, grads.dW1s);
    }
}

std::vector<std::vector<i64>> code_trace(const ForwardTape& tape) {
    std::vector<std::vector<i64>> out;
    std::vector<i64> x0(tape.x0_codes.data.size());
    for (std::size_t i = 0; i < x0.size(); ++i) x0[i] = static_cast<i64>(tape.x0_codes.data[i]);
    out.push_back(std::move(x0));
    for (const auto& l : tape.layers) out.push_back(l.out_codes);
    return out;
}

}  // namespace qp
