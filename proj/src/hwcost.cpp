#include "qpolicy/hwcost.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace qp {

GraphShape shape_of(const IntegerGraph& g) {
    GraphShape s;
    for (const auto& l : g.layers) {
        // weight bits from the stored code range: |w| <= q_s = 2^(b-1)
        i64 wmax = 1;
        for (const auto& row : l.int_weights)
            for (i64 w : row) wmax = std::max(wmax, std::llabs(w));
        int wb = 2;
        while ((i64(1) << (wb - 1)) < wmax) ++wb;
        s.layers.push_back({l.fan_in(), l.fan_out(), wb, l.out_spec.bits});
    }
    return s;
}

GraphShape reference_shape(std::size_t obs_dim, std::size_t act_dim, std::size_t hidden,
                           int b_core, int b_io) {
    GraphShape s;
    s.layers.push_back({obs_dim, hidden, b_core, b_core});
    s.layers.push_back({hidden, hidden, b_core, b_core});
    s.layers.push_back({hidden, act_dim, b_core, b_io});
    return s;
}

std::size_t pad_dim(std::size_t d) { return ((d + 31) / 32) * 32; }

GraphShape pad_dims(const GraphShape& s) {
    GraphShape p = s;
    for (auto& l : p.layers) {
        l.in = pad_dim(l.in);
        l.out = pad_dim(l.out);
    }
    return p;
}

FoldingConfig full_parallel(const GraphShape& s, double clock_hz) {
    FoldingConfig f;
    f.clock_hz = clock_hz;
    for (const auto& l : s.layers) f.layers.push_back({pad_dim(l.out), pad_dim(l.in)});
    return f;
}

FoldingConfig all_ones(const GraphShape& s, double clock_hz) {
    FoldingConfig f;
    f.clock_hz = clock_hz;
    f.layers.assign(s.layers.size(), LayerFolding{1, 1});
    return f;
}

CostReport estimate(const GraphShape& s, const FoldingConfig& f) {
    if (f.layers.size() != s.layers.size())
        throw std::invalid_argument("estimate: folding layer count mismatch");
    if (!(f.clock_hz > 0.0)) throw std::invalid_argument("estimate: clock must be positive");
    CostReport r;
    for (std::size_t i = 0; i < s.layers.size(); ++i) {
        const auto& l = s.layers[i];
        const auto& fl = f.layers[i];
        const std::size_t po = pad_dim(l.out), pi = pad_dim(l.in);
        if (fl.pe < 1 || fl.pe > po || po % fl.pe != 0)
            throw std::invalid_argument("estimate: pe must divide the padded output width");
        if (fl.simd < 1 || fl.simd > pi || pi % fl.simd != 0)
            throw std::invalid_argument("estimate: simd must divide the padded input width");
        i64 cycles = static_cast<i64>(po / fl.pe) * static_cast<i64>(pi / fl.simd);
        r.layer_cycles.push_back(cycles);
        r.latency_cycles += cycles;
        r.initiation_interval_cycles = std::max(r.initiation_interval_cycles, cycles);
        r.mac_units += static_cast<i64>(fl.pe) * static_cast<i64>(fl.simd);
        r.threshold_words += static_cast<i64>(po) * ((i64(1) << l.out_bits) - 1);
        r.weight_bits += static_cast<i64>(po) * static_cast<i64>(pi) * l.weight_bits;
    }
    r.latency_cycles += kPipelineKappa * static_cast<i64>(s.layers.size());
    r.latency_seconds = static_cast<double>(r.latency_cycles) / f.clock_hz;
    r.throughput_actions_per_s = f.clock_hz / static_cast<double>(r.initiation_interval_cycles);
    return r;
}

namespace {

std::vector<std::size_t> divisors(std::size_t n) {
    std::vector<std::size_t> d;
    for (std::size_t i = 1; i <= n; ++i)
        if (n % i == 0) d.push_back(i);
    return d;
}

bool within_budget(const CostReport& r, const ResourceBudget& b) {
    if (b.mac_units && r.mac_units > *b.mac_units) return false;
    if (b.threshold_words && r.threshold_words > *b.threshold_words) return false;
    if (b.weight_bits && r.weight_bits > *b.weight_bits) return false;
    return true;
}

}  // namespace

FoldingSearchResult folding_search(const GraphShape& s, double target_throughput,
                                   const ResourceBudget& budget, double clock_hz) {
    if (!(target_throughput > 0.0))
        throw std::invalid_argument("folding_search: target must be positive");
    FoldingSearchResult res;

    // II >= 1 cycle puts a hard ceiling at the clock
    if (target_throughput > clock_hz) {
        res.reason = "target exceeds clock rate (initiation interval below one cycle)";
        return res;
    }
    const i64 ii_max = static_cast<i64>(std::floor(clock_hz / target_throughput));

    // Throughput couples layers only through max(cycles); minimizing
    // mac_units decomposes per layer: cheapest (pe,simd) with cycles<=ii_max.
    FoldingConfig f;
    f.clock_hz = clock_hz;
    for (const auto& l : s.layers) {
        const std::size_t po = pad_dim(l.out), pi = pad_dim(l.in);
        bool found = false;
        LayerFolding best{};
        i64 best_cost = 0, best_cycles = 0;
        for (std::size_t pe : divisors(po))
            for (std::size_t simd : divisors(pi)) {
                i64 cycles = static_cast<i64>(po / pe) * static_cast<i64>(pi / simd);
                if (cycles > ii_max) continue;
                i64 cost = static_cast<i64>(pe) * static_cast<i64>(simd);
                if (!found || cost < best_cost ||
                    (cost == best_cost && cycles < best_cycles) ||
                    (cost == best_cost && cycles == best_cycles &&
                     (pe < best.pe || (pe == best.pe && simd < best.simd)))) {
                    found = true;
                    best = {pe, simd};
                    best_cost = cost;
                    best_cycles = cycles;
                }
            }
        if (!found) {
            res.reason = "no per-layer folding meets the initiation interval";
            return res;
        }
        f.layers.push_back(best);
    }

    CostReport cost = estimate(s, f);
    if (cost.throughput_actions_per_s < target_throughput) {
        res.reason = "search result misses target (internal error)";
        return res;
    }
    if (!within_budget(cost, budget)) {
        res.reason = "resource budget exceeded at the cheapest feasible folding";
        return res;
    }
    res.feasible = true;
    res.folding = std::move(f);
    res.cost = std::move(cost);
    return res;
}

ThroughputSweepResult throughput_sweep(const GraphShape& s, const ResourceBudget& budget,
                                       double lo, double hi, double clock_hz) {
    ThroughputSweepResult out;
    for (double target = lo; target <= hi * 1.0000001; target *= 10.0) {
        FoldingSearchResult r = folding_search(s, target, budget, clock_hz);
        out.tried.push_back({target, r.feasible});
        if (r.feasible) {
            out.any_feasible = true;
            out.target = target;
            out.best = std::move(r);
        }
    }
    return out;
}

CostReport reference_cost(std::size_t obs_dim, std::size_t act_dim, const FoldingConfig& folding,
                          std::size_t hidden, int b_core, int b_io) {
    GraphShape ref = reference_shape(obs_dim, act_dim, hidden, b_core, b_io);
    return estimate(ref, folding);
}

}  // namespace qp
