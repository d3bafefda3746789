#pragma once

#include <optional>
#include <vector>

#include "qpolicy/lowering.hpp"

namespace qp {

// Shape-level view of a graph: all the cost model needs per layer.
struct LayerShape {
    std::size_t in = 0, out = 0;
    int weight_bits = 8;
    int out_bits = 8;  // activation bits feeding the threshold stage
};

struct GraphShape {
    std::vector<LayerShape> layers;
};

GraphShape shape_of(const IntegerGraph& g);
// The 8-4-8 style reference: width-`hidden` hidden layers at b_core weights
// and activations, io at b_io.
GraphShape reference_shape(std::size_t obs_dim, std::size_t act_dim, std::size_t hidden,
                           int b_core, int b_io);

// Round every feature dimension up to the next multiple of 32.
std::size_t pad_dim(std::size_t d);
GraphShape pad_dims(const GraphShape& s);

struct LayerFolding {
    std::size_t pe = 1;    // divisor of the padded output width
    std::size_t simd = 1;  // divisor of the padded input width
};

struct FoldingConfig {
    std::vector<LayerFolding> layers;
    double clock_hz = 1e8;
};

FoldingConfig full_parallel(const GraphShape& s, double clock_hz = 1e8);
FoldingConfig all_ones(const GraphShape& s, double clock_hz = 1e8);

// cycles between pipeline stages per layer handoff
inline constexpr i64 kPipelineKappa = 2;

struct CostReport {
    std::vector<i64> layer_cycles;
    i64 latency_cycles = 0;
    double latency_seconds = 0.0;
    i64 initiation_interval_cycles = 0;
    double throughput_actions_per_s = 0.0;
    i64 mac_units = 0;
    i64 threshold_words = 0;
    i64 weight_bits = 0;
};

CostReport estimate(const GraphShape& s, const FoldingConfig& f);

struct ResourceBudget {
    std::optional<i64> mac_units;
    std::optional<i64> threshold_words;
    std::optional<i64> weight_bits;
};

// Feasibility is explicit: some targets simply don't fit.
struct FoldingSearchResult {
    bool feasible = false;
    std::string reason;
    FoldingConfig folding;
    CostReport cost;
};

// Minimize mac_units subject to throughput >= target and the budget.
// Exact: per-layer divisor lattices are enumerated.
FoldingSearchResult folding_search(const GraphShape& s, double target_throughput,
                                   const ResourceBudget& budget, double clock_hz = 1e8);

// The §3.4-style procedure: sweep targets in powers of 10 and keep the
// highest feasible one.
struct ThroughputSweepResult {
    bool any_feasible = false;
    double target = 0.0;
    FoldingSearchResult best;
    std::vector<std::pair<double, bool>> tried;  // (target, feasible)
};

ThroughputSweepResult throughput_sweep(const GraphShape& s, const ResourceBudget& budget,
                                       double lo = 1e3, double hi = 1e7, double clock_hz = 1e8);

// Cost of the width-256 b_core=4 io=8 reference under a given folding.
CostReport reference_cost(std::size_t obs_dim, std::size_t act_dim, const FoldingConfig& folding,
                          std::size_t hidden = 256, int b_core = 4, int b_io = 8);

}  // namespace qp
