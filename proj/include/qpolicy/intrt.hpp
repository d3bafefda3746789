#pragma once

#include <span>
#include <vector>

#include "qpolicy/lowering.hpp"

namespace qp {

// Integer activations at every layer boundary, for differential testing.
// codes[0] is the quantized input, codes[i+1] the output of layer i.
struct IntTrace {
    std::vector<std::vector<i64>> codes;
};

struct IntRunResult {
    std::vector<double> action;
    IntTrace trace;
};

// Deployment reference semantics: quantize the normalized observation once,
// then integer matvecs into 64-bit accumulators (overflow is a hard error),
// per-neuron threshold counting, and a final tanh lookup.
IntRunResult run_integer(const IntegerGraph& g, std::span<const double> obs);

// Same from an already-normalized (pre-clip) input row.
IntRunResult run_integer_normalized(const IntegerGraph& g, std::span<const double> z_raw);

i64 count_macs(const IntegerGraph& g);

// Stable digest of graph structure and contents; survives serialization
// round-trips and moves when any single weight, threshold or spec changes.
u64 checksum(const IntegerGraph& g);

}  // namespace qp
