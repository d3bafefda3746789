#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "qpolicy/hwcost.hpp"
#include "qpolicy/intrt.hpp"
#include "qpolicy/rl.hpp"
#include "qpolicy/serialize.hpp"

namespace qp {

// Which subset of the policy's quantizers a sensitivity sweep varies;
// everything not swept stays at 8 bits.
enum class Scope { All, Input, Output, Core };

std::string scope_name(Scope s);
Scope scope_from_name(const std::string& s);

QuantConfig scope_quant(Scope scope, int swept_bits, int fixed_bits = 8);

// FP32-parity criterion: the candidate matches when its mean return is no
// worse than one baseline standard deviation below the baseline mean.
// Exceeding the band counts as a match (selection never rejects for being
// better).
bool parity(const EvalReport& candidate, const EvalReport& baseline);

struct SweepSettings {
    std::string env = "pendulum";
    Algo algo = Algo::Sac;
    std::string preset = "desk";
    i64 steps_override = 0;  // 0 keeps the preset's total_steps
    int seeds = 5;
    int eval_episodes = 10;
    u64 seed_base = 0;
    std::size_t hidden = 256;
    int threads = 0;  // 0: hardware concurrency
};

TrainConfig settings_to_config(const SweepSettings& s, const QuantConfig& q, std::size_t hidden,
                               u64 seed);

struct RunOutcome {
    bool ok = false;
    std::string error;
    double mean_return = 0.0;
    double std_return = 0.0;
    PolicyNet net;
    std::vector<CurvePoint> curve;
};

// One training+final-evaluation job; never throws (failures are recorded).
RunOutcome run_one(const SweepSettings& s, const QuantConfig& q, std::size_t hidden, u64 seed);

// Index-parallel job runner; jobs share nothing mutable.
void parallel_jobs(std::size_t n, int threads, const std::function<void(std::size_t)>& fn);

struct SweepRow {
    std::string scope;
    int bits = 0;
    u64 seed = 0;
    double mean_return = 0.0;
    double std_return = 0.0;
    bool ok = true;
    std::string error;
};

struct SweepReport {
    std::vector<SweepRow> rows;
    json meta;

    // aggregate per-seed means for one (scope, bits) cell
    EvalReport cell(const std::string& scope, int bits) const;
};

// Trains seeds × |bits_list| × 4 scopes models plus the FP32 baseline and
// evaluates each. Individual run failures are recorded and the sweep
// continues.
SweepReport sweep_scopes(const SweepSettings& s, const std::vector<int>& bits_list);

// A restricted sweep over explicit (scope, bits) cells plus the baseline.
SweepReport sweep_cells(const SweepSettings& s,
                        const std::vector<std::pair<Scope, int>>& cells);

struct SelectionResult {
    std::size_t h = 256;
    int b_core = 8;
    int b_in = 8;  // b_out fixed at 8
    bool no_reduction_core = false;
    bool no_reduction_width = false;
    bool no_reduction_input = false;
    EvalReport baseline;
    EvalReport final_report;
    std::vector<PolicyNet> selected_nets;  // one per seed
    json log;                              // per-stage evaluations
};

// Three-stage staged selection: smallest parity b_core (io at 8), then
// smallest parity hidden width, then smallest parity b_in. Stages with no
// parity match fall back to the maximal setting and set the corresponding
// no-reduction flag.
SelectionResult select_model(const SweepSettings& s);

struct NoiseConfig {
    std::vector<double> sigmas = {0.0, 0.1, 0.2, 0.3, 0.4, 0.5};
    int episodes_per_model = 10;
};

// Gaussian noise on the normalized state, before input quantization.
EvalReport evaluate_noisy(const PolicyNet& net, const Environment& env, double sigma, int episodes,
                          u64 eval_seed, u64 noise_seed);
EvalReport evaluate_graph(const IntegerGraph& g, const Environment& env, int episodes, u64 seed);
EvalReport evaluate_graph_noisy(const IntegerGraph& g, const Environment& env, double sigma,
                                int episodes, u64 eval_seed, u64 noise_seed);

// One row per (sigma, model). Model seeds label the rows.
SweepReport noise_eval(const std::vector<const PolicyNet*>& models, const std::vector<u64>& seeds,
                       const Environment& env, const NoiseConfig& cfg, u64 eval_seed,
                       u64 noise_seed);

// ---- CSV / manifest plumbing ----

std::string csv_render(const std::string& schema, const json& meta,
                       const std::vector<std::string>& header,
                       const std::vector<std::vector<std::string>>& rows);

void write_file(const std::string& path, const std::string& content);
std::string sweep_csv(const SweepReport& r);
std::string curve_csv(const std::vector<std::pair<u64, std::vector<CurvePoint>>>& curves,
                      const json& meta);
std::string noise_csv(const SweepReport& r);

u64 file_fnv(const std::string& path);

// Writes <dir>/manifest.json listing config hash and artifact hashes.
void write_manifest(const std::string& dir, const std::string& command, const json& config,
                    const std::vector<std::string>& artifacts);

}  // namespace qp
