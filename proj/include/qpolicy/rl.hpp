#pragma once

#include <string>
#include <vector>

#include "qpolicy/env.hpp"
#include "qpolicy/net.hpp"

namespace qp {

enum class Algo { Ddpg, Sac };

std::string algo_name(Algo a);
Algo algo_from_name(const std::string& s);

struct TrainConfig {
    Algo algorithm = Algo::Sac;
    i64 total_steps = 1'000'000;
    double gamma = 0.99;
    double tau = 0.005;
    std::size_t batch_size = 256;
    i64 learning_starts = 5'000;
    double policy_lr = 3e-4;
    double q_lr = 1e-3;
    int policy_update_freq = 2;
    int target_update_freq = 1;
    double exploration_noise_std = 0.1;  // DDPG
    bool entropy_autotune = true;        // SAC
    u64 seed = 0;
    std::size_t buffer_capacity = 1'000'000;
    std::size_t hidden_width = 256;
    std::size_t critic_width = 256;
    i64 eval_every = 5'000;
    int eval_episodes = 10;
    QuantConfig quant;
    std::string preset = "paper";
};

// Appendix-style defaults.
TrainConfig preset_paper(Algo algo);
// Desk-scale variant: 5e4 steps, learning starts 1e3, eval every 5e3 with
// 10 episodes. Critics shrink to width 128 to fit the desk compute budget.
TrainConfig preset_desk(Algo algo);
TrainConfig make_preset(const std::string& name, Algo algo);

// Undiscounted returns. `returns` holds per-episode returns for a single
// model, or per-seed mean returns when aggregated across seeds.
struct EvalReport {
    std::vector<double> returns;
    int episodes = 0;
    double mean() const { return mean_of(returns); }
    double stddev() const { return stddev_of(returns); }
};

struct CurvePoint {
    i64 step = 0;
    double mean_return = 0.0;
    double std_return = 0.0;
};

struct TrainResult {
    PolicyNet net;
    std::vector<CurvePoint> curve;
    i64 updates = 0;
    std::vector<double> critic_loss_log;  // one entry per gradient update
};

// Off-policy training loop (DDPG or SAC per config). Deterministic given
// the seed. Throws on non-finite losses.
TrainResult train(const TrainConfig& cfg, const Environment& env);

// Deterministic rollouts of the deployment-path action; episode i uses
// reset seed derive_seed(seed, i). The net is evaluated on a frozen copy.
EvalReport evaluate(const PolicyNet& net, const Environment& env, int episodes, u64 seed);

// Parameter-wise target <- (1-tau)*target + tau*online; normalizer stats
// are copied (they are an input transform, not a learned parameter).
void soft_update_policy(PolicyNet& target, const PolicyNet& online, double tau);

}  // namespace qp
