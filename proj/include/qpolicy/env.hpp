#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "qpolicy/rng.hpp"

namespace qp {

// Environments are deterministic given the reset seed and use a pure step:
// the caller owns the state, which keeps replays and tests trivial.
struct EnvState {
    std::vector<double> phys;
    int t = 0;
};

struct StepResult {
    EnvState next;
    double reward = 0.0;
    bool done = false;  // episode end (time-limit truncation for these tasks)
};

class Environment {
public:
    virtual ~Environment() = default;
    virtual std::string name() const = 0;
    virtual std::size_t state_dim() const = 0;   // observation dimension
    virtual std::size_t action_dim() const = 0;
    virtual int max_steps() const { return 200; }
    virtual EnvState reset(u64 seed) const = 0;
    virtual std::vector<double> observe(const EnvState& s) const = 0;
    // action components outside [-1,1] are clipped, not an error
    virtual StepResult step(const EnvState& s, std::span<const double> action) const = 0;
};

std::unique_ptr<Environment> env_pendulum();
std::unique_ptr<Environment> env_pointmass();
std::unique_ptr<Environment> make_env(const std::string& name);

}  // namespace qp
