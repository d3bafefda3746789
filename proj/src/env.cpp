#include "qpolicy/env.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace qp {

namespace {

constexpr double kPi = 3.14159265358979323846;

double clip(double v, double lo, double hi) { return std::min(std::max(v, lo), hi); }

double angle_normalize(double th) {
    // wrap into (-pi, pi]
    double x = std::fmod(th + kPi, 2.0 * kPi);
    if (x < 0.0) x += 2.0 * kPi;
    return x - kPi;
}

// Torque-limited pendulum swing-up; classic dynamics with dt=0.05,
// g=10, m=l=1, speed clipped at ±8, 200-step episodes.
class PendulumEnv final : public Environment {
public:
    std::string name() const override { return "pendulum"; }
    std::size_t state_dim() const override { return 3; }
    std::size_t action_dim() const override { return 1; }

    EnvState reset(u64 seed) const override {
        u64 s = seed;
        double u1 = static_cast<double>(splitmix64(s) >> 11) * 0x1.0p-53;
        double u2 = static_cast<double>(splitmix64(s) >> 11) * 0x1.0p-53;
        EnvState st;
        st.phys = {-kPi + 2.0 * kPi * u1, -1.0 + 2.0 * u2};
        return st;
    }

    std::vector<double> observe(const EnvState& s) const override {
        return {std::cos(s.phys[0]), std::sin(s.phys[0]), s.phys[1]};
    }

    StepResult step(const EnvState& s, std::span<const double> action) const override {
        if (action.size() != 1) throw std::invalid_argument("pendulum: action dim");
        const double dt = 0.05, g = 10.0, m = 1.0, l = 1.0;
        double u = clip(action[0], -1.0, 1.0) * 2.0;  // torque limit 2
        double th = s.phys[0], thdot = s.phys[1];
        double thn = angle_normalize(th);
        double reward = -(thn * thn + 0.1 * thdot * thdot + 0.001 * u * u);
        double newthdot = thdot + (3.0 * g / (2.0 * l) * std::sin(th) + 3.0 / (m * l * l) * u) * dt;
        newthdot = clip(newthdot, -8.0, 8.0);
        double newth = th + newthdot * dt;
        StepResult r;
        r.next.phys = {newth, newthdot};
        r.next.t = s.t + 1;
        r.reward = reward;
        r.done = r.next.t >= max_steps();
        return r;
    }
};

// Double-integrator point mass on the plane; reward pulls it to the origin.
class PointMassEnv final : public Environment {
public:
    std::string name() const override { return "pointmass"; }
    std::size_t state_dim() const override { return 4; }
    std::size_t action_dim() const override { return 2; }

    EnvState reset(u64 seed) const override {
        u64 s = seed;
        EnvState st;
        st.phys.resize(4);
        for (int i = 0; i < 2; ++i)
            st.phys[i] = -1.0 + 2.0 * (static_cast<double>(splitmix64(s) >> 11) * 0x1.0p-53);
        for (int i = 2; i < 4; ++i)
            st.phys[i] = -0.5 + 1.0 * (static_cast<double>(splitmix64(s) >> 11) * 0x1.0p-53);
        return st;
    }

    std::vector<double> observe(const EnvState& s) const override { return s.phys; }

    StepResult step(const EnvState& s, std::span<const double> action) const override {
        if (action.size() != 2) throw std::invalid_argument("pointmass: action dim");
        const double dt = 0.05;
        double ux = clip(action[0], -1.0, 1.0), uy = clip(action[1], -1.0, 1.0);
        double px = s.phys[0], py = s.phys[1], vx = s.phys[2], vy = s.phys[3];
        double reward = -(px * px + py * py) - 0.001 * (ux * ux + uy * uy);
        vx = clip(vx + dt * ux, -5.0, 5.0);
        vy = clip(vy + dt * uy, -5.0, 5.0);
        px = clip(px + dt * vx, -5.0, 5.0);
        py = clip(py + dt * vy, -5.0, 5.0);
        StepResult r;
        r.next.phys = {px, py, vx, vy};
        r.next.t = s.t + 1;
        r.reward = reward;
        r.done = r.next.t >= max_steps();
        return r;
    }
};

}  // namespace

std::unique_ptr<Environment> env_pendulum() { return std::make_unique<PendulumEnv>(); }
std::unique_ptr<Environment> env_pointmass() { return std::make_unique<PointMassEnv>(); }

std::unique_ptr<Environment> make_env(const std::string& name) {
    if (name == "pendulum") return env_pendulum();
    if (name == "pointmass") return env_pointmass();
    throw std::invalid_argument("unknown environment: " + name);
}

}  // namespace qp
