#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace qp {

inline constexpr double kNormEps = 1e-8;

// Per-dimension running mean/variance (Welford). Updated while collecting,
// frozen for evaluation and deployment.
struct Normalizer {
    std::vector<double> mean;
    std::vector<double> m2;  // sum of squared deviations
    double count = 0.0;
    bool frozen = false;

    Normalizer() = default;
    explicit Normalizer(std::size_t dim) : mean(dim, 0.0), m2(dim, 0.0) {}

    std::size_t dim() const { return mean.size(); }

    double variance(std::size_t i) const { return count > 0.0 ? m2[i] / count : 1.0; }

    void update(std::span<const double> obs) {
        if (frozen) throw std::logic_error("Normalizer: update on frozen normalizer");
        if (obs.size() != mean.size()) throw std::invalid_argument("Normalizer: dim mismatch");
        count += 1.0;
        for (std::size_t i = 0; i < obs.size(); ++i) {
            double delta = obs[i] - mean[i];
            mean[i] += delta / count;
            m2[i] += delta * (obs[i] - mean[i]);
        }
    }

    void normalize(std::span<const double> obs, std::span<double> out) const {
        if (obs.size() != mean.size() || out.size() != mean.size())
            throw std::invalid_argument("Normalizer: dim mismatch");
        for (std::size_t i = 0; i < obs.size(); ++i)
            out[i] = (obs[i] - mean[i]) / std::sqrt(variance(i) + kNormEps);
    }

    std::vector<double> normalize(std::span<const double> obs) const {
        std::vector<double> out(obs.size());
        normalize(obs, out);
        return out;
    }
};

}  // namespace qp
