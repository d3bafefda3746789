#pragma once

#include <cmath>
#include <span>
#include <vector>

namespace qp {

// Adam over a fixed list of parameter tensors, flattened.
class Adam {
public:
    Adam(double lr, std::size_t total_params, double beta1 = 0.9, double beta2 = 0.999,
         double eps = 1e-8)
        : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps), m_(total_params, 0.0), v_(total_params, 0.0) {}

    // params/grads segments must arrive in the same order every step
    void step(std::span<const std::pair<double*, const double*>> segs,
              std::span<const std::size_t> sizes) {
        ++t_;
        double bc1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
        double bc2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
        std::size_t off = 0;
        for (std::size_t s = 0; s < segs.size(); ++s) {
            double* p = segs[s].first;
            const double* g = segs[s].second;
            for (std::size_t i = 0; i < sizes[s]; ++i) {
                double& m = m_[off + i];
                double& v = v_[off + i];
                m = b1_ * m + (1.0 - b1_) * g[i];
                v = b2_ * v + (1.0 - b2_) * g[i] * g[i];
                p[i] -= lr_ * (m / bc1) / (std::sqrt(v / bc2) + eps_);
            }
            off += sizes[s];
        }
    }

    double lr() const { return lr_; }

private:
    double lr_, b1_, b2_, eps_;
    long long t_ = 0;
    std::vector<double> m_, v_;
};

}  // namespace qp
