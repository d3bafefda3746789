#pragma once

#include "qpolicy/matrix.hpp"
#include "qpolicy/optim.hpp"
#include "qpolicy/rng.hpp"

namespace qp {

// Plain FP32-style scalar-output MLP (two hidden ReLU layers), used for the
// critics. Batched through dgemm; discarded after training.
struct CriticNet {
    Matrix W1, W2, W3;
    Vector b1, b2, b3;

    CriticNet() = default;
    CriticNet(std::size_t in_dim, std::size_t width, Rng& rng);

    std::size_t param_count() const;

    struct Cache {
        Matrix x, h1, h2;
        Vector y;
    };

    Cache forward(const Matrix& x) const;

    struct Grads {
        Matrix dW1, dW2, dW3;
        Vector db1, db2, db3;
        explicit Grads(const CriticNet& n);
        void zero();
    };

    // dy: dL/dy per sample; dx optional output (needed for policy updates)
    void backward(const Cache& c, const Vector& dy, Grads& g, Matrix* dx) const;

    void adam_step(Adam& opt, const Grads& g);
    void soft_update_from(const CriticNet& online, double tau);
};

}  // namespace qp
