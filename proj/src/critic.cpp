#include "qpolicy/critic.hpp"

#include <cmath>

namespace qp {

static void init_linear(Matrix& W, Vector& b, Rng& rng) {
    double bound = 1.0 / std::sqrt(static_cast<double>(W.cols));
    for (auto& w : W.data) w = rng.uniform(-bound, bound);
    for (auto& x : b) x = rng.uniform(-bound, bound);
}

CriticNet::CriticNet(std::size_t in_dim, std::size_t width, Rng& rng) {
    W1 = Matrix(width, in_dim);
    b1 = Vector(width, 0.0);
    W2 = Matrix(width, width);
    b2 = Vector(width, 0.0);
    W3 = Matrix(1, width);
    b3 = Vector(1, 0.0);
    init_linear(W1, b1, rng);
    init_linear(W2, b2, rng);
    init_linear(W3, b3, rng);
}

std::size_t CriticNet::param_count() const {
    return W1.data.size() + b1.size() + W2.data.size() + b2.size() + W3.data.size() + b3.size();
}

CriticNet::Cache CriticNet::forward(const Matrix& x) const {
    Cache c;
    c.x = x;
    const std::size_t B = x.rows;
    c.h1 = Matrix(B, W1.rows);
    gemm(false, true, 1.0, x, W1, 0.0, c.h1);
    for (std::size_t r = 0; r < B; ++r)
        for (std::size_t k = 0; k < W1.rows; ++k)
            c.h1.at(r, k) = std::max(0.0, c.h1.at(r, k) + b1[k]);
    c.h2 = Matrix(B, W2.rows);
    gemm(false, true, 1.0, c.h1, W2, 0.0, c.h2);
    for (std::size_t r = 0; r < B; ++r)
        for (std::size_t k = 0; k < W2.rows; ++k)
            c.h2.at(r, k) = std::max(0.0, c.h2.at(r, k) + b2[k]);
    c.y = Vector(B, 0.0);
    for (std::size_t r = 0; r < B; ++r) {
        double s = b3[0];
        const double* h = c.h2.row(r).data();
        const double* w = W3.row(0).data();
        for (std::size_t k = 0; k < W3.cols; ++k) s += h[k] * w[k];
        c.y[r] = s;
    }
    return c;
}

CriticNet::Grads::Grads(const CriticNet& n)
    : dW1(n.W1.rows, n.W1.cols),
      dW2(n.W2.rows, n.W2.cols),
      dW3(n.W3.rows, n.W3.cols),
      db1(n.b1.size(), 0.0),
      db2(n.b2.size(), 0.0),
      db3(n.b3.size(), 0.0) {}

void CriticNet::Grads::zero() {
    dW1.zero();
    dW2.zero();
    dW3.zero();
    std::fill(db1.begin(), db1.end(), 0.0);
    std::fill(db2.begin(), db2.end(), 0.0);
    std::fill(db3.begin(), db3.end(), 0.0);
}

void CriticNet::backward(const Cache& c, const Vector& dy, Grads& g, Matrix* dx) const {
    const std::size_t B = c.x.rows;
    // layer 3
    Matrix g2(B, W3.cols);
    for (std::size_t r = 0; r < B; ++r) {
        g.db3[0] += dy[r];
        const double* h = c.h2.row(r).data();
        double* gw = g.dW3.row(0).data();
        double* gr = g2.row(r).data();
        const double* w = W3.row(0).data();
        for (std::size_t k = 0; k < W3.cols; ++k) {
            gw[k] += dy[r] * h[k];
            gr[k] = dy[r] * w[k];
        }
    }
    // relu at h2
    for (std::size_t i = 0; i < g2.data.size(); ++i)
        if (c.h2.data[i] <= 0.0) g2.data[i] = 0.0;
    for (std::size_t r = 0; r < B; ++r)
        for (std::size_t k = 0; k < W2.rows; ++k) g.db2[k] += g2.at(r, k);
    gemm(true, false, 1.0, g2, c.h1, 1.0, g.dW2);
    Matrix g1(B, W2.cols);
    gemm(false, false, 1.0, g2, W2, 0.0, g1);
    for (std::size_t i = 0; i < g1.data.size(); ++i)
        if (c.h1.data[i] <= 0.0) g1.data[i] = 0.0;
    for (std::size_t r = 0; r < B; ++r)
        for (std::size_t k = 0; k < W1.rows; ++k) g.db1[k] += g1.at(r, k);
    gemm(true, false, 1.0, g1, c.x, 1.0, g.dW1);
    if (dx) {
        *dx = Matrix(B, W1.cols);
        gemm(false, false, 1.0, g1, W1, 0.0, *dx);
    }
}

void CriticNet::adam_step(Adam& opt, const Grads& g) {
    std::vector<std::pair<double*, const double*>> segs = {
        {W1.data.data(), g.dW1.data.data()}, {b1.data(), g.db1.data()},
        {W2.data.data(), g.dW2.data.data()}, {b2.data(), g.db2.data()},
        {W3.data.data(), g.dW3.data.data()}, {b3.data(), g.db3.data()},
    };
    std::vector<std::size_t> sizes = {W1.data.size(), b1.size(), W2.data.size(),
                                      b2.size(),      W3.data.size(), b3.size()};
    opt.step(segs, sizes);
}

void CriticNet::soft_update_from(const CriticNet& online, double tau) {
    auto blend = [tau](Vector& tgt, const Vector& src) {
        for (std::size_t i = 0; i < tgt.size(); ++i) tgt[i] = (1.0 - tau) * tgt[i] + tau * src[i];
    };
    blend(W1.data, online.W1.data);
    blend(b1, online.b1);
    blend(W2.data, online.W2.data);
    blend(b2, online.b2);
    blend(W3.data, online.W3.data);
    blend(b3, online.b3);
}

}  // namespace qp
