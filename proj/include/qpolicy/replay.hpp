#pragma once

#include <cstddef>
#include <stdexcept>
#include <vector>

#include "qpolicy/rng.hpp"

namespace qp {

struct Transition {
    std::vector<double> s;
    std::vector<double> a;
    double r = 0.0;
    std::vector<double> s_next;
    bool terminal = false;  // true only for real terminations, not time limits
};

// Ring buffer with FIFO eviction; batches sample uniformly without
// replacement.
class ReplayBuffer {
public:
    explicit ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
        if (capacity == 0) throw std::invalid_argument("ReplayBuffer: zero capacity");
    }

    std::size_t size() const { return data_.size(); }
    std::size_t capacity() const { return capacity_; }

    void push(Transition t) {
        if (data_.size() < capacity_) {
            data_.push_back(std::move(t));
        } else {
            data_[head_] = std::move(t);
            head_ = (head_ + 1) % capacity_;
        }
    }

    const Transition& at(std::size_t i) const { return data_[i]; }

    // Floyd's algorithm: n distinct indices, deterministic given the RNG.
    std::vector<std::size_t> sample_indices(std::size_t n, Rng& rng) const {
        if (n > data_.size()) throw std::invalid_argument("ReplayBuffer: batch larger than buffer");
        std::vector<std::size_t> out;
        out.reserve(n);
        std::vector<bool> used(data_.size(), false);
        for (std::size_t j = data_.size() - n; j < data_.size(); ++j) {
            auto t = static_cast<std::size_t>(rng.uniform_int(0, static_cast<i64>(j)));
            if (used[t]) t = j;
            used[t] = true;
            out.push_back(t);
        }
        return out;
    }

private:
    std::size_t capacity_;
    std::size_t head_ = 0;  // next eviction slot once full
    std::vector<Transition> data_;
};

}  // namespace qp
