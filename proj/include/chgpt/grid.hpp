#pragma once

#include <cstddef>
#include <stdexcept>

namespace chgpt {

// Uniform grid on [0, T] with n_steps steps and n_steps + 1 nodes.
struct TimeGrid {
    double horizon = 1.0;
    std::size_t n_steps = 0;

    TimeGrid() = default;
    TimeGrid(double T, std::size_t n) : horizon(T), n_steps(n) {
        if (T <= 0.0) throw std::invalid_argument("TimeGrid: horizon must be positive");
        if (n == 0) throw std::invalid_argument("TimeGrid: n_steps must be positive");
    }

    double dt() const { return horizon / static_cast<double>(n_steps); }
    std::size_t n_nodes() const { return n_steps + 1; }

    // t(n_steps) == horizon exactly; the last step absorbs rounding.
    double t(std::size_t k) const {
        return k == n_steps ? horizon : static_cast<double>(k) * dt();
    }

    // Index of the step [t_k, t_{k+1}) containing time s, clamped to the grid.
    std::size_t step_of(double s) const {
        if (s <= 0.0) return 0;
        auto k = static_cast<std::size_t>(s / dt());
        return k >= n_steps ? n_steps - 1 : k;
    }
};

}  // namespace chgpt
