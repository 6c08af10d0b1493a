#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "chgpt/coefficients.hpp"
#include "chgpt/grid.hpp"
#include "chgpt/random_time.hpp"

namespace chgpt {

// Local realized variance per unit time from a backward window, so the value
// at index k uses only increments up to t_k.
struct QvDerivativeEstimate {
    std::vector<double> v2_hat;  // valid from index window_w onward
    std::size_t window_w = 0;

    bool available(std::size_t k) const { return k >= window_w; }
};

inline QvDerivativeEstimate realized_qv_derivative(std::span<const double> x,
                                                   const TimeGrid& grid,
                                                   std::size_t window_w) {
    if (x.size() != grid.n_nodes())
        throw std::invalid_argument("realized_qv_derivative: path not on grid");
    if (window_w < 2)
        throw std::invalid_argument("realized_qv_derivative: window must be >= 2");
    if (window_w > grid.n_steps / 8)
        throw std::invalid_argument(
            "realized_qv_derivative: window exceeds n_steps/8");
    QvDerivativeEstimate out;
    out.window_w = window_w;
    out.v2_hat.assign(grid.n_nodes(), 0.0);
    const double dt = grid.dt();
    double acc = 0.0;
    for (std::size_t k = 1; k < grid.n_nodes(); ++k) {
        const double d = x[k] - x[k - 1];
        acc += d * d;
        if (k >= window_w) {
            if (k > window_w) {
                const double drop = x[k - window_w] - x[k - window_w - 1];
                acc -= drop * drop;
            }
            out.v2_hat[k] = acc / (static_cast<double>(window_w) * dt);
        }
    }
    return out;
}

// --- Change-point detector ---------------------------------------------------

enum class DetectionVerdict { Detected, None, Undetectable };

struct DetectionResult {
    DetectionVerdict verdict = DetectionVerdict::None;
    EventTime tau_hat = EventTime::beyond_horizon();
    std::size_t switch_index = 0;
    double margin = 0.0;  // classification gap at the switch node
};

struct DetectorOptions {
    std::size_t run_length = 3;       // consecutive regime-2 nodes required
    double separation_floor = 1e-6;   // relative floor for |s1^2 - s2^2|
};

// Classifies each node's realized variance against the two candidate
// volatilities along the observed path; the change point estimate is the
// start of the first confirmed run of regime-2 classifications. Exact
// midpoints resolve to regime 1, matching the 1{t <= tau} convention.
inline DetectionResult detect_change_point(const QvDerivativeEstimate& est,
                                           const RegimeCoefficients& coeffs,
                                           std::span<const double> x,
                                           const TimeGrid& grid,
                                           const DetectorOptions& opt = {}) {
    if (x.size() != grid.n_nodes())
        throw std::invalid_argument("detect_change_point: path not on grid");
    DetectionResult out;

    // Condition check along the path: the two squared volatilities must be
    // separated, otherwise the change point is not observable.
    for (std::size_t k = est.window_w; k < grid.n_nodes(); ++k) {
        const double s1 = coeffs.sigma1(grid.t(k), x[k]);
        const double s2 = coeffs.sigma2(grid.t(k), x[k]);
        const double gap = std::abs(s1 * s1 - s2 * s2);
        if (gap <= opt.separation_floor * std::max(s1 * s1, s2 * s2)) {
            out.verdict = DetectionVerdict::Undetectable;
            return out;
        }
    }

    std::size_t run = 0;
    std::size_t run_start = 0;
    for (std::size_t k = est.window_w; k < grid.n_nodes(); ++k) {
        const double s1 = coeffs.sigma1(grid.t(k), x[k]);
        const double s2 = coeffs.sigma2(grid.t(k), x[k]);
        const double d1 = std::abs(est.v2_hat[k] - s1 * s1);
        const double d2 = std::abs(est.v2_hat[k] - s2 * s2);
        const bool regime2 = d2 < d1;
        if (regime2) {
            if (run == 0) run_start = k;
            ++run;
            if (run >= opt.run_length) {
                out.verdict = DetectionVerdict::Detected;
                out.switch_index = run_start;
                out.tau_hat = EventTime::at(grid.t(run_start));
                const double m1 =
                    std::abs(est.v2_hat[run_start] -
                             std::pow(coeffs.sigma1(grid.t(run_start),
                                                    x[run_start]),
                                      2));
                const double m2 =
                    std::abs(est.v2_hat[run_start] -
                             std::pow(coeffs.sigma2(grid.t(run_start),
                                                    x[run_start]),
                                      2));
                out.margin = m1 - m2;
                return out;
            }
        } else {
            run = 0;
        }
    }
    out.verdict = DetectionVerdict::None;
    return out;
}

// --- Drifted Brownian motions ------------------------------------------------

// Y^_t = int_0^t V_u^{-1} dX_u with the integrand evaluated at the left node.
inline std::vector<double> build_yhat(std::span<const double> x,
                                      std::span<const double> v,
                                      const TimeGrid& grid) {
    if (x.size() != grid.n_nodes() || v.size() != grid.n_nodes())
        throw std::invalid_argument("build_yhat: paths not on grid");
    std::vector<double> y(grid.n_nodes(), 0.0);
    for (std::size_t k = 0; k < grid.n_steps; ++k) {
        if (!(v[k] > 0.0))
            throw std::invalid_argument("build_yhat: nonpositive volatility");
        y[k + 1] = y[k] + (x[k + 1] - x[k]) / v[k];
    }
    return y;
}

// Identical-volatility counterpart: Ybar_t = int_0^t sigma(u, X_u)^{-1} dX_u.
inline std::vector<double> build_ybar(std::span<const double> x,
                                      const RegimeCoefficients& coeffs,
                                      const TimeGrid& grid) {
    if (!identical_volatilities(coeffs,
                                ProbeLattice{grid.horizon, -10.0, 10.0, 16, 33}))
        throw std::invalid_argument(
            "build_ybar: requires identical volatility functions");
    if (x.size() != grid.n_nodes())
        throw std::invalid_argument("build_ybar: path not on grid");
    std::vector<double> y(grid.n_nodes(), 0.0);
    for (std::size_t k = 0; k < grid.n_steps; ++k) {
        const double s = coeffs.sigma1(grid.t(k), x[k]);
        if (!(s > 0.0))
            throw std::invalid_argument("build_ybar: nonpositive volatility");
        y[k + 1] = y[k] + (x[k + 1] - x[k]) / s;
    }
    return y;
}

// --- Compensated jump martingale ---------------------------------------------

struct JumpMartingale {
    std::vector<double> m;  // 1{tau <= t_k} - A_k
    std::vector<double> a;  // compensator
};

inline JumpMartingale build_jump_martingale(const EventTime& tau,
                                            std::vector<double> compensator,
                                            const TimeGrid& grid) {
    if (compensator.size() != grid.n_nodes())
        throw std::invalid_argument(
            "build_jump_martingale: compensator not on grid");
    JumpMartingale out;
    out.a = std::move(compensator);
    out.m.resize(grid.n_nodes());
    for (std::size_t k = 0; k < grid.n_nodes(); ++k) {
        const double ind = tau.occurred_by(grid.t(k)) ? 1.0 : 0.0;
        out.m[k] = ind - out.a[k];
    }
    return out;
}

}  // namespace chgpt
