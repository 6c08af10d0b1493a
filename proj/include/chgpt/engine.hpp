#pragma once

#include <atomic>
#include <cmath>
#include <cstddef>
#include <exception>
#include <functional>
#include <limits>
#include <mutex>
#include <span>
#include <thread>
#include <vector>

#include "chgpt/errors.hpp"
#include "chgpt/scenario.hpp"
#include "chgpt/stats.hpp"

namespace chgpt {

namespace detail {

// Split-step description for the step containing tau.
struct TauSplit {
    bool active = false;
    std::size_t step = 0;
    double tau = 0.0;
    double dw1_pre = 0.0, dw2_pre = 0.0;  // increments on [t_k, tau]
};

// Euler-Maruyama on the regime SDE with the straddling step split exactly at
// tau. S is accumulated in log form: log S_{k+1} = log S_k + dX_k - V_k^2/2 dt.
inline void integrate_x(const RegimeCoefficients& c, double rho,
                        const TimeGrid& grid, std::span<const double> dw1,
                        std::span<const double> dw2, const EventTime& tau,
                        const TauSplit& split, double s0,
                        std::size_t path_index, PathBundle& out) {
    const double dt = grid.dt();
    const double rho2 = std::sqrt(1.0 - rho * rho);
    const double tau_t =
        tau.is_beyond_horizon() ? std::numeric_limits<double>::infinity()
                                : tau.value();
    double x = 0.0;
    double log_s = std::log(s0);
    out.x[0] = 0.0;
    out.s[0] = s0;
    out.v[0] = c.sigma1(0.0, 0.0);
    out.regime[0] = 0;
    for (std::size_t k = 0; k < grid.n_steps; ++k) {
        const double t0 = grid.t(k);
        const double t1 = grid.t(k + 1);
        if (split.active && split.step == k) {
            const double sa = split.tau - t0;
            const double sb = t1 - split.tau;
            const double m1 = c.mu1(t0, x), s1 = c.sigma1(t0, x);
            const double dxa = m1 * sa + s1 * split.dw1_pre;
            log_s += dxa - 0.5 * s1 * s1 * sa;
            const double x_tau = x + dxa;
            out.x_at_tau = x_tau;
            out.s_at_tau = std::exp(log_s);
            const double m2 = c.mu2(split.tau, x_tau);
            const double s2 = c.sigma2(split.tau, x_tau);
            const double dw1b = dw1[k] - split.dw1_pre;
            const double dw2b = dw2[k] - split.dw2_pre;
            const double dxb = m2 * sb + s2 * (rho * dw1b + rho2 * dw2b);
            log_s += dxb - 0.5 * s2 * s2 * sb;
            x = x_tau + dxb;
        } else if (t0 >= tau_t) {
            const double m2 = c.mu2(t0, x), s2 = c.sigma2(t0, x);
            const double dx = m2 * dt + s2 * (rho * dw1[k] + rho2 * dw2[k]);
            log_s += dx - 0.5 * s2 * s2 * dt;
            x += dx;
        } else {
            const double m1 = c.mu1(t0, x), s1 = c.sigma1(t0, x);
            const double dx = m1 * dt + s1 * dw1[k];
            log_s += dx - 0.5 * s1 * s1 * dt;
            x += dx;
        }
        if (!std::isfinite(x) || !std::isfinite(log_s))
            throw NumericalOverflow(path_index, k);
        out.x[k + 1] = x;
        out.s[k + 1] = std::exp(log_s);
        const bool post = t1 > tau_t;
        out.regime[k + 1] = post ? 1 : 0;
        out.v[k + 1] = post ? c.sigma2(t1, x) : c.sigma1(t1, x);
    }
}

}  // namespace detail

// Simulates one path of the scenario into `out` (reused buffers). Draw order
// per path: the 2n Brownian increments, then the tau draw(s), then the bridge
// normals for the split step.
inline void simulate_path(const ScenarioConfig& cfg, std::size_t path_index,
                          PathBundle& out) {
    const TimeGrid& grid = cfg.grid;
    const std::size_t n = grid.n_steps;
    const double dt = grid.dt();
    const double sdt = std::sqrt(dt);

    out.path_index = path_index;
    out.resize(grid.n_nodes());
    PathRng rng(cfg.master_seed, path_index);

    std::vector<double> dw1(n), dw2(n);
    for (std::size_t k = 0; k < n; ++k) {
        dw1[k] = sdt * rng.normal();
        dw2[k] = sdt * rng.normal();
    }
    for (std::size_t k = 0; k < n; ++k) {
        out.w1[k + 1] = out.w1[k] + dw1[k];
        out.w2[k + 1] = out.w2[k] + dw2[k];
    }

    // The Cox intensity may read the state; pre-tau the solution coincides
    // with the pure regime-1 path, which is what the sampler integrates.
    std::vector<double> x_pre;
    std::span<const double> x_for_tau = out.x;
    if (std::holds_alternative<CoxIntensity>(cfg.tau_spec)) {
        x_pre.assign(grid.n_nodes(), 0.0);
        double x = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
            x += cfg.coeffs.mu1(grid.t(k), x) * dt +
                 cfg.coeffs.sigma1(grid.t(k), x) * dw1[k];
            x_pre[k + 1] = x;
        }
        x_for_tau = x_pre;
    }

    EventTime tau = EventTime::beyond_horizon();
    const int max_rejection = 100000;
    for (int attempt = 0;; ++attempt) {
        tau = sample_tau(cfg.tau_spec, out.w1, x_for_tau, grid, rng.uniform(),
                         rng);
        if (!cfg.tau_condition) break;
        if (!tau.is_beyond_horizon() && tau.value() >= cfg.tau_condition->lo &&
            tau.value() <= cfg.tau_condition->hi)
            break;
        if (attempt >= max_rejection)
            throw SchemaError("tau.condition",
                              "rejection window has negligible mass");
    }
    out.tau = tau;

    detail::TauSplit split;
    if (!tau.is_beyond_horizon() && tau.value() < grid.horizon &&
        tau.value() > 0.0) {
        const std::size_t k = grid.step_of(tau.value());
        const double t0 = grid.t(k);
        const double sa = tau.value() - t0;
        const double sb = dt - sa;
        if (sa > 0.0 && sb > 0.0) {
            split.active = true;
            split.step = k;
            split.tau = tau.value();
            // Brownian bridge within the step, conditional on the recorded
            // endpoint increment.
            const double bridge_sd = std::sqrt(sa * sb / dt);
            const double xi1 = rng.normal();
            const double xi2 = rng.normal();
            if (std::holds_alternative<HittingTime>(cfg.tau_spec)) {
                // The driver sits exactly at the level at its hitting time.
                const double a = std::get<HittingTime>(cfg.tau_spec).level;
                split.dw1_pre = a - out.w1[k];
            } else {
                split.dw1_pre = (sa / dt) * dw1[k] + bridge_sd * xi1;
            }
            split.dw2_pre = (sa / dt) * dw2[k] + bridge_sd * xi2;
            out.w1_at_tau = out.w1[k] + split.dw1_pre;
            out.w2_at_tau = out.w2[k] + split.dw2_pre;
        }
    }
    if (!split.active && !tau.is_beyond_horizon()) {
        // tau on a node (or at 0): the nodal values serve as the at-tau state.
        const std::size_t k = grid.step_of(tau.value());
        const std::size_t node =
            (tau.value() - grid.t(k) < 0.5 * dt) ? k : k + 1;
        out.w1_at_tau = out.w1[node];
        out.w2_at_tau = out.w2[node];
    }

    detail::integrate_x(cfg.coeffs, cfg.rho, grid, dw1, dw2, tau, split,
                        cfg.s0, path_index, out);
    if (!split.active && !tau.is_beyond_horizon()) {
        const std::size_t k = grid.step_of(tau.value());
        const std::size_t node =
            (tau.value() - grid.t(k) < 0.5 * dt) ? k : k + 1;
        out.x_at_tau = out.x[node];
        out.s_at_tau = out.s[node];
    }
}

// Runs fn(path_index, bundle) for every path, parallel over fixed-size path
// blocks. Bundles are per-worker scratch; fn must copy out whatever it needs,
// indexed by path, so results are identical for any worker count.
inline void for_each_path(
    const ScenarioConfig& cfg, std::size_t n_workers,
    const std::function<void(std::size_t, const PathBundle&)>& fn) {
    cfg.validate();
    if (n_workers == 0) n_workers = 1;
    const std::size_t n_paths = cfg.n_paths;
    const std::size_t block = 64;
    std::atomic<std::size_t> next_block{0};
    std::exception_ptr error;
    std::mutex error_mutex;

    auto worker = [&]() {
        PathBundle bundle;
        for (;;) {
            const std::size_t b = next_block.fetch_add(1);
            const std::size_t lo = b * block;
            if (lo >= n_paths) return;
            const std::size_t hi = std::min(lo + block, n_paths);
            for (std::size_t i = lo; i < hi; ++i) {
                try {
                    simulate_path(cfg, i, bundle);
                    fn(i, bundle);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mutex);
                    if (!error) error = std::current_exception();
                    return;
                }
            }
        }
    };

    if (n_workers == 1) {
        worker();
    } else {
        std::vector<std::thread> threads;
        for (std::size_t i = 0; i < n_workers; ++i)
            threads.emplace_back(worker);
        for (auto& t : threads) t.join();
    }
    if (error) std::rethrow_exception(error);
}

// Materializes all bundles; only sensible for small path counts.
inline std::vector<PathBundle> simulate_paths(const ScenarioConfig& cfg,
                                              std::size_t n_workers = 1) {
    std::vector<PathBundle> out(cfg.n_paths);
    for_each_path(cfg, n_workers,
                  [&](std::size_t i, const PathBundle& b) { out[i] = b; });
    return out;
}

// --- Composed one-dimensional driver ---------------------------------------

struct ComposedDriver {
    std::vector<double> w_tilde;
};

// W~_t = W1_{t^tau} + rho (W1_{t v tau} - W1_tau) + sqrt(1-rho^2)
//        (W2_{t v tau} - W2_tau), evaluated at the grid nodes with the
// straddling step split at tau.
inline ComposedDriver compose_driver(std::span<const double> w1,
                                     std::span<const double> w2,
                                     const EventTime& tau, double w1_at_tau,
                                     double w2_at_tau, double rho,
                                     const TimeGrid& grid) {
    if (!(rho >= -1.0 && rho <= 1.0))
        throw std::invalid_argument("compose_driver: |rho| must be <= 1");
    if (w1.size() != grid.n_nodes() || w2.size() != grid.n_nodes())
        throw std::invalid_argument("compose_driver: paths not on grid");
    const double rho2 = std::sqrt(1.0 - rho * rho);
    ComposedDriver out;
    out.w_tilde.resize(grid.n_nodes());
    const double tau_t =
        tau.is_beyond_horizon() ? std::numeric_limits<double>::infinity()
                                : tau.value();
    for (std::size_t k = 0; k < grid.n_nodes(); ++k) {
        const double t = grid.t(k);
        if (t <= tau_t) {
            out.w_tilde[k] = w1[k];
        } else {
            out.w_tilde[k] = w1_at_tau + rho * (w1[k] - w1_at_tau) +
                             rho2 * (w2[k] - w2_at_tau);
        }
    }
    return out;
}

inline ComposedDriver compose_driver(const PathBundle& b, double rho,
                                     const TimeGrid& grid) {
    return compose_driver(b.w1, b.w2, b.tau, b.w1_at_tau, b.w2_at_tau, rho,
                          grid);
}

// --- Picard reference solver ------------------------------------------------

// Iterates X^{k+1} = int f(u, X^k_u) dY^ with the random volatility function
// f, starting from X^0 == 0 and keeping the driving increments fixed.
// Returns the sup-norm gaps g_k = max_t |X^{k+1}_t - X^k_t| for k = 1..k_max
// (iterates up to X^{k_max+1} are computed).
inline std::vector<double> picard_reference(const RegimeCoefficients& coeffs,
                                            const EventTime& tau,
                                            const TimeGrid& grid,
                                            std::span<const double> dyhat,
                                            std::size_t k_max) {
    if (k_max < 1)
        throw std::invalid_argument("picard_reference: k_max must be >= 1");
    if (dyhat.size() != grid.n_steps)
        throw std::invalid_argument("picard_reference: increments not on grid");
    const double tau_t =
        tau.is_beyond_horizon() ? std::numeric_limits<double>::infinity()
                                : tau.value();
    auto f = [&](double t, double x) {
        return t <= tau_t ? coeffs.sigma1(t, x) : coeffs.sigma2(t, x);
    };
    std::vector<double> prev(grid.n_nodes(), 0.0);
    std::vector<double> cur(grid.n_nodes(), 0.0);
    std::vector<double> gaps;
    for (std::size_t it = 0; it <= k_max; ++it) {
        cur[0] = 0.0;
        for (std::size_t j = 0; j < grid.n_steps; ++j)
            cur[j + 1] = cur[j] + f(grid.t(j), prev[j]) * dyhat[j];
        if (it >= 1) {
            double g = 0.0;
            for (std::size_t j = 0; j < grid.n_nodes(); ++j)
                g = std::max(g, std::abs(cur[j] - prev[j]));
            gaps.push_back(g);
        }
        prev.swap(cur);
    }
    return gaps;
}

// --- Coupled-refinement strong error study ----------------------------------

struct StrongErrorRow {
    std::size_t n_steps;
    double rms_terminal_error;  // vs the finest rung
};

struct StrongErrorStudy {
    std::vector<StrongErrorRow> rows;  // all rungs but the finest
    double slope = 0.0;                // log RMS error vs log dt
};

// Coarse increments are sums of the fine increments of the same underlying
// paths, so the ladder measures pure discretization error. tau is sampled on
// the finest grid and reused at every level; the at-tau driver state is
// interpolated from the finest path.
inline StrongErrorStudy strong_error_study(const ScenarioConfig& cfg,
                                           std::vector<std::size_t> ladder,
                                           std::size_t n_paths) {
    if (ladder.size() < 3)
        throw std::invalid_argument("strong_error_study: ladder needs >= 3 rungs");
    std::sort(ladder.begin(), ladder.end());
    const std::size_t n_fine = ladder.back();
    for (std::size_t n : ladder)
        if (n_fine % n != 0)
            throw std::invalid_argument(
                "strong_error_study: rungs must divide the finest one");

    const TimeGrid fine_grid(cfg.grid.horizon, n_fine);
    const double dtf = fine_grid.dt();
    const double sdtf = std::sqrt(dtf);

    std::vector<std::vector<double>> errors(ladder.size() - 1);
    for (auto& e : errors) e.resize(n_paths);

    std::vector<double> dw1f(n_fine), dw2f(n_fine);
    std::vector<double> w1f(n_fine + 1), w2f(n_fine + 1);
    PathBundle scratch;

    for (std::size_t p = 0; p < n_paths; ++p) {
        PathRng rng(cfg.master_seed, p);
        for (std::size_t k = 0; k < n_fine; ++k) {
            dw1f[k] = sdtf * rng.normal();
            dw2f[k] = sdtf * rng.normal();
        }
        w1f[0] = w2f[0] = 0.0;
        for (std::size_t k = 0; k < n_fine; ++k) {
            w1f[k + 1] = w1f[k] + dw1f[k];
            w2f[k + 1] = w2f[k] + dw2f[k];
        }
        std::vector<double> x1f;
        std::span<const double> x_for_tau = w1f;
        if (std::holds_alternative<CoxIntensity>(cfg.tau_spec)) {
            x1f.assign(n_fine + 1, 0.0);
            double xx = 0.0;
            for (std::size_t k = 0; k < n_fine; ++k) {
                xx += cfg.coeffs.mu1(fine_grid.t(k), xx) * dtf +
                      cfg.coeffs.sigma1(fine_grid.t(k), xx) * dw1f[k];
                x1f[k + 1] = xx;
            }
            x_for_tau = x1f;
        }
        EventTime tau = sample_tau(cfg.tau_spec, w1f, x_for_tau, fine_grid,
                                   rng.uniform(), rng);
        double w1_tau = 0.0, w2_tau = 0.0;
        if (!tau.is_beyond_horizon() && tau.value() < cfg.grid.horizon) {
            const std::size_t kf = fine_grid.step_of(tau.value());
            const double frac = (tau.value() - fine_grid.t(kf)) / dtf;
            w1_tau = w1f[kf] + frac * dw1f[kf];
            w2_tau = w2f[kf] + frac * dw2f[kf];
            if (std::holds_alternative<HittingTime>(cfg.tau_spec))
                w1_tau = std::get<HittingTime>(cfg.tau_spec).level;
        }

        double x_fine = 0.0;
        std::vector<double> x_terminal(ladder.size());
        for (std::size_t li = 0; li < ladder.size(); ++li) {
            const std::size_t n = ladder[li];
            const TimeGrid grid(cfg.grid.horizon, n);
            const std::size_t stride = n_fine / n;
            std::vector<double> dw1(n), dw2(n);
            for (std::size_t k = 0; k < n; ++k) {
                double a = 0.0, b = 0.0;
                for (std::size_t j = 0; j < stride; ++j) {
                    a += dw1f[k * stride + j];
                    b += dw2f[k * stride + j];
                }
                dw1[k] = a;
                dw2[k] = b;
            }
            detail::TauSplit split;
            if (!tau.is_beyond_horizon() && tau.value() < grid.horizon &&
                tau.value() > 0.0) {
                const std::size_t k = grid.step_of(tau.value());
                const double sa = tau.value() - grid.t(k);
                if (sa > 0.0 && grid.t(k + 1) - tau.value() > 0.0) {
                    split.active = true;
                    split.step = k;
                    split.tau = tau.value();
                    split.dw1_pre = w1_tau - w1f[k * stride];
                    split.dw2_pre = w2_tau - w2f[k * stride];
                }
            }
            scratch.resize(grid.n_nodes());
            detail::integrate_x(cfg.coeffs, cfg.rho, grid, dw1, dw2, tau,
                                split, cfg.s0, p, scratch);
            x_terminal[li] = scratch.x[grid.n_steps];
            if (li + 1 == ladder.size()) x_fine = x_terminal[li];
        }
        for (std::size_t li = 0; li + 1 < ladder.size(); ++li)
            errors[li][p] = x_terminal[li] - x_fine;
    }

    StrongErrorStudy out;
    std::vector<double> log_dt, log_rmse;
    for (std::size_t li = 0; li + 1 < ladder.size(); ++li) {
        std::vector<double> sq(n_paths);
        for (std::size_t p = 0; p < n_paths; ++p)
            sq[p] = errors[li][p] * errors[li][p];
        const double rmse =
            std::sqrt(pairwise_sum(sq) / static_cast<double>(n_paths));
        out.rows.push_back({ladder[li], rmse});
        log_dt.push_back(std::log(cfg.grid.horizon /
                                  static_cast<double>(ladder[li])));
        log_rmse.push_back(std::log(std::max(rmse, 1e-300)));
    }
    out.slope = regression_slope(log_dt, log_rmse);
    return out;
}

}  // namespace chgpt
