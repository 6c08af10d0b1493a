#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <variant>
#include <vector>

#include "chgpt/errors.hpp"
#include "chgpt/grid.hpp"
#include "chgpt/rng.hpp"

namespace chgpt {

// A change-point time, possibly beyond the simulation horizon. The
// beyond-horizon case is a distinguished state, never a sentinel value that
// could leak into arithmetic.
class EventTime {
public:
    static EventTime at(double t) {
        if (!(t >= 0.0)) throw std::invalid_argument("EventTime: t must be >= 0");
        EventTime e;
        e.beyond_ = false;
        e.t_ = t;
        return e;
    }
    static EventTime beyond_horizon() { return EventTime{}; }

    bool is_beyond_horizon() const { return beyond_; }
    double value() const {
        if (beyond_)
            throw std::logic_error("EventTime: no numeric value beyond horizon");
        return t_;
    }
    // The time if it occurred, else the horizon. Safe for clamped integrals.
    double value_or(double horizon) const { return beyond_ ? horizon : t_; }
    bool occurred_by(double t) const { return !beyond_ && t_ <= t; }

private:
    EventTime() = default;
    bool beyond_ = true;
    double t_ = std::numeric_limits<double>::quiet_NaN();
};

// --- Supported random-time constructions -----------------------------------

struct DeterministicTime {
    double t0;
};

struct IndependentLaw {
    std::function<double(double)> cdf;      // nondecreasing, cdf(0) = 0
    std::function<double(double)> density;  // >= 0, consistent with cdf
    // Points where the density is allowed to jump; the consistency check
    // aligns its quadrature cells with them.
    std::vector<double> knots;
};

struct CoxIntensity {
    // lambda(t, w1_value, x_value) >= 0
    std::function<double(double, double, double)> intensity;
};

struct HittingTime {
    double level;  // a > 0, on the driver W^1
};

using RandomTimeSpec =
    std::variant<DeterministicTime, IndependentLaw, CoxIntensity, HittingTime>;

struct RandomTimeViolation {
    std::string what;
    double t;
};

// Probe-lattice checks of the spec invariants; violations are data.
inline std::vector<RandomTimeViolation> validate_random_time(
    const RandomTimeSpec& spec, double horizon, std::size_t n_probe = 1024) {
    std::vector<RandomTimeViolation> out;
    if (const auto* d = std::get_if<DeterministicTime>(&spec)) {
        if (!(d->t0 > 0.0)) out.push_back({"t0 must be positive", d->t0});
    } else if (const auto* law = std::get_if<IndependentLaw>(&spec)) {
        if (std::abs(law->cdf(0.0)) > 1e-12) out.push_back({"cdf(0) != 0", 0.0});
        // Probe lattice aligned with the declared density knots, so each
        // quadrature cell is smooth; composite midpoint rule per cell.
        std::vector<double> probes;
        probes.reserve(n_probe + law->knots.size() + 1);
        for (std::size_t i = 0; i <= n_probe; ++i)
            probes.push_back(horizon * static_cast<double>(i) /
                             static_cast<double>(n_probe));
        for (double k : law->knots)
            if (k > 0.0 && k < horizon) probes.push_back(k);
        std::sort(probes.begin(), probes.end());
        double acc = 0.0;
        double prev_t = 0.0, prev_c = 0.0;
        for (std::size_t i = 1; i < probes.size(); ++i) {
            double t = probes[i];
            double cell = t - prev_t;
            if (cell <= 0.0) continue;
            double c = law->cdf(t);
            if (c < prev_c - 1e-12) out.push_back({"cdf decreasing", t});
            for (int j = 0; j < 4; ++j) {
                double m = prev_t + cell * (2.0 * j + 1.0) / 8.0;
                double p = law->density(m);
                if (p < 0.0) out.push_back({"density < 0", m});
                acc += p * cell / 4.0;
            }
            if (std::abs(acc - c) > 1e-6)
                out.push_back({"density inconsistent with cdf", t});
            prev_t = t;
            prev_c = c;
        }
    } else if (const auto* cox = std::get_if<CoxIntensity>(&spec)) {
        double dt = horizon / static_cast<double>(n_probe);
        for (std::size_t i = 0; i <= n_probe; ++i) {
            double t = static_cast<double>(i) * dt;
            if (cox->intensity(t, 0.0, 0.0) < 0.0)
                out.push_back({"intensity < 0", t});
        }
    } else if (const auto* h = std::get_if<HittingTime>(&spec)) {
        if (!(h->level > 0.0)) out.push_back({"level must be positive", h->level});
    }
    return out;
}

// Generalized inverse of the cdf by bisection on [0, horizon].
inline EventTime invert_law(const IndependentLaw& law, double u,
                            double horizon) {
    if (law.cdf(horizon) < u) return EventTime::beyond_horizon();
    double lo = 0.0, hi = horizon;
    for (int i = 0; i < 80; ++i) {
        double mid = 0.5 * (lo + hi);
        if (law.cdf(mid) >= u)
            hi = mid;
        else
            lo = mid;
    }
    return EventTime::at(hi);
}

// Samples the change point consistently with already-simulated driver paths.
//
//  - Deterministic: t0 (beyond the horizon when t0 > T).
//  - IndependentLaw: generalized inverse cdf^{-1}(u).
//  - Cox: first t with int_0^t lambda ds >= -log(1-u), trapezoid accumulation
//    with linear interpolation inside the step.
//  - HittingTime: first crossing of the level by w1; inside a step whose
//    endpoints are both below the level, a crossing is declared with the
//    Brownian-bridge probability exp(-2 (a-w_k)(a-w_{k+1}) / dt), drawing the
//    acceptance uniforms from `rng`.
//
// w1 and x are node arrays on the grid (size n_steps + 1); they are only read
// for the Cox and HittingTime cases.
inline EventTime sample_tau(const RandomTimeSpec& spec,
                            std::span<const double> w1,
                            std::span<const double> x, const TimeGrid& grid,
                            double u, PathRng& rng) {
    if (!(u > 0.0 && u < 1.0))
        throw std::invalid_argument("sample_tau: u must lie in (0,1)");
    if (const auto* d = std::get_if<DeterministicTime>(&spec)) {
        if (d->t0 > grid.horizon) return EventTime::beyond_horizon();
        return EventTime::at(d->t0);
    }
    if (const auto* law = std::get_if<IndependentLaw>(&spec))
        return invert_law(*law, u, grid.horizon);
    if (const auto* cox = std::get_if<CoxIntensity>(&spec)) {
        if (w1.size() != grid.n_nodes() || x.size() != grid.n_nodes())
            throw std::invalid_argument("sample_tau: driver paths not on grid");
        const double target = -std::log1p(-u);
        double acc = 0.0;
        double prev = cox->intensity(0.0, w1[0], x[0]);
        const double dt = grid.dt();
        for (std::size_t k = 0; k < grid.n_steps; ++k) {
            double lam = cox->intensity(grid.t(k + 1), w1[k + 1], x[k + 1]);
            double inc = 0.5 * (prev + lam) * dt;
            if (acc + inc >= target && inc > 0.0) {
                double frac = (target - acc) / inc;
                return EventTime::at(grid.t(k) + frac * dt);
            }
            acc += inc;
            prev = lam;
        }
        return EventTime::beyond_horizon();
    }
    const auto& hit = std::get<HittingTime>(spec);
    if (w1.size() != grid.n_nodes())
        throw std::invalid_argument("sample_tau: driver path not on grid");
    const double a = hit.level;
    const double dt = grid.dt();
    for (std::size_t k = 0; k < grid.n_steps; ++k) {
        if (w1[k + 1] >= a) {
            // Crossed within the step; place tau at the linear crossing point.
            double frac = (a - w1[k]) / (w1[k + 1] - w1[k]);
            return EventTime::at(grid.t(k) + frac * dt);
        }
        // Both endpoints below the level: bridge crossing probability on the
        // raw W^1 increment.
        double p = std::exp(-2.0 * (a - w1[k]) * (a - w1[k + 1]) / dt);
        if (rng.uniform() < p) return EventTime::at(grid.t(k) + 0.5 * dt);
    }
    return EventTime::beyond_horizon();
}

// Hazard compensator A_t = int_0^{t ^ tau} dF/(1-F) ds for an independent
// law, or the integrated intensity for a Cox time. Predictable times carry a
// trivial jump martingale (M == 0) and are rejected with a typed error.
inline std::vector<double> compensator(const RandomTimeSpec& spec,
                                       const EventTime& tau,
                                       std::span<const double> w1,
                                       std::span<const double> x,
                                       const TimeGrid& grid) {
    if (std::holds_alternative<DeterministicTime>(spec) ||
        std::holds_alternative<HittingTime>(spec))
        throw PredictableTimeError{};

    const double dt = grid.dt();
    const double tau_clamped = tau.value_or(grid.horizon);
    std::vector<double> a(grid.n_nodes(), 0.0);

    auto hazard_at = [&](double t) -> double {
        if (const auto* law = std::get_if<IndependentLaw>(&spec)) {
            double surv = 1.0 - law->cdf(t);
            if (surv <= 1e-12) throw SingularHazardError(t);
            return law->density(t) / surv;
        }
        const auto& cox = std::get<CoxIntensity>(spec);
        std::size_t k = grid.step_of(t);
        // intensity evaluated on the simulated drivers, frozen per node
        double frac = (t - grid.t(k)) / dt;
        double w = w1[k] + frac * (w1[k + 1] - w1[k]);
        double xx = x[k] + frac * (x[k + 1] - x[k]);
        return cox.intensity(t, w, xx);
    };

    double prev_h = hazard_at(0.0);
    for (std::size_t k = 0; k < grid.n_steps; ++k) {
        double t0 = grid.t(k), t1 = grid.t(k + 1);
        if (t0 >= tau_clamped) {
            a[k + 1] = a[k];
            continue;
        }
        double upper = std::min(t1, tau_clamped);
        double h = hazard_at(upper);
        a[k + 1] = a[k] + 0.5 * (prev_h + h) * (upper - t0);
        prev_h = (upper < t1) ? h : hazard_at(t1);
    }
    return a;
}

}  // namespace chgpt
