#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "chgpt/coefficients.hpp"
#include "chgpt/grid.hpp"
#include "chgpt/random_time.hpp"

namespace chgpt {

enum class FiltrationTag { FX, GX, G, G_tau, GX_tau };

inline const char* to_string(FiltrationTag tag) {
    switch (tag) {
        case FiltrationTag::FX: return "FX";
        case FiltrationTag::GX: return "GX";
        case FiltrationTag::G: return "G";
        case FiltrationTag::G_tau: return "G_tau";
        case FiltrationTag::GX_tau: return "GX_tau";
    }
    return "?";
}

// Rejection window for conditioning tau (only meaningful for constructions
// driven by the inverse-cdf draw u).
struct TauConditioning {
    double lo;
    double hi;
};

struct ScenarioConfig {
    std::string name;
    RegimeCoefficients coeffs;
    double rho = 0.0;
    RandomTimeSpec tau_spec = DeterministicTime{1e9};
    TimeGrid grid;
    double s0 = 1.0;
    std::size_t n_paths = 1;
    std::uint64_t master_seed = 0;
    FiltrationTag filtration_tag = FiltrationTag::GX;
    std::optional<TauConditioning> tau_condition;

    void validate() const {
        if (!(rho >= -1.0 && rho <= 1.0))
            throw SchemaError("scenario.rho", "must lie in [-1, 1]");
        if (!(s0 > 0.0)) throw SchemaError("scenario.s0", "must be positive");
        if (n_paths < 1)
            throw SchemaError("scenario.n_paths", "must be >= 1");
        if (tau_condition &&
            !(tau_condition->lo >= 0.0 && tau_condition->hi > tau_condition->lo))
            throw SchemaError("tau.condition", "window must satisfy 0 <= lo < hi");
    }

    // Stable across runs with identical configuration; the name stands in for
    // the callable coefficients (they come from the named registry).
    std::uint64_t fingerprint() const {
        std::uint64_t h = 1469598103934665603ull;
        auto mix = [&h](std::uint64_t v) {
            for (int i = 0; i < 8; ++i) {
                h ^= (v >> (8 * i)) & 0xff;
                h *= 1099511628211ull;
            }
        };
        for (char c : name) mix(static_cast<std::uint8_t>(c));
        auto mixd = [&](double d) {
            std::uint64_t bits;
            static_assert(sizeof(bits) == sizeof(d));
            __builtin_memcpy(&bits, &d, sizeof(bits));
            mix(bits);
        };
        mixd(rho);
        mixd(s0);
        mixd(grid.horizon);
        mix(grid.n_steps);
        mix(n_paths);
        mix(master_seed);
        mix(static_cast<std::uint64_t>(filtration_tag));
        mix(tau_spec.index());
        return h;
    }
};

// Per-path output: node arrays on the grid plus the sampled change point and
// the split-step state at tau.
struct PathBundle {
    std::size_t path_index = 0;
    std::vector<double> w1, w2;         // driving Brownian samples at nodes
    std::vector<double> x;              // solution of the regime SDE
    std::vector<double> s;              // price, stochastic exponential of X
    std::vector<double> v;              // instantaneous volatility V_t
    std::vector<std::uint8_t> regime;   // 1{t_k > tau}
    EventTime tau = EventTime::beyond_horizon();
    // State at tau when tau falls strictly inside a step (split point).
    double w1_at_tau = 0.0, w2_at_tau = 0.0, x_at_tau = 0.0, s_at_tau = 0.0;
    // Information drift samples when the scenario provides them analytically.
    std::vector<double> theta_info;

    void resize(std::size_t n_nodes) {
        w1.assign(n_nodes, 0.0);
        w2.assign(n_nodes, 0.0);
        x.assign(n_nodes, 0.0);
        s.assign(n_nodes, 0.0);
        v.assign(n_nodes, 0.0);
        regime.assign(n_nodes, 0);
        theta_info.clear();
    }
};

}  // namespace chgpt
