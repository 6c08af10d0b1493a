#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "chgpt/coefficients.hpp"
#include "chgpt/engine.hpp"
#include "chgpt/filtration.hpp"
#include "chgpt/scenario.hpp"
#include "chgpt/stats.hpp"

namespace chgpt {

// --- Market price of risk ----------------------------------------------------

struct MarketPriceOfRisk {
    std::vector<double> lambda;  // per node
    FiltrationTag tag = FiltrationTag::G;
};

// Information drift of W^1 under initial enlargement with a first-hitting
// time: pre-tau the driver is a Brownian motion conditioned to first reach
// the level at tau, post-tau increments carry no extra information.
inline std::vector<double> initial_enlargement_drift(const EventTime& tau,
                                                     std::span<const double> w1,
                                                     const HittingTime& spec,
                                                     const TimeGrid& grid) {
    if (w1.size() != grid.n_nodes())
        throw std::invalid_argument("initial_enlargement_drift: path not on grid");
    const double a = spec.level;
    std::vector<double> theta(grid.n_nodes(), 0.0);
    const double tau_t = tau.value_or(std::numeric_limits<double>::infinity());
    for (std::size_t k = 0; k < grid.n_nodes(); ++k) {
        const double t = grid.t(k);
        if (t >= tau_t) break;
        const double gap = a - w1[k];
        if (!(gap > 0.0))
            throw std::invalid_argument(
                "initial_enlargement_drift: driver at or above the level "
                "before tau");
        theta[k] = gap / (tau_t - t) - 1.0 / gap;
    }
    return theta;
}

namespace detail {

inline bool is_progressive(FiltrationTag tag) {
    return tag == FiltrationTag::FX || tag == FiltrationTag::GX ||
           tag == FiltrationTag::G;
}

}  // namespace detail

// Builds lambda = (drift of the canonical decomposition) / V at each node for
// scenarios whose information drift is known analytically:
//
//  - progressive tags: deterministic, independent and Cox times satisfy
//    immersion, a hitting time is a stopping time of the base filtration; in
//    all four cases theta == 0 and the G and G^X decompositions coincide.
//  - FX with identical volatilities additionally needs identical drifts
//    (otherwise the projection of the regime indicator is not available).
//  - initial tags: independent/deterministic times have theta^(tau) == 0;
//    a hitting time carries the first-passage bridge drift on W^1.
inline MarketPriceOfRisk market_price_of_risk(const PathBundle& bundle,
                                              const RegimeCoefficients& coeffs,
                                              FiltrationTag tag,
                                              const RandomTimeSpec& spec,
                                              double rho,
                                              const TimeGrid& grid) {
    (void)rho;  // the supported drifts do not depend on the correlation
    MarketPriceOfRisk out;
    out.tag = tag;
    out.lambda.assign(grid.n_nodes(), 0.0);

    const bool hitting = std::holds_alternative<HittingTime>(spec);
    const bool progressive = detail::is_progressive(tag);

    if (!progressive && std::holds_alternative<CoxIntensity>(spec))
        throw UnsupportedScenario(
            "initial enlargement with a Cox time has no analytic information "
            "drift here; use an independent law instead");

    if (tag == FiltrationTag::FX) {
        const ProbeLattice lattice{grid.horizon, -10.0, 10.0, 16, 33};
        const bool ident_vol = identical_volatilities(coeffs, lattice);
        if (ident_vol && !identical_drifts(coeffs, lattice))
            throw UnsupportedScenario(
                "FX tag with identical volatilities and distinct drifts "
                "requires the predictable projection of the regime indicator, "
                "which is not available analytically");
    }

    std::vector<double> theta;
    if (!progressive && hitting) {
        theta = initial_enlargement_drift(
            bundle.tau, bundle.w1, std::get<HittingTime>(spec), grid);
    }

    for (std::size_t k = 0; k < grid.n_nodes(); ++k) {
        const double t = grid.t(k);
        const double x = bundle.x[k];
        const bool post = bundle.regime[k] != 0;
        double mu, sigma, drift_extra = 0.0;
        if (post) {
            mu = coeffs.mu2(t, x);
            sigma = coeffs.sigma2(t, x);
            // post-tau combination rho theta^1 + sqrt(1-rho^2) theta^2; both
            // vanish in every supported scenario.
        } else {
            mu = coeffs.mu1(t, x);
            sigma = coeffs.sigma1(t, x);
            if (!theta.empty()) drift_extra = sigma * theta[k];
        }
        out.lambda[k] = (mu + drift_extra) / sigma;
    }
    return out;
}

// --- NA1 square-integrability ladder -----------------------------------------

enum class Na1Verdict { Stable, Diverging, Inconclusive };

inline const char* to_string(Na1Verdict v) {
    switch (v) {
        case Na1Verdict::Stable: return "stable";
        case Na1Verdict::Diverging: return "diverging";
        case Na1Verdict::Inconclusive: return "inconclusive";
    }
    return "?";
}

struct Na1Report {
    std::vector<double> epsilons;        // truncation ladder, decreasing
    std::vector<double> median_ladder;   // median of I(eps) per rung
    std::vector<std::uint8_t> path_stable;  // per-path small-variation flag
    double stable_fraction = 0.0;
    Na1Verdict verdict = Na1Verdict::Inconclusive;
};

// Default truncation ladder eps in {2^-3, ..., 2^-9} * T.
inline std::vector<double> default_truncation_ladder(double horizon) {
    std::vector<double> out;
    for (int k = 3; k <= 9; ++k) out.push_back(horizon * std::ldexp(1.0, -k));
    return out;
}

// I(eps) = int_0^{(tau ^ T) - eps} lambda^2 dt by trapezoid, for one path.
inline std::vector<double> na1_path_ladder(std::span<const double> lambda,
                                           const EventTime& tau,
                                           const TimeGrid& grid,
                                           std::span<const double> epsilons) {
    if (lambda.size() != grid.n_nodes())
        throw std::invalid_argument("na1_path_ladder: lambda not on grid");
    // cumulative trapezoid of lambda^2
    std::vector<double> cum(grid.n_nodes(), 0.0);
    for (std::size_t k = 0; k < grid.n_steps; ++k) {
        const double a = lambda[k] * lambda[k];
        const double b = lambda[k + 1] * lambda[k + 1];
        cum[k + 1] = cum[k] + 0.5 * (a + b) * grid.dt();
    }
    const double end = tau.value_or(grid.horizon);
    std::vector<double> out;
    out.reserve(epsilons.size());
    for (double eps : epsilons) {
        const double cutoff = std::max(0.0, std::min(end, grid.horizon) - eps);
        const std::size_t k = grid.step_of(cutoff);
        const double frac = (cutoff - grid.t(k)) / grid.dt();
        out.push_back(cum[k] + frac * (cum[k + 1] - cum[k]));
    }
    return out;
}

// Aggregates per-path ladders into a verdict. The rules are declared
// surrogates: "stable" when the last three rungs vary by < 5% on >= 90% of
// paths, "diverging" when the median grows by > 25% per halving over the
// last three rungs.
class Na1Accumulator {
public:
    explicit Na1Accumulator(std::vector<double> epsilons)
        : epsilons_(std::move(epsilons)) {
        if (epsilons_.size() < 3)
            throw std::invalid_argument("Na1Accumulator: need >= 3 rungs");
        per_rung_.assign(epsilons_.size(), {});
    }

    void add_path(std::span<const double> ladder) {
        if (ladder.size() != epsilons_.size())
            throw std::invalid_argument("Na1Accumulator: ladder size mismatch");
        const std::size_t m = ladder.size();
        // Small variation across the last three rungs: each halving moves the
        // integral by < 5% of its finest value.
        const double ref = std::max(std::abs(ladder[m - 1]), 1e-12);
        const bool stable =
            std::abs(ladder[m - 1] - ladder[m - 2]) <= 0.05 * ref &&
            std::abs(ladder[m - 2] - ladder[m - 3]) <= 0.05 * ref;
        path_stable_.push_back(stable ? 1 : 0);
        for (std::size_t i = 0; i < m; ++i) per_rung_[i].push_back(ladder[i]);
    }

    Na1Report finalize() const {
        if (path_stable_.empty())
            throw std::invalid_argument("Na1Accumulator: no paths");
        Na1Report r;
        r.epsilons = epsilons_;
        r.path_stable = path_stable_;
        for (const auto& rung : per_rung_)
            r.median_ladder.push_back(median(rung));
        std::size_t n_stable = 0;
        for (auto s : path_stable_) n_stable += s;
        r.stable_fraction =
            static_cast<double>(n_stable) / static_cast<double>(path_stable_.size());
        const std::size_t m = r.median_ladder.size();
        const double m0 = r.median_ladder[m - 3];
        const double m1 = r.median_ladder[m - 2];
        const double m2 = r.median_ladder[m - 1];
        const bool diverging = m1 > 1.25 * m0 && m2 > 1.25 * m1;
        if (r.stable_fraction >= 0.90)
            r.verdict = Na1Verdict::Stable;
        else if (diverging)
            r.verdict = Na1Verdict::Diverging;
        else
            r.verdict = Na1Verdict::Inconclusive;
        return r;
    }

private:
    std::vector<double> epsilons_;
    std::vector<std::uint8_t> path_stable_;
    std::vector<std::vector<double>> per_rung_;
};

// --- Candidate deflator -------------------------------------------------------

struct DeflatorPath {
    std::vector<double> z;      // z[0] = 1, z > 0
    std::vector<double> log_z;  // accumulator
};

// Z = E(-int lambda dW~) by the log scheme; refuses to build a deflator when
// the square-integrability ladder diverges.
inline DeflatorPath build_deflator(Na1Verdict verdict,
                                   std::span<const double> lambda,
                                   std::span<const double> w_tilde,
                                   const TimeGrid& grid) {
    if (verdict == Na1Verdict::Diverging) throw ArbitrageDetected{};
    if (lambda.size() != grid.n_nodes() || w_tilde.size() != grid.n_nodes())
        throw std::invalid_argument("build_deflator: arrays not on grid");
    DeflatorPath out;
    out.z.assign(grid.n_nodes(), 1.0);
    out.log_z.assign(grid.n_nodes(), 0.0);
    for (std::size_t k = 0; k < grid.n_steps; ++k) {
        const double dw = w_tilde[k + 1] - w_tilde[k];
        out.log_z[k + 1] = out.log_z[k] - lambda[k] * dw -
                           0.5 * lambda[k] * lambda[k] * grid.dt();
        out.z[k + 1] = std::exp(out.log_z[k + 1]);
    }
    return out;
}

// --- Monte Carlo martingale hypothesis test -----------------------------------

struct CheckpointStat {
    double time = 0.0;
    double mean = 0.0;
    double se = 0.0;
    bool pass = false;
};

struct MartingaleTestReport {
    std::vector<CheckpointStat> checkpoints;
    double reference = 0.0;  // the shared initial value
    double z_crit = 0.0;
    bool pass = false;
};

// values[p][c] holds the process sampled at checkpoint c on path p; the
// first checkpoint must be time 0 and pins the reference value.
inline MartingaleTestReport martingale_test(
    const std::vector<std::vector<double>>& values,
    std::span<const double> checkpoint_times, double confidence) {
    if (values.size() < 1000)
        throw std::invalid_argument("martingale_test: need >= 1000 paths");
    if (checkpoint_times.size() < 2 || checkpoint_times.front() != 0.0)
        throw std::invalid_argument(
            "martingale_test: checkpoints must start at 0");
    MartingaleTestReport r;
    r.z_crit = normal_quantile(0.5 * (1.0 + confidence));
    const std::size_t n_paths = values.size();
    const std::size_t n_cp = checkpoint_times.size();
    std::vector<double> column(n_paths);
    for (std::size_t p = 0; p < n_paths; ++p) column[p] = values[p][0];
    r.reference = mean_se(column).mean;
    r.pass = true;
    for (std::size_t c = 0; c < n_cp; ++c) {
        for (std::size_t p = 0; p < n_paths; ++p) column[p] = values[p][c];
        const MeanSe m = mean_se(column);
        CheckpointStat s;
        s.time = checkpoint_times[c];
        s.mean = m.mean;
        s.se = m.se;
        s.pass = std::abs(m.mean - r.reference) <= r.z_crit * m.se ||
                 (c == 0);  // the reference checkpoint trivially passes
        r.checkpoints.push_back(s);
        r.pass = r.pass && s.pass;
    }
    return r;
}

struct DeflatedPriceReport {
    MartingaleTestReport sz_test;
    MeanSe z_terminal;  // E^[Z_T], should cover 1
};

inline DeflatedPriceReport deflated_price_test(
    const std::vector<std::vector<double>>& sz_values,
    std::span<const double> checkpoint_times,
    std::span<const double> z_terminal, double confidence) {
    DeflatedPriceReport r;
    r.sz_test = martingale_test(sz_values, checkpoint_times, confidence);
    r.z_terminal = mean_se(z_terminal);
    return r;
}

// --- Filtration shrinkage comparison ------------------------------------------

struct ShrinkageReport {
    bool applicable = true;
    std::size_t n_paths = 0;
    std::size_t violations = 0;  // path stable in G but not in G^X
    bool g_stable = false;
    bool gx_stable = false;
};

inline ShrinkageReport shrinkage_consistency(const Na1Report& g_report,
                                             const Na1Report& gx_report) {
    ShrinkageReport r;
    if (g_report.path_stable.size() != gx_report.path_stable.size())
        throw std::invalid_argument("shrinkage_consistency: path sets differ");
    r.n_paths = g_report.path_stable.size();
    r.g_stable = g_report.verdict == Na1Verdict::Stable;
    r.gx_stable = gx_report.verdict == Na1Verdict::Stable;
    for (std::size_t p = 0; p < r.n_paths; ++p)
        if (g_report.path_stable[p] && !gx_report.path_stable[p])
            ++r.violations;
    return r;
}

}  // namespace chgpt
