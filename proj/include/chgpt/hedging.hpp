#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "chgpt/arbitrage.hpp"
#include "chgpt/engine.hpp"
#include "chgpt/scenario.hpp"
#include "chgpt/stats.hpp"

namespace chgpt {

struct ClaimSpec {
    // payoff(x_T, s_T, tau), bounded by `bound`
    std::function<double(double, double, const EventTime&)> payoff;
    double bound = 1.0;
    std::string description;
    // x-location of a payoff discontinuity, if any (NaN otherwise). Kinked
    // claims get two extra basis columns centred there; a plain polynomial
    // cannot track the integrand spike that sharpens near maturity.
    double kink = std::numeric_limits<double>::quiet_NaN();
};

// Monte Carlo paths laid out for backward regression: node arrays are
// step-major (node k of path p lives at [k * n_paths + p]). Floats keep a
// 10^5-path set at a few hundred MB; the regression accumulators are double.
struct HedgePaths {
    TimeGrid grid;
    std::size_t n_paths = 0;
    std::vector<float> x;      // (n_steps + 1) * n_paths
    std::vector<float> s;      // (n_steps + 1) * n_paths
    std::vector<float> b_inc;  // n_steps * n_paths, Delta B per step
    std::vector<float> m_inc;  // n_steps * n_paths, Delta M (empty: no jump part)
    std::vector<float> lam_dt; // n_steps * n_paths, hazard * dt at left node
    std::vector<double> tau_or_inf;  // per path
    std::vector<double> weight;      // z_T importance weights (deflated measure)
    std::vector<double> payoff;      // H per path
    std::vector<double> bucket_u;    // law quantile of tau, for decile buckets
    double kink = std::numeric_limits<double>::quiet_NaN();  // from the claim

    double node(const std::vector<float>& arr, std::size_t k,
                std::size_t p) const {
        return static_cast<double>(arr[k * n_paths + p]);
    }
    bool pre_tau(std::size_t k, std::size_t p) const {
        return grid.t(k) <= tau_or_inf[p];
    }
};

// Simulates a scenario into the hedge layout. The jump component is recorded
// whenever the random time admits a compensator (independent law or Cox).
inline HedgePaths build_hedge_paths(const ScenarioConfig& cfg,
                                    const ClaimSpec& claim,
                                    std::size_t n_workers = 1) {
    HedgePaths hp;
    hp.grid = cfg.grid;
    hp.n_paths = cfg.n_paths;
    const std::size_t n = cfg.grid.n_steps;
    const std::size_t np = cfg.n_paths;
    hp.x.assign((n + 1) * np, 0.0f);
    hp.s.assign((n + 1) * np, 0.0f);
    hp.b_inc.assign(n * np, 0.0f);
    const bool jump = std::holds_alternative<IndependentLaw>(cfg.tau_spec) ||
                      std::holds_alternative<CoxIntensity>(cfg.tau_spec);
    if (jump) {
        hp.m_inc.assign(n * np, 0.0f);
        hp.lam_dt.assign(n * np, 0.0f);
    }
    hp.tau_or_inf.assign(np, 0.0);
    hp.weight.assign(np, 1.0);
    hp.payoff.assign(np, 0.0);
    hp.bucket_u.assign(np, 0.0);
    hp.kink = claim.kink;

    for_each_path(cfg, n_workers, [&](std::size_t p, const PathBundle& b) {
        const double inf = std::numeric_limits<double>::infinity();
        hp.tau_or_inf[p] = b.tau.is_beyond_horizon() ? inf : b.tau.value();
        hp.payoff[p] = claim.payoff(b.x[n], b.s[n], b.tau);
        for (std::size_t k = 0; k <= n; ++k) {
            hp.x[k * np + p] = static_cast<float>(b.x[k]);
            hp.s[k * np + p] = static_cast<float>(b.s[k]);
        }
        // market price of risk and deflator weight on this path
        MarketPriceOfRisk mpr = market_price_of_risk(
            b, cfg.coeffs, cfg.filtration_tag, cfg.tau_spec, cfg.rho,
            cfg.grid);
        ComposedDriver drv = compose_driver(b, cfg.rho, cfg.grid);
        DeflatorPath z = build_deflator(Na1Verdict::Stable, mpr.lambda,
                                        drv.w_tilde, cfg.grid);
        hp.weight[p] = z.z[n];
        // Delta B = Delta Yhat - (mu/V) dt, with predictable integrands
        for (std::size_t k = 0; k < n; ++k) {
            const double dv = b.v[k] > 0.0 ? b.v[k] : 1.0;
            const double dyh = (b.x[k + 1] - b.x[k]) / dv;
            hp.b_inc[k * np + p] = static_cast<float>(
                dyh - mpr.lambda[k] * cfg.grid.dt());
        }
        if (jump) {
            std::vector<double> a =
                chgpt::compensator(cfg.tau_spec, b.tau, b.w1, b.x, cfg.grid);
            for (std::size_t k = 0; k < n; ++k) {
                const double jumped =
                    (b.tau.occurred_by(cfg.grid.t(k + 1)) &&
                     !b.tau.occurred_by(cfg.grid.t(k)))
                        ? 1.0
                        : 0.0;
                hp.m_inc[k * np + p] =
                    static_cast<float>(jumped - (a[k + 1] - a[k]));
            }
            for (std::size_t k = 0; k < n; ++k) {
                double haz = 0.0;
                if (!b.tau.occurred_by(cfg.grid.t(k))) {
                    if (const auto* law =
                            std::get_if<IndependentLaw>(&cfg.tau_spec)) {
                        const double surv = 1.0 - law->cdf(cfg.grid.t(k));
                        haz = surv > 1e-12 ? law->density(cfg.grid.t(k)) / surv
                                           : 0.0;
                    } else {
                        const auto& cox = std::get<CoxIntensity>(cfg.tau_spec);
                        haz = cox.intensity(cfg.grid.t(k), b.w1[k], b.x[k]);
                    }
                }
                hp.lam_dt[k * np + p] =
                    static_cast<float>(haz * cfg.grid.dt());
            }
        }
        if (const auto* law = std::get_if<IndependentLaw>(&cfg.tau_spec)) {
            hp.bucket_u[p] = b.tau.is_beyond_horizon()
                                 ? 1.0
                                 : law->cdf(b.tau.value());
        }
    });
    return hp;
}

// --- Backward least-squares regression of representation integrands ----------

namespace detail {

// Basis columns [block * (1 - r), block * r] for regime flag r, where one
// block is the monomials 1..x^{nb-1} plus, for kinked claims, a Gaussian
// bump centred at the kink and its sigmoid antiderivative. The bump
// bandwidth `bw` is the remaining root quadratic variation, matching the
// width of the integrand spike near maturity.
struct BasisSpec {
    std::size_t nb = 4;
    double kink = std::numeric_limits<double>::quiet_NaN();
    double bw = 0.0;

    bool kinked() const { return std::isfinite(kink); }
    std::size_t block() const { return nb + (kinked() ? 2 : 0); }
    std::size_t width() const { return 2 * block(); }
};

inline void fill_basis(double x, bool post, const BasisSpec& bs,
                       std::span<double> row) {
    const std::size_t cols = bs.block();
    double m = 1.0;
    for (std::size_t j = 0; j < bs.nb; ++j) {
        row[j] = post ? 0.0 : m;
        row[cols + j] = post ? m : 0.0;
        m *= x;
    }
    if (bs.kinked()) {
        const double z = (x - bs.kink) / (bs.bw > 0.0 ? bs.bw : 1.0);
        const double bump = std::exp(-0.5 * z * z);
        const double sig = 1.0 - 0.5 * std::erfc(z / std::sqrt(2.0));
        row[bs.nb] = post ? 0.0 : bump;
        row[bs.nb + 1] = post ? 0.0 : sig;
        row[cols + bs.nb] = post ? bump : 0.0;
        row[cols + bs.nb + 1] = post ? sig : 0.0;
    }
}

inline std::vector<double> wls_solve(const Eigen::MatrixXd& gram,
                                     const Eigen::VectorXd& rhs) {
    Eigen::MatrixXd g = gram;
    g.diagonal().array() += 1e-10 * (gram.trace() + 1.0);
    Eigen::VectorXd c = g.ldlt().solve(rhs);
    return {c.data(), c.data() + c.size()};
}

}  // namespace detail


struct HedgeStepCoeffs {
    std::vector<double> cont;  // continuation value
    std::vector<double> phi;   // dB integrand
    std::vector<double> psi;   // dM integrand (single constant per step)
};

struct HedgeResult {
    double v0 = 0.0;
    std::vector<double> v0_per_bucket;           // initially enlarged tag
    std::vector<std::vector<HedgeStepCoeffs>> steps;  // [bucket][step]
    std::size_t basis_size = 4;  // monomials per regime block
    double kink = std::numeric_limits<double>::quiet_NaN();
    std::vector<double> kink_bw;  // per-step bump bandwidth (kinked claims)
    std::size_t n_buckets = 1;
    bool has_jump = false;

    detail::BasisSpec basis_at(std::size_t k) const {
        detail::BasisSpec bs;
        bs.nb = basis_size;
        bs.kink = kink;
        bs.bw = kink_bw.empty() ? 0.0 : kink_bw[k];
        return bs;
    }
    double replication_rmse = 0.0;  // in-sample, from the training fit
};


struct HedgeOptions {
    std::size_t basis_size = 4;  // monomials per regime block (degree + 1)
    std::size_t n_buckets = 1;   // tau deciles for the initially enlarged tag
    bool use_jump = true;        // hedge the dM component when available
    bool nflvr_ok = true;        // scenario passed the deflator test
};

// Backward induction: L_n = H; at each step the continuation value is the
// weighted projection of L_{k+1} on the basis, phi is recovered from the
// projected covariation of the residual with Delta B, psi (when the jump
// martingale exists) with Delta M normalized by the predictable bracket.
inline HedgeResult regress_integrands(const HedgePaths& hp,
                                      const HedgeOptions& opt) {
    if (opt.basis_size < 3)
        throw std::invalid_argument("regress_integrands: basis size must be >= 3");
    if (!opt.nflvr_ok)
        throw std::invalid_argument(
            "regress_integrands: scenario failed the deflator test");
    const std::size_t n = hp.grid.n_steps;
    const std::size_t np = hp.n_paths;
    const std::size_t nb = opt.basis_size;
    const bool jump = opt.use_jump && !hp.m_inc.empty();

    HedgeResult out;
    out.basis_size = nb;
    out.kink = hp.kink;
    out.n_buckets = opt.n_buckets;
    out.has_jump = jump;
    out.steps.assign(opt.n_buckets, std::vector<HedgeStepCoeffs>(n));
    out.v0_per_bucket.assign(opt.n_buckets, 0.0);

    // bump bandwidth for kinked claims: root of the remaining cross-sectional
    // mean quadratic variation from step k to maturity
    if (std::isfinite(hp.kink)) {
        out.kink_bw.assign(n, 0.0);
        double acc = 0.0;
        for (std::size_t kk = n; kk-- > 0;) {
            double s2 = 0.0;
            for (std::size_t p = 0; p < np; ++p) {
                const double d =
                    hp.node(hp.x, kk + 1, p) - hp.node(hp.x, kk, p);
                s2 += d * d;
            }
            acc += s2 / static_cast<double>(np);
            out.kink_bw[kk] = std::sqrt(acc);
        }
    }
    const std::size_t width = out.basis_at(0).width();

    // bucket assignment by tau-law decile (single bucket when not enlarged)
    std::vector<std::uint32_t> bucket(np, 0);
    if (opt.n_buckets > 1)
        for (std::size_t p = 0; p < np; ++p)
            bucket[p] = std::min<std::uint32_t>(
                static_cast<std::uint32_t>(hp.bucket_u[p] *
                                           static_cast<double>(opt.n_buckets)),
                static_cast<std::uint32_t>(opt.n_buckets - 1));

    std::vector<double> level(hp.payoff.begin(), hp.payoff.end());
    std::vector<double> row(width);

    // Backward sweep with martingale control-variate propagation: the carried
    // value stays the realized payoff minus all fitted hedge increments, so no
    // representability bias accumulates and the regression targets shrink as
    // the hedge improves.
    // psi is a single scalar per step: jump observations arrive at rate
    // lambda dt per path, far too few to support a polynomial fit, and the
    // value jump at tau depends on the step time, not on x.
    const std::size_t joint = jump ? width + 1 : width;
    std::vector<double> design(joint);
    for (std::size_t kk = n; kk-- > 0;) {
        const double t = hp.grid.t(kk);
        const detail::BasisSpec bs = out.basis_at(kk);
        for (std::size_t bkt = 0; bkt < opt.n_buckets; ++bkt) {
            Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(width, width);
            Eigen::VectorXd rhs_cont = Eigen::VectorXd::Zero(width);
            Eigen::MatrixXd gram_j = Eigen::MatrixXd::Zero(joint, joint);
            Eigen::VectorXd rhs_j = Eigen::VectorXd::Zero(joint);

            // pass A: continuation value projection
            for (std::size_t p = 0; p < np; ++p) {
                if (bucket[p] != bkt) continue;
                const double w = hp.weight[p];
                const double x = hp.node(hp.x, kk, p);
                const bool post = t > hp.tau_or_inf[p];
                detail::fill_basis(x, post, bs, row);
                const double l_next = level[p];
                for (std::size_t i = 0; i < width; ++i) {
                    const double wi = w * row[i];
                    if (wi == 0.0) continue;
                    for (std::size_t j = i; j < width; ++j)
                        gram(i, j) += wi * row[j];
                    rhs_cont(i) += wi * l_next;
                }
            }
            gram = gram.selfadjointView<Eigen::Upper>();
            HedgeStepCoeffs& sc = out.steps[bkt][kk];
            sc.cont = detail::wls_solve(gram, rhs_cont);

            // pass B: joint projection of the residual L_{k+1} - C_k(x) on
            // the hedge increments [basis * dB, basis * dM]
            for (std::size_t p = 0; p < np; ++p) {
                if (bucket[p] != bkt) continue;
                const double w = hp.weight[p];
                const double x = hp.node(hp.x, kk, p);
                const bool post = t > hp.tau_or_inf[p];
                detail::fill_basis(x, post, bs, row);
                double cont = 0.0;
                for (std::size_t i = 0; i < width; ++i)
                    cont += sc.cont[i] * row[i];
                const double resid = level[p] - cont;
                const double db = hp.b_inc[kk * np + p];
                for (std::size_t i = 0; i < width; ++i)
                    design[i] = row[i] * db;
                if (jump)
                    design[width] = !post ? hp.m_inc[kk * np + p] : 0.0;
                for (std::size_t i = 0; i < joint; ++i) {
                    const double wi = w * design[i];
                    if (wi == 0.0) continue;
                    for (std::size_t j = i; j < joint; ++j)
                        gram_j(i, j) += wi * design[j];
                    rhs_j(i) += wi * resid;
                }
            }
            gram_j = gram_j.selfadjointView<Eigen::Upper>();
            std::vector<double> coeffs = detail::wls_solve(gram_j, rhs_j);
            sc.phi.assign(coeffs.begin(), coeffs.begin() + width);
            if (jump)
                sc.psi.assign(coeffs.begin() + width, coeffs.end());
        }
        // pass C: subtract the fitted hedge increments from the carried value
        for (std::size_t p = 0; p < np; ++p) {
            const double x = hp.node(hp.x, kk, p);
            const bool post = t > hp.tau_or_inf[p];
            detail::fill_basis(x, post, bs, row);
            const HedgeStepCoeffs& sc = out.steps[bucket[p]][kk];
            const double db = hp.b_inc[kk * np + p];
            double inc = 0.0;
            for (std::size_t i = 0; i < width; ++i)
                inc += sc.phi[i] * row[i] * db;
            if (jump && !post) inc += sc.psi[0] * hp.m_inc[kk * np + p];
            level[p] -= inc;
        }
    }

    // v0 per bucket is the weighted mean of the time-0 value (all paths share
    // the initial state, so the fit at step 0 is a weighted average anyway)
    std::vector<double> swl(opt.n_buckets, 0.0), sw(opt.n_buckets, 0.0);
    for (std::size_t p = 0; p < np; ++p) {
        swl[bucket[p]] += hp.weight[p] * level[p];
        sw[bucket[p]] += hp.weight[p];
    }
    double num = 0.0, den = 0.0;
    for (std::size_t bkt = 0; bkt < opt.n_buckets; ++bkt) {
        out.v0_per_bucket[bkt] = sw[bkt] > 0.0 ? swl[bkt] / sw[bkt] : 0.0;
        num += swl[bkt];
        den += sw[bkt];
    }
    out.v0 = den > 0.0 ? num / den : 0.0;
    return out;
}

// Evaluates the fitted integrands on a path set and accumulates the discrete
// self-financing wealth v0 + sum h dS (+ sum psi dM). `in_sample` only labels
// the report.
struct ReplicationReport {
    double rmse = 0.0;
    double mean_error = 0.0;
    std::size_t n_paths = 0;
    bool in_sample = false;
};

inline ReplicationReport replicate(const HedgePaths& hp,
                                   const HedgeResult& hedge,
                                   const RegimeCoefficients& coeffs,
                                   bool with_jump = true,
                                   bool in_sample = false) {
    const std::size_t n = hp.grid.n_steps;
    const std::size_t np = hp.n_paths;
    const std::size_t width = hedge.basis_at(0).width();
    const bool jump = with_jump && hedge.has_jump && !hp.m_inc.empty();

    std::vector<double> row(width);
    std::vector<double> sq_err(np), err(np);
    for (std::size_t p = 0; p < np; ++p) {
        std::uint32_t bkt = 0;
        if (hedge.n_buckets > 1)
            bkt = std::min<std::uint32_t>(
                static_cast<std::uint32_t>(
                    hp.bucket_u[p] * static_cast<double>(hedge.n_buckets)),
                static_cast<std::uint32_t>(hedge.n_buckets - 1));
        double wealth = hedge.v0_per_bucket.empty()
                            ? hedge.v0
                            : hedge.v0_per_bucket[bkt];
        for (std::size_t k = 0; k < n; ++k) {
            const double t = hp.grid.t(k);
            const double x = hp.node(hp.x, k, p);
            const bool post = t > hp.tau_or_inf[p];
            detail::fill_basis(x, post, hedge.basis_at(k), row);
            const auto& sc = hedge.steps[bkt][k];
            double phi = 0.0;
            for (std::size_t i = 0; i < width; ++i) phi += sc.phi[i] * row[i];
            const double s_k = hp.node(hp.s, k, p);
            const double vol =
                post ? coeffs.sigma2(t, x) : coeffs.sigma1(t, x);
            const double h = phi / (s_k * vol);
            const double ds = hp.node(hp.s, k + 1, p) - s_k;
            wealth += h * ds;
            if (jump && !post)
                wealth += sc.psi[0] * hp.m_inc[k * np + p];
        }
        const double e = hp.payoff[p] - wealth;
        err[p] = e;
        sq_err[p] = e * e;
    }
    ReplicationReport r;
    r.n_paths = np;
    r.in_sample = in_sample;
    r.mean_error = pairwise_sum(err) / static_cast<double>(np);
    r.rmse = std::sqrt(pairwise_sum(sq_err) / static_cast<double>(np));
    return r;
}

}  // namespace chgpt
