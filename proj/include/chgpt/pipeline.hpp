#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "chgpt/arbitrage.hpp"
#include "chgpt/engine.hpp"
#include "chgpt/filtration.hpp"
#include "chgpt/hedging.hpp"
#include "chgpt/scenario_io.hpp"
#include "chgpt/stats.hpp"

namespace chgpt {

inline constexpr const char* kSchemaVersion = "1.0.0";

// CLI-level exit codes, shared by every stage command.
enum ExitCode : int {
    kExitOk = 0,
    kExitSchema = 2,
    kExitNumerical = 3,
    kExitVerificationFailure = 4,
    kExitMissingStage = 5,
};

struct RunOptions {
    std::string scenario_path;
    std::string out_dir;
    std::optional<std::size_t> paths_override;
    std::optional<std::size_t> steps_override;
    std::optional<std::uint64_t> seed_override;
    std::size_t workers = 1;
    bool dump_paths = false;
};

using OrderedJson = nlohmann::ordered_json;

namespace detail {

inline void write_json(const std::filesystem::path& path,
                       const OrderedJson& j) {
    std::ofstream out(path, std::ios::binary);
    out << j.dump(2) << "\n";
}

inline OrderedJson mean_se_json(const MeanSe& m) {
    return OrderedJson{{"mean", m.mean}, {"se", m.se}, {"n", m.n}};
}

}  // namespace detail

// Resolves the scenario file plus CLI overrides into the effective config.
inline ScenarioFile resolve_scenario(const RunOptions& opt) {
    ScenarioFile sf = load_scenario_file(opt.scenario_path);
    if (opt.paths_override) sf.config.n_paths = *opt.paths_override;
    if (opt.steps_override) sf.config.grid.n_steps = *opt.steps_override;
    if (opt.seed_override) sf.config.master_seed = *opt.seed_override;
    sf.config.validate();
    return sf;
}

inline ClaimSpec make_claim(const ScenarioFile& sf) {
    ClaimSpec claim;
    claim.description = sf.claim;
    const double p = sf.claim_param;
    if (sf.claim == "constant") {
        const double c = p == 0.0 ? 1.0 : p;
        claim.payoff = [c](double, double, const EventTime&) { return c; };
        claim.bound = std::abs(c);
    } else if (sf.claim == "asset") {
        claim.payoff = [](double, double s, const EventTime&) { return s; };
        claim.bound = 0.0;  // unbounded; recorded as such
    } else if (sf.claim == "digital_x") {
        claim.payoff = [p](double x, double, const EventTime&) {
            return x > p ? 1.0 : 0.0;
        };
        claim.bound = 1.0;
        claim.kink = p;
    } else if (sf.claim == "digital_tau") {
        claim.payoff = [p](double, double, const EventTime& tau) {
            return tau.occurred_by(p) ? 1.0 : 0.0;
        };
        claim.bound = 1.0;
    } else {
        throw SchemaError("claim.kind", "no claim configured for the hedge stage");
    }
    return claim;
}

inline const char* tau_kind_name(const RandomTimeSpec& spec) {
    if (std::holds_alternative<DeterministicTime>(spec)) return "deterministic";
    if (std::holds_alternative<IndependentLaw>(spec)) return "independent_law";
    if (std::holds_alternative<CoxIntensity>(spec)) return "cox";
    return "hitting";
}

// The manifest is written before any stage output; stage wall-clocks are
// appended by rewriting the same file once the run finishes.
class RunManifestWriter {
public:
    RunManifestWriter(const RunOptions& opt, const ScenarioFile& sf)
        : path_(std::filesystem::path(opt.out_dir) / "manifest.json") {
        const ScenarioConfig& cfg = sf.config;
        doc_["schema_version"] = kSchemaVersion;
        doc_["scenario_file"] = opt.scenario_path;
        doc_["out_dir"] = opt.out_dir;
        doc_["master_seed"] = cfg.master_seed;
        doc_["workers"] = opt.workers;
        OrderedJson resolved;
        resolved["name"] = cfg.name;
        resolved["fingerprint"] = cfg.fingerprint();
        resolved["rho"] = cfg.rho;
        resolved["s0"] = cfg.s0;
        resolved["horizon"] = cfg.grid.horizon;
        resolved["n_steps"] = cfg.grid.n_steps;
        resolved["n_paths"] = cfg.n_paths;
        resolved["filtration"] = to_string(cfg.filtration_tag);
        resolved["tau_kind"] = tau_kind_name(cfg.tau_spec);
        resolved["claim"] = sf.claim;
        doc_["resolved_config"] = resolved;
        doc_["stage_seconds"] = OrderedJson::object();
        flush();
    }

    void record_stage(const std::string& stage, double seconds) {
        doc_["stage_seconds"][stage] = seconds;
        flush();
    }

private:
    void flush() const { detail::write_json(path_, doc_); }

    std::filesystem::path path_;
    OrderedJson doc_;
};

class StageTimer {
public:
    double seconds() const {
        return std::chrono::duration<double>(clock::now() - start_).count();
    }

private:
    using clock = std::chrono::steady_clock;
    clock::time_point start_ = clock::now();
};

// --- simulate ----------------------------------------------------------------

struct SimulateOutput {
    MeanSe x_terminal;
    MeanSe s_terminal;
    double tau_beyond_fraction = 0.0;
};

inline SimulateOutput stage_simulate(const ScenarioFile& sf,
                                     const RunOptions& opt) {
    const ScenarioConfig& cfg = sf.config;
    const std::size_t np = cfg.n_paths;
    std::vector<double> x_t(np), s_t(np), x_sq(np), s_sq(np);
    std::vector<double> tau_clamped(np);
    std::vector<std::uint8_t> beyond(np);

    std::ofstream paths_csv;
    if (opt.dump_paths) {
        paths_csv.open(std::filesystem::path(opt.out_dir) / "paths.csv",
                       std::ios::binary);
        paths_csv << "path_id,t,w1,w2,x,s,v,regime\r\n";
    }
    std::mutex csv_mutex;

    for_each_path(cfg, opt.workers, [&](std::size_t p, const PathBundle& b) {
        const std::size_t n = cfg.grid.n_steps;
        x_t[p] = b.x[n];
        s_t[p] = b.s[n];
        x_sq[p] = b.x[n] * b.x[n];
        s_sq[p] = b.s[n] * b.s[n];
        beyond[p] = b.tau.is_beyond_horizon() ? 1 : 0;
        tau_clamped[p] = b.tau.value_or(cfg.grid.horizon);
        if (opt.dump_paths) {
            std::ostringstream row;
            row << std::setprecision(17);
            for (std::size_t k = 0; k <= n; ++k)
                row << p << ',' << cfg.grid.t(k) << ',' << b.w1[k] << ','
                    << b.w2[k] << ',' << b.x[k] << ',' << b.s[k] << ','
                    << b.v[k] << ',' << int(b.regime[k]) << "\r\n";
            std::lock_guard<std::mutex> lock(csv_mutex);
            paths_csv << row.str();
        }
    });

    SimulateOutput out;
    out.x_terminal = mean_se(x_t);
    out.s_terminal = mean_se(s_t);
    std::size_t n_beyond = 0;
    for (auto b : beyond) n_beyond += b;
    out.tau_beyond_fraction =
        static_cast<double>(n_beyond) / static_cast<double>(np);

    // tau histogram over 16 horizon bins plus the beyond-horizon bucket
    const std::size_t n_bins = 16;
    std::vector<std::size_t> hist(n_bins, 0);
    for (std::size_t p = 0; p < np; ++p) {
        if (beyond[p]) continue;
        auto bin = static_cast<std::size_t>(tau_clamped[p] / cfg.grid.horizon *
                                            static_cast<double>(n_bins));
        hist[std::min(bin, n_bins - 1)] += 1;
    }

    OrderedJson j;
    j["schema_version"] = kSchemaVersion;
    j["scenario"] = cfg.name;
    j["fingerprint"] = cfg.fingerprint();
    j["n_paths"] = np;
    j["n_steps"] = cfg.grid.n_steps;
    j["master_seed"] = cfg.master_seed;
    j["x_terminal"] = detail::mean_se_json(out.x_terminal);
    j["x_terminal_second_moment"] =
        pairwise_sum(x_sq) / static_cast<double>(np);
    j["s_terminal"] = detail::mean_se_json(out.s_terminal);
    j["s_terminal_second_moment"] =
        pairwise_sum(s_sq) / static_cast<double>(np);
    OrderedJson th;
    th["n_bins"] = n_bins;
    th["counts"] = hist;
    th["beyond_horizon_fraction"] = out.tau_beyond_fraction;
    j["tau_histogram"] = th;
    detail::write_json(std::filesystem::path(opt.out_dir) / "summary.json", j);
    return out;
}

// --- detect ------------------------------------------------------------------

struct DetectOutput {
    std::string aggregate;  // detected | none | undetectable
    double detected_fraction = 0.0;       // among paths with a switch
    double within_tolerance_fraction = 0.0;  // |tau_hat - tau| <= 2 w dt
    double false_positive_fraction = 0.0;    // detections on no-switch paths
};

inline DetectOutput stage_detect(const ScenarioFile& sf,
                                 const RunOptions& opt) {
    const ScenarioConfig& cfg = sf.config;
    const std::size_t np = cfg.n_paths;
    const std::size_t window = std::min<std::size_t>(64, cfg.grid.n_steps / 8);
    const DetectorOptions dopt;

    struct Row {
        double tau_true = 0.0;
        bool has_switch = false;
        DetectionResult res;
    };
    std::vector<Row> rows(np);

    for_each_path(cfg, opt.workers, [&](std::size_t p, const PathBundle& b) {
        Row& r = rows[p];
        r.has_switch = !b.tau.is_beyond_horizon() &&
                       b.tau.value() < cfg.grid.horizon;
        r.tau_true = b.tau.value_or(std::numeric_limits<double>::quiet_NaN());
        QvDerivativeEstimate est =
            realized_qv_derivative(b.x, cfg.grid, window);
        r.res = detect_change_point(est, cfg.coeffs, b.x, cfg.grid, dopt);
    });

    std::ofstream csv(std::filesystem::path(opt.out_dir) / "detection.csv",
                      std::ios::binary);
    csv << "path_id,tau_true,tau_hat,abs_error,margin,verdict\r\n";
    csv << std::setprecision(17);
    std::size_t n_switch = 0, n_detected = 0, n_within = 0;
    std::size_t n_quiet = 0, n_false = 0, n_undetectable = 0;
    const double tol = 2.0 * static_cast<double>(window) * cfg.grid.dt();
    for (std::size_t p = 0; p < np; ++p) {
        const Row& r = rows[p];
        const char* verdict =
            r.res.verdict == DetectionVerdict::Detected
                ? "detected"
                : r.res.verdict == DetectionVerdict::None ? "none"
                                                          : "undetectable";
        double tau_hat = std::numeric_limits<double>::quiet_NaN();
        double abs_err = std::numeric_limits<double>::quiet_NaN();
        if (r.res.verdict == DetectionVerdict::Detected) {
            tau_hat = r.res.tau_hat.value();
            if (r.has_switch) abs_err = std::abs(tau_hat - r.tau_true);
        }
        csv << p << ',' << r.tau_true << ',' << tau_hat << ',' << abs_err
            << ',' << r.res.margin << ',' << verdict << "\r\n";
        if (r.res.verdict == DetectionVerdict::Undetectable) ++n_undetectable;
        if (r.has_switch) {
            ++n_switch;
            if (r.res.verdict == DetectionVerdict::Detected) {
                ++n_detected;
                if (abs_err <= tol) ++n_within;
            }
        } else {
            ++n_quiet;
            if (r.res.verdict == DetectionVerdict::Detected) ++n_false;
        }
    }

    DetectOutput out;
    if (n_undetectable == np) {
        out.aggregate = "undetectable";
    } else {
        out.detected_fraction =
            n_switch ? static_cast<double>(n_detected) /
                           static_cast<double>(n_switch)
                     : 0.0;
        out.aggregate = out.detected_fraction >= 0.5 ? "detected" : "none";
    }
    out.within_tolerance_fraction =
        n_detected ? static_cast<double>(n_within) /
                         static_cast<double>(n_detected)
                   : 0.0;
    out.false_positive_fraction =
        n_quiet ? static_cast<double>(n_false) / static_cast<double>(n_quiet)
                : 0.0;

    OrderedJson j;
    j["schema_version"] = kSchemaVersion;
    j["scenario"] = cfg.name;
    j["window"] = window;
    j["run_length"] = dopt.run_length;
    j["tolerance"] = tol;
    j["aggregate_verdict"] = out.aggregate;
    j["detected_fraction"] = out.detected_fraction;
    j["within_tolerance_fraction"] = out.within_tolerance_fraction;
    j["false_positive_fraction"] = out.false_positive_fraction;
    detail::write_json(std::filesystem::path(opt.out_dir) / "detection.json",
                       j);
    return out;
}

// --- arbitrage ---------------------------------------------------------------

struct ArbitrageOutput {
    Na1Report na1;
    bool martingale_ran = false;
    DeflatedPriceReport deflated;
};

inline ArbitrageOutput stage_arbitrage(const ScenarioFile& sf,
                                       const RunOptions& opt) {
    const ScenarioConfig& cfg = sf.config;
    const std::size_t np = cfg.n_paths;
    const std::size_t n = cfg.grid.n_steps;
    const std::vector<double> epsilons =
        default_truncation_ladder(cfg.grid.horizon);

    // 5 checkpoints including time 0
    std::vector<double> cp_times;
    std::vector<std::size_t> cp_nodes;
    for (int c = 0; c < 5; ++c) {
        auto k = static_cast<std::size_t>(
            std::llround(static_cast<double>(n) * c / 4.0));
        cp_nodes.push_back(k);
        cp_times.push_back(cfg.grid.t(k));
    }

    std::vector<std::vector<double>> ladders(np);
    std::vector<std::vector<double>> sz(np);
    std::vector<double> z_terminal(np);

    for_each_path(cfg, opt.workers, [&](std::size_t p, const PathBundle& b) {
        MarketPriceOfRisk mpr = market_price_of_risk(
            b, cfg.coeffs, cfg.filtration_tag, cfg.tau_spec, cfg.rho,
            cfg.grid);
        ladders[p] = na1_path_ladder(mpr.lambda, b.tau, cfg.grid, epsilons);
        ComposedDriver drv = compose_driver(b, cfg.rho, cfg.grid);
        // z is computed unconditionally; it is only reported when the ladder
        // verdict admits a deflator.
        DeflatorPath z = build_deflator(Na1Verdict::Inconclusive, mpr.lambda,
                                        drv.w_tilde, cfg.grid);
        z_terminal[p] = z.z[n];
        sz[p].resize(cp_nodes.size());
        for (std::size_t c = 0; c < cp_nodes.size(); ++c)
            sz[p][c] = b.s[cp_nodes[c]] * z.z[cp_nodes[c]];
    });

    Na1Accumulator acc(epsilons);
    for (std::size_t p = 0; p < np; ++p) acc.add_path(ladders[p]);

    ArbitrageOutput out;
    out.na1 = acc.finalize();
    if (out.na1.verdict != Na1Verdict::Diverging && np >= 1000) {
        out.martingale_ran = true;
        out.deflated = deflated_price_test(sz, cp_times, z_terminal, 0.99);
    }

    OrderedJson j;
    j["schema_version"] = kSchemaVersion;
    j["scenario"] = cfg.name;
    j["fingerprint"] = cfg.fingerprint();
    j["filtration"] = to_string(cfg.filtration_tag);
    OrderedJson ladder;
    ladder["epsilons"] = out.na1.epsilons;
    ladder["medians"] = out.na1.median_ladder;
    ladder["stable_fraction"] = out.na1.stable_fraction;
    j["na1_ladder"] = ladder;
    j["verdict"] = to_string(out.na1.verdict);
    if (out.martingale_ran) {
        const MeanSe& zt = out.deflated.z_terminal;
        OrderedJson zj = detail::mean_se_json(zt);
        zj["ci99_lo"] = zt.mean - 2.5758293035489004 * zt.se;
        zj["ci99_hi"] = zt.mean + 2.5758293035489004 * zt.se;
        j["z_terminal"] = zj;
        OrderedJson cps = OrderedJson::array();
        for (const CheckpointStat& s : out.deflated.sz_test.checkpoints) {
            cps.push_back(OrderedJson{{"time", s.time},
                                      {"mean", s.mean},
                                      {"se", s.se},
                                      {"pass", s.pass}});
        }
        OrderedJson mj;
        mj["confidence"] = 0.99;
        mj["checkpoints"] = cps;
        mj["pass"] = out.deflated.sz_test.pass;
        j["sz_martingale_test"] = mj;
    } else {
        j["z_terminal"] = nullptr;
        j["sz_martingale_test"] = nullptr;
    }
    detail::write_json(std::filesystem::path(opt.out_dir) / "arbitrage.json",
                       j);
    return out;
}

// --- hedge -------------------------------------------------------------------

struct HedgeOutput {
    double v0 = 0.0;
    double rmse_full = 0.0;
    double rmse_ablated = 0.0;  // 0 when no jump component exists
    bool has_jump = false;
    std::vector<std::pair<std::size_t, double>> rmse_ladder;
    double price_check = 0.0;  // E^[Z_T H] / E^[Z_T]
};

inline HedgeOutput stage_hedge(const ScenarioFile& sf, const RunOptions& opt) {
    const ScenarioConfig& cfg = sf.config;
    const ClaimSpec claim = make_claim(sf);

    HedgePaths train = build_hedge_paths(cfg, claim, opt.workers);
    ScenarioConfig oos_cfg = cfg;
    oos_cfg.master_seed = cfg.master_seed + 0x9E3779B97F4A7C15ull;
    HedgePaths test = build_hedge_paths(oos_cfg, claim, opt.workers);

    HedgeOptions hopt;
    hopt.n_buckets =
        (cfg.filtration_tag == FiltrationTag::G_tau ||
         cfg.filtration_tag == FiltrationTag::GX_tau) &&
                std::holds_alternative<IndependentLaw>(cfg.tau_spec)
            ? 10
            : 1;

    HedgeOutput out;
    HedgeResult hedge = regress_integrands(train, hopt);
    out.v0 = hedge.v0;
    out.has_jump = hedge.has_jump;
    ReplicationReport full = replicate(test, hedge, cfg.coeffs, true, false);
    out.rmse_full = full.rmse;
    ReplicationReport ablated =
        replicate(test, hedge, cfg.coeffs, false, false);
    out.rmse_ablated = hedge.has_jump ? ablated.rmse : full.rmse;

    // RMSE against training-set size, evaluated on the same held-out paths.
    for (std::size_t budget : {std::size_t{1000}, std::size_t{10000},
                               cfg.n_paths}) {
        if (budget > cfg.n_paths) continue;
        if (!out.rmse_ladder.empty() &&
            out.rmse_ladder.back().first == budget)
            continue;
        if (budget == cfg.n_paths) {
            out.rmse_ladder.emplace_back(budget, out.rmse_full);
            continue;
        }
        ScenarioConfig sub_cfg = cfg;
        sub_cfg.n_paths = budget;
        HedgePaths sub = build_hedge_paths(sub_cfg, claim, opt.workers);
        HedgeResult sub_hedge = regress_integrands(sub, hopt);
        out.rmse_ladder.emplace_back(
            budget, replicate(test, sub_hedge, cfg.coeffs, true, false).rmse);
    }

    // Independent price estimate under the deflated measure.
    {
        WeightedMeanSe price = weighted_mean_se(test.payoff, test.weight);
        out.price_check = price.mean;
    }

    // Per-step means of the fitted integrands on the held-out set.
    const std::size_t n = cfg.grid.n_steps;
    const std::size_t np = test.n_paths;
    std::ofstream csv(std::filesystem::path(opt.out_dir) / "hedge.csv",
                      std::ios::binary);
    csv << "step,mean_phi,mean_psi,l_mean\r\n";
    csv << std::setprecision(17);
    std::vector<double> row(hedge.basis_at(0).width());
    for (std::size_t k = 0; k < n; ++k) {
        double sum_phi = 0.0, sum_psi = 0.0, sum_l = 0.0;
        for (std::size_t p = 0; p < np; ++p) {
            std::uint32_t bkt = 0;
            if (hedge.n_buckets > 1)
                bkt = std::min<std::uint32_t>(
                    static_cast<std::uint32_t>(
                        test.bucket_u[p] *
                        static_cast<double>(hedge.n_buckets)),
                    static_cast<std::uint32_t>(hedge.n_buckets - 1));
            const double x = test.node(test.x, k, p);
            const bool post = cfg.grid.t(k) > test.tau_or_inf[p];
            detail::fill_basis(x, post, hedge.basis_at(k), row);
            const HedgeStepCoeffs& sc = hedge.steps[bkt][k];
            for (std::size_t i = 0; i < row.size(); ++i) {
                sum_phi += sc.phi[i] * row[i];
                sum_l += sc.cont[i] * row[i];
            }
            if (hedge.has_jump && !post) sum_psi += sc.psi[0];
        }
        const double dn = static_cast<double>(np);
        csv << k << ',' << sum_phi / dn << ',' << sum_psi / dn << ','
            << sum_l / dn << "\r\n";
    }

    OrderedJson j;
    j["schema_version"] = kSchemaVersion;
    j["scenario"] = cfg.name;
    j["claim"] = sf.claim;
    j["v0"] = out.v0;
    j["v0_per_bucket"] = hedge.v0_per_bucket;
    j["price_check"] = out.price_check;
    j["has_jump_component"] = out.has_jump;
    j["rmse_out_of_sample"] = out.rmse_full;
    j["rmse_psi_ablated"] = out.rmse_ablated;
    OrderedJson ladder = OrderedJson::array();
    for (auto& [budget, rmse] : out.rmse_ladder)
        ladder.push_back(OrderedJson{{"n_paths", budget}, {"rmse", rmse}});
    j["rmse_ladder"] = ladder;
    detail::write_json(std::filesystem::path(opt.out_dir) / "hedge.json", j);
    return out;
}

// --- report ------------------------------------------------------------------

// Collates stage outputs into report.md plus plot-ready CSVs. Returns the
// list of missing stages (empty on success).
inline std::vector<std::string> stage_report(const std::string& out_dir) {
    namespace fs = std::filesystem;
    const fs::path dir(out_dir);
    std::vector<std::string> missing;

    auto load = [&](const char* file, const char* stage) -> OrderedJson {
        std::ifstream in(dir / file);
        if (!in) {
            missing.push_back(stage);
            return nullptr;
        }
        OrderedJson j;
        in >> j;
        return j;
    };

    OrderedJson manifest = load("manifest.json", "manifest");
    OrderedJson summary = load("summary.json", "simulate");
    OrderedJson detection = load("detection.json", "detect");
    OrderedJson arbitrage = load("arbitrage.json", "arbitrage");
    bool want_hedge = false;
    if (!manifest.is_null())
        want_hedge = manifest["resolved_config"]["claim"] != "none";
    OrderedJson hedge =
        want_hedge ? load("hedge.json", "hedge") : OrderedJson(nullptr);
    if (!missing.empty()) return missing;

    // plot-ready extracts
    {
        std::ofstream csv(dir / "tau_histogram.csv", std::ios::binary);
        csv << "bin,count\r\n";
        const auto& counts = summary["tau_histogram"]["counts"];
        for (std::size_t i = 0; i < counts.size(); ++i)
            csv << i << ',' << counts[i].get<std::size_t>() << "\r\n";
    }
    {
        std::ofstream csv(dir / "na1_ladder.csv", std::ios::binary);
        csv << "epsilon,median_integral\r\n";
        csv << std::setprecision(17);
        const auto& eps = arbitrage["na1_ladder"]["epsilons"];
        const auto& med = arbitrage["na1_ladder"]["medians"];
        for (std::size_t i = 0; i < eps.size(); ++i)
            csv << eps[i].get<double>() << ',' << med[i].get<double>()
                << "\r\n";
    }

    std::ofstream md(dir / "report.md", std::ios::binary);
    md << "# Scenario report: " << summary["scenario"].get<std::string>()
       << "\n\n";
    md << "- schema version: " << kSchemaVersion << "\n";
    md << "- paths: " << summary["n_paths"] << ", steps: "
       << summary["n_steps"] << ", seed: " << summary["master_seed"] << "\n";
    md << "- filtration: "
       << manifest["resolved_config"]["filtration"].get<std::string>()
       << ", change point: "
       << manifest["resolved_config"]["tau_kind"].get<std::string>() << "\n\n";
    md << "## Simulation\n\n";
    md << "| quantity | mean | se |\n|---|---|---|\n";
    md << "| X_T | " << summary["x_terminal"]["mean"] << " | "
       << summary["x_terminal"]["se"] << " |\n";
    md << "| S_T | " << summary["s_terminal"]["mean"] << " | "
       << summary["s_terminal"]["se"] << " |\n\n";
    md << "Change point beyond horizon on "
       << summary["tau_histogram"]["beyond_horizon_fraction"]
       << " of paths (histogram in tau_histogram.csv).\n\n";
    md << "## Detection\n\n";
    md << "- verdict: " << detection["aggregate_verdict"].get<std::string>()
       << "\n";
    md << "- detected fraction: " << detection["detected_fraction"] << "\n";
    md << "- within tolerance: " << detection["within_tolerance_fraction"]
       << "\n";
    md << "- false positives: " << detection["false_positive_fraction"]
       << "\n\n";
    md << "## No-arbitrage\n\n";
    md << "- ladder verdict: " << arbitrage["verdict"].get<std::string>()
       << " (stable fraction "
       << arbitrage["na1_ladder"]["stable_fraction"] << ")\n";
    if (!arbitrage["sz_martingale_test"].is_null()) {
        md << "- E[Z_T]: " << arbitrage["z_terminal"]["mean"] << " +/- "
           << arbitrage["z_terminal"]["se"] << "\n";
        md << "- deflated price martingale test: "
           << (arbitrage["sz_martingale_test"]["pass"].get<bool>() ? "pass"
                                                                   : "FAIL")
           << "\n";
    } else {
        md << "- no deflator constructed (ladder not stable)\n";
    }
    md << "\nLadder medians in na1_ladder.csv.\n";
    if (want_hedge && !hedge.is_null()) {
        md << "\n## Hedging\n\n";
        md << "- claim: " << hedge["claim"].get<std::string>() << "\n";
        md << "- v0: " << hedge["v0"] << " (deflated price check "
           << hedge["price_check"] << ")\n";
        md << "- out-of-sample RMSE: " << hedge["rmse_out_of_sample"] << "\n";
        if (hedge["has_jump_component"].get<bool>())
            md << "- jump-ablated RMSE: " << hedge["rmse_psi_ablated"]
               << "\n";
    }
    return missing;
}

// --- verdict matching --------------------------------------------------------

// Compares stage outcomes against the expected_verdict fields; returns a
// nonempty message on the first mismatch.
inline std::string check_expected_detect(const ExpectedVerdicts& exp,
                                         const DetectOutput& out) {
    if (exp.detect && *exp.detect != out.aggregate)
        return "detect verdict '" + out.aggregate + "' != expected '" +
               *exp.detect + "'";
    return "";
}

inline std::string check_expected_arbitrage(const ExpectedVerdicts& exp,
                                            const ArbitrageOutput& out) {
    const std::string verdict = to_string(out.na1.verdict);
    if (exp.na1) {
        if (*exp.na1 != verdict)
            return "na1 verdict '" + verdict + "' != expected '" + *exp.na1 +
                   "'";
    } else if (out.na1.verdict == Na1Verdict::Diverging) {
        return "na1 ladder diverges and the scenario does not declare it";
    }
    if (out.martingale_ran) {
        const bool pass = out.deflated.sz_test.pass;
        const std::string expected = exp.martingale.value_or("pass");
        if (expected == "pass" && !pass)
            return "deflated price martingale test rejected";
        if (expected == "fail" && pass)
            return "martingale test passed but 'fail' was expected";
    }
    return "";
}

inline std::string check_expected_hedge(const ExpectedVerdicts& exp,
                                        const HedgeOutput& out) {
    if (exp.hedge_rmse_max && out.rmse_full > *exp.hedge_rmse_max)
        return "hedge RMSE " + std::to_string(out.rmse_full) +
               " exceeds bound " + std::to_string(*exp.hedge_rmse_max);
    if (exp.ablation_ratio_min && out.has_jump &&
        out.rmse_ablated < *exp.ablation_ratio_min * out.rmse_full)
        return "jump-ablated RMSE ratio " +
               std::to_string(out.rmse_ablated / out.rmse_full) +
               " below expected minimum " +
               std::to_string(*exp.ablation_ratio_min);
    return "";
}

}  // namespace chgpt
