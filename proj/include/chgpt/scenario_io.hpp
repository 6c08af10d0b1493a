#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "chgpt/errors.hpp"
#include "chgpt/scenario.hpp"

namespace chgpt {

// Verification outcomes a scenario file may pin down; stage commands exit
// with the verification-failure code when the observed verdict disagrees.
struct ExpectedVerdicts {
    std::optional<std::string> detect;      // detected | none | undetectable
    std::optional<std::string> na1;         // stable | diverging | inconclusive
    std::optional<std::string> martingale;  // pass | fail
    std::optional<double> hedge_rmse_max;   // out-of-sample bound
    std::optional<double> ablation_ratio_min;  // rmse(no psi) / rmse(full)
};

struct ScenarioFile {
    ScenarioConfig config;
    ExpectedVerdicts expected;
    // claim registry name for the hedge stage: none | constant | asset |
    // digital_x | digital_tau
    std::string claim = "none";
    double claim_param = 0.0;
};

namespace detail {

// Minimal INI reader: [section], key = value, '#'/';' comments, UTF-8.
struct IniData {
    std::map<std::string, std::map<std::string, std::string>> sections;

    const std::string* find(const std::string& sec,
                            const std::string& key) const {
        auto s = sections.find(sec);
        if (s == sections.end()) return nullptr;
        auto k = s->second.find(key);
        if (k == s->second.end()) return nullptr;
        return &k->second;
    }
};

inline std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

inline IniData parse_ini(std::istream& in) {
    IniData data;
    std::string line, section;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto hash = line.find_first_of("#;");
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw SchemaError("line " + std::to_string(lineno),
                                  "malformed section header");
            section = trim(line.substr(1, line.size() - 2));
            data.sections[section];
            continue;
        }
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw SchemaError("line " + std::to_string(lineno),
                              "expected key = value");
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (key.empty())
            throw SchemaError("line " + std::to_string(lineno), "empty key");
        data.sections[section][key] = value;
    }
    return data;
}

inline double parse_double(const std::string& field, const std::string& v) {
    try {
        std::size_t pos = 0;
        double d = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("trailing characters");
        return d;
    } catch (const std::exception&) {
        throw SchemaError(field, "not a number: '" + v + "'");
    }
}

inline std::uint64_t parse_u64(const std::string& field, const std::string& v) {
    try {
        std::size_t pos = 0;
        unsigned long long u = std::stoull(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("trailing characters");
        return u;
    } catch (const std::exception&) {
        throw SchemaError(field, "not an unsigned integer: '" + v + "'");
    }
}

// "family p1 p2 ..." -> (family, params)
inline std::pair<std::string, std::vector<double>> parse_registry_entry(
    const std::string& field, const std::string& v) {
    std::istringstream iss(v);
    std::string family;
    iss >> family;
    if (family.empty()) throw SchemaError(field, "empty registry entry");
    std::vector<double> params;
    std::string tok;
    while (iss >> tok) params.push_back(parse_double(field, tok));
    return {family, params};
}

inline CoefficientFn registry_coefficient(const std::string& field,
                                          const std::string& v,
                                          double& lipschitz_out) {
    auto [family, params] = parse_registry_entry(field, v);
    try {
        CoefficientFn fn = make_coefficient(family, params);
        lipschitz_out = std::max(lipschitz_out, family_lipschitz(family, params));
        return fn;
    } catch (const std::invalid_argument& e) {
        throw SchemaError(field, e.what());
    }
}

}  // namespace detail

inline FiltrationTag parse_filtration_tag(const std::string& v) {
    if (v == "FX") return FiltrationTag::FX;
    if (v == "GX") return FiltrationTag::GX;
    if (v == "G") return FiltrationTag::G;
    if (v == "G_tau") return FiltrationTag::G_tau;
    if (v == "GX_tau") return FiltrationTag::GX_tau;
    throw SchemaError("scenario.filtration",
                      "unknown tag '" + v + "' (FX|GX|G|G_tau|GX_tau)");
}

// Named random-time constructions:
//   deterministic t0 = T0
//   exponential  rate = R         (independent law)
//   uniform      lo = A, hi = B   (independent law)
//   cox          intensity = "constant L" | "affine_t A B"
//   hitting      level = A
inline RandomTimeSpec parse_tau_spec(const detail::IniData& ini) {
    const std::string* kind = ini.find("tau", "kind");
    if (!kind) throw SchemaError("tau.kind", "missing");
    if (*kind == "deterministic") {
        const std::string* t0 = ini.find("tau", "t0");
        if (!t0) throw SchemaError("tau.t0", "missing");
        return DeterministicTime{detail::parse_double("tau.t0", *t0)};
    }
    if (*kind == "exponential") {
        const std::string* rate = ini.find("tau", "rate");
        if (!rate) throw SchemaError("tau.rate", "missing");
        const double r = detail::parse_double("tau.rate", *rate);
        if (!(r > 0.0)) throw SchemaError("tau.rate", "must be positive");
        IndependentLaw law;
        law.cdf = [r](double t) { return t <= 0.0 ? 0.0 : -std::expm1(-r * t); };
        law.density = [r](double t) {
            return t <= 0.0 ? 0.0 : r * std::exp(-r * t);
        };
        return law;
    }
    if (*kind == "uniform") {
        const std::string* lo = ini.find("tau", "lo");
        const std::string* hi = ini.find("tau", "hi");
        if (!lo) throw SchemaError("tau.lo", "missing");
        if (!hi) throw SchemaError("tau.hi", "missing");
        const double a = detail::parse_double("tau.lo", *lo);
        const double b = detail::parse_double("tau.hi", *hi);
        if (!(a >= 0.0 && b > a))
            throw SchemaError("tau.lo", "window must satisfy 0 <= lo < hi");
        IndependentLaw law;
        law.cdf = [a, b](double t) {
            return std::clamp((t - a) / (b - a), 0.0, 1.0);
        };
        law.density = [a, b](double t) {
            return (t >= a && t <= b) ? 1.0 / (b - a) : 0.0;
        };
        law.knots = {a, b};
        return law;
    }
    if (*kind == "cox") {
        const std::string* spec = ini.find("tau", "intensity");
        if (!spec) throw SchemaError("tau.intensity", "missing");
        auto [family, params] =
            detail::parse_registry_entry("tau.intensity", *spec);
        if (family == "constant") {
            if (params.size() != 1)
                throw SchemaError("tau.intensity", "constant takes 1 parameter");
            const double lam = params[0];
            if (!(lam >= 0.0))
                throw SchemaError("tau.intensity", "must be nonnegative");
            return CoxIntensity{
                [lam](double, double, double) { return lam; }};
        }
        if (family == "affine_t") {
            if (params.size() != 2)
                throw SchemaError("tau.intensity", "affine_t takes 2 parameters");
            const double a = params[0], b = params[1];
            return CoxIntensity{[a, b](double t, double, double) {
                return std::max(0.0, a + b * t);
            }};
        }
        throw SchemaError("tau.intensity",
                          "unknown intensity family '" + family + "'");
    }
    if (*kind == "hitting") {
        const std::string* level = ini.find("tau", "level");
        if (!level) throw SchemaError("tau.level", "missing");
        const double a = detail::parse_double("tau.level", *level);
        if (!(a > 0.0)) throw SchemaError("tau.level", "must be positive");
        return HittingTime{a};
    }
    throw SchemaError("tau.kind", "unknown construction '" + *kind + "'");
}

inline ScenarioFile parse_scenario_stream(std::istream& in) {
    detail::IniData ini = detail::parse_ini(in);
    ScenarioFile out;
    ScenarioConfig& cfg = out.config;

    auto require = [&](const char* sec, const char* key) -> const std::string& {
        const std::string* v = ini.find(sec, key);
        if (!v)
            throw SchemaError(std::string(sec) + "." + key, "missing");
        return *v;
    };

    cfg.name = require("scenario", "name");
    cfg.rho = detail::parse_double("scenario.rho", require("scenario", "rho"));
    cfg.s0 = detail::parse_double("scenario.s0", require("scenario", "s0"));
    cfg.grid.horizon = detail::parse_double("scenario.horizon",
                                            require("scenario", "horizon"));
    if (!(cfg.grid.horizon > 0.0))
        throw SchemaError("scenario.horizon", "must be positive");
    cfg.grid.n_steps = static_cast<std::size_t>(
        detail::parse_u64("scenario.n_steps", require("scenario", "n_steps")));
    if (cfg.grid.n_steps < 1)
        throw SchemaError("scenario.n_steps", "must be >= 1");
    cfg.n_paths = static_cast<std::size_t>(
        detail::parse_u64("scenario.n_paths", require("scenario", "n_paths")));
    cfg.master_seed =
        detail::parse_u64("scenario.seed", require("scenario", "seed"));
    cfg.filtration_tag = parse_filtration_tag(require("scenario", "filtration"));

    cfg.coeffs.lipschitz_K = 0.0;
    cfg.coeffs.mu1 = detail::registry_coefficient(
        "coefficients.mu1", require("coefficients", "mu1"),
        cfg.coeffs.lipschitz_K);
    cfg.coeffs.mu2 = detail::registry_coefficient(
        "coefficients.mu2", require("coefficients", "mu2"),
        cfg.coeffs.lipschitz_K);
    cfg.coeffs.sigma1 = detail::registry_coefficient(
        "coefficients.sigma1", require("coefficients", "sigma1"),
        cfg.coeffs.lipschitz_K);
    cfg.coeffs.sigma2 = detail::registry_coefficient(
        "coefficients.sigma2", require("coefficients", "sigma2"),
        cfg.coeffs.lipschitz_K);
    if (cfg.coeffs.lipschitz_K <= 0.0) cfg.coeffs.lipschitz_K = 1e-12;

    cfg.tau_spec = parse_tau_spec(ini);
    if (const std::string* lo = ini.find("tau", "condition_lo")) {
        const std::string* hi = ini.find("tau", "condition_hi");
        if (!hi) throw SchemaError("tau.condition_hi", "missing");
        cfg.tau_condition =
            TauConditioning{detail::parse_double("tau.condition_lo", *lo),
                            detail::parse_double("tau.condition_hi", *hi)};
    }

    if (const std::string* v = ini.find("expected", "detect"))
        out.expected.detect = *v;
    if (const std::string* v = ini.find("expected", "na1"))
        out.expected.na1 = *v;
    if (const std::string* v = ini.find("expected", "martingale"))
        out.expected.martingale = *v;
    if (const std::string* v = ini.find("expected", "hedge_rmse_max"))
        out.expected.hedge_rmse_max =
            detail::parse_double("expected.hedge_rmse_max", *v);
    if (const std::string* v = ini.find("expected", "ablation_ratio_min"))
        out.expected.ablation_ratio_min =
            detail::parse_double("expected.ablation_ratio_min", *v);

    if (const std::string* v = ini.find("claim", "kind")) {
        out.claim = *v;
        if (out.claim != "none" && out.claim != "constant" &&
            out.claim != "asset" && out.claim != "digital_x" &&
            out.claim != "digital_tau")
            throw SchemaError("claim.kind", "unknown claim '" + *v + "'");
        if (const std::string* p = ini.find("claim", "param"))
            out.claim_param = detail::parse_double("claim.param", *p);
    }

    cfg.validate();

    // Random-time probe validation is part of schema acceptance.
    auto violations = validate_random_time(cfg.tau_spec, cfg.grid.horizon);
    if (!violations.empty())
        throw SchemaError("tau", violations.front().what);
    return out;
}

inline ScenarioFile load_scenario_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw SchemaError("scenario file", "cannot open '" + path + "'");
    return parse_scenario_stream(in);
}

}  // namespace chgpt
