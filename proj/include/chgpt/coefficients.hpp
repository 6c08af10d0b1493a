#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace chgpt {

using CoefficientFn = std::function<double(double t, double x)>;

// The four regime coefficients of the model together with the declared
// Lipschitz bound. Drifts map to the reals, volatilities into (0, inf).
struct RegimeCoefficients {
    CoefficientFn mu1;
    CoefficientFn mu2;
    CoefficientFn sigma1;
    CoefficientFn sigma2;
    double lipschitz_K = 1.0;

    // Growth constant implied by the Lipschitz bound and the values at x=0:
    // |f(t,x)|^2 <= K_bar (1 + x^2).
    double growth_Kbar(double horizon) const {
        double m = 0.0;
        for (int i = 0; i <= 8; ++i) {
            double t = horizon * static_cast<double>(i) / 8.0;
            m = std::max({m, std::abs(mu1(t, 0.0)), std::abs(mu2(t, 0.0)),
                          sigma1(t, 0.0), sigma2(t, 0.0)});
        }
        double c = m + lipschitz_K;
        return 2.0 * c * c;
    }
};

// --- Built-in coefficient families -----------------------------------------
//
// constant c          : f(t,x) = c
// affine c b          : f(t,x) = c + b x
// sigmoid lo hi       : f(t,x) = lo + (hi - lo) / (1 + exp(-x))
//
// The sigmoid family is bounded, strictly between lo and hi, and Lipschitz
// with constant (hi - lo) / 4.

inline CoefficientFn make_coefficient(const std::string& family,
                                      const std::vector<double>& params) {
    if (family == "constant") {
        if (params.size() != 1)
            throw std::invalid_argument("constant takes 1 parameter");
        double c = params[0];
        return [c](double, double) { return c; };
    }
    if (family == "affine") {
        if (params.size() != 2)
            throw std::invalid_argument("affine takes 2 parameters");
        double c = params[0], b = params[1];
        return [c, b](double, double x) { return c + b * x; };
    }
    if (family == "sigmoid") {
        if (params.size() != 2)
            throw std::invalid_argument("sigmoid takes 2 parameters");
        double lo = params[0], hi = params[1];
        return [lo, hi](double, double x) {
            return lo + (hi - lo) / (1.0 + std::exp(-x));
        };
    }
    throw std::invalid_argument("unknown coefficient family '" + family + "'");
}

inline double family_lipschitz(const std::string& family,
                               const std::vector<double>& params) {
    if (family == "constant") return 0.0;
    if (family == "affine") return std::abs(params[1]);
    if (family == "sigmoid") return std::abs(params[1] - params[0]) / 4.0;
    throw std::invalid_argument("unknown coefficient family '" + family + "'");
}

// --- Validation on a probe lattice -----------------------------------------

struct ProbeLattice {
    double horizon = 1.0;
    double x_lo = -10.0;
    double x_hi = 10.0;
    std::size_t nt = 64;
    std::size_t nx = 64;
};

struct CoefficientViolation {
    enum class Kind { Positivity, Lipschitz, Continuity };
    Kind kind;
    std::string function;  // "mu1", "mu2", "sigma1", "sigma2"
    double t;
    double x;
    double detail;  // offending value or observed slope
};

// Diagnostic sweep over the lattice; violations are data, not failures.
inline std::vector<CoefficientViolation> validate_coefficients(
    const RegimeCoefficients& coeffs, const ProbeLattice& lattice) {
    if (lattice.nt < 2 || lattice.nx < 2)
        throw std::invalid_argument("probe lattice too small");
    std::vector<CoefficientViolation> out;
    const double dt = lattice.horizon / static_cast<double>(lattice.nt - 1);
    const double dx =
        (lattice.x_hi - lattice.x_lo) / static_cast<double>(lattice.nx - 1);
    const double lip_tol = 1e-9;

    struct Entry {
        const char* name;
        const CoefficientFn* fn;
        bool is_sigma;
    };
    const Entry entries[] = {{"mu1", &coeffs.mu1, false},
                             {"mu2", &coeffs.mu2, false},
                             {"sigma1", &coeffs.sigma1, true},
                             {"sigma2", &coeffs.sigma2, true}};

    for (const Entry& e : entries) {
        for (std::size_t i = 0; i < lattice.nt; ++i) {
            double t = static_cast<double>(i) * dt;
            double prev = 0.0;
            for (std::size_t j = 0; j < lattice.nx; ++j) {
                double x = lattice.x_lo + static_cast<double>(j) * dx;
                double v = (*e.fn)(t, x);
                if (e.is_sigma && !(v > 0.0))
                    out.push_back({CoefficientViolation::Kind::Positivity,
                                   e.name, t, x, v});
                if (j > 0) {
                    double gap = std::abs(v - prev);
                    if (gap > coeffs.lipschitz_K * dx + lip_tol)
                        out.push_back({CoefficientViolation::Kind::Lipschitz,
                                       e.name, t, x, gap / dx});
                    // Lattice-level continuity smoke check in x.
                    if (e.is_sigma &&
                        gap > 100.0 * std::max(1.0, coeffs.lipschitz_K) * dx)
                        out.push_back({CoefficientViolation::Kind::Continuity,
                                       e.name, t, x, gap});
                }
                if (e.is_sigma && i > 0) {
                    double gap_t = std::abs(v - (*e.fn)(t - dt, x));
                    if (gap_t > 100.0 * std::max(1.0, coeffs.lipschitz_K) * dt)
                        out.push_back({CoefficientViolation::Kind::Continuity,
                                       e.name, t, x, gap_t});
                }
                prev = v;
            }
        }
    }
    return out;
}

// True when sigma1 and sigma2 agree on the probe lattice to within tol.
inline bool identical_volatilities(const RegimeCoefficients& coeffs,
                                   const ProbeLattice& lattice,
                                   double tol = 1e-12) {
    const double dt = lattice.horizon / static_cast<double>(lattice.nt - 1);
    const double dx =
        (lattice.x_hi - lattice.x_lo) / static_cast<double>(lattice.nx - 1);
    for (std::size_t i = 0; i < lattice.nt; ++i) {
        double t = static_cast<double>(i) * dt;
        for (std::size_t j = 0; j < lattice.nx; ++j) {
            double x = lattice.x_lo + static_cast<double>(j) * dx;
            if (std::abs(coeffs.sigma1(t, x) - coeffs.sigma2(t, x)) > tol)
                return false;
        }
    }
    return true;
}

inline bool identical_drifts(const RegimeCoefficients& coeffs,
                             const ProbeLattice& lattice, double tol = 1e-12) {
    const double dt = lattice.horizon / static_cast<double>(lattice.nt - 1);
    const double dx =
        (lattice.x_hi - lattice.x_lo) / static_cast<double>(lattice.nx - 1);
    for (std::size_t i = 0; i < lattice.nt; ++i) {
        double t = static_cast<double>(i) * dt;
        for (std::size_t j = 0; j < lattice.nx; ++j) {
            double x = lattice.x_lo + static_cast<double>(j) * dx;
            if (std::abs(coeffs.mu1(t, x) - coeffs.mu2(t, x)) > tol)
                return false;
        }
    }
    return true;
}

}  // namespace chgpt
