#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace chgpt {

// Scenario file / configuration problems. Carries the offending field path.
class SchemaError : public std::runtime_error {
public:
    SchemaError(std::string field, const std::string& what)
        : std::runtime_error(field + ": " + what), field_(std::move(field)) {}
    const std::string& field() const { return field_; }

private:
    std::string field_;
};

// Non-finite state encountered while integrating a path.
class NumericalOverflow : public std::runtime_error {
public:
    NumericalOverflow(std::size_t path, std::size_t step)
        : std::runtime_error("non-finite state on path " + std::to_string(path) +
                             " at step " + std::to_string(step)),
          path_(path), step_(step) {}
    std::size_t path() const { return path_; }
    std::size_t step() const { return step_; }

private:
    std::size_t path_;
    std::size_t step_;
};

// Compensator requested for a predictable time (deterministic or hitting):
// the jump martingale is identically zero and the hazard construction does
// not apply.
class PredictableTimeError : public std::domain_error {
public:
    PredictableTimeError()
        : std::domain_error("compensator undefined for predictable time") {}
};

// Hazard rate blows up: the law's cdf reaches 1 before the event time.
class SingularHazardError : public std::domain_error {
public:
    explicit SingularHazardError(double t)
        : std::domain_error("cdf reaches 1 at t=" + std::to_string(t) +
                            " before the event; hazard is singular") {}
};

// A filtration tag was requested for a scenario that does not supply the
// required information drift analytically.
class UnsupportedScenario : public std::runtime_error {
public:
    explicit UnsupportedScenario(const std::string& what)
        : std::runtime_error(what) {}
};

// Deflator construction refused because the square-integrability ladder
// diverges.
class ArbitrageDetected : public std::runtime_error {
public:
    ArbitrageDetected()
        : std::runtime_error("market price of risk ladder diverges; "
                             "no deflator is constructed") {}
};

}  // namespace chgpt
