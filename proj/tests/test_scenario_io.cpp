#include <catch2/catch_amalgamated.hpp>

#include <sstream>
#include <string>

#include "chgpt/scenario_io.hpp"

using namespace chgpt;

namespace {

const char* kGood = R"(# comment line
[scenario]
name = demo
rho = 0.5
s0 = 2.0
horizon = 1.0
n_steps = 128
n_paths = 50
seed = 12345
filtration = GX

[coefficients]
mu1 = constant 0.1
mu2 = affine 0.05 0.2
sigma1 = constant 0.2
sigma2 = sigmoid 0.2 0.45

[tau]
kind = cox
intensity = constant 2.0
condition_lo = 0.2
condition_hi = 0.8

[claim]
kind = digital_x
param = -0.4

[expected]
detect = detected
na1 = stable
hedge_rmse_max = 0.06
)";

ScenarioFile parse(const std::string& text) {
    std::istringstream in(text);
    return parse_scenario_stream(in);
}

std::string with_line(const std::string& needle, const std::string& repl) {
    std::string s = kGood;
    auto pos = s.find(needle);
    REQUIRE(pos != std::string::npos);
    s.replace(pos, needle.size(), repl);
    return s;
}

}  // namespace

TEST_CASE("a complete scenario file round-trips into the config") {
    ScenarioFile sf = parse(kGood);
    CHECK(sf.config.name == "demo");
    CHECK(sf.config.rho == 0.5);
    CHECK(sf.config.s0 == 2.0);
    CHECK(sf.config.grid.n_steps == 128);
    CHECK(sf.config.grid.horizon == 1.0);
    CHECK(sf.config.n_paths == 50);
    CHECK(sf.config.master_seed == 12345);
    CHECK(sf.config.filtration_tag == FiltrationTag::GX);
    CHECK(std::holds_alternative<CoxIntensity>(sf.config.tau_spec));
    REQUIRE(sf.config.tau_condition.has_value());
    CHECK(sf.config.tau_condition->lo == 0.2);
    CHECK(sf.config.tau_condition->hi == 0.8);
    CHECK(sf.claim == "digital_x");
    CHECK(sf.claim_param == -0.4);
    REQUIRE(sf.expected.detect.has_value());
    CHECK(*sf.expected.detect == "detected");
    REQUIRE(sf.expected.hedge_rmse_max.has_value());
    CHECK(*sf.expected.hedge_rmse_max == 0.06);
    CHECK_FALSE(sf.expected.martingale.has_value());
    // registry coefficients evaluate
    CHECK(sf.config.coeffs.mu2(0.0, 1.0) == Catch::Approx(0.25));
    CHECK(sf.config.coeffs.lipschitz_K == Catch::Approx(0.2));
}

TEST_CASE("schema errors carry the offending field path") {
    SECTION("correlation outside [-1, 1]") {
        try {
            parse(with_line("rho = 0.5", "rho = 1.5"));
            FAIL("expected SchemaError");
        } catch (const SchemaError& e) {
            CHECK(e.field() == "scenario.rho");
        }
    }
    SECTION("unknown registry family") {
        try {
            parse(with_line("sigma1 = constant 0.2", "sigma1 = wiggle 1 2"));
            FAIL("expected SchemaError");
        } catch (const SchemaError& e) {
            CHECK(e.field() == "coefficients.sigma1");
        }
    }
    SECTION("missing required key") {
        CHECK_THROWS_AS(parse(with_line("seed = 12345", "")), SchemaError);
    }
    SECTION("unknown random-time construction") {
        CHECK_THROWS_AS(parse(with_line("kind = cox", "kind = comet")),
                        SchemaError);
    }
    SECTION("nonpositive exponential rate") {
        CHECK_THROWS_AS(
            parse(with_line("kind = cox\nintensity = constant 2.0",
                            "kind = exponential\nrate = -1.0")),
            SchemaError);
    }
    SECTION("conditioning window needs both endpoints") {
        CHECK_THROWS_AS(parse(with_line("condition_hi = 0.8", "")), SchemaError);
    }
    SECTION("unknown claim kind") {
        CHECK_THROWS_AS(parse(with_line("kind = digital_x", "kind = lookback")),
                        SchemaError);
    }
    SECTION("malformed key-value line") {
        CHECK_THROWS_AS(parse(with_line("rho = 0.5", "rho 0.5")), SchemaError);
    }
    SECTION("uniform window must be ordered") {
        CHECK_THROWS_AS(
            parse(with_line("kind = cox\nintensity = constant 2.0",
                            "kind = uniform\nlo = 0.8\nhi = 0.2")),
            SchemaError);
    }
}

TEST_CASE("time grid arithmetic") {
    TimeGrid grid(1.0, 3);
    CHECK(grid.n_nodes() == 4);
    CHECK(grid.t(3) == 1.0);  // last node lands on the horizon exactly
    CHECK(grid.t(1) == Catch::Approx(1.0 / 3.0));
    CHECK(grid.step_of(-1.0) == 0);
    CHECK(grid.step_of(0.5) == 1);
    CHECK(grid.step_of(5.0) == 2);
    CHECK_THROWS_AS(TimeGrid(0.0, 4), std::invalid_argument);
    CHECK_THROWS_AS(TimeGrid(1.0, 0), std::invalid_argument);
}

TEST_CASE("config fingerprint is stable and seed-sensitive") {
    ScenarioFile a = parse(kGood);
    ScenarioFile b = parse(kGood);
    CHECK(a.config.fingerprint() == b.config.fingerprint());
    b.config.master_seed += 1;
    CHECK(a.config.fingerprint() != b.config.fingerprint());
}
