#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "chgpt/engine.hpp"
#include "chgpt/random_time.hpp"
#include "chgpt/stats.hpp"
#include "test_helpers.hpp"

using namespace chgpt;

namespace {

// sup_t |F_emp(t) - F(t)| where draws beyond the horizon stay in the
// denominator (the reference cdf is the unconditional law of tau).
template <typename Cdf>
double ks_with_censoring(std::vector<double> finite_taus, std::size_t n_total,
                         Cdf&& cdf) {
    std::sort(finite_taus.begin(), finite_taus.end());
    const double n = static_cast<double>(n_total);
    double d = 0.0;
    for (std::size_t i = 0; i < finite_taus.size(); ++i) {
        const double f = cdf(finite_taus[i]);
        d = std::max(d, std::abs(f - static_cast<double>(i) / n));
        d = std::max(d, std::abs(static_cast<double>(i + 1) / n - f));
    }
    return d;
}

}  // namespace

TEST_CASE("EventTime semantics") {
    EventTime e = EventTime::at(0.5);
    CHECK_FALSE(e.is_beyond_horizon());
    CHECK(e.value() == 0.5);
    CHECK(e.occurred_by(0.5));
    CHECK_FALSE(e.occurred_by(0.25));
    EventTime b = EventTime::beyond_horizon();
    CHECK(b.is_beyond_horizon());
    CHECK(b.value_or(1.0) == 1.0);
    CHECK_THROWS_AS(b.value(), std::logic_error);
    CHECK_THROWS_AS(EventTime::at(-1.0), std::invalid_argument);
}

TEST_CASE("sample_tau pinned values") {
    TimeGrid grid(1.0, 1024);
    std::vector<double> zeros(grid.n_nodes(), 0.0);
    PathRng rng(1, 0);

    SECTION("deterministic time returns t0 for any draw") {
        EventTime t = sample_tau(DeterministicTime{0.5}, zeros, zeros, grid,
                                 0.123, rng);
        CHECK(t.value() == 0.5);
        EventTime beyond = sample_tau(DeterministicTime{2.0}, zeros, zeros,
                                      grid, 0.5, rng);
        CHECK(beyond.is_beyond_horizon());
    }
    SECTION("constant intensity inverts the integrated clock") {
        // -log(1-u) = 1 with lambda = 2 puts the event at t = 0.5
        const double u = -std::expm1(-1.0);
        EventTime t = sample_tau(testutil::const_intensity(2.0), zeros, zeros,
                                 grid, u, rng);
        CHECK(t.value() == Catch::Approx(0.5).margin(1e-12));
    }
    SECTION("uniform law inverts its cdf") {
        EventTime t = sample_tau(testutil::uniform_law(0.0, 1.0), zeros, zeros,
                                 grid, 0.3, rng);
        CHECK(t.value() == Catch::Approx(0.3).margin(1e-9));
    }
    SECTION("draws outside (0,1) are rejected") {
        CHECK_THROWS_AS(
            sample_tau(DeterministicTime{0.5}, zeros, zeros, grid, 0.0, rng),
            std::invalid_argument);
        CHECK_THROWS_AS(
            sample_tau(DeterministicTime{0.5}, zeros, zeros, grid, 1.0, rng),
            std::invalid_argument);
    }
    SECTION("law with insufficient mass returns the beyond marker") {
        EventTime t = invert_law(testutil::uniform_law(0.0, 2.0), 0.9, 1.0);
        CHECK(t.is_beyond_horizon());
    }
}

TEST_CASE("compensator pinned values") {
    TimeGrid grid(1.0, 2048);
    std::vector<double> zeros(grid.n_nodes(), 0.0);

    SECTION("uniform law hazard integrates to log 2") {
        auto a = compensator(testutil::uniform_law(0.0, 2.0), EventTime::at(1.0),
                             zeros, zeros, grid);
        CHECK(a.back() == Catch::Approx(std::log(2.0)).margin(1e-5));
        // nondecreasing
        for (std::size_t k = 1; k < a.size(); ++k) CHECK(a[k] >= a[k - 1]);
    }
    SECTION("constant intensity integrates exactly and freezes after tau") {
        auto a = compensator(testutil::const_intensity(2.0), EventTime::at(0.5),
                             zeros, zeros, grid);
        CHECK(a.back() == Catch::Approx(1.0).margin(1e-12));
        CHECK(a[grid.step_of(0.75)] == Catch::Approx(1.0).margin(1e-12));
    }
    SECTION("predictable times are rejected") {
        CHECK_THROWS_AS(compensator(DeterministicTime{0.5}, EventTime::at(0.5),
                                    zeros, zeros, grid),
                        PredictableTimeError);
        CHECK_THROWS_AS(compensator(HittingTime{1.0}, EventTime::at(0.5),
                                    zeros, zeros, grid),
                        PredictableTimeError);
    }
}

TEST_CASE("random-time probe validation") {
    CHECK(validate_random_time(testutil::exponential_law(1.0), 1.0).empty());
    CHECK(validate_random_time(testutil::uniform_law(0.2, 0.8), 1.0).empty());
    CHECK(validate_random_time(DeterministicTime{0.5}, 1.0).empty());
    CHECK_FALSE(validate_random_time(DeterministicTime{-1.0}, 1.0).empty());
    CHECK_FALSE(validate_random_time(HittingTime{0.0}, 1.0).empty());
    CHECK_FALSE(
        validate_random_time(testutil::const_intensity(-1.0), 1.0).empty());

    // density deliberately inconsistent with the cdf
    IndependentLaw bad = testutil::exponential_law(1.0);
    bad.density = [](double) { return 0.0; };
    bool flagged = false;
    for (const auto& v : validate_random_time(bad, 1.0))
        if (v.what.find("inconsistent") != std::string::npos) flagged = true;
    CHECK(flagged);
}

TEST_CASE("constant-intensity sampling matches the exponential law") {
    TimeGrid grid(1.0, 256);
    std::vector<double> zeros(grid.n_nodes(), 0.0);
    const double lam = 2.0;
    const std::size_t n = 100000;
    std::vector<double> taus;
    taus.reserve(n);
    for (std::size_t p = 0; p < n; ++p) {
        PathRng rng(777, p);
        EventTime t = sample_tau(testutil::const_intensity(lam), zeros, zeros,
                                 grid, rng.uniform(), rng);
        if (!t.is_beyond_horizon()) taus.push_back(t.value());
    }
    const double d = ks_with_censoring(
        std::move(taus), n, [lam](double t) { return -std::expm1(-lam * t); });
    CHECK(d < 0.01);
}

TEST_CASE("hitting-time sampling matches the reflection principle") {
    const double a = 0.7;
    ScenarioConfig cfg = testutil::base_config(0.2, 0.2, HittingTime{a}, 4096,
                                               20000, 5150);
    std::vector<double> taus;
    std::size_t n_total = 0;
    for_each_path(cfg, 4, [&](std::size_t, const PathBundle& b) {
        static std::mutex m;
        std::lock_guard<std::mutex> lock(m);
        ++n_total;
        if (!b.tau.is_beyond_horizon()) taus.push_back(b.tau.value());
    });
    REQUIRE(n_total == cfg.n_paths);
    const double d = ks_with_censoring(std::move(taus), n_total, [a](double t) {
        return 2.0 * (1.0 - normal_cdf(a / std::sqrt(t)));
    });
    CHECK(d < 0.02);
}

TEST_CASE("regime flag is consistent with the sampled change point") {
    ScenarioConfig cfg = testutil::base_config(
        0.2, 0.4, testutil::const_intensity(2.0), 256, 200, 99);
    bool all_ok = true;
    for (const PathBundle& b : simulate_paths(cfg)) {
        for (std::size_t k = 0; k < cfg.grid.n_nodes(); ++k) {
            const bool post = !b.tau.is_beyond_horizon() &&
                              cfg.grid.t(k) > b.tau.value();
            if ((b.regime[k] != 0) != post) all_ok = false;
        }
        // at most one 0 -> 1 transition, nondecreasing
        for (std::size_t k = 1; k < cfg.grid.n_nodes(); ++k)
            if (b.regime[k] < b.regime[k - 1]) all_ok = false;
    }
    CHECK(all_ok);
}
