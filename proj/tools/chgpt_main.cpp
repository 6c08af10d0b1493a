// Batch front door: parses a scenario file, runs the requested pipeline
// stages, and writes the reports next to a reproducibility manifest.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "chgpt/pipeline.hpp"

namespace {

std::size_t resolve_workers(std::size_t flag_value, bool flag_given) {
    if (flag_given) return flag_value == 0 ? 1 : flag_value;
    if (const char* env = std::getenv("CHGPT_WORKERS")) {
        char* end = nullptr;
        unsigned long v = std::strtoul(env, &end, 10);
        if (end && *end == '\0' && v > 0) return v;
    }
    return 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"change-point model laboratory"};
    chgpt::RunOptions opt;
    std::string stage = "all";
    std::size_t workers_flag = 1;
    std::size_t paths_flag = 0, steps_flag = 0;
    std::uint64_t seed_flag = 0;

    app.add_option("--scenario", opt.scenario_path, "scenario file path");
    app.add_option("--out", opt.out_dir, "output directory")->required();
    auto* paths_opt = app.add_option("--paths", paths_flag,
                                     "override scenario path count");
    auto* steps_opt = app.add_option("--steps", steps_flag,
                                     "override scenario step count");
    auto* seed_opt = app.add_option("--seed", seed_flag,
                                    "override scenario master seed");
    auto* workers_opt =
        app.add_option("--workers", workers_flag,
                       "worker threads (env CHGPT_WORKERS as fallback)");
    app.add_flag("--dump-paths", opt.dump_paths, "write raw paths.csv");
    app.add_option("--stage", stage, "pipeline stage")
        ->check(CLI::IsMember(
            {"simulate", "detect", "arbitrage", "hedge", "report", "all"}));

    CLI11_PARSE(app, argc, argv);

    if (*paths_opt) opt.paths_override = paths_flag;
    if (*steps_opt) opt.steps_override = steps_flag;
    if (*seed_opt) opt.seed_override = seed_flag;
    opt.workers = resolve_workers(workers_flag, static_cast<bool>(*workers_opt));

    std::error_code ec;
    std::filesystem::create_directories(opt.out_dir, ec);
    if (ec) {
        std::cerr << "error: cannot create output directory '" << opt.out_dir
                  << "': " << ec.message() << "\n";
        return chgpt::kExitSchema;
    }

    // The report stage only reads previously written outputs.
    if (stage == "report") {
        auto missing = chgpt::stage_report(opt.out_dir);
        if (!missing.empty()) {
            std::cerr << "error: missing stage outputs:";
            for (const auto& m : missing) std::cerr << ' ' << m;
            std::cerr << "\n";
            return chgpt::kExitMissingStage;
        }
        std::cout << "report written to " << opt.out_dir << "/report.md\n";
        return chgpt::kExitOk;
    }

    if (opt.scenario_path.empty()) {
        std::cerr << "error: --scenario is required for stage '" << stage
                  << "'\n";
        return chgpt::kExitSchema;
    }

    try {
        chgpt::ScenarioFile sf = chgpt::resolve_scenario(opt);
        chgpt::RunManifestWriter manifest(opt, sf);
        const bool all = stage == "all";
        std::string mismatch;

        if (all || stage == "simulate") {
            chgpt::StageTimer timer;
            chgpt::stage_simulate(sf, opt);
            manifest.record_stage("simulate", timer.seconds());
            std::cout << "simulate: ok\n";
        }
        if (all || stage == "detect") {
            chgpt::StageTimer timer;
            chgpt::DetectOutput out = chgpt::stage_detect(sf, opt);
            manifest.record_stage("detect", timer.seconds());
            std::cout << "detect: verdict " << out.aggregate << "\n";
            if (mismatch.empty())
                mismatch = chgpt::check_expected_detect(sf.expected, out);
        }
        if (all || stage == "arbitrage") {
            chgpt::StageTimer timer;
            chgpt::ArbitrageOutput out = chgpt::stage_arbitrage(sf, opt);
            manifest.record_stage("arbitrage", timer.seconds());
            std::cout << "arbitrage: verdict "
                      << chgpt::to_string(out.na1.verdict) << "\n";
            if (mismatch.empty())
                mismatch = chgpt::check_expected_arbitrage(sf.expected, out);
        }
        if ((all && sf.claim != "none") || stage == "hedge") {
            chgpt::StageTimer timer;
            chgpt::HedgeOutput out = chgpt::stage_hedge(sf, opt);
            manifest.record_stage("hedge", timer.seconds());
            std::cout << "hedge: v0 " << out.v0 << ", rmse " << out.rmse_full
                      << "\n";
            if (mismatch.empty())
                mismatch = chgpt::check_expected_hedge(sf.expected, out);
        }
        if (all) {
            chgpt::StageTimer timer;
            auto missing = chgpt::stage_report(opt.out_dir);
            manifest.record_stage("report", timer.seconds());
            if (!missing.empty()) {
                std::cerr << "error: missing stage outputs:";
                for (const auto& m : missing) std::cerr << ' ' << m;
                std::cerr << "\n";
                return chgpt::kExitMissingStage;
            }
        }
        if (!mismatch.empty()) {
            std::cerr << "verification failure: " << mismatch << "\n";
            return chgpt::kExitVerificationFailure;
        }
    } catch (const chgpt::SchemaError& e) {
        std::cerr << "schema error: " << e.what() << "\n";
        return chgpt::kExitSchema;
    } catch (const chgpt::NumericalOverflow& e) {
        std::cerr << "numerical abort: " << e.what() << "\n";
        return chgpt::kExitNumerical;
    } catch (const chgpt::ArbitrageDetected& e) {
        std::cerr << "verification failure: " << e.what() << "\n";
        return chgpt::kExitVerificationFailure;
    } catch (const chgpt::UnsupportedScenario& e) {
        std::cerr << "schema error: " << e.what() << "\n";
        return chgpt::kExitSchema;
    } catch (const std::domain_error& e) {
        std::cerr << "schema error: " << e.what() << "\n";
        return chgpt::kExitSchema;
    } catch (const std::exception& e) {
        std::cerr << "numerical abort: " << e.what() << "\n";
        return chgpt::kExitNumerical;
    }
    return chgpt::kExitOk;
}
