#include "tled/metrics.hpp"
#include "tled/model.hpp"
#include "tled/parallel.hpp"
#include "tled/verify.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>

namespace {

// Exit codes: 0 success, 2 non-converged, 3 invalid input, 4 instability.
constexpr int kExitNonConverged = 2;
constexpr int kExitInvalidInput = 3;
constexpr int kExitInstability = 4;

int cmd_solve(const std::string &configPath) {
    const tled::RunConfig cfg = tled::load_run_config(configPath);
    const tled::SolveOutputs out = tled::run_solve(cfg);
    std::printf("nodes: %d\n", out.numNodes);
    std::printf("dt: %.6g s\n", out.dt);
    std::printf("iterations: %d\n", out.report.iterations);
    std::printf("max displacement: %.6g m\n", out.maxDisplacement);
    if (!out.report.converged) {
        std::fprintf(stderr,
                     "solve did not converge (final residual %.3g m); partial "
                     "outputs written to %s\n",
                     out.report.finalResidual, cfg.outputDir.c_str());
        return kExitNonConverged;
    }
    std::printf("converged, outputs in %s\n", cfg.outputDir.c_str());
    return 0;
}

int cmd_warp(const std::string &configPath) {
    const tled::RunConfig cfg = tled::load_run_config(configPath);
    tled::run_warp(cfg);
    std::printf("warped volume and transform written to %s\n", cfg.outputDir.c_str());
    return 0;
}

int cmd_metrics(const std::string &pathA, const std::string &pathB, double percentile,
                double threshold) {
    const tled::PointSet A = tled::load_point_csv(pathA);
    const tled::PointSet B = tled::load_point_csv(pathB);
    const double hd = tled::hausdorff_percentile(A, B, percentile);
    std::printf("H%g: %.17g mm\n", percentile, hd);
    const auto curve = tled::registration_success_curve(A, B, {threshold});
    std::printf("percentile within %.17g mm: %.17g\n", threshold, curve[0].percentile);
    return 0;
}

int cmd_verify(const std::string &suite) {
    const std::vector<tled::SuiteResult> results = tled::run_verify(suite);
    bool allPassed = true;
    for (const auto &r : results) {
        std::printf("suite %-12s %s  (%.2f s)\n", r.name.c_str(),
                    r.passed ? "PASS" : "FAIL", r.seconds);
        for (const auto &c : r.checks)
            std::printf("  [%s] %s: %.6g (limit %.6g)%s\n", c.ok ? "ok" : "FAIL",
                        c.what.c_str(), c.value, c.limit, c.timing ? " [wall clock]" : "");
        allPassed = allPassed && r.passed;
    }
    std::ofstream out("verify_report.json");
    out << tled::verify_report_json(results);
    std::printf("report written to verify_report.json\n");
    return allPassed ? 0 : 1;
}

} // namespace

int main(int argc, char **argv) {
    CLI::App app{"Total Lagrangian explicit dynamics solver and image warper"};
    app.require_subcommand(1);

    int threads = 0;
    app.add_option("--threads", threads, "worker count (default: machine parallelism)");

    std::string solveConfig, warpConfig;
    auto *solve = app.add_subcommand("solve", "run a solve from a JSON config");
    solve->add_option("config", solveConfig)->required();
    auto *warp = app.add_subcommand("warp", "fit and apply the image warp");
    warp->add_option("config", warpConfig)->required();

    std::string pathA, pathB;
    double percentile = 95.0, threshold = 1.7;
    auto *metrics = app.add_subcommand("metrics", "percentile Hausdorff between point sets");
    metrics->add_option("A", pathA)->required();
    metrics->add_option("B", pathB)->required();
    metrics->add_option("--percentile", percentile);
    metrics->add_option("--threshold", threshold);

    std::string suite;
    auto *verify = app.add_subcommand("verify", "run the built-in property suites");
    verify->add_option("suite", suite);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitInvalidInput;
    }

    if (threads > 0) tled::thread_count() = threads;

    try {
        if (solve->parsed()) return cmd_solve(solveConfig);
        if (warp->parsed()) return cmd_warp(warpConfig);
        if (metrics->parsed()) return cmd_metrics(pathA, pathB, percentile, threshold);
        if (verify->parsed()) return cmd_verify(suite);
    } catch (const tled::InstabilityError &e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitInstability;
    } catch (const tled::InversionError &e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitInstability;
    } catch (const tled::Error &e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitInvalidInput;
    } catch (const std::exception &e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitInvalidInput;
    }
    return 0;
}
