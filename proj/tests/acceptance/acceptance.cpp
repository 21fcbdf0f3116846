// Acceptance suite: runs every gate criterion at desk scale (N = 33, unit
// cube) with the tolerances pinned in the default configuration, printing one
// pass/fail line per criterion. Exit code = number of failed criteria.

#include <chrono>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "dtnprobe/experiments.hpp"
#include "../fixture_check.hpp"

using namespace dtnprobe;
namespace fs = std::filesystem;

namespace {

int failures = 0;

void line(const std::string& id, bool pass, const std::string& detail) {
    std::printf("[%3s] %s  %s\n", id.c_str(), pass ? "PASS" : "FAIL", detail.c_str());
    if (!pass) ++failures;
}

void note(const std::string& text) { std::printf("      %s\n", text.c_str()); }

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

char buf[512];

} // namespace

int main(int argc, char** argv) {
    int workers = 2;
    std::string out = "acceptance_out";
    for (int i = 1; i < argc; ++i) {
        if (std::strcmp(argv[i], "--workers") == 0 && i + 1 < argc) workers = std::atoi(argv[++i]);
        if (std::strcmp(argv[i], "--out") == 0 && i + 1 < argc) out = argv[++i];
    }
    fs::create_directories(out);

    RunConfig cfg;  // desk-scale defaults; every gate threshold lives here
    cfg.workers = workers;
    Workbench wb(cfg);
    const auto t_start = std::chrono::steady_clock::now();

    // 1 & 2: integral identity and flux well-definedness
    {
        ExperimentResult r = run_identity(wb, out);
        const double rel = r.metrics["max_rel_err"];
        const bool time_ok = r.wall_seconds <= 60.0;
        std::snprintf(buf, sizeof(buf),
                      "integral identity: %d random pairs, max rel discrepancy %.2e (tol %.0e), "
                      "%.1f s (limit 60 s)",
                      cfg.identity_pairs, rel, cfg.identity_rel, r.wall_seconds);
        line("1", rel <= cfg.identity_rel && time_ok, buf);

        const double flux = r.metrics["flux_max_rel_spread"];
        std::snprintf(buf, sizeof(buf),
                      "flux well-definedness: %d random extensions, max rel spread %.2e (tol %.0e)",
                      cfg.flux_extensions, flux, cfg.flux_rel);
        line("2", flux <= cfg.flux_rel, buf);
    }

    // 3: differential consistency
    {
        ExperimentResult r = run_frechet(wb, out);
        const double sc = r.metrics["cubic_slope"], ss = r.metrics["sine_slope"];
        std::snprintf(buf, sizeof(buf),
                      "differential finite-difference slopes: cubic %.3f, sine %.3f (band [%.1f, %.1f])",
                      sc, ss, cfg.frechet_slope_lo, cfg.frechet_slope_hi);
        line("3", r.pass, buf);
    }

    // 4: probe scaling laws
    {
        ExperimentResult r = run_scaling(wb, out);
        const double ts = r.metrics["trace_norm_slope"], ds = r.metrics["data_norm_slope"];
        const double ns = r.metrics["data_norm_slope_near_field"];
        const double cr = r.metrics["corrector_ratio"];
        const bool trace_ok = r.metrics["trace_ok"], data_ok = r.metrics["data_ok"],
                   corr_ok = r.metrics["corrector_ok"];
        std::snprintf(buf, sizeof(buf),
                      "probe scaling: trace slope %.3f (target %.2f+/-%.2f: %s); singular-data "
                      "L^6/5 slope %.3f (target %.2f+/-%.2f: %s); corrector ratio %.2f (< %.1f: %s)",
                      ts, cfg.probe_trace_slope, cfg.probe_trace_slope_tol,
                      trace_ok ? "ok" : "fail", ds, cfg.probe_data_slope, cfg.probe_data_slope_tol,
                      data_ok ? "ok" : "fail", cr, cfg.corrector_ratio_max,
                      corr_ok ? "ok" : "fail");
        line("4", r.pass, buf);
        if (!data_ok) {
            std::snprintf(buf, sizeof(buf),
                          "in three dimensions the pole of the singular data is L^6/5-integrable, so "
                          "the global norm is far-field dominated and cannot follow the delta^(1/2) "
                          "target; the near-field norm over B(x0, 2*delta) measures slope %.3f",
                          ns);
            note(buf);
        }
    }

    // 5: first eigenvalue
    {
        ExperimentResult r = run_lambda1(wb, out);
        std::snprintf(buf, sizeof(buf),
                      "lambda1 with one Richardson step: %.4f vs 3*pi^2 = %.4f, rel err %.2e (tol %.0e)",
                      r.metrics["richardson"].get<double>(), r.metrics["target"].get<double>(),
                      r.metrics["rel_err"].get<double>(), cfg.lambda1_rel);
        line("5", r.pass, buf);
    }

    // 6: pointwise recovery of potential differences
    {
        ExperimentResult r = run_recover_sigma(wb, out);
        std::snprintf(buf, sizeof(buf),
                      "pointwise recovery: constant diff rel err %.3f (tol %.2f); bump rel err %.3f "
                      "(tol %.2f), error decreasing in delta: %s",
                      r.metrics["const_rel_err"].get<double>(), cfg.recover_const_rel,
                      r.metrics["bump_rel_err"].get<double>(), cfg.recover_bump_rel,
                      r.metrics["bump_trend_ok"].get<bool>() ? "yes" : "no");
        line("6", r.pass, buf);
    }

    // 7: derivative sweep, linear control and cubic shape
    {
        SweepAnchor anchor = wb.anchor();
        const CalibrationProfile& cal = wb.calibration();
        const ProbeSweep& sweep = wb.sweep();

        auto lin1 = std::make_shared<SemilinearDtn>(wb.op(), wb.patches(), builtin("linear", {1.0}));
        SemilinearDtn zero(wb.op(), wb.patches(), builtin("zero"));
        SimulatedDtnOracle lin_oracle(lin1);
        const RecoveredCurve lc = recover_aprime(lin_oracle, zero, anchor, cal, sweep);
        double flat_err = 0.0;
        for (int i = 0; i < lc.t_grid.size(); ++i)
            flat_err = std::max(flat_err, std::abs(lc.estimate[i] - 1.0));

        auto cub1 = std::make_shared<SemilinearDtn>(wb.op(), wb.patches(), builtin("cubic", {1.0}));
        SimulatedDtnOracle cub_oracle(cub1);
        const RecoveredCurve cc = recover_aprime(cub_oracle, zero, anchor, cal, sweep);
        const int nt = static_cast<int>(cc.t_grid.size());
        const int mid = nt / 2;
        const double scale = cc.estimate.cwiseAbs().maxCoeff();
        double even_err = 0.0;
        for (int i = 0; i < mid; ++i)
            even_err = std::max(even_err, std::abs(cc.estimate[i] - cc.estimate[nt - 1 - i]) / scale);
        bool min_at_zero = true, monotone = true;
        for (int i = 0; i < nt; ++i)
            if (i != mid && cc.estimate[mid] > cc.estimate[i] + 1e-9 * scale) min_at_zero = false;
        for (int i = mid; i + 1 < nt; ++i)
            if (cc.estimate[i + 1] < cc.estimate[i] - 1e-9 * scale) monotone = false;

        std::vector<std::vector<double>> rows;
        for (int i = 0; i < nt; ++i)
            rows.push_back({cc.t_grid[i], lc.estimate[i], cc.estimate[i],
                            3.0 * cc.t_grid[i] * cc.t_grid[i]});
        write_csv(out + "/acceptance_aprime.csv", {"t", "linear_estimate", "cubic_estimate",
                                                   "cubic_truth_3t2"}, rows);

        const bool pass = flat_err <= cfg.recover_linear_rel && even_err <= cfg.recover_even_rel &&
                          min_at_zero && monotone && lc.failed_points.empty() &&
                          cc.failed_points.empty();
        std::snprintf(buf, sizeof(buf),
                      "derivative sweep: linear flat err %.3f (tol %.2f); cubic even err %.3f "
                      "(tol %.2f), min at t=0: %s, monotone on [0,1]: %s (truth 3t^2 reported)",
                      flat_err, cfg.recover_linear_rel, even_err, cfg.recover_even_rel,
                      min_at_zero ? "yes" : "no", monotone ? "yes" : "no");
        line("7", pass, buf);
    }

    // 8: stability inequality
    {
        ExperimentResult r = run_stability(wb, out);
        std::snprintf(buf, sizeof(buf),
                      "stability inequality: %zu magnitudes, theoretical exponent %.2f, empirical "
                      "slope %.3f, C_hat %.3f, per-k spread %.2fx (limit %.0fx)",
                      cfg.stability_epsilons.size(), cfg.stability_exponent,
                      r.metrics["fitted_slope"].get<double>(), r.metrics["c_hat"].get<double>(),
                      r.metrics["c_spread"].get<double>(), cfg.stability_c_spread_max);
        line("8", r.pass, buf);
    }

    // 9: determinism of CSV outputs
    {
        const std::string d1 = out + "/det1", d2 = out + "/det2";
        fs::create_directories(d1);
        fs::create_directories(d2);
        Workbench wa(cfg), wc(cfg);
        run_identity(wa, d1);
        run_identity(wc, d2);
        const std::string c1 = read_file(d1 + "/identity.csv");
        const std::string c2 = read_file(d2 + "/identity.csv");
        const bool same = !c1.empty() && c1 == c2;
        std::snprintf(buf, sizeof(buf),
                      "determinism: identical config and seed give byte-identical CSVs (%zu bytes)",
                      c1.size());
        line("9", same, buf);
    }

    // 10: frozen oracle fixtures
    {
        const auto results = fixtures::run_checks(std::string(DTNPROBE_FIXTURE_DIR) +
                                                  "/oracle_fixtures.json");
        bool pass = !results.empty();
        int worst_idx = 0;
        double worst = 0.0;
        for (std::size_t i = 0; i < results.size(); ++i) {
            if (!results[i].pass) pass = false;
            const double rel = std::abs(results[i].measured - results[i].expected) /
                               std::max(std::abs(results[i].expected), 1e-300);
            if (rel > worst) {
                worst = rel;
                worst_idx = static_cast<int>(i);
            }
        }
        std::snprintf(buf, sizeof(buf),
                      "oracle regression: %zu frozen fixtures, worst rel deviation %.2e (%s)",
                      results.size(), worst, results[worst_idx].name.c_str());
        line("10", pass, buf);
    }

    const double total = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    std::printf("---\n%d of 10 criteria failed; total %.1f s; artifacts in %s\n", failures, total,
                out.c_str());
    return failures;
}
