#include <catch2/catch.hpp>
#include <memory>

#include "dtnprobe/recovery.hpp"

using namespace dtnprobe;

namespace {

struct Rig {
    DomainGridPtr grid;
    BoundaryPatches patches;
    Conductivity cond;
    std::shared_ptr<EllipticOperator> op;
    std::shared_ptr<ProbeWorkspace> ws;
    ProbeSweep sweep;
    CalibrationProfile cal;
};

Rig& rig25() {
    static Rig r = [] {
        Rig x;
        x.grid = build_domain(3, 25);
        x.patches = build_patches(x.grid, Face::ZPlus, 0.36, 0.44);
        auto ext = std::make_shared<ExtendedDomain>(extend_domain(x.grid, x.patches));
        x.op = std::make_shared<EllipticOperator>(mesh_ref(*x.grid), x.cond);
        x.ws = std::make_shared<ProbeWorkspace>(ext, x.cond);
        x.sweep = build_probe_sweep(*x.ws, x.cond, default_delta_sweep(*ext, 2));
        x.cal = calibrate(x.op, x.patches, x.sweep);
        return x;
    }();
    return r;
}

} // namespace

TEST_CASE("calibration positivity and fingerprint guard") {
    auto& r = rig25();
    for (double s : r.cal.s_ref) REQUIRE(s > 0.0);

    LinearDtn d1(r.op, r.patches, constant_potential(*r.grid, 1.0));
    LinearDtn d0(r.op, r.patches, constant_potential(*r.grid, 0.0));

    CalibrationProfile tampered = r.cal;
    tampered.digest ^= 0xdeadbeef;
    REQUIRE_THROWS_WITH(sigma_point_estimate(d1, d0, tampered, r.sweep, r.sweep.deltas[0]),
                        Catch::Contains("fingerprint"));

    // delta outside the calibrated grid is rejected, never extrapolated
    REQUIRE_THROWS_WITH(sigma_point_estimate(d1, d0, r.cal, r.sweep, 0.1234),
                        Catch::Contains("extrapolation"));
}

TEST_CASE("pointwise estimate: exactness, antisymmetry, additivity") {
    auto& r = rig25();
    LinearDtn d1(r.op, r.patches, constant_potential(*r.grid, 1.0), 1e-12);
    LinearDtn d0(r.op, r.patches, constant_potential(*r.grid, 0.0), 1e-12);
    const double delta = r.sweep.deltas[0];

    // the calibration pair itself is reproduced exactly
    REQUIRE(sigma_point_estimate(d1, d0, r.cal, r.sweep, delta) == Approx(1.0).epsilon(1e-10));

    // zero difference
    REQUIRE(sigma_point_estimate(d1, d1, r.cal, r.sweep, delta) == Approx(0.0).margin(1e-10));

    // exact antisymmetry under swapping the pair
    const double ab = sigma_point_estimate(d1, d0, r.cal, r.sweep, delta);
    const double ba = sigma_point_estimate(d0, d1, r.cal, r.sweep, delta);
    REQUIRE(ab == Approx(-ba).epsilon(1e-13));

    // shifted baseline keeps the unit difference within a few percent
    LinearDtn dA(r.op, r.patches, constant_potential(*r.grid, 1.5), 1e-12);
    LinearDtn dB(r.op, r.patches, constant_potential(*r.grid, 0.5), 1e-12);
    const double shifted = sigma_point_estimate(dA, dB, r.cal, r.sweep, delta);
    REQUIRE(shifted == Approx(1.0).margin(0.05));

    // approximate additivity for small potentials
    LinearDtn dHalf(r.op, r.patches, constant_potential(*r.grid, 0.5), 1e-12);
    const double half = sigma_point_estimate(dHalf, d0, r.cal, r.sweep, delta);
    REQUIRE(half == Approx(0.5).margin(0.025));
}

TEST_CASE("recovery uses only patch-localized data") {
    auto& r = rig25();
    LinearDtn dA(r.op, r.patches, constant_potential(*r.grid, 1.2), 1e-12);
    LinearDtn dB(r.op, r.patches, constant_potential(*r.grid, 0.3), 1e-12);
    const auto& family = r.sweep.families[0];
    double localized = 0.0, unlocalized = 0.0;
    for (const Probe& p : family) {
        const Eigen::VectorXd& f = p.trace.values;
        localized += (dA.apply_localized(f, true) - dB.apply_localized(f, true)).dot(f);
        unlocalized += (dA.apply(f, true) - dB.apply(f, true)).dot(f);
    }
    REQUIRE(localized == Approx(unlocalized).epsilon(1e-9));
}

TEST_CASE("derivative sweep: identical coefficients and the linear control") {
    auto& r = rig25();
    auto anchor = make_sweep_anchor(r.patches, 1.0, 5);

    auto cubic1 = std::make_shared<SemilinearDtn>(r.op, r.patches, builtin("cubic", {1.0}));
    SemilinearDtn cubic2(r.op, r.patches, builtin("cubic", {1.0}));
    SimulatedDtnOracle same(cubic1);
    auto curve0 = recover_aprime(same, cubic2, anchor, r.cal, r.sweep);
    REQUIRE(curve0.failed_points.empty());
    REQUIRE(curve0.estimate.cwiseAbs().maxCoeff() < 1e-8);

    auto lin = std::make_shared<SemilinearDtn>(r.op, r.patches, builtin("linear", {1.0}));
    SemilinearDtn zero(r.op, r.patches, builtin("zero"));
    SimulatedDtnOracle oracle(lin);
    auto curve = recover_aprime(oracle, zero, anchor, r.cal, r.sweep);
    for (int i = 0; i < curve.t_grid.size(); ++i)
        REQUIRE(curve.estimate[i] == Approx(1.0).margin(0.10));
}

TEST_CASE("curve integration") {
    RecoveredCurve curve;
    curve.t_grid = Eigen::VectorXd::LinSpaced(9, -1.0, 1.0);
    curve.estimate = Eigen::VectorXd::Zero(9);

    // zero difference with matching value at 0 reproduces the reference
    auto a2 = builtin("cubic", {2.0, -0.5});
    Eigen::VectorXd a1 = integrate_curve(curve, a2, a2.eval(0.0));
    for (int i = 0; i < 9; ++i) REQUIRE(a1[i] == Approx(a2.eval(curve.t_grid[i])).margin(1e-14));

    // constant curve integrates to a line, exactly under the trapezoid rule
    curve.estimate.setConstant(3.0);
    Eigen::VectorXd lin = integrate_curve(curve, builtin("zero"), 0.0);
    for (int i = 0; i < 9; ++i) REQUIRE(lin[i] == Approx(3.0 * curve.t_grid[i]).margin(1e-13));

    RecoveredCurve bad;
    bad.t_grid = Eigen::VectorXd::LinSpaced(4, 0.1, 1.0);
    bad.estimate = Eigen::VectorXd::Zero(4);
    REQUIRE_THROWS_WITH(integrate_curve(bad, builtin("zero"), 0.0), Catch::Contains("contain 0"));
}

TEST_CASE("operator basis budget") {
    auto& r = rig25();
    const auto full = operator_basis(r.patches, 0);
    REQUIRE(full.size() == r.patches.gamma0.size());
    const auto capped = operator_basis(r.patches, 10);
    REQUIRE(capped.size() == 10);
    REQUIRE(capped.front() == full.front());
    REQUIRE(capped.back() == full.back());
    for (std::size_t i = 1; i < capped.size(); ++i) REQUIRE(capped[i] > capped[i - 1]);
}

TEST_CASE("stability experiment smoke") {
    auto grid = build_domain(3, 17);
    auto patches = build_patches(grid, Face::ZPlus, 0.3, 0.45);
    Conductivity cond{};
    auto op = std::make_shared<EllipticOperator>(mesh_ref(*grid), cond);
    TraceGram gram(grid);

    StabilityContext cx;
    cx.op = op;
    cx.patches = patches;
    cx.gram = &gram;
    cx.anchor = make_sweep_anchor(patches, 1.0, 3);
    cx.basis = operator_basis(patches, 24);

    auto a1 = builtin("cubic", {1.0});
    std::vector<double> eps = {0.4, 0.1};
    std::vector<Nonlinearity> pert = {perturb(a1, builtin("gauss_bump"), eps[0]),
                                      perturb(a1, builtin("gauss_bump"), eps[1])};
    // identical pair produces the (0,0) row
    std::vector<Nonlinearity> same = {a1};
    auto table0 = stability_experiment(cx, a1, same, {0.0}, 1.0);
    REQUIRE(table0.rows[0].X == Approx(0.0).margin(1e-10));
    REQUIRE(table0.rows[0].Y == 0.0);

    auto table = stability_experiment(cx, a1, pert, eps, 1.0, 0.2, 2);
    REQUIRE(table.rows.size() == 2);
    for (const auto& row : table.rows) {
        REQUIRE_FALSE(row.failed);
        REQUIRE(row.X > 0.0);
        REQUIRE(row.Y == Approx(row.eps).epsilon(1e-6));
        REQUIRE(row.Y <= table.c_hat * std::pow(row.X, table.exponent) * (1.0 + 1e-12));
    }
    REQUIRE(table.rows[0].X > table.rows[1].X);

    // determinism: a rerun with a different worker count gives identical numbers
    auto again = stability_experiment(cx, a1, pert, eps, 1.0, 0.2, 1);
    REQUIRE(again.rows[0].X == table.rows[0].X);
    REQUIRE(again.rows[1].X == table.rows[1].X);
}
