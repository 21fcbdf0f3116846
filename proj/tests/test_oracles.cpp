#include <catch2/catch.hpp>

#include "dtnprobe/oracles.hpp"
#include "fixture_check.hpp"

using namespace dtnprobe;

TEST_CASE("oracle and fast-path assemblies agree") {
    auto g = build_domain(3, 9);
    Eigen::Matrix3d A;
    A << 1.5, 0.2, 0.0, 0.2, 1.0, -0.1, 0.0, -0.1, 1.2;
    EllipticOperator op(mesh_ref(*g), make_conductivity(A));
    SplitMix64 rng(12);
    Eigen::VectorXd sigma(g->box.count());
    for (int i = 0; i < sigma.size(); ++i) sigma[i] = 0.5 + 0.3 * rng.uniform();
    LinearSystem sys(op, sigma);
    const auto dense = oracle::dense_assemble(*g, A, sigma);

    // energy-scaled sparse interior block equals h^3 times the dense PDE-unit block
    Eigen::VectorXd x(g->interior_count());
    for (int i = 0; i < x.size(); ++i) x[i] = rng.symmetric();
    const Eigen::VectorXd fast = sys.interior_matrix() * x;
    const Eigen::VectorXd ref = (g->h * g->h * g->h) * (dense.B_II * x);
    REQUIRE((fast - ref).cwiseAbs().maxCoeff() < 1e-12 * ref.cwiseAbs().maxCoeff());
}

TEST_CASE("oracle reproduces affine exactness and the size guard") {
    auto g = build_domain(3, 9);
    Eigen::VectorXd f(g->boundary_count());
    for (int b = 0; b < f.size(); ++b) {
        const Eigen::Vector3d x = g->box.coord(g->boundary_nodes[b]);
        f[b] = 2.0 * x[0] - x[2] + 1.0;
    }
    const Eigen::VectorXd u =
        oracle::dense_solve(*g, Eigen::Matrix3d::Identity(), Eigen::VectorXd::Zero(g->box.count()), f);
    for (int node : g->interior_nodes) {
        const Eigen::Vector3d x = g->box.coord(node);
        REQUIRE(u[node] == Approx(2.0 * x[0] - x[2] + 1.0).margin(1e-11));
    }
    auto big = build_domain(3, 17);
    REQUIRE_THROWS_WITH(oracle::dense_lambda1(*big), Catch::Contains("12^3"));
}

TEST_CASE("dense max principle comparison") {
    auto g = build_domain(3, 9);
    SplitMix64 rng(77);
    Eigen::VectorXd f(g->boundary_count());
    for (int b = 0; b < f.size(); ++b) f[b] = rng.symmetric();
    const Eigen::VectorXd sigma = Eigen::VectorXd::Ones(g->box.count());
    const Eigen::VectorXd dense = oracle::dense_solve(*g, Eigen::Matrix3d::Identity(), sigma, f);
    EllipticOperator op(mesh_ref(*g), Conductivity{});
    LinearSystem sys(op, sigma, 1e-12);
    const Eigen::VectorXd fast = sys.solve(f);
    REQUIRE((dense - fast).cwiseAbs().maxCoeff() < 1e-9);
    REQUIRE(dense.cwiseAbs().maxCoeff() <= f.cwiseAbs().maxCoeff() + 1e-12);
}

TEST_CASE("polynomial quadrature helpers") {
    using oracle::Monomial;
    // integral of x^2 y over the cube = (1/3)(1/2) = 1/6
    REQUIRE(oracle::integrate_cube({Monomial{1.0, 2, 1, 0}}) == Approx(1.0 / 6.0));
    // grad(x y) . grad(x y) integrates to 2/3; affine against interior-zero gives 0 handled elsewhere
    REQUIRE(oracle::dirichlet_energy_cube({Monomial{1.0, 1, 1, 0}}, {Monomial{1.0, 1, 1, 0}}) ==
            Approx(2.0 / 3.0));
    // orthogonality of gradients: d(x).d(y) = 0
    REQUIRE(oracle::dirichlet_energy_cube({Monomial{1.0, 1, 0, 0}}, {Monomial{1.0, 0, 1, 0}}) == 0.0);
}

TEST_CASE("frozen oracle fixtures pass on the fast path") {
    const auto results = fixtures::run_checks(std::string(DTNPROBE_FIXTURE_DIR) +
                                              "/oracle_fixtures.json");
    REQUIRE(results.size() == 10);
    for (const auto& r : results) {
        INFO(r.name << ": measured " << r.measured << " expected " << r.expected << " tol "
                    << r.tolerance);
        CHECK(r.pass);
    }
}
