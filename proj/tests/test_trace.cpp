#include <catch2/catch.hpp>
#include <numeric>

#include "dtnprobe/trace.hpp"

using namespace dtnprobe;

namespace {
DomainGridPtr grid9() {
    static DomainGridPtr g = build_domain(3, 9);
    return g;
}
TraceGram& gram9() {
    static TraceGram t(grid9());
    return t;
}
} // namespace

TEST_CASE("quotient norm basics") {
    auto g = grid9();
    auto& tg = gram9();

    REQUIRE(tg.h_half_norm(Eigen::VectorXd::Zero(g->boundary_count())) == 0.0);

    // constant trace: the constant extension is admissible, so the minimum is <= |Omega|^(1/2)
    const double n1 = tg.h_half_norm(Eigen::VectorXd::Ones(g->boundary_count()));
    REQUIRE(n1 > 0.0);
    REQUIRE(n1 <= 1.0 + 1e-12);
}

TEST_CASE("norm agrees with the dense Gram quadratic form") {
    auto g = grid9();
    auto& tg = gram9();
    const Eigen::MatrixXd& M = tg.dense_gram();

    REQUIRE((M - M.transpose()).cwiseAbs().maxCoeff() == 0.0);

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(M);
    REQUIRE(es.eigenvalues().minCoeff() > 0.0);

    SplitMix64 rng(11);
    for (int rep = 0; rep < 3; ++rep) {
        Eigen::VectorXd f(g->boundary_count());
        for (int b = 0; b < f.size(); ++b) f[b] = rng.symmetric();
        const double direct = tg.h_half_norm(f);
        const double viaM = std::sqrt(f.dot(M * f));
        REQUIRE(direct == Approx(viaM).epsilon(1e-12));
    }
}

TEST_CASE("dual norm and Riesz identification") {
    auto g = grid9();
    auto& tg = gram9();
    SplitMix64 rng(23);

    REQUIRE(tg.h_minus_half_norm(Eigen::VectorXd::Zero(g->boundary_count())) == 0.0);

    Eigen::VectorXd f(g->boundary_count());
    for (int b = 0; b < f.size(); ++b) f[b] = rng.symmetric();
    const Eigen::VectorXd psi = tg.apply_gram(f);
    REQUIRE(tg.h_minus_half_norm(psi) == Approx(tg.h_half_norm(f)).epsilon(1e-10));
    REQUIRE(psi.dot(f) == Approx(std::pow(tg.h_half_norm(f), 2)).epsilon(1e-12));

    for (int rep = 0; rep < 5; ++rep) {
        Eigen::VectorXd a(g->boundary_count()), b(g->boundary_count());
        for (int i = 0; i < a.size(); ++i) {
            a[i] = rng.symmetric();
            b[i] = rng.symmetric();
        }
        REQUIRE(std::abs(a.dot(b)) <=
                tg.h_minus_half_norm(a) * tg.h_half_norm(b) * (1.0 + 1e-10));
    }
}

TEST_CASE("operator norm: zero map, Riesz columns, basis permutation") {
    auto g = grid9();
    auto& tg = gram9();

    std::vector<int> basis(20);
    std::iota(basis.begin(), basis.end(), 40);

    BoundaryOperatorMatrix zero;
    zero.grid = g;
    zero.domain_basis = basis;
    zero.T = Eigen::MatrixXd::Zero(g->boundary_count(), 20);
    REQUIRE(op_norm(zero, tg) == 0.0);

    // Riesz map: columns of the Gram over the basis give operator norm 1
    const Eigen::MatrixXd& M = tg.dense_gram();
    BoundaryOperatorMatrix riesz;
    riesz.grid = g;
    riesz.domain_basis = basis;
    riesz.T.resize(g->boundary_count(), 20);
    for (int c = 0; c < 20; ++c) riesz.T.col(c) = M.col(basis[c]);
    REQUIRE(op_norm(riesz, tg) == Approx(1.0).epsilon(1e-7));

    // random operator: value invariant under permuting the basis columns
    SplitMix64 rng(99);
    BoundaryOperatorMatrix T = zero;
    for (int c = 0; c < 20; ++c)
        for (int r = 0; r < g->boundary_count(); ++r) T.T(r, c) = 0.1 * rng.symmetric();
    const double v1 = op_norm(T, tg);
    BoundaryOperatorMatrix P = T;
    std::reverse(P.domain_basis.begin(), P.domain_basis.end());
    P.T = T.T.rowwise().reverse();
    const double v2 = op_norm(P, tg);
    REQUIRE(v1 == Approx(v2).epsilon(1e-10));

    // dense whitened oracle: largest singular value of M^(-1/2) T M0^(-1/2)
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> esM(M);
    const Eigen::MatrixXd Mih = esM.operatorInverseSqrt();
    Eigen::MatrixXd M0(20, 20);
    for (int r = 0; r < 20; ++r)
        for (int c = 0; c < 20; ++c) M0(r, c) = M(basis[r], basis[c]);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es0(M0);
    const Eigen::MatrixXd W = Mih * T.T * es0.operatorInverseSqrt();
    const double svd = W.jacobiSvd().singularValues()[0];
    REQUIRE(v1 == Approx(svd).epsilon(1e-6));
}

TEST_CASE("z norm dominates the quotient norm") {
    auto g = grid9();
    auto& tg = gram9();
    SplitMix64 rng(5);
    Eigen::VectorXd f(g->boundary_count());
    for (int b = 0; b < f.size(); ++b) f[b] = rng.symmetric();
    REQUIRE(tg.z_norm(f) >= tg.h_half_norm(f));
    REQUIRE(tg.z_norm(Eigen::VectorXd::Zero(g->boundary_count())) == 0.0);
}

TEST_CASE("dense Gram memory guard") {
    auto g = build_domain(3, 9);
    TraceGram small(g, 10);  // cap below |Gamma|
    REQUIRE_THROWS_WITH(small.dense_gram(), Catch::Contains("operator mode"));
    // operator mode still works
    Eigen::VectorXd f = Eigen::VectorXd::Ones(g->boundary_count());
    REQUIRE(small.h_half_norm(f) > 0.0);
}
