#include <catch2/catch.hpp>
#include <vector>

#include "dtnprobe/fit.hpp"
#include "dtnprobe/nonlinearity.hpp"

using namespace dtnprobe;

TEST_CASE("builtin metadata") {
    auto zero = builtin("zero");
    REQUIRE(zero.eval(1.7) == 0.0);
    REQUIRE(zero.deriv(-3.0) == 0.0);

    auto sine = builtin("sine", {1.0});
    REQUIRE(sine.alpha == 0.0);
    REQUIRE(sine.mu1 == Approx(1.0));
    REQUIRE(sine.c_lower == Approx(1.0));
    REQUIRE(sine.gamma_majorant(10.0) == Approx(1.0));

    auto cubic = builtin("cubic", {1.0});
    REQUIRE(cubic.alpha == 3.0);
    REQUIRE(cubic.c_lower == 0.0);
    REQUIRE(cubic.eval(2.0) == Approx(8.0));

    REQUIRE_THROWS_AS(builtin("pentagram"), ConfigError);
}

TEST_CASE("assumption validation") {
    auto dims = dimension_params(3);
    REQUIRE(dims.alpha_cap == 3.0);
    REQUIRE(dims.beta == 0.5);
    REQUIRE(dims.stability_exponent() == Approx(0.2));

    const double kappa = 1.0 - 1e-12, lambda1 = 29.6;

    auto cubic = builtin("cubic", {1.0});
    REQUIRE(validate_assumptions(cubic, dims, 10.0, kappa, lambda1).pass());

    // a(z) = z^5 declared with alpha = 3 must fail the growth scan
    Nonlinearity bad;
    bad.name = "quintic";
    bad.eval = [](double z) { return std::pow(z, 5); };
    bad.deriv = [](double z) { return 5.0 * std::pow(z, 4); };
    bad.alpha = 3.0;
    bad.mu1 = 1.0;
    bad.mu2 = 1.0;
    bad.gamma_majorant = [](double s) { return 5.0 * s * s * s * s; };
    auto rep = validate_assumptions(bad, dims, 4.0, kappa, lambda1);
    REQUIRE_FALSE(rep.growth_ok);
    REQUIRE(std::abs(rep.worst_growth_z) > 1.0);

    // strongly negative slope breaks coercivity
    auto steep = builtin_linear(-2.0 * kappa * lambda1);
    auto rep2 = validate_assumptions(steep, dims, 2.0, kappa, lambda1);
    REQUIRE_FALSE(rep2.coercivity_ok);
    REQUIRE(rep2.coercivity_margin < 0.0);
    REQUIRE_THAT(rep2.summary(), Catch::Contains("coercivity"));
}

TEST_CASE("derivative matches finite differences for curved builtins") {
    std::vector<Nonlinearity> set = {builtin("cubic", {1.0, 0.5}), builtin("sine", {1.0}),
                                     builtin("logistic", {2.0}), builtin("gauss_bump")};
    for (const auto& a : set) {
        std::vector<double> eps, err;
        for (double e = 1e-3; e >= 1e-6; e /= 4.0) {
            double worst = 0.0;
            for (double z = -1.5; z <= 1.5; z += 0.25) {
                const double fd = (a.eval(z + e) - a.eval(z)) / e;
                worst = std::max(worst, std::abs(fd - a.deriv(z)));
            }
            eps.push_back(e);
            err.push_back(worst);
        }
        auto fit = fit_slope(eps, err);
        INFO(a.name);
        REQUIRE(fit.slope > 0.9);
        REQUIRE(fit.slope < 2.1);
    }
}

TEST_CASE("dimension parameters for n >= 4 metadata") {
    auto d4 = dimension_params(4);
    REQUIRE(d4.p == Approx(3.0));
    REQUIRE(d4.q == Approx(6.0));  // r = 3/2
    REQUIRE(d4.alpha_cap == Approx(2.0));
    REQUIRE(d4.beta == Approx(2.0 - 4.0 / 3.0));
    auto d5 = dimension_params(5);
    REQUIRE(d5.q == Approx(10.0));
    REQUIRE_THROWS_AS(dimension_params(2), ConfigError);
}
