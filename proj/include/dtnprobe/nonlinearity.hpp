#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "dtnprobe/errors.hpp"

namespace dtnprobe {

/// Semilinear term a(z) with its derivative and growth metadata. Evaluators
/// must be pure functions; instances are immutable and freely shared.
struct Nonlinearity {
    std::string name;
    std::function<double(double)> eval;
    std::function<double(double)> deriv;
    double alpha = 0.0;    // growth exponent in |a(z)| <= mu1 + mu2 |z|^alpha
    double mu1 = 1e-30;
    double mu2 = 1e-30;
    double c_lower = 0.0;  // a'(z) >= -c_lower
    std::function<double(double)> gamma_majorant;  // nondecreasing bound for |a'|

    double operator()(double z) const { return eval(z); }
};

/// Dimension bookkeeping: admissible growth cap and boundary Hölder exponent.
/// For n >= 4 the auxiliary integrability parameters are carried as metadata.
struct DimensionParams {
    int n = 3;
    double alpha_cap = 3.0;  // admissible growth exponent
    double beta = 0.5;       // Hölder exponent of the recovered potentials
    double p = 0.0, r = 0.0, q = 0.0;  // meaningful for n >= 4 only

    double stability_exponent() const { return beta / (2.0 + beta); }
};

inline DimensionParams dimension_params(int n, double p = 0.0, double r = 1.5) {
    if (n < 3) throw ConfigError("dimension_params: n >= 3 required");
    DimensionParams d;
    d.n = n;
    if (n == 3) {
        d.alpha_cap = 3.0;
        d.beta = 0.5;
        return d;
    }
    if (p <= 0.0) p = 0.75 * n;  // any fixed value in (n/2, n)
    if (!(p > n / 2.0 && p < n)) throw ConfigError("dimension_params: need n/2 < p < n");
    d.p = p;
    if (n == 4) {
        if (!(r >= 1.0 && r < 2.0)) throw ConfigError("dimension_params: need 1 <= r < 2");
        d.r = r;
        d.q = 2.0 * r / (2.0 - r);
    } else {
        d.q = 2.0 * n / (n - 4.0);
    }
    d.alpha_cap = d.q / p;
    d.beta = 2.0 - n / p;
    return d;
}

inline Nonlinearity builtin_zero() {
    Nonlinearity a;
    a.name = "zero";
    a.eval = [](double) { return 0.0; };
    a.deriv = [](double) { return 0.0; };
    a.alpha = 0.0;
    a.gamma_majorant = [](double) { return 1e-30; };
    return a;
}

inline Nonlinearity builtin_linear(double lambda) {
    Nonlinearity a;
    a.name = "linear";
    a.eval = [lambda](double z) { return lambda * z; };
    a.deriv = [lambda](double) { return lambda; };
    a.alpha = 1.0;
    a.mu2 = std::abs(lambda) + 1e-30;
    a.c_lower = std::max(0.0, -lambda);
    const double g = std::abs(lambda) + 1e-30;
    a.gamma_majorant = [g](double) { return g; };
    return a;
}

inline Nonlinearity builtin_cubic(double c3, double c1 = 0.0) {
    if (c3 < 0.0)
        throw ConfigError("builtin cubic: leading coefficient must be >= 0 (derivative is unbounded below)");
    Nonlinearity a;
    a.name = "cubic";
    a.eval = [c3, c1](double z) { return c3 * z * z * z + c1 * z; };
    a.deriv = [c3, c1](double z) { return 3.0 * c3 * z * z + c1; };
    a.alpha = 3.0;
    a.mu1 = std::abs(c1) + 1e-30;  // |c1 z| <= |c1| (1 + |z|^3)
    a.mu2 = std::abs(c3) + std::abs(c1) + 1e-30;
    a.c_lower = std::max(0.0, -c1);
    a.gamma_majorant = [c3, c1](double s) { return 3.0 * std::abs(c3) * s * s + std::abs(c1); };
    return a;
}

inline Nonlinearity builtin_sine(double mu) {
    Nonlinearity a;
    a.name = "sine";
    a.eval = [mu](double z) { return mu * std::sin(z); };
    a.deriv = [mu](double z) { return mu * std::cos(z); };
    a.alpha = 0.0;
    a.mu1 = std::abs(mu) + 1e-30;
    a.c_lower = std::abs(mu);
    const double g = std::abs(mu) + 1e-30;
    a.gamma_majorant = [g](double) { return g; };
    return a;
}

/// Centered logistic: L/(1+e^-z) - L/2. Bounded, with 0 < a' <= L/4.
inline Nonlinearity builtin_logistic(double L) {
    Nonlinearity a;
    a.name = "logistic";
    a.eval = [L](double z) { return L / (1.0 + std::exp(-z)) - L / 2.0; };
    a.deriv = [L](double z) {
        const double e = std::exp(-std::abs(z));
        const double s = e / ((1.0 + e) * (1.0 + e));
        return L * s;
    };
    a.alpha = 0.0;
    a.mu1 = std::abs(L) / 2.0 + 1e-30;
    a.c_lower = std::max(0.0, -L / 4.0);
    const double g = std::abs(L) / 4.0 + 1e-30;
    a.gamma_majorant = [g](double) { return g; };
    if (L < 0.0) a.c_lower = std::abs(L) / 4.0;
    return a;
}

/// Additive perturbation a + eps * b, with metadata combined conservatively.
inline Nonlinearity perturb(const Nonlinearity& a, const Nonlinearity& b, double eps) {
    Nonlinearity c;
    c.name = a.name + "+" + std::to_string(eps) + "*" + b.name;
    auto ae = a.eval, be = b.eval, ad = a.deriv, bd = b.deriv;
    c.eval = [ae, be, eps](double z) { return ae(z) + eps * be(z); };
    c.deriv = [ad, bd, eps](double z) { return ad(z) + eps * bd(z); };
    c.alpha = std::max(a.alpha, b.alpha);
    c.mu1 = a.mu1 + std::abs(eps) * b.mu1;
    c.mu2 = a.mu2 + std::abs(eps) * b.mu2;
    c.c_lower = a.c_lower + std::abs(eps) * b.c_lower;
    auto ag = a.gamma_majorant, bg = b.gamma_majorant;
    c.gamma_majorant = [ag, bg, eps](double s) { return ag(s) + std::abs(eps) * bg(s); };
    return c;
}

/// Smooth bounded bump used as a nonlinearity perturbation: z*exp(-z^2/2).
/// Its derivative (1-z^2)exp(-z^2/2) peaks at 1 (z=0) and dips to -2e^{-3/2}.
inline Nonlinearity builtin_gauss_bump() {
    Nonlinearity a;
    a.name = "gauss_bump";
    a.eval = [](double z) { return z * std::exp(-0.5 * z * z); };
    a.deriv = [](double z) { return (1.0 - z * z) * std::exp(-0.5 * z * z); };
    a.alpha = 0.0;
    a.mu1 = std::exp(-0.5) + 1e-30;  // max |z e^{-z^2/2}| = e^{-1/2}
    a.c_lower = 2.0 * std::exp(-1.5);
    a.gamma_majorant = [](double) { return 1.0 + 1e-30; };
    return a;
}

inline Nonlinearity builtin(const std::string& name, const std::vector<double>& params = {}) {
    auto param = [&](std::size_t i, double dflt) { return i < params.size() ? params[i] : dflt; };
    if (name == "zero") return builtin_zero();
    if (name == "linear") return builtin_linear(param(0, 1.0));
    if (name == "cubic") return builtin_cubic(param(0, 1.0), param(1, 0.0));
    if (name == "sine") return builtin_sine(param(0, 1.0));
    if (name == "logistic") return builtin_logistic(param(0, 1.0));
    if (name == "gauss_bump") return builtin_gauss_bump();
    throw ConfigError("unknown nonlinearity '" + name + "'");
}

/// Sampled check of the standing assumptions on a(z): growth, derivative
/// lower bound, majorant and the coercivity margin c < kappa*lambda1.
/// Report-only; nothing throws.
struct AssumptionReport {
    bool growth_ok = true;
    bool derivative_bound_ok = true;
    bool majorant_ok = true;
    bool alpha_ok = true;
    bool coercivity_ok = true;
    double worst_growth_excess = 0.0;   // max |a| - (mu1 + mu2 |z|^alpha)
    double worst_growth_z = 0.0;
    double worst_derivative_defect = 0.0;  // max (-c_lower - a')
    double worst_derivative_z = 0.0;
    double worst_majorant_excess = 0.0;
    double coercivity_margin = 0.0;        // kappa*lambda1 - c_lower

    bool pass() const {
        return growth_ok && derivative_bound_ok && majorant_ok && alpha_ok && coercivity_ok;
    }
    std::string summary() const {
        std::ostringstream os;
        os << (pass() ? "pass" : "FAIL");
        if (!growth_ok)
            os << "; growth bound violated by " << worst_growth_excess << " at z=" << worst_growth_z;
        if (!derivative_bound_ok)
            os << "; derivative lower bound violated by " << worst_derivative_defect << " at z="
               << worst_derivative_z;
        if (!majorant_ok) os << "; majorant violated by " << worst_majorant_excess;
        if (!alpha_ok) os << "; growth exponent exceeds the dimensional cap";
        if (!coercivity_ok) os << "; coercivity margin violated (c >= kappa*lambda1)";
        return os.str();
    }
};

inline AssumptionReport validate_assumptions(const Nonlinearity& a, const DimensionParams& dims,
                                             double rho, double kappa, double lambda1,
                                             int samples = 4096) {
    if (!(rho > 0.0)) throw ConfigError("validate_assumptions: rho must be positive");
    AssumptionReport rep;
    const double slack = 1e-12;
    for (int i = 0; i <= samples; ++i) {
        const double z = -rho + 2.0 * rho * i / samples;
        const double az = a.eval(z);
        const double dz = a.deriv(z);
        const double bound = a.mu1 + a.mu2 * std::pow(std::abs(z), a.alpha);
        const double excess = std::abs(az) - bound;
        if (excess > slack * (1.0 + bound) && excess > rep.worst_growth_excess) {
            rep.growth_ok = false;
            rep.worst_growth_excess = excess;
            rep.worst_growth_z = z;
        }
        const double defect = -a.c_lower - dz;
        if (defect > slack * (1.0 + a.c_lower) && defect > rep.worst_derivative_defect) {
            rep.derivative_bound_ok = false;
            rep.worst_derivative_defect = defect;
            rep.worst_derivative_z = z;
        }
        const double maj = a.gamma_majorant(std::abs(z));
        const double mexc = std::abs(dz) - maj;
        if (mexc > slack * (1.0 + maj) && mexc > rep.worst_majorant_excess) {
            rep.majorant_ok = false;
            rep.worst_majorant_excess = mexc;
        }
    }
    rep.alpha_ok = a.alpha <= dims.alpha_cap + slack;
    rep.coercivity_margin = kappa * lambda1 - a.c_lower;
    rep.coercivity_ok = rep.coercivity_margin > 0.0;
    return rep;
}

} // namespace dtnprobe
