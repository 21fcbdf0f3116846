#pragma once

#include <cmath>
#include <span>
#include <stdexcept>

namespace dtnprobe {

struct SlopeFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r2 = 1.0;
};

/// Least-squares line through (log x, log y). All inputs must be positive
/// and at least 3 points are required.
inline SlopeFit fit_slope(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw std::invalid_argument("fit_slope: size mismatch");
    if (x.size() < 3) throw std::invalid_argument("fit_slope: need at least 3 points");
    const std::size_t n = x.size();
    double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (!(x[i] > 0.0) || !(y[i] > 0.0))
            throw std::invalid_argument("fit_slope: nonpositive value");
        const double lx = std::log(x[i]);
        const double ly = std::log(y[i]);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
        syy += ly * ly;
    }
    const double dn = static_cast<double>(n);
    const double varx = sxx - sx * sx / dn;
    const double vary = syy - sy * sy / dn;
    const double cov = sxy - sx * sy / dn;
    SlopeFit f;
    if (varx <= 0.0) throw std::invalid_argument("fit_slope: degenerate abscissae");
    f.slope = cov / varx;
    f.intercept = (sy - f.slope * sx) / dn;
    f.r2 = vary > 0.0 ? (cov * cov) / (varx * vary) : 1.0;
    return f;
}

} // namespace dtnprobe
