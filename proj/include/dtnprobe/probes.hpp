#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <vector>

#include "dtnprobe/dtn.hpp"
#include "dtnprobe/elliptic.hpp"
#include "dtnprobe/grid.hpp"

namespace dtnprobe {

/// Levi parametrix of div(A grad .): the explicit approximate fundamental
/// solution H(x,y) = [A^-1 (x-y).(x-y)]^((2-n)/2) / ((n-2) |S^(n-1)| sqrt(det A)).
/// Exactly A-harmonic away from the pole for constant A.
struct Parametrix {
    Eigen::Matrix3d A_inv;
    double norm_const;  // (n-2) |S^(n-1)| sqrt(det A)
    int n = 3;

    Parametrix(const Eigen::Matrix3d& A, int dim = 3) : n(dim) {
        if (dim < 3) throw ConfigError("parametrix: n >= 3 required");
        A_inv = A.inverse();
        const double sphere = 2.0 * std::pow(M_PI, dim / 2.0) / std::tgamma(dim / 2.0);
        norm_const = (dim - 2) * sphere * std::sqrt(A.determinant());
    }

    double quad(const Eigen::Vector3d& d) const { return d.dot(A_inv * d); }

    double eval(const Eigen::Vector3d& x, const Eigen::Vector3d& y) const {
        const Eigen::Vector3d d = x - y;
        if (d.norm() < 1e-12) throw ConfigError("parametrix evaluated at its singularity");
        return std::pow(quad(d), 0.5 * (2 - n)) / norm_const;
    }

    /// d/dx_j H(x,y), analytic.
    double grad(const Eigen::Vector3d& x, const Eigen::Vector3d& y, int j) const {
        const Eigen::Vector3d d = x - y;
        if (d.norm() < 1e-12) throw ConfigError("parametrix evaluated at its singularity");
        const double q = quad(d);
        return (2 - n) * std::pow(q, 0.5 * (2 - n) - 1.0) * (A_inv * d)[j] / norm_const;
    }
};

/// One singular probe: the trace of dH/dx_j corrected to vanish outside the
/// cap patch, together with its corrector on the extended domain.
struct Probe {
    double delta = 0.0;
    int component = 0;  // j
    Eigen::Vector3d y;  // singularity location
    BoundaryField trace;              // f on Γ, supported in Gamma0 exactly
    Eigen::VectorXd corrector_ext;    // v on the extended box
    double corrector_h1 = 0.0;        // H^1(Omega) norm of the corrector
};

/// Shared machinery for a probe sweep: the factorized corrector operator on
/// Omega0 and the reference H^1 product on Omega.
class ProbeWorkspace {
public:
    ProbeWorkspace(std::shared_ptr<const ExtendedDomain> ext, const Conductivity& cond)
        : ext_(std::move(ext)), cond_(cond), par_(cond.A),
          op_ext_(mesh_ref(*ext_), cond_),
          sys_(op_ext_, {}, 1e-12),
          op_ref_(mesh_ref(*ext_->parent), Conductivity{}) {
        sys_.ensure_factor();
    }

    const ExtendedDomain& ext() const { return *ext_; }
    std::shared_ptr<const ExtendedDomain> ext_ptr() const { return ext_; }
    const Parametrix& parametrix() const { return par_; }

    Probe build_probe(double delta, int j) const {
        if (j < 0 || j >= 3) throw ConfigError("probe component out of range");
        const ExtendedDomain& e = *ext_;
        const DomainGrid& g = *e.parent;
        Probe p;
        p.delta = delta;
        p.component = j;
        p.y = place_singularity(e, delta);

        // Dirichlet data: dH/dx_j sampled at the Omega0 boundary nodes
        const int nbe = static_cast<int>(e.boundary_nodes.size());
        Eigen::VectorXd data(nbe);
        for (int b = 0; b < nbe; ++b) data[b] = par_.grad(e.box.coord(e.boundary_nodes[b]), p.y, j);
        p.corrector_ext = sys_.solve(data, {}, true);

        // f = (dH/dx_j - v) on Γ; exact zero wherever Γ lies on the Omega0 boundary
        p.trace.grid = e.parent;
        p.trace.support = TraceSupport::Gamma0;
        p.trace.values.resize(g.boundary_count());
        for (int b = 0; b < g.boundary_count(); ++b) {
            const int node = g.boundary_nodes[b];
            const int eid = e.ext_id_of_parent(node);
            if (e.boundary_index[eid] >= 0) {
                p.trace.values[b] = 0.0;
            } else {
                p.trace.values[b] = par_.grad(g.box.coord(node), p.y, j) - p.corrector_ext[eid];
            }
        }

        // H^1(Omega) norm of the corrector restricted to the cube
        Eigen::VectorXd v_par(g.box.count());
        for (int node = 0; node < g.box.count(); ++node)
            v_par[node] = p.corrector_ext[e.ext_id_of_parent(node)];
        double mass = 0.0;
        for (int node = 0; node < g.box.count(); ++node)
            mass += g.vol_weight[node] * v_par[node] * v_par[node];
        p.corrector_h1 = std::sqrt(energy_pairing(op_ref_, v_par, v_par) + mass);
        return p;
    }

    /// All n probes for one singularity offset.
    std::vector<Probe> build_family(double delta) const {
        std::vector<Probe> f;
        for (int j = 0; j < 3; ++j) f.push_back(build_probe(delta, j));
        return f;
    }

private:
    std::shared_ptr<const ExtendedDomain> ext_;
    Conductivity cond_;
    Parametrix par_;
    EllipticOperator op_ext_;
    LinearSystem sys_;
    EllipticOperator op_ref_;
};

/// Discrete L^p(Omega) norm of dH/dx_j (the probe singular part).
inline double parametrix_grad_lp_norm(const DomainGrid& g, const Parametrix& par,
                                      const Eigen::Vector3d& y, int j, double p) {
    double s = 0.0;
    for (int node = 0; node < g.box.count(); ++node)
        s += g.vol_weight[node] * std::pow(std::abs(par.grad(g.box.coord(node), y, j)), p);
    return std::pow(s, 1.0 / p);
}

/// Same norm restricted to Omega intersected with B(center, radius). For n = 3
/// the pole is L^{6/5}-integrable, so the global norm is dominated by the far
/// field; the delta-scaling of the singular data shows in this near region.
inline double parametrix_grad_lp_norm_near(const DomainGrid& g, const Parametrix& par,
                                           const Eigen::Vector3d& y, int j, double p,
                                           const Eigen::Vector3d& center, double radius) {
    double s = 0.0;
    for (int node = 0; node < g.box.count(); ++node) {
        const Eigen::Vector3d x = g.box.coord(node);
        if ((x - center).norm() > radius) continue;
        s += g.vol_weight[node] * std::pow(std::abs(par.grad(x, y, j)), p);
    }
    return std::pow(s, 1.0 / p);
}

/// Probe trace export: node index, coordinates and value per boundary node.
inline void write_probe_csv(const std::string& path, const Probe& p) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write '" + path + "'");
    out << "node,x,y,z,value\n";
    const DomainGrid& g = *p.trace.grid;
    char buf[160];
    for (int b = 0; b < g.boundary_count(); ++b) {
        const Eigen::Vector3d x = g.box.coord(g.boundary_nodes[b]);
        std::snprintf(buf, sizeof(buf), "%d,%.12e,%.12e,%.12e,%.12e\n", g.boundary_nodes[b], x[0],
                      x[1], x[2], p.trace.values[b]);
        out << buf;
    }
}

/// Geometric probe offsets in [max(4h, r0/8), r0/2].
inline std::vector<double> default_delta_sweep(const ExtendedDomain& ext, int count = 4) {
    const double lo = std::max(4.0 * ext.parent->h, ext.patches.r0 / 8.0);
    const double hi = ext.delta0;
    if (!(lo < hi))
        throw ConfigError("grid too coarse for a probe sweep: need r0/2 > 4h (raise N or r0)");
    std::vector<double> d(count);
    for (int i = 0; i < count; ++i)
        d[i] = lo * std::pow(hi / lo, static_cast<double>(i) / (count - 1));
    return d;
}

/// delta-rescaled probe pairing row
///   S(delta) = delta^(n-2) * sum_j <(L1 - L2)(f_j), f_j>.
inline double probe_pairing_row(const LinearDtn& d1, const LinearDtn& d2,
                                const std::vector<Probe>& family, bool direct = true) {
    if (family.empty()) throw ConfigError("probe_pairing_row: empty family");
    double s = 0.0;
    for (const Probe& p : family) {
        const Eigen::VectorXd& f = p.trace.values;
        s += (d1.apply_localized(f, direct) - d2.apply_localized(f, direct)).dot(f);
    }
    const double delta = family.front().delta;
    return delta * s;  // delta^(n-2), n = 3
}

} // namespace dtnprobe
