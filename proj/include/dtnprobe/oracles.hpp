#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <vector>

#include "dtnprobe/elliptic.hpp"
#include "dtnprobe/fit.hpp"
#include "dtnprobe/grid.hpp"
#include "dtnprobe/nonlinearity.hpp"

// Brute-force reference implementations for tests and frozen fixtures.
// Everything here assembles its own dense matrices row by row from the
// difference quotients and solves with dense factorizations; no code is
// shared with the iterative fast path.

namespace dtnprobe::oracle {

inline void size_guard(const DomainGrid& g) {
    if (g.interior_count() > 1728)
        throw ConfigError("oracle solve blocked: more than 12^3 interior unknowns");
}

/// Dense interior operator and boundary coupling of
/// -div(A grad .) + sigma, in PDE units (not energy-scaled).
struct DenseSystem {
    Eigen::MatrixXd B_II;
    Eigen::MatrixXd B_IB;
};

inline DenseSystem dense_assemble(const DomainGrid& g, const Eigen::Matrix3d& A,
                                  const Eigen::VectorXd& sigma) {
    size_guard(g);
    const int ni = g.interior_count();
    const int nb = g.boundary_count();
    DenseSystem sys;
    sys.B_II = Eigen::MatrixXd::Zero(ni, ni);
    sys.B_IB = Eigen::MatrixXd::Zero(ni, nb);
    const double h2 = g.h * g.h;
    const int stride[3] = {1, g.box.nx, g.box.nx * g.box.ny};

    auto put = [&](int row, int node, double c) {
        if (g.interior_index[node] >= 0)
            sys.B_II(row, g.interior_index[node]) += c;
        else
            sys.B_IB(row, g.boundary_index[node]) += c;
    };

    for (int r = 0; r < ni; ++r) {
        const int node = g.interior_nodes[r];
        for (int a = 0; a < 3; ++a) {
            put(r, node, 2.0 * A(a, a) / h2);
            put(r, node - stride[a], -A(a, a) / h2);
            put(r, node + stride[a], -A(a, a) / h2);
        }
        for (int a = 0; a < 3; ++a)
            for (int b = a + 1; b < 3; ++b) {
                if (A(a, b) == 0.0) continue;
                const double c = 2.0 * A(a, b) / (4.0 * h2);
                put(r, node + stride[a] + stride[b], -c);
                put(r, node - stride[a] - stride[b], -c);
                put(r, node + stride[a] - stride[b], c);
                put(r, node - stride[a] + stride[b], c);
            }
        if (sigma.size() != 0) sys.B_II(r, r) += sigma[node];
    }
    return sys;
}

inline Eigen::VectorXd assemble_full_field(const DomainGrid& g, const Eigen::VectorXd& uI,
                                           const Eigen::VectorXd& f) {
    Eigen::VectorXd u = Eigen::VectorXd::Zero(g.box.count());
    for (int r = 0; r < g.interior_count(); ++r) u[g.interior_nodes[r]] = uI[r];
    for (int b = 0; b < g.boundary_count(); ++b) u[g.boundary_nodes[b]] = f[b];
    return u;
}

/// Dense-LU Dirichlet solve of the linear problem.
inline Eigen::VectorXd dense_solve(const DomainGrid& g, const Eigen::Matrix3d& A,
                                   const Eigen::VectorXd& sigma, const Eigen::VectorXd& f,
                                   const Eigen::VectorXd& source = {}) {
    DenseSystem sys = dense_assemble(g, A, sigma);
    Eigen::VectorXd rhs = -(sys.B_IB * f);
    if (source.size() != 0)
        for (int r = 0; r < g.interior_count(); ++r) rhs[r] += source[g.interior_nodes[r]];
    const Eigen::VectorXd uI = sys.B_II.partialPivLu().solve(rhs);
    return assemble_full_field(g, uI, f);
}

/// Dense Newton for the semilinear problem.
inline Eigen::VectorXd dense_solve_semilinear(const DomainGrid& g, const Eigen::Matrix3d& A,
                                              const Nonlinearity& a, const Eigen::VectorXd& f,
                                              double tol = 1e-12, int max_iter = 60) {
    size_guard(g);
    DenseSystem sys = dense_assemble(g, A, Eigen::VectorXd());
    const int ni = g.interior_count();
    Eigen::VectorXd uI = sys.B_II.partialPivLu().solve(-(sys.B_IB * f));

    auto residual = [&](const Eigen::VectorXd& v) {
        Eigen::VectorXd F = sys.B_II * v + sys.B_IB * f;
        for (int r = 0; r < ni; ++r) F[r] += a.eval(v[r]);
        return F;
    };
    Eigen::VectorXd F = residual(uI);
    const double scale = std::max(1.0, F.norm());
    for (int it = 0; it < max_iter; ++it) {
        if (F.norm() <= tol * scale) return assemble_full_field(g, uI, f);
        Eigen::MatrixXd J = sys.B_II;
        for (int r = 0; r < ni; ++r) J(r, r) += a.deriv(uI[r]);
        const Eigen::VectorXd d = J.partialPivLu().solve(-F);
        double s = 1.0;
        for (int half = 0; half < 20; ++half) {
            const Eigen::VectorXd trial = uI + s * d;
            const Eigen::VectorXd Ft = residual(trial);
            if (Ft.norm() < F.norm()) {
                uI = trial;
                F = Ft;
                break;
            }
            s *= 0.5;
        }
    }
    if (F.norm() > tol * scale) throw SolveError("oracle dense Newton did not converge");
    return assemble_full_field(g, uI, f);
}

/// Energy pairing recomputed from scratch (edge sums in an independent loop).
inline double dense_energy_pairing(const DomainGrid& g, const Eigen::Matrix3d& A,
                                   const Eigen::VectorXd& u, const Eigen::VectorXd& v,
                                   const Eigen::VectorXd& coef_times_u) {
    const double scale = g.h;  // h^(n-2)
    const int stride[3] = {1, g.box.nx, g.box.nx * g.box.ny};
    double s = 0.0;
    for (int k = 0; k < g.box.nz; ++k)
        for (int j = 0; j < g.box.ny; ++j)
            for (int i = 0; i < g.box.nx; ++i) {
                const int node = g.box.id(i, j, k);
                const int idx[3] = {i, j, k};
                for (int a = 0; a < 3; ++a) {
                    if (idx[a] + 1 >= g.nodes_per_axis) continue;
                    const int nb = node + stride[a];
                    s += A(a, a) * scale * (u[nb] - u[node]) * (v[nb] - v[node]);
                }
                for (int a = 0; a < 3; ++a)
                    for (int b = a + 1; b < 3; ++b) {
                        if (A(a, b) == 0.0) continue;
                        if (idx[a] + 1 < g.nodes_per_axis && idx[b] + 1 < g.nodes_per_axis) {
                            const int nb = node + stride[a] + stride[b];
                            s += 0.5 * A(a, b) * scale * (u[nb] - u[node]) * (v[nb] - v[node]);
                        }
                        if (idx[a] + 1 < g.nodes_per_axis && idx[b] - 1 >= 0) {
                            const int nb = node + stride[a] - stride[b];
                            s -= 0.5 * A(a, b) * scale * (u[nb] - u[node]) * (v[nb] - v[node]);
                        }
                    }
            }
    if (coef_times_u.size() != 0)
        for (int node = 0; node < g.box.count(); ++node)
            s += g.vol_weight[node] * coef_times_u[node] * v[node];
    return s;
}

struct IdentitySides {
    double volume_integral = 0.0;  // integral of (s1 - s2) u1(f) u2(g)
    double dtn_pairing = 0.0;      // <(L1 - L2) f, g>
};

/// Both sides of the potential-difference identity, entirely on the oracle path.
inline IdentitySides identity_oracle(const DomainGrid& g, const Eigen::Matrix3d& A,
                                     const Eigen::VectorXd& sigma1, const Eigen::VectorXd& sigma2,
                                     const Eigen::VectorXd& f, const Eigen::VectorXd& gdata) {
    const Eigen::VectorXd u1f = dense_solve(g, A, sigma1, f);
    const Eigen::VectorXd u2f = dense_solve(g, A, sigma2, f);
    const Eigen::VectorXd u2g = dense_solve(g, A, sigma2, gdata);

    IdentitySides out;
    for (int node = 0; node < g.box.count(); ++node)
        out.volume_integral +=
            g.vol_weight[node] * (sigma1[node] - sigma2[node]) * u1f[node] * u2g[node];

    // canonical extension of the test trace
    Eigen::VectorXd vg = Eigen::VectorXd::Zero(g.box.count());
    for (int b = 0; b < g.boundary_count(); ++b) vg[g.boundary_nodes[b]] = gdata[b];
    const double p1 = dense_energy_pairing(g, A, u1f, vg, sigma1.cwiseProduct(u1f));
    const double p2 = dense_energy_pairing(g, A, u2f, vg, sigma2.cwiseProduct(u2f));
    out.dtn_pairing = p1 - p2;
    return out;
}

struct FrechetRow {
    double eps = 0.0;
    double error = 0.0;  // dual-norm distance between quotient and differential
};

/// Difference-quotient check of the differential: two nonlinear solves per
/// epsilon, measured in the discrete dual norm by the supplied functional.
template <class DualNorm>
std::vector<FrechetRow> frechet_oracle(const DomainGrid& g, const Eigen::Matrix3d& A,
                                       const Nonlinearity& a, const Eigen::VectorXd& f_t,
                                       const Eigen::VectorXd& gdata,
                                       const std::vector<double>& eps_list, DualNorm&& dual_norm) {
    if (eps_list.size() < 4) throw ConfigError("frechet oracle: need at least 4 epsilon values");
    const Eigen::VectorXd u0 = dense_solve_semilinear(g, A, a, f_t);
    Eigen::VectorXd a0(u0.size()), sig(u0.size());
    for (int i = 0; i < u0.size(); ++i) {
        a0[i] = a.eval(u0[i]);
        sig[i] = a.deriv(u0[i]);
    }
    const Eigen::VectorXd v = dense_solve(g, A, sig, gdata);
    // functional of the linearized solution
    Eigen::VectorXd base = Eigen::VectorXd::Zero(g.boundary_count());
    Eigen::VectorXd lin = Eigen::VectorXd::Zero(g.boundary_count());
    for (int b = 0; b < g.boundary_count(); ++b) {
        Eigen::VectorXd e = Eigen::VectorXd::Zero(g.box.count());
        e[g.boundary_nodes[b]] = 1.0;
        base[b] = dense_energy_pairing(g, A, u0, e, a0);
        lin[b] = dense_energy_pairing(g, A, v, e, sig.cwiseProduct(v));
    }

    std::vector<FrechetRow> rows;
    for (double eps : eps_list) {
        const Eigen::VectorXd ue = dense_solve_semilinear(g, A, a, f_t + eps * gdata);
        Eigen::VectorXd ae(ue.size());
        for (int i = 0; i < ue.size(); ++i) ae[i] = a.eval(ue[i]);
        Eigen::VectorXd pe(g.boundary_count());
        for (int b = 0; b < g.boundary_count(); ++b) {
            Eigen::VectorXd e = Eigen::VectorXd::Zero(g.box.count());
            e[g.boundary_nodes[b]] = 1.0;
            pe[b] = dense_energy_pairing(g, A, ue, e, ae);
        }
        FrechetRow row;
        row.eps = eps;
        row.error = dual_norm((pe - base) / eps - lin);
        rows.push_back(row);
    }
    return rows;
}

/// Smallest eigenvalue of the dense Dirichlet Laplacian (A = I), PDE units.
inline double dense_lambda1(const DomainGrid& g) {
    DenseSystem sys = dense_assemble(g, Eigen::Matrix3d::Identity(), Eigen::VectorXd());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sys.B_II);
    return es.eigenvalues().minCoeff();
}

/// Dense energy matrix of -div(A grad .) + 1 over all nodes (stiffness in the
/// h^(n-2) scaling plus trapezoid mass), assembled by its own edge loop.
inline Eigen::MatrixXd dense_energy_matrix(const DomainGrid& g, const Eigen::Matrix3d& A) {
    size_guard(g);
    const int n = g.box.count();
    Eigen::MatrixXd B = Eigen::MatrixXd::Zero(n, n);
    const double scale = g.h;
    const int stride[3] = {1, g.box.nx, g.box.nx * g.box.ny};
    auto edge = [&](int a, int b, double c) {
        B(a, a) += c;
        B(b, b) += c;
        B(a, b) -= c;
        B(b, a) -= c;
    };
    for (int k = 0; k < g.box.nz; ++k)
        for (int j = 0; j < g.box.ny; ++j)
            for (int i = 0; i < g.box.nx; ++i) {
                const int node = g.box.id(i, j, k);
                const int idx[3] = {i, j, k};
                for (int a = 0; a < 3; ++a)
                    if (idx[a] + 1 < g.nodes_per_axis) edge(node, node + stride[a], A(a, a) * scale);
                for (int a = 0; a < 3; ++a)
                    for (int b = a + 1; b < 3; ++b) {
                        if (A(a, b) == 0.0) continue;
                        if (idx[a] + 1 < g.nodes_per_axis && idx[b] + 1 < g.nodes_per_axis)
                            edge(node, node + stride[a] + stride[b], 0.5 * A(a, b) * scale);
                        if (idx[a] + 1 < g.nodes_per_axis && idx[b] - 1 >= 0)
                            edge(node, node + stride[a] - stride[b], -0.5 * A(a, b) * scale);
                    }
                B(node, node) += g.vol_weight[node];
            }
    return B;
}

/// Dense Schur complement of the screened energy matrix onto the boundary:
/// the reference realization of the squared trace norm.
inline Eigen::MatrixXd dense_trace_gram(const DomainGrid& g) {
    const Eigen::MatrixXd B = dense_energy_matrix(g, Eigen::Matrix3d::Identity());
    const int ni = g.interior_count(), nb = g.boundary_count();
    Eigen::MatrixXd BII(ni, ni), BIB(ni, nb), BBB(nb, nb);
    for (int r = 0; r < ni; ++r) {
        for (int c = 0; c < ni; ++c) BII(r, c) = B(g.interior_nodes[r], g.interior_nodes[c]);
        for (int c = 0; c < nb; ++c) BIB(r, c) = B(g.interior_nodes[r], g.boundary_nodes[c]);
    }
    for (int r = 0; r < nb; ++r)
        for (int c = 0; c < nb; ++c) BBB(r, c) = B(g.boundary_nodes[r], g.boundary_nodes[c]);
    return BBB - BIB.transpose() * BII.partialPivLu().solve(BIB);
}

/// Monomial-based exact quadrature over the unit cube, for polynomial checks.
struct Monomial {
    double coef = 0.0;
    int px = 0, py = 0, pz = 0;
};

inline double integrate_cube(const std::vector<Monomial>& poly) {
    double s = 0.0;
    for (const auto& m : poly)
        s += m.coef / ((m.px + 1.0) * (m.py + 1.0) * (m.pz + 1.0));
    return s;
}

/// Exact integral of grad(p) . grad(q) over the unit cube for monomial lists.
inline double dirichlet_energy_cube(const std::vector<Monomial>& p, const std::vector<Monomial>& q) {
    auto d = [](const Monomial& m, int axis) {
        Monomial r = m;
        int* pw[3] = {&r.px, &r.py, &r.pz};
        const int e = (axis == 0) ? m.px : (axis == 1 ? m.py : m.pz);
        if (e == 0) {
            r.coef = 0.0;
            return r;
        }
        r.coef *= e;
        *pw[axis] -= 1;
        return r;
    };
    double s = 0.0;
    for (int axis = 0; axis < 3; ++axis)
        for (const auto& mp : p)
            for (const auto& mq : q) {
                const Monomial a = d(mp, axis), b = d(mq, axis);
                if (a.coef == 0.0 || b.coef == 0.0) continue;
                s += (a.coef * b.coef) /
                     ((a.px + b.px + 1.0) * (a.py + b.py + 1.0) * (a.pz + b.pz + 1.0));
            }
    return s;
}

} // namespace dtnprobe::oracle
