#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <atomic>
#include <cmath>
#include <functional>
#include <memory>
#include <optional>
#include <sstream>
#include <vector>

#include "dtnprobe/errors.hpp"
#include "dtnprobe/grid.hpp"
#include "dtnprobe/nonlinearity.hpp"
#include "dtnprobe/rng.hpp"

namespace dtnprobe {

using SparseMat = Eigen::SparseMatrix<double>;

/// Process-wide solver counters, echoed into run summaries.
struct SolverCounters {
    std::atomic<long> cg_solves{0};
    std::atomic<long> cg_iterations{0};
    std::atomic<long> factorizations{0};
    std::atomic<long> triangular_solves{0};
    std::atomic<long> newton_iterations{0};
};

inline SolverCounters& solver_counters() {
    static SolverCounters c;
    return c;
}

/// Constant coefficient matrix A with its ellipticity constant.
struct Conductivity {
    Eigen::Matrix3d A = Eigen::Matrix3d::Identity();
    double kappa = 1.0 - 1e-12;
};

inline Conductivity make_conductivity(const Eigen::Matrix3d& A) {
    const double scale = A.cwiseAbs().maxCoeff();
    if ((A - A.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, scale))
        throw ConfigError("conductivity matrix must be symmetric");
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(A);
    const double lmin = es.eigenvalues().minCoeff();
    if (!(lmin > 0.0)) throw ConfigError("conductivity matrix must be positive definite");
    Conductivity c;
    c.A = A;
    c.kappa = std::min({lmin, 1.0 / scale, 1.0 - 1e-12});
    return c;
}

/// Nodal function on the domain grid. Values are stored for every box node;
/// boundary values equal the imposed trace exactly after a solve.
struct Field {
    DomainGridPtr grid;
    Eigen::VectorXd values;  // size grid->box.count()

    double at(int node) const { return values[node]; }
};

/// Nodal potential with its declared lower bound (sigma >= -lower_bound).
struct PotentialField {
    Eigen::VectorXd values;     // per box node
    double lower_bound = 0.0;   // the constant c in sigma >= -c
    double holder_beta = 0.5;
    double holder_seminorm = 0.0;  // sampled estimate, see estimate_holder_seminorm
};

inline PotentialField make_potential(const DomainGrid& g, const std::function<double(const Eigen::Vector3d&)>& f,
                                     double declared_lower_bound) {
    PotentialField p;
    p.values.resize(g.box.count());
    for (int node = 0; node < g.box.count(); ++node) p.values[node] = f(g.box.coord(node));
    p.lower_bound = declared_lower_bound;
    const double mn = p.values.minCoeff();
    if (mn < -declared_lower_bound - 1e-12)
        throw ConfigError("potential dips below its declared lower bound");
    return p;
}

inline PotentialField constant_potential(const DomainGrid& g, double value) {
    PotentialField p;
    p.values = Eigen::VectorXd::Constant(g.box.count(), value);
    p.lower_bound = std::max(0.0, -value);
    return p;
}

/// Sampled Hölder seminorm sup |s(x)-s(y)| / |x-y|^beta over neighbor pairs
/// plus a seeded batch of random pairs.
inline double estimate_holder_seminorm(const DomainGrid& g, const Eigen::VectorXd& values,
                                       double beta, std::uint64_t seed = 7, int random_pairs = 4000) {
    double best = 0.0;
    const int total = g.box.count();
    for (int node = 0; node < total; ++node) {
        int i, j, k;
        g.box.ijk(node, i, j, k);
        if (i + 1 < g.nodes_per_axis) {
            const double d = std::abs(values[node] - values[g.box.id(i + 1, j, k)]);
            best = std::max(best, d / std::pow(g.h, beta));
        }
    }
    SplitMix64 rng(seed);
    for (int s = 0; s < random_pairs; ++s) {
        const int a = static_cast<int>(rng.next() % total);
        const int b = static_cast<int>(rng.next() % total);
        if (a == b) continue;
        const double dist = (g.box.coord(a) - g.box.coord(b)).norm();
        best = std::max(best, std::abs(values[a] - values[b]) / std::pow(dist, beta));
    }
    return best;
}

/// Uniform view over the cube grid and the masked extension, for assembly.
struct MeshRef {
    const Grid3* box = nullptr;
    const std::vector<int>* interior_nodes = nullptr;
    const std::vector<int>* boundary_nodes = nullptr;
    const std::vector<int>* interior_index = nullptr;
    const std::vector<int>* boundary_index = nullptr;
    const std::vector<std::uint8_t>* member = nullptr;  // nullptr = every node
    const Eigen::VectorXd* vol_weight = nullptr;        // nullptr = no mass terms allowed

    bool is_member(int node) const { return member == nullptr || (*member)[node] != 0; }
    int interior_count() const { return static_cast<int>(interior_nodes->size()); }
    int boundary_count() const { return static_cast<int>(boundary_nodes->size()); }
};

inline MeshRef mesh_ref(const DomainGrid& g) {
    MeshRef m;
    m.box = &g.box;
    m.interior_nodes = &g.interior_nodes;
    m.boundary_nodes = &g.boundary_nodes;
    m.interior_index = &g.interior_index;
    m.boundary_index = &g.boundary_index;
    m.vol_weight = &g.vol_weight;
    return m;
}

inline MeshRef mesh_ref(const ExtendedDomain& e) {
    MeshRef m;
    m.box = &e.box;
    m.interior_nodes = &e.interior_nodes;
    m.boundary_nodes = &e.boundary_nodes;
    m.interior_index = &e.interior_index;
    m.boundary_index = &e.boundary_index;
    m.member = &e.member;
    return m;
}

/// Symmetric stiffness for -div(A grad .) assembled from axis and diagonal
/// difference quotients, scaled by h^(n-2) so that u'Kv matches the Dirichlet
/// energy quadrature. Full box indexing; rows of non-member nodes stay empty.
inline SparseMat assemble_stiffness(const MeshRef& m, const Eigen::Matrix3d& A) {
    const Grid3& box = *m.box;
    const double h = box.h;
    const double scale = h;  // h^(n-2), n = 3
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(static_cast<std::size_t>(box.count()) * 10);

    auto add_edge = [&](int a, int b, double c) {
        trip.emplace_back(a, a, c);
        trip.emplace_back(b, b, c);
        trip.emplace_back(a, b, -c);
        trip.emplace_back(b, a, -c);
    };

    const int stride[3] = {1, box.nx, box.nx * box.ny};
    for (int k = 0; k < box.nz; ++k)
        for (int j = 0; j < box.ny; ++j)
            for (int i = 0; i < box.nx; ++i) {
                const int node = box.id(i, j, k);
                if (!m.is_member(node)) continue;
                const int idx[3] = {i, j, k};
                const int dims[3] = {box.nx, box.ny, box.nz};
                // axis edges
                for (int a = 0; a < 3; ++a) {
                    if (idx[a] + 1 >= dims[a]) continue;
                    const int nb = node + stride[a];
                    if (!m.is_member(nb)) continue;
                    add_edge(node, nb, A(a, a) * scale);
                }
                // diagonal edges carrying the mixed derivatives
                for (int a = 0; a < 3; ++a)
                    for (int b = a + 1; b < 3; ++b) {
                        if (A(a, b) == 0.0) continue;
                        if (idx[a] + 1 < dims[a] && idx[b] + 1 < dims[b]) {
                            const int nb = node + stride[a] + stride[b];
                            if (m.is_member(nb)) add_edge(node, nb, 0.5 * A(a, b) * scale);
                        }
                        if (idx[a] + 1 < dims[a] && idx[b] - 1 >= 0) {
                            const int nb = node + stride[a] - stride[b];
                            if (m.is_member(nb)) add_edge(node, nb, -0.5 * A(a, b) * scale);
                        }
                    }
            }

    SparseMat K(box.count(), box.count());
    K.setFromTriplets(trip.begin(), trip.end());
    K.makeCompressed();
    return K;
}

/// Assembled operator for one (mesh, A): the full stiffness plus the index
/// partitions needed to pose Dirichlet problems.
struct EllipticOperator {
    MeshRef mesh;
    Conductivity cond;
    SparseMat K;  // full box indexing

    EllipticOperator(const MeshRef& m, const Conductivity& c) : mesh(m), cond(c) {
        K = assemble_stiffness(m, c.A);
    }
};

struct CgResult {
    int iterations = 0;
    double relative_residual = 0.0;
    bool converged = false;
    std::vector<double> residual_history;  // sampled every 50 iterations, plus the last
};

/// Jacobi-preconditioned conjugate gradients.
inline CgResult pcg(const SparseMat& B, const Eigen::VectorXd& rhs, Eigen::VectorXd& x,
                    double rtol, int max_iter = 0) {
    const int n = static_cast<int>(B.rows());
    if (max_iter <= 0) max_iter = std::max(1000, 40 * static_cast<int>(std::cbrt(n)) * 8);
    CgResult res;
    const double nb = rhs.norm();
    if (nb == 0.0) {
        x = Eigen::VectorXd::Zero(n);
        res.converged = true;
        return res;
    }
    Eigen::VectorXd d = B.diagonal().cwiseMax(1e-300);
    if (x.size() != n) x = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd r = rhs - B * x;
    Eigen::VectorXd z = r.cwiseQuotient(d);
    Eigen::VectorXd p = z;
    double rz = r.dot(z);
    for (int it = 0; it < max_iter; ++it) {
        const Eigen::VectorXd Bp = B * p;
        const double alpha = rz / p.dot(Bp);
        x += alpha * p;
        r -= alpha * Bp;
        res.iterations = it + 1;
        res.relative_residual = r.norm() / nb;
        if (it % 50 == 0) res.residual_history.push_back(res.relative_residual);
        if (res.relative_residual <= rtol) {
            res.converged = true;
            return res;
        }
        z = r.cwiseQuotient(d);
        const double rz_new = r.dot(z);
        p = z + (rz_new / rz) * p;
        rz = rz_new;
    }
    return res;
}

/// Linear Dirichlet problem -div(A grad u) + sigma u = g, u = f on the mesh
/// boundary, posed on interior unknowns in energy scaling. The conjugate
/// gradient path is the default; a cached sparse factorization serves
/// many-right-hand-side work (Gram assembly, operator columns).
class LinearSystem {
public:
    LinearSystem(const EllipticOperator& op, const Eigen::VectorXd& sigma, double tol = 1e-10)
        : op_(&op), tol_(tol) {
        const MeshRef& m = op.mesh;
        const int ni = m.interior_count();
        const int nb = m.boundary_count();
        sigma_ = sigma;
        if (sigma.size() != 0 && m.vol_weight == nullptr)
            throw ConfigError("mass terms need quadrature weights on this mesh");

        std::vector<Eigen::Triplet<double>> tII, tIB;
        for (int r = 0; r < ni; ++r) {
            const int node = (*m.interior_nodes)[r];
            for (SparseMat::InnerIterator it(op.K, node); it; ++it) {
                const int col = static_cast<int>(it.row());  // K symmetric; column-major inner is row index
                const int ic = (*m.interior_index)[col];
                if (ic >= 0)
                    tII.emplace_back(r, ic, it.value());
                else {
                    const int bc = (*m.boundary_index)[col];
                    if (bc >= 0) tIB.emplace_back(r, bc, it.value());
                }
            }
            if (sigma.size() != 0) {
                const double w = (*m.vol_weight)[node];
                tII.emplace_back(r, r, w * sigma[node]);
            }
        }
        B_II_.resize(ni, ni);
        B_II_.setFromTriplets(tII.begin(), tII.end());
        B_II_.makeCompressed();
        B_IB_.resize(ni, nb);
        B_IB_.setFromTriplets(tIB.begin(), tIB.end());
        B_IB_.makeCompressed();
    }

    const EllipticOperator& op() const { return *op_; }
    const SparseMat& interior_matrix() const { return B_II_; }
    const Eigen::VectorXd& sigma() const { return sigma_; }

    /// rhs for trace f (boundary ordinals) and optional volume source g (box nodes).
    Eigen::VectorXd rhs(const Eigen::VectorXd& f, const Eigen::VectorXd& g = {}) const {
        const MeshRef& m = op_->mesh;
        Eigen::VectorXd b = -(B_IB_ * f);
        if (g.size() != 0) {
            for (int r = 0; r < m.interior_count(); ++r) {
                const int node = (*m.interior_nodes)[r];
                b[r] += (*m.vol_weight)[node] * g[node];
            }
        }
        return b;
    }

    /// Interior solve by preconditioned CG.
    Eigen::VectorXd solve_interior(const Eigen::VectorXd& b, Eigen::VectorXd warm = {}) const {
        Eigen::VectorXd x = std::move(warm);
        const CgResult r = pcg(B_II_, b, x, tol_);
        cg_solves_ += 1;
        cg_iterations_ += r.iterations;
        solver_counters().cg_solves += 1;
        solver_counters().cg_iterations += r.iterations;
        if (!r.converged) {
            std::ostringstream os;
            os << "conjugate gradients failed: " << r.iterations
               << " iterations, relative residual " << r.relative_residual
               << "; history (every 50 iters):";
            for (double h : r.residual_history) os << " " << h;
            throw SolveError(os.str());
        }
        return x;
    }

    /// Interior solve through the cached factorization (built on first use).
    Eigen::VectorXd solve_interior_direct(const Eigen::VectorXd& b) const {
        ensure_factor();
        tri_solves_ += 1;
        solver_counters().triangular_solves += 1;
        return factor_->solve(b);
    }

    Eigen::MatrixXd solve_interior_direct(const Eigen::MatrixXd& B) const {
        ensure_factor();
        tri_solves_ += static_cast<long>(B.cols());
        solver_counters().triangular_solves += static_cast<long>(B.cols());
        return factor_->solve(B);
    }

    /// Full-field Dirichlet solve; non-member nodes stay zero.
    Eigen::VectorXd solve(const Eigen::VectorXd& trace, const Eigen::VectorXd& source = {},
                          bool direct = false) const {
        const MeshRef& m = op_->mesh;
        const Eigen::VectorXd b = rhs(trace, source);
        const Eigen::VectorXd uI = direct ? solve_interior_direct(b) : solve_interior(b);
        Eigen::VectorXd u = Eigen::VectorXd::Zero(m.box->count());
        for (int r = 0; r < m.interior_count(); ++r) u[(*m.interior_nodes)[r]] = uI[r];
        for (int b2 = 0; b2 < m.boundary_count(); ++b2) u[(*m.boundary_nodes)[b2]] = trace[b2];
        return u;
    }

    void ensure_factor() const {
        if (factor_) return;
        auto f = std::make_unique<Eigen::SimplicialLDLT<SparseMat>>();
        f->compute(B_II_);
        if (f->info() != Eigen::Success)
            throw SolveError("sparse factorization failed (operator not SPD?)");
        factor_ = std::move(f);
        factorizations_ += 1;
        solver_counters().factorizations += 1;
    }

    long cg_solves() const { return cg_solves_; }
    long cg_iterations() const { return cg_iterations_; }
    long factorizations() const { return factorizations_; }
    long tri_solves() const { return tri_solves_; }

private:
    const EllipticOperator* op_;
    Eigen::VectorXd sigma_;
    SparseMat B_II_, B_IB_;
    double tol_;
    mutable std::unique_ptr<Eigen::SimplicialLDLT<SparseMat>> factor_;
    mutable std::atomic<long> cg_solves_{0}, cg_iterations_{0}, factorizations_{0}, tri_solves_{0};
};

/// Energy pairing u'K v + sum w * coef * v against an assembled operator,
/// where coef is the nodal vector sigma*u (linear) or a(u) (semilinear).
inline double pairing_with(const EllipticOperator& op, const Eigen::VectorXd& u,
                           const Eigen::VectorXd& v, const Eigen::VectorXd& coef_times_u) {
    const MeshRef& m = op.mesh;
    if (u.size() != m.box->count() || v.size() != m.box->count())
        throw ConfigError("energy pairing: grid mismatch");
    double s = u.dot(op.K * v);
    if (coef_times_u.size() != 0) {
        if (m.vol_weight == nullptr) throw ConfigError("pairing needs quadrature weights");
        for (int node = 0; node < m.box->count(); ++node)
            if (m.is_member(node)) s += (*m.vol_weight)[node] * coef_times_u[node] * v[node];
    }
    return s;
}

/// Quadrature of A grad u . grad v + sigma u v (pass an empty sigma for the
/// pure Dirichlet energy).
inline double energy_pairing(const EllipticOperator& op, const Eigen::VectorXd& u,
                             const Eigen::VectorXd& v, const Eigen::VectorXd& sigma = {}) {
    Eigen::VectorXd coef;
    if (sigma.size() != 0) coef = sigma.cwiseProduct(u);
    return pairing_with(op, u, v, coef);
}

/// Quadrature of A grad u . grad v + a(u) v.
inline double energy_pairing(const EllipticOperator& op, const Eigen::VectorXd& u,
                             const Eigen::VectorXd& v, const Nonlinearity& a) {
    Eigen::VectorXd coef(u.size());
    for (int i = 0; i < static_cast<int>(u.size()); ++i) coef[i] = a.eval(u[i]);
    return pairing_with(op, u, v, coef);
}

struct NewtonStats {
    int iterations = 0;
    int continuation_stages = 0;
    double final_residual = 0.0;
    bool damped = false;
};

/// Newton iteration for -div(A grad u) + a(u) = 0 with Dirichlet trace f.
/// The Jacobian potential a'(u_k) keeps every Newton system coercive under
/// the standing assumptions. Armijo backtracking, then amplitude
/// continuation when the undamped iteration stalls.
class SemilinearSolver {
public:
    SemilinearSolver(const EllipticOperator& op, Nonlinearity a, double tol_newton = 1e-10,
                     double tol_lin = 1e-10, int max_iter = 50)
        : op_(&op), a_(std::move(a)), tol_newton_(tol_newton), tol_lin_(tol_lin), max_iter_(max_iter) {
        const MeshRef& m = op.mesh;
        if (m.vol_weight == nullptr) throw ConfigError("semilinear solve needs quadrature weights");
        LinearSystem base(op, Eigen::VectorXd::Zero(m.box->count()), tol_lin);
        K_II_ = base.interior_matrix();  // sigma = 0: pure stiffness block
        B_IB_ = extract_boundary_coupling(op);
        wI_.resize(m.interior_count());
        for (int r = 0; r < m.interior_count(); ++r) wI_[r] = (*m.vol_weight)[(*m.interior_nodes)[r]];
    }

    /// Solve with trace f (boundary ordinals). Returns the full-box field.
    Eigen::VectorXd solve(const Eigen::VectorXd& f, NewtonStats* stats = nullptr) const {
        NewtonStats st;
        Eigen::VectorXd uI = initial_guess(f);
        if (!newton(f, uI, st)) {
            // amplitude continuation, warm-started
            st.continuation_stages = 4;
            uI = initial_guess(0.25 * f);
            for (int stage = 1; stage <= 4; ++stage) {
                const Eigen::VectorXd fs = (0.25 * stage) * f;
                if (!newton(fs, uI, st)) {
                    std::ostringstream os;
                    os << "Newton iteration failed at continuation stage " << stage << "/4, residual "
                       << st.final_residual;
                    throw SolveError(os.str());
                }
            }
        }
        if (stats) *stats = st;
        const MeshRef& m = op_->mesh;
        Eigen::VectorXd u = Eigen::VectorXd::Zero(m.box->count());
        for (int r = 0; r < m.interior_count(); ++r) u[(*m.interior_nodes)[r]] = uI[r];
        for (int b = 0; b < m.boundary_count(); ++b) u[(*m.boundary_nodes)[b]] = f[b];
        return u;
    }

private:
    static SparseMat extract_boundary_coupling(const EllipticOperator& op) {
        const MeshRef& m = op.mesh;
        std::vector<Eigen::Triplet<double>> t;
        for (int r = 0; r < m.interior_count(); ++r) {
            const int node = (*m.interior_nodes)[r];
            for (SparseMat::InnerIterator it(op.K, node); it; ++it) {
                const int bc = (*m.boundary_index)[static_cast<int>(it.row())];
                if (bc >= 0) t.emplace_back(r, bc, it.value());
            }
        }
        SparseMat B(m.interior_count(), m.boundary_count());
        B.setFromTriplets(t.begin(), t.end());
        return B;
    }

    Eigen::VectorXd initial_guess(const Eigen::VectorXd& f) const {
        // linearize at zero: potential a'(0)
        const MeshRef& m = op_->mesh;
        Eigen::VectorXd sigma0 = Eigen::VectorXd::Constant(m.box->count(), a_.deriv(0.0));
        LinearSystem lin(*op_, sigma0, tol_lin_);
        Eigen::VectorXd rhs = -(B_IB_ * f);
        // correct for a(0) != 0
        const double a0 = a_.eval(0.0);
        if (a0 != 0.0) rhs -= a0 * wI_;
        return lin.solve_interior(rhs);
    }

    Eigen::VectorXd residual(const Eigen::VectorXd& f, const Eigen::VectorXd& uI) const {
        Eigen::VectorXd F = K_II_ * uI + B_IB_ * f;
        for (int r = 0; r < static_cast<int>(uI.size()); ++r) F[r] += wI_[r] * a_.eval(uI[r]);
        return F;
    }

    bool newton(const Eigen::VectorXd& f, Eigen::VectorXd& uI, NewtonStats& st) const {
        Eigen::VectorXd F = residual(f, uI);
        double fn = F.norm();
        const double target = tol_newton_ * std::max(1.0, fn);
        for (int it = 0; it < max_iter_; ++it) {
            if (fn <= target) {
                st.final_residual = fn;
                return true;
            }
            SparseMat J = K_II_;
            Eigen::VectorXd jd(uI.size());
            for (int r = 0; r < static_cast<int>(uI.size()); ++r) jd[r] = wI_[r] * a_.deriv(uI[r]);
            J += SparseMat(jd.asDiagonal());
            Eigen::VectorXd d;
            const CgResult cg = pcg(J, -F, d, tol_lin_);
            if (!cg.converged) return false;
            double s = 1.0;
            Eigen::VectorXd trial, F_trial;
            double fn_trial = 0.0;
            bool accepted = false;
            for (int half = 0; half < 14; ++half) {
                trial = uI + s * d;
                F_trial = residual(f, trial);
                fn_trial = F_trial.norm();
                if (fn_trial <= (1.0 - 1e-4 * s) * fn) {
                    accepted = true;
                    break;
                }
                s *= 0.5;
                st.damped = true;
            }
            if (!accepted) {
                st.final_residual = fn;
                return false;
            }
            uI = trial;
            F = F_trial;
            fn = fn_trial;
            st.iterations += 1;
            solver_counters().newton_iterations += 1;
        }
        st.final_residual = fn;
        return fn <= target;
    }

    const EllipticOperator* op_;
    Nonlinearity a_;
    double tol_newton_, tol_lin_;
    int max_iter_;
    SparseMat K_II_, B_IB_;
    Eigen::VectorXd wI_;
};

/// Smallest Dirichlet eigenvalue of the (A = I) Laplacian by inverse power
/// iteration on the generalized problem K u = lambda W u.
inline double estimate_lambda1(const DomainGrid& g, double rtol = 1e-6, int max_iter = 400) {
    EllipticOperator lap(mesh_ref(g), Conductivity{});
    LinearSystem sys(lap, Eigen::VectorXd::Zero(g.box.count()), std::min(1e-12, rtol * 1e-4));
    const int ni = g.interior_count();
    Eigen::VectorXd wI(ni);
    for (int r = 0; r < ni; ++r) wI[r] = g.vol_weight[g.interior_nodes[r]];

    SplitMix64 rng(0x517ec7f0u);
    Eigen::VectorXd x(ni);
    for (int r = 0; r < ni; ++r) x[r] = rng.symmetric() + 0.1;
    x.normalize();
    double lambda = 0.0, prev = 0.0;
    for (int it = 0; it < max_iter; ++it) {
        Eigen::VectorXd y = sys.solve_interior(wI.cwiseProduct(x), x / std::max(lambda, 1.0));
        y /= y.norm();
        const Eigen::VectorXd Ky = sys.interior_matrix() * y;
        lambda = y.dot(Ky) / y.dot(wI.cwiseProduct(y));
        x = y;
        if (it > 0 && std::abs(lambda - prev) <= rtol * std::abs(lambda)) return lambda;
        prev = lambda;
    }
    throw SolveError("lambda1 estimate: inverse power iteration stagnated");
}

} // namespace dtnprobe
