#pragma once

#include <Eigen/Dense>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <unordered_map>
#include <vector>

#include "dtnprobe/elliptic.hpp"
#include "dtnprobe/grid.hpp"
#include "dtnprobe/nonlinearity.hpp"
#include "dtnprobe/trace.hpp"

namespace dtnprobe {

inline std::uint64_t hash_vector(const Eigen::VectorXd& v) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    const auto* bytes = reinterpret_cast<const unsigned char*>(v.data());
    for (std::size_t i = 0; i < sizeof(double) * v.size(); ++i) {
        h ^= bytes[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

/// Boundary flux functional of a computed field: pairings against the nodal
/// boundary basis, evaluated with the canonical extension (trace values on
/// the boundary, zero inside). For solutions the choice of extension is
/// irrelevant; fixing it makes outputs bit-reproducible.
inline Eigen::VectorXd flux_coefficients(const EllipticOperator& op, const Eigen::VectorXd& u,
                                         const Eigen::VectorXd& mass_coef) {
    const MeshRef& m = op.mesh;
    const Eigen::VectorXd Ku = op.K * u;
    Eigen::VectorXd psi(m.boundary_count());
    for (int b = 0; b < m.boundary_count(); ++b) {
        const int node = (*m.boundary_nodes)[b];
        psi[b] = Ku[node];
        if (mass_coef.size() != 0) psi[b] += (*m.vol_weight)[node] * mass_coef[node];
    }
    return psi;
}

/// Dirichlet-to-Neumann map of the linear problem -div(A grad u) + sigma u = 0,
/// with the boundary cutoff for localized measurements. Forward solutions are
/// cached by trace so repeated pairings are bitwise identical.
class LinearDtn {
public:
    LinearDtn(std::shared_ptr<const EllipticOperator> op, const BoundaryPatches& patches,
              PotentialField sigma, double tol = 1e-10)
        : op_(std::move(op)), patches_(patches), sigma_(std::move(sigma)),
          sys_(std::make_shared<LinearSystem>(*op_, sigma_.values, tol)) {}

    const DomainGrid& grid() const { return *patches_.grid; }
    const BoundaryPatches& patches() const { return patches_; }
    const PotentialField& sigma() const { return sigma_; }
    const EllipticOperator& op() const { return *op_; }
    LinearSystem& system() const { return *sys_; }

    /// Forward solution for the trace (cached; insertions are synchronized,
    /// reads are lock-free once warm).
    const Eigen::VectorXd& solution(const Eigen::VectorXd& f, bool direct = false) const {
        const std::uint64_t key = hash_vector(f);
        {
            std::lock_guard<std::mutex> lock(*cache_mu_);
            auto it = cache_.find(key);
            if (it != cache_.end()) return it->second;
        }
        Eigen::VectorXd u = sys_->solve(f, {}, direct);
        std::lock_guard<std::mutex> lock(*cache_mu_);
        return cache_.emplace(key, std::move(u)).first->second;
    }

    Eigen::VectorXd apply(const Eigen::VectorXd& f, bool direct = false) const {
        const Eigen::VectorXd& u = solution(f, direct);
        return flux_coefficients(*op_, u, sigma_.values.cwiseProduct(u));
    }

    /// chi-localized functional: coefficients masked by the cutoff.
    Eigen::VectorXd apply_localized(const Eigen::VectorXd& f, bool direct = false) const {
        return patches_.chi.cwiseProduct(apply(f, direct));
    }

    void use_direct_solves() const { sys_->ensure_factor(); }

private:
    std::shared_ptr<const EllipticOperator> op_;
    BoundaryPatches patches_;
    PotentialField sigma_;
    std::shared_ptr<LinearSystem> sys_;
    mutable std::unique_ptr<std::mutex> cache_mu_ = std::make_unique<std::mutex>();
    mutable std::unordered_map<std::uint64_t, Eigen::VectorXd> cache_;
};

/// Data family f_t = t*h anchored at a boundary node x_* where h(x_*) = 1.
struct SweepAnchor {
    BoundaryField h;
    int xstar_boundary = -1;
    Eigen::VectorXd t_grid;
};

/// Gamma0-supported bump trace with value exactly 1 at the anchor node.
inline SweepAnchor make_sweep_anchor(const BoundaryPatches& p, double tau, int t_points) {
    SweepAnchor a;
    const DomainGrid& g = *p.grid;
    a.h.grid = p.grid;
    a.h.support = TraceSupport::Gamma0;
    a.h.values = Eigen::VectorXd::Zero(g.boundary_count());
    for (int b = 0; b < g.boundary_count(); ++b) {
        const double s = (g.box.coord(g.boundary_nodes[b]) - p.x0).norm();
        a.h.values[b] = cutoff_bump(s, 0.0, p.r0);
    }
    a.xstar_boundary = p.x0_boundary;
    a.h.values[a.xstar_boundary] = 1.0;  // exact by construction (s = 0)
    if (t_points < 2 || t_points % 2 == 0)
        throw ConfigError("sweep: need an odd number >= 3 of t points so the grid contains 0");
    a.t_grid.resize(t_points);
    for (int i = 0; i < t_points; ++i) a.t_grid[i] = -tau + 2.0 * tau * i / (t_points - 1);
    return a;
}

/// Dirichlet-to-Neumann map of the semilinear problem, its localized variant
/// and the Frechet differential at the sweep data f_t: the linear map with
/// frozen potential a'(u_a(f_t)).
class SemilinearDtn {
public:
    SemilinearDtn(std::shared_ptr<const EllipticOperator> op, const BoundaryPatches& patches,
                  Nonlinearity a, double tol_newton = 1e-10, double tol_lin = 1e-10)
        : op_(std::move(op)), patches_(patches), a_(std::move(a)),
          solver_(*op_, a_, tol_newton, tol_lin), tol_lin_(tol_lin) {}

    const Nonlinearity& coefficient() const { return a_; }
    const BoundaryPatches& patches() const { return patches_; }
    const EllipticOperator& op() const { return *op_; }

    const Eigen::VectorXd& solution(const Eigen::VectorXd& f) const {
        const std::uint64_t key = hash_vector(f);
        {
            std::lock_guard<std::mutex> lock(cache_mu_);
            auto it = cache_.find(key);
            if (it != cache_.end()) return it->second;
        }
        Eigen::VectorXd u = solver_.solve(f);
        std::lock_guard<std::mutex> lock(cache_mu_);
        return cache_.emplace(key, std::move(u)).first->second;
    }

    Eigen::VectorXd apply(const Eigen::VectorXd& f) const {
        const Eigen::VectorXd& u = solution(f);
        Eigen::VectorXd au(u.size());
        for (int i = 0; i < u.size(); ++i) au[i] = a_.eval(u[i]);
        return flux_coefficients(*op_, u, au);
    }

    Eigen::VectorXd apply_localized(const Eigen::VectorXd& f) const {
        return patches_.chi.cwiseProduct(apply(f));
    }

    /// Potential of the linearized problem at data f: a'(u_a(f)) nodewise.
    PotentialField frozen_potential(const Eigen::VectorXd& f) const {
        const Eigen::VectorXd& u = solution(f);
        PotentialField p;
        p.values.resize(u.size());
        for (int i = 0; i < u.size(); ++i) p.values[i] = a_.deriv(u[i]);
        p.lower_bound = a_.c_lower;
        return p;
    }

    /// The differential at offset data f_t = t*h as a linear DtN map (cached per trace hash).
    const LinearDtn& linearized(const Eigen::VectorXd& f_t) const {
        const std::uint64_t key = hash_vector(f_t);
        {
            std::lock_guard<std::mutex> lock(lin_mu_);
            auto it = lin_cache_.find(key);
            if (it != lin_cache_.end()) return it->second;
        }
        LinearDtn lin(op_, patches_, frozen_potential(f_t), tol_lin_);
        std::lock_guard<std::mutex> lock(lin_mu_);
        auto it = lin_cache_.find(key);
        if (it != lin_cache_.end()) return it->second;
        return lin_cache_.emplace(key, std::move(lin)).first->second;
    }

private:
    std::shared_ptr<const EllipticOperator> op_;
    BoundaryPatches patches_;
    Nonlinearity a_;
    SemilinearSolver solver_;
    double tol_lin_;
    mutable std::mutex cache_mu_, lin_mu_;
    mutable std::unordered_map<std::uint64_t, Eigen::VectorXd> cache_;
    mutable std::unordered_map<std::uint64_t, LinearDtn> lin_cache_;
};

/// Columns of the (localized) linearized map over a chosen Gamma0 basis.
/// One interior solve per column, batched through the cached factorization
/// when the basis is large.
inline BoundaryOperatorMatrix linearized_matrix(const LinearDtn& lin, const std::vector<int>& basis,
                                                bool localized = true, int direct_threshold = 48) {
    const DomainGrid& g = lin.grid();
    BoundaryOperatorMatrix out;
    out.grid = lin.patches().grid;
    out.domain_basis = basis;
    const int m = static_cast<int>(basis.size());
    const int nb = g.boundary_count();
    out.T.resize(nb, m);

    LinearSystem& sys = lin.system();
    const bool direct = m >= direct_threshold;
    if (direct) sys.ensure_factor();
    Eigen::MatrixXd rhs(sys.interior_matrix().rows(), m);
    Eigen::MatrixXd traces = Eigen::MatrixXd::Zero(nb, m);
    for (int c = 0; c < m; ++c) {
        traces(basis[c], c) = 1.0;
        rhs.col(c) = sys.rhs(traces.col(c));
    }
    Eigen::MatrixXd UI;
    if (direct) {
        UI = sys.solve_interior_direct(rhs);
    } else {
        UI.resize(rhs.rows(), m);
        for (int c = 0; c < m; ++c) UI.col(c) = sys.solve_interior(rhs.col(c));
    }
    const MeshRef& mesh = lin.op().mesh;
    for (int c = 0; c < m; ++c) {
        Eigen::VectorXd u = Eigen::VectorXd::Zero(g.box.count());
        for (int r = 0; r < mesh.interior_count(); ++r) u[(*mesh.interior_nodes)[r]] = UI(r, c);
        for (int b = 0; b < nb; ++b) u[(*mesh.boundary_nodes)[b]] = traces(b, c);
        Eigen::VectorXd psi =
            flux_coefficients(lin.op(), u, lin.sigma().values.cwiseProduct(u));
        if (localized) psi = lin.patches().chi.cwiseProduct(psi);
        out.T.col(c) = psi;
    }
    return out;
}

/// Operator-matrix export for offline analysis: one row per boundary node,
/// one column per domain basis element (basis ordinals in the header).
inline void write_operator_csv(const std::string& path, const BoundaryOperatorMatrix& T) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write '" + path + "'");
    out << "row";
    for (int b : T.domain_basis) out << ",basis_" << b;
    out << "\n";
    char buf[32];
    for (int r = 0; r < T.T.rows(); ++r) {
        out << r;
        for (int c = 0; c < T.T.cols(); ++c) {
            std::snprintf(buf, sizeof(buf), ",%.12e", T.T(r, c));
            out << buf;
        }
        out << "\n";
    }
}

/// Difference of two boundary-operator matrices over the same basis.
inline BoundaryOperatorMatrix operator_difference(const BoundaryOperatorMatrix& A,
                                                  const BoundaryOperatorMatrix& B) {
    if (A.domain_basis != B.domain_basis) throw ConfigError("operator difference: basis mismatch");
    BoundaryOperatorMatrix d = A;
    d.T -= B.T;
    return d;
}

/// Boundary measurement interface for the recovery pipeline: the unknown
/// coefficient is reachable only through these calls.
class DtnOracle {
public:
    virtual ~DtnOracle() = default;
    virtual Eigen::VectorXd apply_localized(const Eigen::VectorXd& trace) const = 0;
    /// Action of the differential at sweep data f_t on a probe trace.
    virtual Eigen::VectorXd differential_localized(const Eigen::VectorXd& f_t,
                                                   const Eigen::VectorXd& probe) const = 0;
};

/// Simulated measurements backed by the forward solver.
class SimulatedDtnOracle final : public DtnOracle {
public:
    explicit SimulatedDtnOracle(std::shared_ptr<const SemilinearDtn> dtn) : dtn_(std::move(dtn)) {}

    Eigen::VectorXd apply_localized(const Eigen::VectorXd& trace) const override {
        return dtn_->apply_localized(trace);
    }
    Eigen::VectorXd differential_localized(const Eigen::VectorXd& f_t,
                                           const Eigen::VectorXd& probe) const override {
        return dtn_->linearized(f_t).apply_localized(probe);
    }

private:
    std::shared_ptr<const SemilinearDtn> dtn_;
};

/// Adaptor giving seminorm_pm the pair (map value, differential norm) for a
/// semilinear evaluator over a fixed probe basis.
struct SeminormMap {
    const SemilinearDtn* dtn;
    const TraceGram* gram;
    std::vector<int> basis;

    Eigen::VectorXd apply_functional(const Eigen::VectorXd& f) const {
        return dtn->apply_localized(f);
    }
    double differential_norm(const Eigen::VectorXd& f) const {
        return op_norm(linearized_matrix(dtn->linearized(f), basis), *gram);
    }
};

} // namespace dtnprobe
