#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <map>
#include <memory>
#include <optional>
#include <vector>

#include "dtnprobe/elliptic.hpp"
#include "dtnprobe/grid.hpp"
#include "dtnprobe/rng.hpp"

namespace dtnprobe {

enum class TraceSupport { General, Gamma0 };

/// Real-valued function on the boundary nodes (a discrete trace).
struct BoundaryField {
    DomainGridPtr grid;
    Eigen::VectorXd values;  // per boundary ordinal
    TraceSupport support = TraceSupport::General;
};

/// Element of the dual space, stored as pairings against the nodal boundary
/// basis: <psi, phi> = sum_b coeff[b] * phi[b].
struct BoundaryFunctional {
    DomainGridPtr grid;
    Eigen::VectorXd coeff;
};

inline double dual_pair(const BoundaryFunctional& psi, const Eigen::VectorXd& phi) {
    return psi.coeff.dot(phi);
}

/// Matrix of a boundary operator from the span of selected Gamma0 trace basis
/// functions into the dual space: column j is the functional produced by
/// domain basis element j.
struct BoundaryOperatorMatrix {
    DomainGridPtr grid;
    std::vector<int> domain_basis;  // boundary ordinals indexing the columns
    Eigen::MatrixXd T;              // boundary_count x basis size
};

/// Discrete trace norms through the screened Poisson operator -Laplace + 1:
/// the H^{1/2} quotient norm is the minimal H^1 extension energy, realized by
/// the Schur complement of that operator onto the boundary nodes. The dual
/// H^{-1/2} norm uses the boundary block of the full inverse.
class TraceGram {
public:
    explicit TraceGram(DomainGridPtr grid, int dense_gram_cap = 4000)
        : grid_(std::move(grid)), dense_cap_(dense_gram_cap),
          op_(mesh_ref(*grid_), Conductivity{}),
          interior_(op_, Eigen::VectorXd::Ones(grid_->box.count()), 1e-12) {
        build_full_factor();
    }

    const DomainGrid& grid() const { return *grid_; }
    const EllipticOperator& op() const { return op_; }

    /// Minimal-extension H^1 norm of the trace (the quotient norm).
    double h_half_norm(const Eigen::VectorXd& f) const {
        if (f.size() != grid_->boundary_count()) throw ConfigError("trace size mismatch");
        const double q = f.dot(apply_gram(f));
        return std::sqrt(std::max(0.0, q));
    }

    /// Gram (Schur complement) action M f: one interior solve.
    Eigen::VectorXd apply_gram(const Eigen::VectorXd& f) const {
        const Eigen::VectorXd b = interior_.rhs(f);
        const Eigen::VectorXd uI = interior_.solve_interior_direct(b);
        return boundary_residual(uI, f);
    }

    /// Canonical dual norm sqrt(psi' M^-1 psi) via the full screened inverse.
    double h_minus_half_norm(const Eigen::VectorXd& psi) const {
        if (psi.size() != grid_->boundary_count()) throw ConfigError("functional size mismatch");
        return std::sqrt(std::max(0.0, psi.dot(apply_inverse_gram(psi))));
    }

    /// M^-1 psi = boundary block of (K + W)^-1 applied to psi extended by zero.
    Eigen::VectorXd apply_inverse_gram(const Eigen::VectorXd& psi) const {
        Eigen::VectorXd rhs = Eigen::VectorXd::Zero(grid_->box.count());
        for (int b = 0; b < grid_->boundary_count(); ++b) rhs[grid_->boundary_nodes[b]] = psi[b];
        const Eigen::VectorXd x = full_->solve(rhs);
        Eigen::VectorXd out(grid_->boundary_count());
        for (int b = 0; b < grid_->boundary_count(); ++b) out[b] = x[grid_->boundary_nodes[b]];
        return out;
    }

    Eigen::MatrixXd apply_inverse_gram(const Eigen::MatrixXd& Psi) const {
        Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(grid_->box.count(), Psi.cols());
        for (int b = 0; b < grid_->boundary_count(); ++b) rhs.row(grid_->boundary_nodes[b]) = Psi.row(b);
        const Eigen::MatrixXd x = full_->solve(rhs);
        Eigen::MatrixXd out(grid_->boundary_count(), Psi.cols());
        for (int b = 0; b < grid_->boundary_count(); ++b) out.row(b) = x.row(grid_->boundary_nodes[b]);
        return out;
    }

    /// Dense Gram over all boundary nodes (memory-guarded; small grids only).
    const Eigen::MatrixXd& dense_gram() const {
        if (!dense_gram_) {
            const int nb = grid_->boundary_count();
            if (nb > dense_cap_)
                throw ConfigError("dense trace Gram blocked: boundary too large; use operator mode");
            Eigen::MatrixXd M(nb, nb);
            Eigen::MatrixXd B(interior_.interior_matrix().rows(), nb);
            for (int c = 0; c < nb; ++c) {
                Eigen::VectorXd e = Eigen::VectorXd::Zero(nb);
                e[c] = 1.0;
                B.col(c) = interior_.rhs(e);
            }
            const Eigen::MatrixXd UI = interior_.solve_interior_direct(B);
            for (int c = 0; c < nb; ++c) {
                Eigen::VectorXd e = Eigen::VectorXd::Zero(nb);
                e[c] = 1.0;
                M.col(c) = boundary_residual(UI.col(c), e);
            }
            dense_gram_ = 0.5 * (M + M.transpose());  // symmetric up to roundoff
        }
        return *dense_gram_;
    }

    /// Principal Gram submatrix over a boundary-node basis, with its Cholesky.
    struct SubGram {
        Eigen::MatrixXd M0;
        Eigen::LLT<Eigen::MatrixXd> chol;
    };

    const SubGram& sub_gram(const std::vector<int>& basis) const {
        auto it = sub_cache_.find(basis);
        if (it != sub_cache_.end()) return it->second;
        const int m = static_cast<int>(basis.size());
        const int nb = grid_->boundary_count();
        Eigen::MatrixXd B(interior_.interior_matrix().rows(), m);
        Eigen::MatrixXd E = Eigen::MatrixXd::Zero(nb, m);
        for (int c = 0; c < m; ++c) {
            E(basis[c], c) = 1.0;
            B.col(c) = interior_.rhs(E.col(c));
        }
        const Eigen::MatrixXd UI = interior_.solve_interior_direct(B);
        Eigen::MatrixXd M0(m, m);
        for (int c = 0; c < m; ++c) {
            const Eigen::VectorXd col = boundary_residual(UI.col(c), E.col(c));
            for (int r = 0; r < m; ++r) M0(r, c) = col[basis[r]];
        }
        M0 = 0.5 * (M0 + M0.transpose());
        SubGram sg;
        sg.M0 = M0;
        sg.chol.compute(M0);
        if (sg.chol.info() != Eigen::Success)
            throw SolveError("trace Gram submatrix is not positive definite");
        return sub_cache_.emplace(basis, std::move(sg)).first->second;
    }

    /// H^{1/2} plus surface-gradient seminorm: the stronger norm used to size
    /// data balls. Any fixed norm above H^{1/2} serves that purpose.
    double z_norm(const Eigen::VectorXd& f) const {
        const double base = h_half_norm(f);
        double grad = 0.0;
        const DomainGrid& g = *grid_;
        const int stride[3] = {1, g.box.nx, g.box.nx * g.box.ny};
        for (int b = 0; b < g.boundary_count(); ++b) {
            const int node = g.boundary_nodes[b];
            int i, j, k;
            g.box.ijk(node, i, j, k);
            const int idx[3] = {i, j, k};
            for (int a = 0; a < 3; ++a) {
                if (idx[a] + 1 >= g.nodes_per_axis) continue;
                const int nb2 = g.boundary_index[node + stride[a]];
                if (nb2 < 0) continue;
                const double d = f[b] - f[nb2];
                grad += d * d;
            }
        }
        return std::sqrt(base * base + grad);
    }

private:
    Eigen::VectorXd boundary_residual(const Eigen::VectorXd& uI, const Eigen::VectorXd& f) const {
        // rows of the screened operator at boundary nodes applied to the extension
        Eigen::VectorXd u = Eigen::VectorXd::Zero(grid_->box.count());
        for (int r = 0; r < grid_->interior_count(); ++r) u[grid_->interior_nodes[r]] = uI[r];
        for (int b = 0; b < grid_->boundary_count(); ++b) u[grid_->boundary_nodes[b]] = f[b];
        const Eigen::VectorXd Ku = op_.K * u;
        Eigen::VectorXd out(grid_->boundary_count());
        for (int b = 0; b < grid_->boundary_count(); ++b) {
            const int node = grid_->boundary_nodes[b];
            out[b] = Ku[node] + grid_->vol_weight[node] * u[node];
        }
        return out;
    }

    void build_full_factor() {
        // K + W on all nodes; SPD because the mass weights are positive everywhere.
        SparseMat B = op_.K;
        SparseMat W(grid_->box.count(), grid_->box.count());
        std::vector<Eigen::Triplet<double>> t;
        t.reserve(grid_->box.count());
        for (int node = 0; node < grid_->box.count(); ++node)
            t.emplace_back(node, node, grid_->vol_weight[node]);
        W.setFromTriplets(t.begin(), t.end());
        B += W;
        full_ = std::make_unique<Eigen::SimplicialLDLT<SparseMat>>();
        full_->compute(B);
        if (full_->info() != Eigen::Success) throw SolveError("screened operator factorization failed");
    }

    DomainGridPtr grid_;
    int dense_cap_;
    EllipticOperator op_;
    LinearSystem interior_;
    std::unique_ptr<Eigen::SimplicialLDLT<SparseMat>> full_;
    mutable std::optional<Eigen::MatrixXd> dense_gram_;
    mutable std::map<std::vector<int>, SubGram> sub_cache_;
};

struct OpNormResult {
    double value = 0.0;
    int iterations = 0;
    bool power_converged = false;  // false means the dense fallback decided
};

/// Operator norm from the Gamma0-based trace subspace into the dual space:
/// the largest generalized singular value of T, computed by power iteration
/// on the whitened normal matrix with a dense eigensolve fallback.
inline OpNormResult op_norm_detailed(const BoundaryOperatorMatrix& T, const TraceGram& gram,
                                     double rtol = 1e-8, int max_iter = 5000) {
    OpNormResult res;
    const int m = static_cast<int>(T.domain_basis.size());
    if (m == 0 || T.T.size() == 0 || T.T.cwiseAbs().maxCoeff() == 0.0) return res;

    const Eigen::MatrixXd Y = gram.apply_inverse_gram(T.T);  // M^-1 T
    Eigen::MatrixXd G = T.T.transpose() * Y;                 // T' M^-1 T
    G = 0.5 * (G + G.transpose());
    const auto& sub = gram.sub_gram(T.domain_basis);

    SplitMix64 rng(0x0b9d2c4fu);
    Eigen::VectorXd z(m);
    for (int i = 0; i < m; ++i) z[i] = rng.symmetric() + 0.05;
    double rho_prev = -1.0;
    for (int it = 0; it < max_iter; ++it) {
        Eigen::VectorXd Gz = G * z;
        const double num = z.dot(Gz);
        const double den = z.dot(sub.M0 * z);
        const double rho = num / den;
        res.iterations = it + 1;
        if (rho_prev >= 0.0 && std::abs(rho - rho_prev) <= rtol * std::max(rho, 1e-300)) {
            res.value = std::sqrt(std::max(0.0, rho));
            res.power_converged = true;
            return res;
        }
        rho_prev = rho;
        z = sub.chol.solve(Gz);
        const double nz = z.norm();
        if (!(nz > 0.0)) break;
        z /= nz;
    }
    // stagnation: dense generalized eigensolve of (G, M0)
    Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> es(G, sub.M0);
    res.value = std::sqrt(std::max(0.0, es.eigenvalues().maxCoeff()));
    return res;
}

inline double op_norm(const BoundaryOperatorMatrix& T, const TraceGram& gram, double rtol = 1e-8) {
    return op_norm_detailed(T, gram, rtol).value;
}

/// Monte Carlo lower estimate of the seminorm
///   p_m(L) = sup_{|f|_z <= m} ( |L(f)|_{-1/2} + |dL(f)|_op )
/// over K sampled Gamma0-supported traces. An under-approximation by
/// construction; the maximizing sample index is reported.
struct SeminormEstimate {
    double value = 0.0;
    int arg_sample = -1;
};

template <class Map>
SeminormEstimate seminorm_pm(const Map& map, const TraceGram& gram, const BoundaryPatches& patches,
                             double m, int samples, std::uint64_t seed) {
    if (!(m > 0.0)) throw ConfigError("seminorm_pm: radius must be positive");
    if (samples < 1) throw ConfigError("seminorm_pm: need at least one sample");
    SeminormEstimate best;
    SplitMix64 rng(seed);
    const int nb = gram.grid().boundary_count();
    for (int s = 0; s < samples; ++s) {
        Eigen::VectorXd f = Eigen::VectorXd::Zero(nb);
        for (int b : patches.gamma0) f[b] = rng.symmetric();
        const double zn = gram.z_norm(f);
        if (!(zn > 0.0)) continue;
        const double radius = (s % 2 == 0) ? m : m * rng.uniform();
        f *= radius / zn;
        const double val = gram.h_minus_half_norm(map.apply_functional(f)) + map.differential_norm(f);
        if (val > best.value) {
            best.value = val;
            best.arg_sample = s;
        }
    }
    return best;
}

} // namespace dtnprobe
