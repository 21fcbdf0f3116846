#pragma once

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <cstdint>
#include <memory>
#include <vector>

#include "dtnprobe/errors.hpp"

namespace dtnprobe {

enum class NodeClass : std::uint8_t { Interior, Boundary, Exterior };

/// Uniform node grid over an axis-aligned box.
struct Grid3 {
    int nx = 0, ny = 0, nz = 0;
    double h = 0.0;
    Eigen::Vector3d origin = Eigen::Vector3d::Zero();

    int count() const { return nx * ny * nz; }
    int id(int i, int j, int k) const { return i + nx * (j + ny * k); }
    void ijk(int node, int& i, int& j, int& k) const {
        i = node % nx;
        j = (node / nx) % ny;
        k = node / (nx * ny);
    }
    Eigen::Vector3d coord(int node) const {
        int i, j, k;
        ijk(node, i, j, k);
        return origin + h * Eigen::Vector3d(i, j, k);
    }
    bool contains(int i, int j, int k) const {
        return i >= 0 && i < nx && j >= 0 && j < ny && k >= 0 && k < nz;
    }
};

/// Cube geometry descriptor. The reference domain is the axis-aligned cube
/// [0,side]^3; problems are posed on its node grid.
struct CubeGeometry {
    double side = 1.0;
};

/// Masked structured grid for the computational domain: node classification,
/// boundary index set and trapezoidal quadrature weights (exact for the cube).
struct DomainGrid {
    int n = 3;             // spatial dimension
    int nodes_per_axis = 0;
    double side = 1.0;
    double h = 0.0;
    Grid3 box;

    std::vector<NodeClass> node_class;  // per node
    std::vector<int> interior_nodes;    // node ids, ascending
    std::vector<int> boundary_nodes;    // node ids, ascending (the set Γ)
    std::vector<int> interior_index;    // node id -> interior ordinal, -1 otherwise
    std::vector<int> boundary_index;    // node id -> boundary ordinal, -1 otherwise

    Eigen::VectorXd vol_weight;   // per node; tensor-trapezoid, sums to side^3
    Eigen::VectorXd surf_weight;  // per boundary ordinal; sums to 6*side^2

    int interior_count() const { return static_cast<int>(interior_nodes.size()); }
    int boundary_count() const { return static_cast<int>(boundary_nodes.size()); }

    bool on_box_edge(int i) const { return i == 0 || i == nodes_per_axis - 1; }
};

using DomainGridPtr = std::shared_ptr<const DomainGrid>;

inline DomainGridPtr build_domain(int n, int N, const CubeGeometry& geom = {}) {
    if (n < 3) throw ConfigError("build_domain: n >= 3 required");
    if (n != 3) throw ConfigError("build_domain: only n = 3 grids are implemented");
    if (N < 8) throw ConfigError("build_domain: need at least 8 nodes per axis");
    if (!(geom.side > 0.0)) throw ConfigError("build_domain: cube side must be positive");

    auto g = std::make_shared<DomainGrid>();
    g->n = n;
    g->nodes_per_axis = N;
    g->side = geom.side;
    g->h = geom.side / (N - 1);
    g->box = Grid3{N, N, N, g->h, Eigen::Vector3d::Zero()};

    const int total = g->box.count();
    g->node_class.resize(total);
    g->interior_index.assign(total, -1);
    g->boundary_index.assign(total, -1);
    g->vol_weight.resize(total);

    const double h3 = g->h * g->h * g->h;
    for (int k = 0; k < N; ++k)
        for (int j = 0; j < N; ++j)
            for (int i = 0; i < N; ++i) {
                const int node = g->box.id(i, j, k);
                const int rim = (g->on_box_edge(i) ? 1 : 0) + (g->on_box_edge(j) ? 1 : 0) +
                                (g->on_box_edge(k) ? 1 : 0);
                if (rim == 0) {
                    g->node_class[node] = NodeClass::Interior;
                    g->interior_index[node] = static_cast<int>(g->interior_nodes.size());
                    g->interior_nodes.push_back(node);
                } else {
                    g->node_class[node] = NodeClass::Boundary;
                    g->boundary_index[node] = static_cast<int>(g->boundary_nodes.size());
                    g->boundary_nodes.push_back(node);
                }
                g->vol_weight[node] = h3 * std::pow(0.5, rim);
            }

    // Per-face trapezoid weights; a node on several faces accumulates each face's share.
    g->surf_weight = Eigen::VectorXd::Zero(g->boundary_count());
    const double h2 = g->h * g->h;
    for (int b = 0; b < g->boundary_count(); ++b) {
        int i, j, k;
        g->box.ijk(g->boundary_nodes[b], i, j, k);
        const std::array<std::array<int, 2>, 3> tangent = {{{j, k}, {i, k}, {i, j}}};
        const std::array<int, 3> idx = {i, j, k};
        for (int axis = 0; axis < 3; ++axis) {
            if (!g->on_box_edge(idx[axis])) continue;
            const int rim = (g->on_box_edge(tangent[axis][0]) ? 1 : 0) +
                            (g->on_box_edge(tangent[axis][1]) ? 1 : 0);
            g->surf_weight[b] += h2 * std::pow(0.5, rim);
        }
    }
    return g;
}

enum class Face { XMinus, XPlus, YMinus, YPlus, ZMinus, ZPlus };

inline const char* face_name(Face f) {
    switch (f) {
        case Face::XMinus: return "x-";
        case Face::XPlus: return "x+";
        case Face::YMinus: return "y-";
        case Face::YPlus: return "y+";
        case Face::ZMinus: return "z-";
        case Face::ZPlus: return "z+";
    }
    return "?";
}

inline Face face_from_name(const std::string& s) {
    if (s == "x-") return Face::XMinus;
    if (s == "x+") return Face::XPlus;
    if (s == "y-") return Face::YMinus;
    if (s == "y+") return Face::YPlus;
    if (s == "z-") return Face::ZMinus;
    if (s == "z+") return Face::ZPlus;
    throw ConfigError("unknown face '" + s + "' (expected one of x-,x+,y-,y+,z-,z+)");
}

inline int face_axis(Face f) { return static_cast<int>(f) / 2; }
inline bool face_positive(Face f) { return static_cast<int>(f) % 2 == 1; }

inline Eigen::Vector3d face_normal(Face f) {
    Eigen::Vector3d nrm = Eigen::Vector3d::Zero();
    nrm[face_axis(f)] = face_positive(f) ? 1.0 : -1.0;
    return nrm;
}

/// Nested boundary patches Γ0 ⊂ Γ1 on one cube face, with the cutoff χ
/// (quintic bump in the distance from the anchor: 1 inside r0, 0 outside r1).
struct BoundaryPatches {
    DomainGridPtr grid;
    Face face = Face::ZPlus;
    Eigen::Vector3d x0 = Eigen::Vector3d::Zero();  // probe anchor (a face node)
    int x0_node = -1;
    int x0_boundary = -1;        // = sweep anchor x_* ordinal
    double r0 = 0.0, r1 = 0.0;

    std::vector<int> gamma0;     // boundary ordinals, ascending
    std::vector<int> gamma1;
    std::vector<std::uint8_t> in_gamma0;  // per boundary ordinal
    std::vector<std::uint8_t> in_gamma1;
    Eigen::VectorXd chi;         // per boundary ordinal
};

/// C^2 bump: 1 for s <= r0, 0 for s >= r1, quintic smoothstep between.
inline double cutoff_bump(double s, double r0, double r1) {
    if (s <= r0) return 1.0;
    if (s >= r1) return 0.0;
    const double u = (s - r0) / (r1 - r0);
    return 1.0 - u * u * u * (10.0 + u * (-15.0 + 6.0 * u));
}

inline BoundaryPatches build_patches(DomainGridPtr grid, Face face, double r0, double r1) {
    const double half = grid->side / 2.0;
    if (!(grid->h < r0)) throw ConfigError("build_patches: r0 must exceed the grid spacing");
    if (!(r0 < r1)) throw ConfigError("build_patches: need r0 < r1");
    if (!(r1 < half)) throw ConfigError("build_patches: r1 reaches a cube edge");
    if (r1 - r0 < grid->h)
        throw ConfigError("build_patches: grid too coarse to separate the patches (need r1 - r0 >= h)");

    BoundaryPatches p;
    p.grid = grid;
    p.face = face;
    p.r0 = r0;
    p.r1 = r1;

    // Anchor at the node nearest the face center (the center itself for odd N).
    const int N = grid->nodes_per_axis;
    const int mid = (N - 1) / 2;
    const int axis = face_axis(face);
    const int wall = face_positive(face) ? N - 1 : 0;
    std::array<int, 3> ijk = {mid, mid, mid};
    ijk[axis] = wall;
    p.x0_node = grid->box.id(ijk[0], ijk[1], ijk[2]);
    p.x0_boundary = grid->boundary_index[p.x0_node];
    p.x0 = grid->box.coord(p.x0_node);

    const int nb = grid->boundary_count();
    p.in_gamma0.assign(nb, 0);
    p.in_gamma1.assign(nb, 0);
    p.chi = Eigen::VectorXd::Zero(nb);
    for (int b = 0; b < nb; ++b) {
        const double s = (grid->box.coord(grid->boundary_nodes[b]) - p.x0).norm();
        p.chi[b] = cutoff_bump(s, r0, r1);
        if (s <= r0) {
            p.in_gamma0[b] = 1;
            p.gamma0.push_back(b);
        }
        if (s <= r1) {
            p.in_gamma1[b] = 1;
            p.gamma1.push_back(b);
        }
    }
    return p;
}

/// Ω0 = Ω ∪ B(x0,r0): the cube grid plus the masked half-ball cap beyond the
/// probe face. Solves on Ω0 use the dense member indexing defined here.
struct ExtendedDomain {
    DomainGridPtr parent;
    BoundaryPatches patches;
    Grid3 box;                       // parent box extended along the face normal
    Eigen::Vector3d xi = Eigen::Vector3d::Zero();  // exterior direction at x0
    double delta0 = 0.0;             // admissible singularity offset bound, r0/2

    std::vector<std::uint8_t> member;   // per extended node id
    std::vector<int> members;           // extended node ids, ascending
    std::vector<int> member_index;      // extended node id -> dense ordinal, -1
    std::vector<int> interior_nodes;    // extended node ids with all 6 neighbors members
    std::vector<int> boundary_nodes;    // the discrete ∂Ω0
    std::vector<int> interior_index;    // extended id -> ordinal, -1
    std::vector<int> boundary_index;    // extended id -> ordinal, -1
    std::vector<int> parent_node;       // extended id -> parent node id, -1 beyond the cube

    int ext_id_of_parent(int parent_id) const {
        int i, j, k;
        parent->box.ijk(parent_id, i, j, k);
        const std::array<int, 3> sh = shift();
        return box.id(i + sh[0], j + sh[1], k + sh[2]);
    }
    std::array<int, 3> shift() const {
        std::array<int, 3> s = {0, 0, 0};
        for (int a = 0; a < 3; ++a)
            s[a] = static_cast<int>(std::lround((parent->box.origin[a] - box.origin[a]) / box.h));
        return s;
    }
};

inline ExtendedDomain extend_domain(DomainGridPtr grid, const BoundaryPatches& patches) {
    ExtendedDomain e;
    e.parent = grid;
    e.patches = patches;
    e.xi = face_normal(patches.face);
    e.delta0 = patches.r0 / 2.0;

    const double half = grid->side / 2.0;
    if (!(patches.r0 < half))
        throw ConfigError("extend_domain: cap radius leaves the bounding box");

    const int extra = static_cast<int>(std::ceil(patches.r0 / grid->h)) + 1;
    const int N = grid->nodes_per_axis;
    const int axis = face_axis(patches.face);
    e.box = grid->box;
    Eigen::Vector3d origin = grid->box.origin;
    std::array<int, 3> dims = {N, N, N};
    dims[axis] += extra;
    if (!face_positive(patches.face)) origin[axis] -= extra * grid->h;
    e.box.nx = dims[0];
    e.box.ny = dims[1];
    e.box.nz = dims[2];
    e.box.origin = origin;

    const int total = e.box.count();
    e.member.assign(total, 0);
    e.member_index.assign(total, -1);
    e.interior_index.assign(total, -1);
    e.boundary_index.assign(total, -1);
    e.parent_node.assign(total, -1);

    const double wall = face_positive(patches.face)
                            ? grid->box.origin[axis] + grid->side
                            : grid->box.origin[axis];
    const double tol = 1e-12 * grid->side;

    for (int node = 0; node < total; ++node) {
        const Eigen::Vector3d x = e.box.coord(node);
        bool in_cube = true;
        for (int a = 0; a < 3; ++a)
            if (x[a] < grid->box.origin[a] - tol || x[a] > grid->box.origin[a] + grid->side + tol)
                in_cube = false;
        const double beyond = face_positive(patches.face) ? x[axis] - wall : wall - x[axis];
        const bool in_cap = beyond > tol && (x - patches.x0).norm() <= patches.r0 + tol;
        if (in_cube || in_cap) {
            e.member[node] = 1;
            e.member_index[node] = static_cast<int>(e.members.size());
            e.members.push_back(node);
        }
    }

    // Dirichlet nodes of Ω0 are members with a missing neighbor.
    for (int node : e.members) {
        int i, j, k;
        e.box.ijk(node, i, j, k);
        bool interior = true;
        const int d[6][3] = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
        for (const auto& s : d) {
            const int ii = i + s[0], jj = j + s[1], kk = k + s[2];
            if (!e.box.contains(ii, jj, kk) || !e.member[e.box.id(ii, jj, kk)]) {
                interior = false;
                break;
            }
        }
        if (interior) {
            e.interior_index[node] = static_cast<int>(e.interior_nodes.size());
            e.interior_nodes.push_back(node);
        } else {
            e.boundary_index[node] = static_cast<int>(e.boundary_nodes.size());
            e.boundary_nodes.push_back(node);
        }
    }

    // Crosswalk for nodes shared with the parent cube grid.
    const std::array<int, 3> sh = e.shift();
    for (int pk = 0; pk < N; ++pk)
        for (int pj = 0; pj < N; ++pj)
            for (int pi = 0; pi < N; ++pi) {
                const int pid = grid->box.id(pi, pj, pk);
                const int eid = e.box.id(pi + sh[0], pj + sh[1], pk + sh[2]);
                e.parent_node[eid] = pid;
            }
    return e;
}

/// Offset singularity location x0 + δ·ξ, validated against the cap geometry.
inline Eigen::Vector3d place_singularity(const ExtendedDomain& ext, double delta) {
    const double h = ext.parent->h;
    if (delta < 4.0 * h)
        throw ConfigError("place_singularity: delta below 4h; the probe singularity is unresolved");
    if (delta > ext.delta0)
        throw ConfigError("place_singularity: singularity too far (delta > r0/2)");
    const Eigen::Vector3d y = ext.patches.x0 + delta * ext.xi;

    // Flat-face geometry: dist(y, cube) = delta along the normal.
    const double dist_cube = std::abs((y - ext.patches.x0).dot(ext.xi));
    if (dist_cube < 0.999 * delta)
        throw ConfigError("place_singularity: cone condition failed");
    // Distance to the continuum ∂Ω0 (the spherical part of the cap).
    const double dist_shell = ext.patches.r0 - delta;
    if (dist_shell + 1e-12 < ext.patches.r0 / 2.0)
        throw ConfigError("place_singularity: singularity too close to the cap shell");
    return y;
}

} // namespace dtnprobe
