#pragma once

// H-polytopes {x : A (x - c) <= z}, similarity transforms and the linear
// conditions for inclusion and intersection of scaled copies.

#include "stldecomp/errors.hpp"

#include <Eigen/Dense>

#include <optional>
#include <span>
#include <vector>

namespace stldecomp {

using vec = Eigen::VectorXd;
using mat = Eigen::MatrixXd;

constexpr double vertex_dedup_tol = 1e-9;
constexpr double feasibility_tol = 1e-7;

// eta = [center; scale]; the scaled copy of P(A, 0, z) is P(A, center, scale z)
struct similarity {
    vec center;
    double scale = 1.0;

    vec stacked() const;
    static similarity from_stacked(const vec& eta);
};

class polytope {
public:
    polytope() = default;
    // throws dimension_mismatch, unbounded_polytope. An infeasible description
    // is accepted and reported through is_empty().
    polytope(mat A, vec c, vec z);

    const mat& A() const { return A_; }
    const vec& c() const { return c_; }
    const vec& z() const { return z_; }
    int dim() const { return static_cast<int>(A_.cols()); }
    int rows() const { return static_cast<int>(A_.rows()); }

    bool is_empty() const { return vertices_.empty(); }
    // throws empty_set for an empty polytope
    const std::vector<vec>& vertices() const;

    // same shape centred at the origin
    polytope base() const;
    // P(A, eta.center, eta.scale * z)
    polytope scaled(const similarity& eta) const;
    // {-x : x in P}
    polytope reflected() const;
    polytope translated(const vec& offset) const;

    // axis-aligned bounding box of the vertices
    std::pair<vec, vec> bounding_box() const;

private:
    mat A_;
    vec c_;
    vec z_;
    std::vector<vec> vertices_;
};

// min_k (z_k - a_k'(x - c)); x in P iff h >= 0
double h_value(const polytope& p, const vec& x);
bool contains(const polytope& p, const vec& x, double tol = vertex_dedup_tol);

// throws unbounded_polytope / empty_set
std::vector<vec> enumerate_vertices(const mat& A, const vec& c, const vec& z);

// planar regular polygon with unit facet normals at angles 2 pi k / n and
// every facet at distance beta from the centre
polytope regular_polytope(int n_sides, double beta, const vec& center);

// G_k = [I | v_k] for every vertex v_k of P(A, 0, z); G_k eta is the k-th
// vertex of the scaled copy
struct generator_matrix {
    std::vector<mat> blocks;

    static generator_matrix from_shape(const mat& A, const vec& z);
    std::vector<vec> apply(const similarity& eta) const;
};

// P(A, sum c_i, sum alpha_i z); throws empty_sum for an empty list
polytope minkowski_sum_similar(const mat& A, const vec& z, std::span<const similarity> etas);

// A shape P(A, 0, z) together with the similarity placing it.
struct placed_shape {
    mat A;
    vec z;
    similarity eta;

    polytope realize() const;
};

// Linear inclusion test: the scaled copy 1 lies in the scaled copy 2 iff
// M eta_1 - Z eta_2 <= 0, with M stacking A_2 G_k over the vertices of shape 1
// and Z = 1 (x) [A_2 | z_2].
struct inclusion_blocks {
    mat M;
    mat Z;
    int vertex_count = 0;
};

inclusion_blocks make_inclusion_blocks(const mat& A1, const vec& z1, const mat& A2, const vec& z2);

struct inclusion_result {
    bool holds = false;
    vec residual;
    double max_violation = 0.0;
};

inclusion_result inclusion_check(const placed_shape& inner, const placed_shape& outer,
                                 double tol = feasibility_tol);

struct intersection_result {
    bool feasible = false;
    std::optional<vec> witness;
    double margin = 0.0; // largest common inscribed-ball radius (negative if disjoint)
};

// nonempty common intersection, decided by a Chebyshev-centre LP
intersection_result intersection_feasible(std::span<const polytope> sets, double tol = feasibility_tol);
intersection_result intersection_feasible(const polytope& a, const polytope& b, double tol = feasibility_tol);

} // namespace stldecomp
