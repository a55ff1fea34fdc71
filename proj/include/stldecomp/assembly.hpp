#pragma once

// Parametric tasks along decomposition paths and the convex program that
// chooses their parameters: per-edge local constraint sets plus the shared
// Minkowski-inclusion rows coupling the edges of each path.

#include "stldecomp/conflicts.hpp"
#include "stldecomp/conic.hpp"

#include <map>
#include <span>
#include <string>
#include <vector>

namespace stldecomp {

struct assembly_options {
    double xi_max = 0.0;  // 0: automatic
    double eta_max = 0.0; // 0: automatic
    bool keep_singletons = false;
};

// sync time for a decomposed Eventually task: explicit value or interval midpoint
double sync_time_of(const task& t);

// Parametric copy of an inconsistent task for one directed path edge, stored in
// the canonical (min, max) orientation of that edge.
task make_parametric(const task& original, const directed_edge& along);

// One routed inconsistent task seen from an edge.
struct shared_block {
    int param = 0;      // parametric slot on the edge
    int position = 0;   // position in the inconsistent-task order
    int row_offset = 0; // first shared row of this task
    int path_length = 1;
    mat M;              // inclusion rows acting on the canonical eta of the slot
    vec t;              // Z [c; 1] / path length
};

struct linear_row {
    std::vector<conic::term> terms;
    double rhs = 0.0;
};

struct edge_problem {
    edge_key edge;
    int n = 0;                     // relative-state dimension
    std::vector<task> tasks;       // fixed tasks first, then parametric slots
    int fixed_count = 0;
    std::vector<int> positions;    // per parametric slot
    std::vector<int> signs;        // traversal sign per parametric slot
    conflict_families families;
    int chi_dim = 0;
    vec cost;                      // minimised: -1 on every scale
    std::vector<linear_row> rows;  // local linear constraints
    std::vector<std::vector<conic::affine>> cones;
    std::vector<shared_block> blocks;
    int shared_rows = 0;

    int param_count() const { return static_cast<int>(positions.size()); }
    int eta_offset(int slot) const { return slot * (n + 1); }
    int xi_offset(int q) const { return param_count() * (n + 1) + q * n; }
    int inclusion_rows() const; // sum of m_ij over routed tasks

    vec eta(const vec& chi, int slot) const { return chi.segment(eta_offset(slot), n + 1); }
    double accuracy_part(const vec& chi) const; // sum of scales on this edge

    mat T() const;
    vec t() const;
    // T chi - t (all shared rows)
    vec shared_term(const vec& chi) const;
    // max violation of the local linear and cone constraints
    double local_violation(const vec& chi) const;
};

struct decomposition_problem {
    decomposition_index index;
    std::vector<task> inconsistent;     // originals, in position order
    std::vector<inclusion_blocks> inclusion;
    std::vector<int> row_offset;        // per position
    int shared_rows = 0;
    std::vector<edge_problem> edges;    // in index.edges order
    theta_graph theta;
    int n = 0;
    double radius = 0.0;
    mat selection;
    double xi_max = 0.0;
    double eta_max = 0.0;

    bool empty() const { return edges.empty(); }
    int edge_position(const edge_key& e) const;
    // sum over edges of (T chi - t)
    vec shared_residual(std::span<const vec> chi) const;
    // identity (all-consistent) decomposition rows: m_ij per position
    int rows_of(int position) const;
};

decomposition_problem assemble(const graph_pair& g, std::span<const task> tasks, const mat& S,
                               const assembly_options& opts = {});

} // namespace stldecomp
