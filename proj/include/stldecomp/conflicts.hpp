#pragma once

// Conflicting conjunctions over one edge (interval families and their
// representatives) and over cycles of the task graph.

#include "stldecomp/graphs.hpp"

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace stldecomp {

// sorted indices into the task list of one edge
using index_set = std::vector<int>;

constexpr int family_capacity = 15; // max Always tasks per edge (power-set enumeration)

struct operator_partition {
    std::vector<int> always;
    std::vector<int> eventually;
};

operator_partition partition_operators(std::span<const task> tasks);

struct family_options {
    // keep single-index sets from the maximal intersection family in Q
    bool keep_singletons = false;
};

struct conflict_families {
    std::vector<index_set> L;                   // Always sets with a common time
    std::vector<index_set> L_max;               // maximal members of L
    std::map<int, std::vector<index_set>> C;     // d -> Always sets covering [a_d, b_d] by union
    std::map<int, std::vector<index_set>> C_min; // minimal members of C(d)
    std::map<int, std::vector<index_set>> D;     // d -> Always sets whose intersection contains [a_d, b_d]
    std::map<int, std::vector<index_set>> D_max; // maximal members of D(d)
    std::vector<index_set> Q;                   // sets needing a common witness point

    int xi_count() const { return static_cast<int>(Q.size()); }
    // 1-based auxiliary-variable index of a member of Q
    int y(const index_set& q) const;
};

// throws capacity when more than family_capacity Always tasks share the edge
conflict_families build_families(std::span<const task> tasks, const family_options& opts = {});

// members of `sets` that are not a strict subset (maximal) / superset (minimal) of another member
std::vector<index_set> maximal_sets(const std::vector<index_set>& sets);
std::vector<index_set> minimal_sets(const std::vector<index_set>& sets);

enum class conflict_type {
    always_intersection = 1, // some Always tasks share a time but not a point
    eventually_cover = 2,    // an Eventually task misses every Always task covering its window
    eventually_common = 3,   // an Eventually task misses the common set of Always tasks spanning its window
    cycle_always = 4,        // Always tasks around a cycle cannot close it
    cycle_eventually = 5,    // one Eventually task around a cycle cannot close it
};

struct conflict {
    conflict_type type;
    std::optional<int> eventually; // d for types 2, 3, 5
    index_set witness;             // task indices (edge-local) or leg positions (cycles)
    std::string message;
};

struct conflict_report {
    std::vector<conflict> conflicts;

    bool clean() const { return conflicts.empty(); }
};

// Conflicts of types 1-3 on fixed truth sets (parametric tasks use their current eta).
conflict_report detect_conflicts_static(std::span<const task> tasks);

// One task per edge of a closed walk; `along` is the traversal direction.
struct cycle_leg {
    task t;
    directed_edge along;
};

// margin of the origin inside the Minkowski sum of the sets (negative: outside)
double origin_margin_in_sum(std::span<const polytope> sets);

// Types 4-5. Throws contract_violation for a malformed cycle or operator pattern.
conflict_report detect_cycle_conflicts(std::span<const cycle_leg> legs);

} // namespace stldecomp
