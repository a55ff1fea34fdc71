#pragma once

// Communication graph (radius + tokens), task graph, tree paths, the
// bookkeeping of which edges carry decomposed tasks, and the edge-computing
// graph whose nodes are those edges.

#include "stldecomp/tasks.hpp"

#include <map>
#include <optional>
#include <set>
#include <span>
#include <utility>
#include <vector>

namespace stldecomp {

// undirected edge stored as (min, max)
using edge_key = std::pair<int, int>;

edge_key canonical(int a, int b);
// +1 when (from, to) runs along the canonical orientation, -1 otherwise
int orientation(int from, int to);

struct agent {
    int id = 0;
    vec state;
    mat selection; // p = S x

    vec position() const { return selection * state; }
};

void validate_selection(const mat& S);

struct graph_pair {
    std::vector<int> agents; // ascending ids
    std::set<edge_key> comm_edges;
    std::map<edge_key, std::vector<int>> task_edges; // task indices; (i,i) for independent tasks
    std::set<edge_key> tokens;
    double radius = 0.0;

    bool is_comm_edge(int a, int b) const { return comm_edges.count(canonical(a, b)) > 0; }
    std::vector<int> comm_neighbors(int i) const;
};

// tokens selecting a BFS spanning tree of the proximity graph (root: lowest id,
// neighbours visited in ascending id order)
std::set<edge_key> spanning_tree_tokens(std::span<const agent> agents, double radius);

graph_pair build_graphs(std::span<const agent> agents, std::span<const task> tasks, double radius,
                        const std::optional<std::set<edge_key>>& tokens = std::nullopt);

struct directed_edge {
    int from = 0;
    int to = 0;

    edge_key key() const { return canonical(from, to); }
    int sign() const { return orientation(from, to); }
    bool operator==(const directed_edge&) const = default;
};

struct path {
    std::vector<int> nodes;
    std::vector<directed_edge> edges;

    int length() const { return static_cast<int>(edges.size()); }
};

path find_path(const graph_pair& g, int i, int j);

// Truth set meets the ball ||S e|| <= r_c (relative positions reachable while
// communicating).
bool communication_consistent(const polytope& truth_set, const mat& S, double radius);

struct decomposition_index {
    std::vector<int> inconsistent;             // task indices, row-block order
    std::vector<path> paths;                   // one per inconsistent task
    std::vector<edge_key> edges;               // edges used by some path (ascending)
    std::map<edge_key, std::vector<int>> routed; // positions into `inconsistent`
    std::map<edge_key, std::vector<int>> fixed;  // consistent collaborative tasks kept on the edge

    bool empty() const { return inconsistent.empty(); }
    int pre_existing(const edge_key& e) const;
    // 1-based local index K_rs + k + 1 of the k-th routed task
    int local_index(const edge_key& e, int position) const;
};

decomposition_index build_decomposition_index(const graph_pair& g, std::span<const task> tasks, const mat& S);

struct theta_graph {
    std::vector<edge_key> nodes;
    std::vector<std::vector<int>> neighbors;

    int edge_count() const;
};

theta_graph edge_computing_graph(const decomposition_index& index);

// true when the undirected graph has a cycle (union-find)
bool has_cycle(const std::set<edge_key>& edges);

} // namespace stldecomp
