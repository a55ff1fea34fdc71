#include "stldecomp/graphs.hpp"

#include "stldecomp/conic.hpp"

#include <algorithm>
#include <deque>
#include <functional>
#include <numeric>
#include <sstream>

namespace stldecomp {

edge_key canonical(int a, int b) {
    return a < b ? edge_key{a, b} : edge_key{b, a};
}

int orientation(int from, int to) {
    return from < to ? 1 : -1;
}

void validate_selection(const mat& S) {
    require(S.rows() > 0 && S.rows() <= S.cols(), error_code::dimension_mismatch,
            "selection matrix must be n_p x n with n_p <= n");
    for (int r = 0; r < S.rows(); ++r) {
        int ones = 0;
        for (int c = 0; c < S.cols(); ++c) {
            require(S(r, c) == 0.0 || S(r, c) == 1.0, error_code::contract_violation,
                    "selection matrix entries must be 0 or 1");
            ones += S(r, c) == 1.0;
        }
        require(ones == 1, error_code::contract_violation, "selection matrix row must select one state");
    }
    for (int c = 0; c < S.cols(); ++c)
        require(S.col(c).sum() <= 1.0, error_code::contract_violation, "selection matrix selects a state twice");
}

std::vector<int> graph_pair::comm_neighbors(int i) const {
    std::vector<int> out;
    for (const auto& [a, b] : comm_edges) {
        if (a == i) out.push_back(b);
        if (b == i) out.push_back(a);
    }
    std::sort(out.begin(), out.end());
    return out;
}

namespace {

std::map<int, std::vector<int>> adjacency(const std::vector<int>& ids, const std::set<edge_key>& edges) {
    std::map<int, std::vector<int>> adj;
    for (int id : ids) adj[id];
    for (const auto& [a, b] : edges) {
        adj[a].push_back(b);
        adj[b].push_back(a);
    }
    for (auto& [id, n] : adj) std::sort(n.begin(), n.end());
    return adj;
}

bool connected(const std::vector<int>& ids, const std::set<edge_key>& edges) {
    if (ids.empty()) return true;
    auto adj = adjacency(ids, edges);
    std::set<int> seen{ids.front()};
    std::deque<int> q{ids.front()};
    while (!q.empty()) {
        const int u = q.front();
        q.pop_front();
        for (int v : adj[u])
            if (seen.insert(v).second) q.push_back(v);
    }
    return seen.size() == ids.size();
}

std::set<edge_key> proximity_edges(std::span<const agent> agents, double radius) {
    std::set<edge_key> out;
    for (std::size_t a = 0; a < agents.size(); ++a)
        for (std::size_t b = a + 1; b < agents.size(); ++b)
            if ((agents[a].position() - agents[b].position()).norm() <= radius)
                out.insert(canonical(agents[a].id, agents[b].id));
    return out;
}

std::vector<int> sorted_ids(std::span<const agent> agents) {
    std::vector<int> ids;
    for (const auto& a : agents) ids.push_back(a.id);
    std::sort(ids.begin(), ids.end());
    for (std::size_t k = 1; k < ids.size(); ++k)
        require(ids[k] != ids[k - 1], error_code::contract_violation, "duplicate agent id " + std::to_string(ids[k]));
    return ids;
}

} // namespace

bool has_cycle(const std::set<edge_key>& edges) {
    std::map<int, int> parent;
    std::function<int(int)> find = [&](int x) {
        if (!parent.count(x)) parent[x] = x;
        return parent[x] == x ? x : parent[x] = find(parent[x]);
    };
    for (const auto& [a, b] : edges) {
        if (a == b) continue;
        const int ra = find(a), rb = find(b);
        if (ra == rb) return true;
        parent[ra] = rb;
    }
    return false;
}

std::set<edge_key> spanning_tree_tokens(std::span<const agent> agents, double radius) {
    const auto ids = sorted_ids(agents);
    const auto prox = proximity_edges(agents, radius);
    if (!connected(ids, prox)) fail(error_code::connectivity, "proximity graph is disconnected");
    auto adj = adjacency(ids, prox);
    std::set<edge_key> tree;
    if (ids.empty()) return tree;
    std::set<int> seen{ids.front()};
    std::deque<int> q{ids.front()};
    while (!q.empty()) {
        const int u = q.front();
        q.pop_front();
        for (int v : adj[u])
            if (seen.insert(v).second) {
                tree.insert(canonical(u, v));
                q.push_back(v);
            }
    }
    return tree;
}

graph_pair build_graphs(std::span<const agent> agents, std::span<const task> tasks, double radius,
                        const std::optional<std::set<edge_key>>& tokens) {
    require(radius > 0.0, error_code::contract_violation, "communication radius must be positive");
    graph_pair g;
    g.agents = sorted_ids(agents);
    g.radius = radius;
    for (const auto& a : agents) {
        validate_selection(a.selection);
        require(a.selection.cols() == a.state.size(), error_code::dimension_mismatch,
                "agent " + std::to_string(a.id) + ": selection does not match state");
    }
    g.tokens = tokens ? *tokens : spanning_tree_tokens(agents, radius);
    std::map<int, const agent*> by_id;
    for (const auto& a : agents) by_id[a.id] = &a;
    for (const auto& e : g.tokens) {
        require(by_id.count(e.first) && by_id.count(e.second), error_code::dangling_reference,
                "token references an unknown agent");
        const double d = (by_id[e.first]->position() - by_id[e.second]->position()).norm();
        if (d <= radius) g.comm_edges.insert(e);
    }
    if (!connected(g.agents, g.comm_edges)) fail(error_code::connectivity, "communication graph is disconnected");
    if (has_cycle(g.comm_edges))
        fail(error_code::connectivity, "communication graph has a cycle; tokens must select a tree");
    for (std::size_t k = 0; k < tasks.size(); ++k) {
        const auto& b = tasks[k].on;
        require(by_id.count(b.i) && by_id.count(b.j), error_code::dangling_reference,
                "task " + tasks[k].id + " references an unknown agent");
        g.task_edges[canonical(b.i, b.j)].push_back(static_cast<int>(k));
    }
    return g;
}

path find_path(const graph_pair& g, int i, int j) {
    require(i != j, error_code::contract_violation, "find_path: endpoints coincide");
    auto adj = adjacency(g.agents, g.comm_edges);
    require(adj.count(i) && adj.count(j), error_code::dangling_reference, "find_path: unknown agent");
    std::map<int, int> prev{{i, i}};
    std::deque<int> q{i};
    while (!q.empty()) {
        const int u = q.front();
        q.pop_front();
        if (u == j) break;
        for (int v : adj[u])
            if (!prev.count(v)) {
                prev[v] = u;
                q.push_back(v);
            }
    }
    if (!prev.count(j)) {
        std::ostringstream os;
        os << "find_path: agent " << j << " unreachable from " << i;
        fail(error_code::connectivity, os.str());
    }
    path p;
    for (int v = j; v != i; v = prev[v]) p.nodes.push_back(v);
    p.nodes.push_back(i);
    std::reverse(p.nodes.begin(), p.nodes.end());
    for (std::size_t k = 0; k + 1 < p.nodes.size(); ++k) p.edges.push_back({p.nodes[k], p.nodes[k + 1]});
    return p;
}

bool communication_consistent(const polytope& truth_set, const mat& S, double radius) {
    require(S.cols() == truth_set.dim(), error_code::dimension_mismatch, "consistency: selection/state mismatch");
    if (truth_set.is_empty()) return false;
    const int n = truth_set.dim();
    // maximise t: a'(e - c) + t ||a|| <= z,  ||S e|| <= r_c - t
    conic::builder b(n + 1);
    b.set_cost(n, -1.0);
    for (int k = 0; k < truth_set.rows(); ++k) {
        const double an = truth_set.A().row(k).norm();
        if (an == 0.0) continue;
        std::vector<conic::term> t;
        for (int j = 0; j < n; ++j) t.push_back({j, truth_set.A()(k, j) / an});
        t.push_back({n, 1.0});
        b.add_leq(std::move(t), (truth_set.z()[k] + truth_set.A().row(k).dot(truth_set.c())) / an);
    }
    std::vector<conic::affine> cone{{{{n, -1.0}}, radius}};
    for (int r = 0; r < S.rows(); ++r) {
        conic::affine ex;
        for (int j = 0; j < n; ++j)
            if (S(r, j) != 0.0) ex.terms.push_back({j, S(r, j)});
        cone.push_back(ex);
    }
    b.add_soc(cone);
    b.add_leq({{n, 1.0}}, radius);
    const auto res = conic::solve(b.build());
    if (!res.ok()) fail(error_code::solver_failure, std::string("consistency test: ") + conic::to_string(res.st));
    return res.x[n] >= -feasibility_tol;
}

int decomposition_index::pre_existing(const edge_key& e) const {
    const auto it = fixed.find(e);
    return it == fixed.end() ? 0 : static_cast<int>(it->second.size());
}

int decomposition_index::local_index(const edge_key& e, int position) const {
    const auto it = routed.find(e);
    require(it != routed.end(), error_code::contract_violation, "local_index: edge carries no decomposed task");
    const auto pos = std::find(it->second.begin(), it->second.end(), position);
    require(pos != it->second.end(), error_code::contract_violation, "local_index: task not routed on edge");
    return pre_existing(e) + static_cast<int>(pos - it->second.begin()) + 1;
}

decomposition_index build_decomposition_index(const graph_pair& g, std::span<const task> tasks, const mat& S) {
    decomposition_index idx;
    std::vector<char> inconsistent(tasks.size(), 0);
    for (std::size_t k = 0; k < tasks.size(); ++k) {
        const auto& t = tasks[k];
        if (t.on.independent()) continue;
        const bool bad = !g.is_comm_edge(t.on.i, t.on.j) ||
                         !communication_consistent(t.effective_set(), S, g.radius);
        if (!bad) continue;
        inconsistent[k] = 1;
        idx.inconsistent.push_back(static_cast<int>(k));
        idx.paths.push_back(find_path(g, t.on.i, t.on.j));
    }
    std::set<edge_key> used;
    for (std::size_t p = 0; p < idx.paths.size(); ++p)
        for (const auto& e : idx.paths[p].edges) {
            used.insert(e.key());
            idx.routed[e.key()].push_back(static_cast<int>(p));
        }
    idx.edges.assign(used.begin(), used.end());
    for (std::size_t k = 0; k < tasks.size(); ++k) {
        const auto& t = tasks[k];
        if (t.on.independent() || inconsistent[k]) continue;
        const auto e = canonical(t.on.i, t.on.j);
        if (used.count(e)) idx.fixed[e].push_back(static_cast<int>(k));
    }
    return idx;
}

int theta_graph::edge_count() const {
    int n = 0;
    for (const auto& nb : neighbors) n += static_cast<int>(nb.size());
    return n / 2;
}

theta_graph edge_computing_graph(const decomposition_index& index) {
    theta_graph th;
    th.nodes = index.edges;
    th.neighbors.resize(th.nodes.size());
    for (std::size_t a = 0; a < th.nodes.size(); ++a)
        for (std::size_t b = a + 1; b < th.nodes.size(); ++b) {
            const auto& x = th.nodes[a];
            const auto& y = th.nodes[b];
            if (x.first == y.first || x.first == y.second || x.second == y.first || x.second == y.second) {
                th.neighbors[a].push_back(static_cast<int>(b));
                th.neighbors[b].push_back(static_cast<int>(a));
            }
        }
    return th;
}

} // namespace stldecomp
