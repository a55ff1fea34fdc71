#include "stldecomp/conflicts.hpp"

#include "stldecomp/conic.hpp"

#include <algorithm>
#include <sstream>

namespace stldecomp {

operator_partition partition_operators(std::span<const task> tasks) {
    operator_partition p;
    for (int k = 0; k < static_cast<int>(tasks.size()); ++k)
        (tasks[k].op == temporal_op::always ? p.always : p.eventually).push_back(k);
    return p;
}

int conflict_families::y(const index_set& q) const {
    const auto it = std::find(Q.begin(), Q.end(), q);
    require(it != Q.end(), error_code::contract_violation, "conflict_families: set not in Q");
    return static_cast<int>(it - Q.begin()) + 1;
}

namespace {

bool strict_subset(const index_set& a, const index_set& b) {
    return a.size() < b.size() && std::includes(b.begin(), b.end(), a.begin(), a.end());
}

std::string set_text(const index_set& s) {
    std::ostringstream os;
    os << '{';
    for (std::size_t k = 0; k < s.size(); ++k) os << (k ? "," : "") << s[k];
    os << '}';
    return os.str();
}

std::vector<time_interval> intervals_of(std::span<const task> tasks, const index_set& s) {
    std::vector<time_interval> out;
    for (int k : s) out.push_back(tasks[k].interval);
    return out;
}

bool meets(std::span<const task> tasks, const index_set& s) {
    std::vector<polytope> sets;
    for (int k : s) sets.push_back(tasks[k].effective_set());
    return intersection_feasible(sets).feasible;
}

} // namespace

std::vector<index_set> maximal_sets(const std::vector<index_set>& sets) {
    std::vector<index_set> out;
    for (const auto& s : sets)
        if (std::none_of(sets.begin(), sets.end(), [&](const index_set& o) { return strict_subset(s, o); }))
            out.push_back(s);
    return out;
}

std::vector<index_set> minimal_sets(const std::vector<index_set>& sets) {
    std::vector<index_set> out;
    for (const auto& s : sets)
        if (std::none_of(sets.begin(), sets.end(), [&](const index_set& o) { return strict_subset(o, s); }))
            out.push_back(s);
    return out;
}

conflict_families build_families(std::span<const task> tasks, const family_options& opts) {
    const auto part = partition_operators(tasks);
    const int g = static_cast<int>(part.always.size());
    if (g > family_capacity) {
        std::ostringstream os;
        os << "build_families: " << g << " Always tasks on one edge exceed the enumeration cap of "
           << family_capacity;
        fail(error_code::capacity, os.str());
    }
    conflict_families f;
    for (unsigned mask = 1; mask < (1u << g); ++mask) {
        index_set s;
        for (int b = 0; b < g; ++b)
            if (mask & (1u << b)) s.push_back(part.always[b]);
        const auto ivs = intervals_of(tasks, s);
        const auto common = intersect(ivs);
        if (common) f.L.push_back(s);
        for (int d : part.eventually) {
            const auto& target = tasks[d].interval;
            if (union_covers(ivs, target)) f.C[d].push_back(s);
            if (common && common->contains(target)) f.D[d].push_back(s);
        }
    }
    // sets sorted by size then lexicographically for a stable layout
    auto order = [](std::vector<index_set>& v) {
        std::sort(v.begin(), v.end(), [](const index_set& a, const index_set& b) {
            return a.size() != b.size() ? a.size() < b.size() : a < b;
        });
    };
    order(f.L);
    f.L_max = maximal_sets(f.L);
    for (auto& [d, v] : f.C) {
        order(v);
        f.C_min[d] = minimal_sets(v);
    }
    for (auto& [d, v] : f.D) {
        order(v);
        f.D_max[d] = maximal_sets(v);
    }

    auto has_parametric = [&](const index_set& s) {
        return std::any_of(s.begin(), s.end(), [&](int k) { return tasks[k].parametric; });
    };
    auto add = [&](index_set s) {
        std::sort(s.begin(), s.end());
        if (!has_parametric(s)) return;
        if (std::find(f.Q.begin(), f.Q.end(), s) == f.Q.end()) f.Q.push_back(std::move(s));
    };
    for (const auto& [d, covers] : f.C_min)
        for (const auto& c : covers)
            for (int l : c) add({d, l});
    for (const auto& [d, spans] : f.D_max)
        for (const auto& s : spans) {
            index_set q = s;
            q.push_back(d);
            add(std::move(q));
        }
    for (const auto& l : f.L_max)
        if (opts.keep_singletons || l.size() > 1) add(l);
    return f;
}

conflict_report detect_conflicts_static(std::span<const task> tasks) {
    // representatives suffice: a conflicting set of type 1 or 3 has a conflicting
    // maximal superset, a conflicting cover of type 2 contains a conflicting minimal cover
    const auto f = build_families(tasks);
    conflict_report rep;
    for (const auto& l : f.L_max)
        if (!meets(tasks, l))
            rep.conflicts.push_back({conflict_type::always_intersection, std::nullopt, l,
                                     "Always tasks " + set_text(l) + " overlap in time but their truth sets are disjoint"});
    for (const auto& [d, covers] : f.C_min)
        for (const auto& c : covers) {
            const bool all_disjoint = std::all_of(c.begin(), c.end(), [&](int l) { return !meets(tasks, {d, l}); });
            if (all_disjoint)
                rep.conflicts.push_back({conflict_type::eventually_cover, d, c,
                                         "Eventually task " + std::to_string(d) + " is disjoint from every task of its cover " +
                                             set_text(c)});
        }
    for (const auto& [d, spans] : f.D_max)
        for (const auto& s : spans) {
            index_set q = s;
            q.push_back(d);
            std::sort(q.begin(), q.end());
            if (!meets(tasks, q))
                rep.conflicts.push_back({conflict_type::eventually_common, d, s,
                                         "Eventually task " + std::to_string(d) + " misses the common set of " + set_text(s)});
        }
    return rep;
}

double origin_margin_in_sum(std::span<const polytope> sets) {
    require(!sets.empty(), error_code::contract_violation, "origin_margin_in_sum: no sets");
    const int n = sets.front().dim();
    for (const auto& p : sets) {
        require(p.dim() == n, error_code::dimension_mismatch, "origin_margin_in_sum: mixed dimensions");
        if (p.is_empty()) return -1.0;
    }
    // maximise t: x_k inside set k with margin t, sum x_k = 0
    const int k = static_cast<int>(sets.size());
    const int tv = k * n;
    conic::builder b(tv + 1);
    b.set_cost(tv, -1.0);
    double span = 1.0;
    for (int s = 0; s < k; ++s) {
        const auto& p = sets[s];
        for (int r = 0; r < p.rows(); ++r) {
            const double an = p.A().row(r).norm();
            if (an == 0.0) continue;
            std::vector<conic::term> t;
            for (int j = 0; j < n; ++j)
                if (p.A()(r, j) != 0.0) t.push_back({s * n + j, p.A()(r, j) / an});
            t.push_back({tv, 1.0});
            b.add_leq(std::move(t), (p.z()[r] + p.A().row(r).dot(p.c())) / an);
        }
        const auto [lo, hi] = p.bounding_box();
        span = std::max(span, (hi - lo).norm());
    }
    for (int j = 0; j < n; ++j) {
        std::vector<conic::term> t;
        for (int s = 0; s < k; ++s) t.push_back({s * n + j, 1.0});
        b.add_eq(std::move(t), 0.0);
    }
    b.add_leq({{tv, 1.0}}, span);
    const auto res = conic::solve(b.build());
    if (res.st == conic::status::primal_infeasible) return -1.0; // cannot happen with free t, kept for safety
    require(res.ok(), error_code::solver_failure,
            std::string("origin_margin_in_sum: LP ended with status ") + conic::to_string(res.st));
    return res.x[tv];
}

conflict_report detect_cycle_conflicts(std::span<const cycle_leg> legs) {
    const int m = static_cast<int>(legs.size());
    require(m >= 3, error_code::contract_violation, "detect_cycle_conflicts: a cycle needs at least three legs");
    std::set<int> seen;
    for (int k = 0; k < m; ++k) {
        const auto& e = legs[k].along;
        const auto& nxt = legs[(k + 1) % m].along;
        require(e.from != e.to, error_code::contract_violation, "detect_cycle_conflicts: self loop in cycle");
        require(e.to == nxt.from, error_code::contract_violation, "detect_cycle_conflicts: legs do not form a closed walk");
        require(seen.insert(e.from).second, error_code::contract_violation, "detect_cycle_conflicts: repeated node");
        const auto& on = legs[k].t.on;
        require(canonical(on.i, on.j) == e.key(), error_code::contract_violation,
                "detect_cycle_conflicts: task not bound to its leg");
    }
    std::vector<int> ev;
    for (int k = 0; k < m; ++k)
        if (legs[k].t.op == temporal_op::eventually) ev.push_back(k);
    require(ev.size() <= 1, error_code::contract_violation,
            "detect_cycle_conflicts: at most one Eventually task per cycle is supported");

    std::vector<polytope> sets;
    std::vector<time_interval> g_ivs;
    for (int k = 0; k < m; ++k) {
        const auto& l = legs[k];
        const polytope s = l.t.effective_set();
        sets.push_back(l.t.on.i == l.along.from ? s : s.reflected());
        if (l.t.op == temporal_op::always) g_ivs.push_back(l.t.interval);
    }
    conflict_report rep;
    index_set all(m);
    for (int k = 0; k < m; ++k) all[k] = k;
    if (ev.empty()) {
        if (!intersect(g_ivs)) return rep;
        if (origin_margin_in_sum(sets) < -feasibility_tol)
            rep.conflicts.push_back({conflict_type::cycle_always, std::nullopt, all,
                                     "Always tasks around the cycle overlap in time but cannot sum to zero"});
    } else {
        const auto common = intersect(g_ivs);
        if (!common || !common->contains(legs[ev[0]].t.interval)) return rep;
        if (origin_margin_in_sum(sets) < -feasibility_tol)
            rep.conflicts.push_back({conflict_type::cycle_eventually, ev[0], all,
                                     "Eventually task around the cycle cannot close it within the Always window"});
    }
    return rep;
}

} // namespace stldecomp
