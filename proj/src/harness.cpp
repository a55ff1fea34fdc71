#include "stldecomp/harness.hpp"

#include <algorithm>
#include <chrono>
#include <functional>
#include <numeric>
#include <sstream>

namespace stldecomp {

const char* to_string(run_status st) {
    switch (st) {
    case run_status::decomposed: return "decomposed";
    case run_status::nothing_to_do: return "nothing_to_do";
    case run_status::input_conflict: return "input_conflict";
    case run_status::infeasible: return "infeasible";
    case run_status::solver_failure: return "solver_failure";
    }
    return "unknown";
}

int decomposition_result::exit_code() const {
    switch (status) {
    case run_status::decomposed:
    case run_status::nothing_to_do: return verification && !verification->passed() ? 4 : 0;
    case run_status::input_conflict: return 2;
    case run_status::infeasible: return 3;
    case run_status::solver_failure: return 4;
    }
    return 4;
}

int verification_report::samples_passed() const {
    int s = 0;
    for (const auto& t : tasks) s += t.passed;
    return s;
}

int verification_report::samples_total() const {
    int s = 0;
    for (const auto& t : tasks) s += t.total;
    return s;
}

// ---------------------------------------------------------------------------
// input checks

std::vector<std::vector<int>> simple_cycles(const std::set<edge_key>& edges, int max_length) {
    std::map<int, std::vector<int>> adj;
    for (const auto& [a, b] : edges) {
        if (a == b) continue;
        adj[a].push_back(b);
        adj[b].push_back(a);
    }
    for (auto& [v, nb] : adj) std::sort(nb.begin(), nb.end());
    std::vector<std::vector<int>> out;
    std::vector<int> pathv;
    std::set<int> on_path;
    std::function<void(int, int)> dfs = [&](int start, int v) {
        for (int w : adj[v]) {
            if (w == start && pathv.size() >= 3 && pathv[1] < pathv.back()) out.push_back(pathv);
            if (w <= start || on_path.count(w) || static_cast<int>(pathv.size()) >= max_length) continue;
            pathv.push_back(w);
            on_path.insert(w);
            dfs(start, w);
            on_path.erase(w);
            pathv.pop_back();
        }
    };
    for (const auto& [s, nb] : adj) {
        pathv = {s};
        on_path = {s};
        dfs(s, s);
    }
    return out;
}

namespace {

// tasks of one edge, all read in the canonical orientation
std::vector<task> canonical_tasks(std::span<const task> tasks, const std::vector<int>& idx) {
    std::vector<task> out;
    for (int k : idx) {
        const auto& t = tasks[k];
        out.push_back(t.on.i > t.on.j ? reversed(t) : t);
    }
    return out;
}

std::string describe(const conflict& c) {
    std::ostringstream os;
    os << "type " << static_cast<int>(c.type) << ": " << c.message;
    return os.str();
}

} // namespace

input_check check_scenario(const scenario& sc, const graph_pair& g) {
    input_check out;
    for (const auto& [key, idx] : g.task_edges) {
        const auto local = canonical_tasks(sc.tasks, idx);
        auto rep = detect_conflicts_static(local);
        if (rep.clean()) continue;
        for (auto& c : rep.conflicts)
            for (auto& w : c.witness) w = idx[w];
        out.edge_conflicts[key] = std::move(rep);
    }
    std::set<edge_key> collaborative;
    for (const auto& [key, idx] : g.task_edges)
        if (key.first != key.second) collaborative.insert(key);
    for (const auto& cyc : simple_cycles(collaborative)) {
        const int L = static_cast<int>(cyc.size());
        std::vector<const std::vector<int>*> options(L);
        for (int k = 0; k < L; ++k) options[k] = &g.task_edges.at(canonical(cyc[k], cyc[(k + 1) % L]));
        // every choice of one task per leg with at most one Eventually task
        std::vector<int> pick(L, 0);
        int combos = 0;
        while (combos < max_cycle_combinations) {
            int eventually = 0;
            for (int k = 0; k < L; ++k) eventually += sc.tasks[(*options[k])[pick[k]]].op == temporal_op::eventually;
            if (eventually <= 1) {
                ++combos;
                std::vector<cycle_leg> legs;
                std::vector<int> chosen;
                for (int k = 0; k < L; ++k) {
                    chosen.push_back((*options[k])[pick[k]]);
                    legs.push_back({sc.tasks[chosen.back()], {cyc[k], cyc[(k + 1) % L]}});
                }
                for (auto& c : detect_cycle_conflicts(legs).conflicts) out.cycle_conflicts.push_back({cyc, chosen, c});
            }
            int k = 0;
            while (k < L && ++pick[k] == static_cast<int>(options[k]->size())) pick[k++] = 0;
            if (k == L) break;
        }
        ++out.cycles_checked;
    }
    out.inconsistent = build_decomposition_index(g, sc.tasks, sc.selection).inconsistent;
    return out;
}

std::string input_check::summary(const scenario& sc) const {
    std::ostringstream os;
    for (const auto& [key, rep] : edge_conflicts)
        for (const auto& c : rep.conflicts) {
            os << "edge (" << key.first << "," << key.second << ") " << describe(c) << " [";
            for (std::size_t k = 0; k < c.witness.size(); ++k) os << (k ? ", " : "") << sc.tasks[c.witness[k]].id;
            os << "]\n";
        }
    for (const auto& f : cycle_conflicts) {
        os << "cycle";
        for (int v : f.nodes) os << " " << v;
        os << " " << describe(f.found) << " [";
        for (std::size_t k = 0; k < f.task_index.size(); ++k) os << (k ? ", " : "") << sc.tasks[f.task_index[k]].id;
        os << "]\n";
    }
    return os.str();
}

// ---------------------------------------------------------------------------
// verification

vec sample_point(const polytope& p, std::mt19937_64& rng) {
    const auto& vs = p.vertices();
    if (vs.size() == 1) return vs.front();
    const auto [lo, hi] = p.bounding_box();
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int k = 0; k < rejection_limit; ++k) {
        vec x(lo.size());
        for (int j = 0; j < x.size(); ++j) x[j] = lo[j] + (hi[j] - lo[j]) * u(rng);
        if (h_value(p, x) >= 0.0) return x;
    }
    // thin set: random convex combination of the vertices
    std::exponential_distribution<double> e(1.0);
    vec w(vs.size());
    for (auto& x : w) x = e(rng);
    w /= w.sum();
    vec x = vec::Zero(lo.size());
    for (std::size_t k = 0; k < vs.size(); ++k) x += w[k] * vs[k];
    return x;
}

std::vector<task> inflate_scales(std::span<const task> psi_bar, double factor) {
    std::vector<task> out(psi_bar.begin(), psi_bar.end());
    for (auto& t : out)
        if (t.parametric && t.eta) t.eta->scale *= factor;
    return out;
}

namespace {

// Piecewise-linear signal meeting every collaborative task of psi_bar and the
// independent tasks of the root agent; nullopt when some required
// intersection is empty on the construction grid.
std::optional<state_signal> build_witness(const graph_pair& g, int state_dim, std::span<const task> controlled,
                                          const std::map<int, vec>& initial) {
    std::vector<double> ends;
    for (const auto& t : controlled) {
        ends.push_back(t.interval.a);
        ends.push_back(t.interval.b);
    }
    std::sort(ends.begin(), ends.end());
    ends.erase(std::unique(ends.begin(), ends.end(), [](double a, double b) { return std::abs(a - b) <= time_tol; }),
               ends.end());
    std::vector<double> times;
    for (std::size_t k = 0; k < ends.size(); ++k) {
        if (k) times.push_back(0.5 * (ends[k - 1] + ends[k]));
        times.push_back(ends[k]);
    }
    std::sort(times.begin(), times.end());
    if (times.size() == 1) times.push_back(times.front() + 1.0);

    const int root = g.agents.front();
    // group by canonical edge; (root, root) holds the root's own tasks
    std::map<edge_key, std::vector<task>> groups;
    for (const auto& t : controlled) {
        const task c = t.on.i > t.on.j ? reversed(t) : t;
        groups[canonical(c.on.i, c.on.j)].push_back(c);
    }
    std::map<edge_key, std::vector<vec>> value; // per group, per time
    for (const auto& [key, ts] : groups) {
        const int T = static_cast<int>(times.size());
        std::vector<std::vector<polytope>> required(T);
        for (const auto& t : ts)
            if (t.op == temporal_op::always)
                for (int k = 0; k < T; ++k)
                    if (t.interval.contains(times[k])) required[k].push_back(t.effective_set());
        // Eventually tasks: first grid time where everything still intersects
        for (const auto& t : ts) {
            if (t.op != temporal_op::eventually) continue;
            bool placed = false;
            for (int k = 0; k < T && !placed; ++k) {
                if (!t.interval.contains(times[k])) continue;
                auto trial = required[k];
                trial.push_back(t.effective_set());
                if (intersection_feasible(std::span<const polytope>(trial)).feasible) {
                    required[k] = std::move(trial);
                    placed = true;
                }
            }
            if (!placed) return std::nullopt;
        }
        auto& pts = value[key];
        for (int k = 0; k < T; ++k) {
            if (required[k].empty()) {
                pts.push_back(key.first == key.second ? initial.at(root)
                                                      : vec(initial.at(key.second) - initial.at(key.first)));
                continue;
            }
            const auto r = intersection_feasible(std::span<const polytope>(required[k]));
            if (!r.feasible) return std::nullopt;
            pts.push_back(*r.witness);
        }
    }

    state_signal sig;
    sig.agent_ids = g.agents;
    sig.state_dim = state_dim;
    sig.times = times;
    std::map<int, std::vector<int>> adj;
    for (const auto& [a, b] : g.comm_edges) {
        adj[a].push_back(b);
        adj[b].push_back(a);
    }
    for (std::size_t k = 0; k < times.size(); ++k) {
        std::map<int, vec> x;
        const auto own = value.find({root, root});
        x[root] = own != value.end() ? own->second[k] : initial.at(root);
        std::vector<int> queue{root};
        for (std::size_t q = 0; q < queue.size(); ++q) {
            const int a = queue[q];
            for (int b : adj[a]) {
                if (x.count(b)) continue;
                const edge_key key = canonical(a, b);
                const auto it = value.find(key);
                vec e = it != value.end() ? it->second[k] : vec(initial.at(key.second) - initial.at(key.first));
                x[b] = key.first == a ? vec(x[a] + e) : vec(x[a] - e);
                queue.push_back(b);
            }
        }
        vec stacked(static_cast<Eigen::Index>(g.agents.size()) * state_dim);
        for (std::size_t i = 0; i < g.agents.size(); ++i) stacked.segment(i * state_dim, state_dim) = x.at(g.agents[i]);
        sig.states.push_back(std::move(stacked));
    }
    return sig;
}

} // namespace

verification_report verify_implication(const graph_pair& g, const mat& S, std::span<const task> psi,
                                       std::span<const task> psi_bar, const verify_options& opts) {
    verification_report rep;
    std::map<std::string, std::map<edge_key, const task*>> parts;
    for (const auto& t : psi_bar)
        if (t.parametric) {
            require(t.source.has_value() && t.eta.has_value(), error_code::contract_violation,
                    "verify_implication: parametric task " + t.id + " without source or parameter");
            parts[*t.source][canonical(t.on.i, t.on.j)] = &t;
        }

    std::mt19937_64 rng(opts.seed);
    for (const auto& orig : psi) {
        const auto it = parts.find(orig.id);
        if (it == parts.end()) continue;
        task_verification tv;
        tv.id = orig.id;
        tv.on = orig.on;
        const path p = find_path(g, orig.on.i, orig.on.j);
        std::vector<std::pair<polytope, int>> legs;
        vec center = vec::Zero(orig.truth_set.dim());
        for (const auto& de : p.edges) {
            const auto f = it->second.find(de.key());
            if (f == it->second.end()) {
                rep.failures.push_back(orig.id + ": no rewritten task on path edge (" + std::to_string(de.from) + "," +
                                       std::to_string(de.to) + ")");
                legs.clear();
                break;
            }
            const task& pt = *f->second;
            legs.emplace_back(pt.effective_set(), de.sign());
            tv.accuracy += pt.eta->scale;
            center += de.sign() * pt.eta->center;
        }
        if (legs.empty()) {
            rep.tasks.push_back(tv);
            continue;
        }
        const auto& B = orig.truth_set;
        tv.inclusion_residual =
            inclusion_check({B.A(), B.z(), {center, tv.accuracy}}, {B.A(), B.z(), {B.c(), 1.0}}).max_violation;
        tv.worst_h = std::numeric_limits<double>::infinity();
        for (int s = 0; s < opts.samples; ++s) {
            vec sum = vec::Zero(B.dim());
            for (const auto& [set, sign] : legs) sum += sign * sample_point(set, rng);
            const double h = h_value(B, sum);
            tv.worst_h = std::min(tv.worst_h, h);
            tv.passed += h >= -soundness_tol;
            ++tv.total;
        }
        if (tv.passed < tv.total) {
            std::ostringstream os;
            os << orig.id << ": " << tv.total - tv.passed << " of " << tv.total
               << " chain-sum samples leave the original truth set (worst h " << tv.worst_h << ")";
            rep.failures.push_back(os.str());
        }
        rep.tasks.push_back(tv);
    }

    // structural checks on psi_bar
    std::map<edge_key, std::vector<int>> by_edge;
    for (std::size_t k = 0; k < psi_bar.size(); ++k) {
        const auto& t = psi_bar[k];
        by_edge[canonical(t.on.i, t.on.j)].push_back(static_cast<int>(k));
        if (t.on.independent()) continue;
        if (!g.is_comm_edge(t.on.i, t.on.j)) {
            rep.edges_in_comm_graph = false;
            rep.failures.push_back(t.id + ": edge is not a communication edge");
        } else if (!communication_consistent(t.effective_set(), S, g.radius)) {
            rep.communication_consistent = false;
            rep.failures.push_back(t.id + ": truth set misses the communication ball");
        }
    }
    for (const auto& [key, idx] : by_edge) {
        const auto local = canonical_tasks(psi_bar, idx);
        const auto c = detect_conflicts_static(local);
        if (c.clean()) continue;
        rep.conflict_free = false;
        for (const auto& f : c.conflicts)
            rep.failures.push_back("edge (" + std::to_string(key.first) + "," + std::to_string(key.second) +
                                   ") of the rewritten specification: " + describe(f));
    }

    if (opts.witness_signal && !psi_bar.empty()) {
        const int root = g.agents.front();
        auto controlled = [&](std::span<const task> ts) {
            std::vector<task> out;
            for (const auto& t : ts)
                if (!t.on.independent() || t.on.i == root) out.push_back(t);
            return out;
        };
        const auto cb = controlled(psi_bar);
        const auto co = controlled(psi);
        if (!cb.empty()) {
            std::map<int, vec> initial;
            const int n = cb.front().truth_set.dim();
            for (int a : g.agents) initial[a] = vec::Zero(n);
            std::vector<task> all = cb;
            all.insert(all.end(), co.begin(), co.end());
            // the signal spans every interval of both specifications; psi-only
            // windows get no constraint beyond those of psi_bar
            auto sig = build_witness(g, n, cb, initial);
            if (sig) {
                double lo = sig->times.front(), hi = sig->times.back();
                for (const auto& t : co) {
                    lo = std::min(lo, t.interval.a);
                    hi = std::max(hi, t.interval.b);
                }
                if (lo < sig->times.front()) {
                    sig->times.insert(sig->times.begin(), lo);
                    sig->states.insert(sig->states.begin(), sig->states.front());
                }
                if (hi > sig->times.back()) {
                    sig->times.push_back(hi);
                    sig->states.push_back(sig->states.back());
                }
                robustness_options ro;
                ro.refinement = opts.refinement;
                rep.witness_built = true;
                rep.witness_robustness_rewritten = robustness_conjunction(*sig, cb, 0.0, ro);
                rep.witness_robustness_original = co.empty() ? 0.0 : robustness_conjunction(*sig, co, 0.0, ro);
                if (rep.witness_robustness_rewritten >= -witness_tol && rep.witness_robustness_original < -witness_tol) {
                    rep.witness_implication = false;
                    std::ostringstream os;
                    os << "witness signal satisfies the rewritten specification (robustness "
                       << rep.witness_robustness_rewritten << ") but not the original one (robustness "
                       << rep.witness_robustness_original << ")";
                    rep.failures.push_back(os.str());
                }
            } else {
                rep.failures.push_back("no witness signal could be built for the rewritten specification");
            }
        }
    }
    return rep;
}

// ---------------------------------------------------------------------------
// pipeline

decomposition_result decompose(const scenario& sc, const run_options& opts) {
    decomposition_result r;
    r.sc = sc;
    r.mode = opts.mode.value_or(sc.solver.mode);
    if (opts.seed) r.sc.seed = *opts.seed;
    r.graphs = build_graphs(sc.agents, sc.tasks, sc.radius, sc.tokens);
    r.input = check_scenario(sc, r.graphs);
    if (!r.input.clean()) {
        r.status = run_status::input_conflict;
        r.message = "the input specification contains conflicting conjunctions:\n" + r.input.summary(sc);
        return r;
    }
    r.problem = assemble(r.graphs, sc.tasks, sc.selection, sc.solver.assembly);

    auto verify = [&] {
        if (!opts.verify) return;
        verify_options vo;
        vo.samples = opts.verify_samples;
        vo.seed = r.sc.seed;
        vo.refinement = sc.solver.robustness_refinement;
        r.verification = verify_implication(r.graphs, sc.selection, sc.tasks, r.psi_bar, vo);
    };

    if (r.problem.empty()) {
        r.status = run_status::nothing_to_do;
        r.message = "every task is communication consistent; nothing to decompose";
        r.psi_bar = sc.tasks;
        verify();
        return r;
    }

    const auto start = std::chrono::steady_clock::now();
    bool infeasible = false;
    try {
        if (r.mode == solve_mode::centralized) {
            r.sol = solve_centralized(r.problem);
            infeasible = r.sol.st == solve_status::infeasible;
        } else {
            auto d = sc.solver.decentralized;
            if (opts.max_iter) d.max_iter = *opts.max_iter;
            r.decentralized = run_decentralized(r.problem, d);
            r.sol = r.decentralized->sol;
            if (!r.decentralized->converged && !r.decentralized->sound) {
                // tell an infeasible program from a slow run
                infeasible = solve_centralized(r.problem).st == solve_status::infeasible;
                if (!infeasible) {
                    std::ostringstream os;
                    os << "decentralized run stopped after " << r.sol.iterations << " iterations with max penalty "
                       << r.decentralized->max_rho.back() << " (tolerance " << d.rho_tol << ")";
                    r.status = run_status::solver_failure;
                    r.message = os.str();
                }
            }
        }
    } catch (const error& e) {
        r.status = run_status::solver_failure;
        r.message = e.what();
        r.solve_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        return r;
    }
    r.solve_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    if (infeasible) {
        r.status = run_status::infeasible;
        // which decomposed tasks fail even when decomposed alone
        const auto& idx = r.problem.index.inconsistent;
        for (int k : idx) {
            std::vector<task> one;
            for (std::size_t j = 0; j < sc.tasks.size(); ++j)
                if (std::find(idx.begin(), idx.end(), static_cast<int>(j)) == idx.end() || static_cast<int>(j) == k)
                    one.push_back(sc.tasks[j]);
            const auto g1 = build_graphs(sc.agents, one, sc.radius, sc.tokens);
            const auto p1 = assemble(g1, one, sc.selection, sc.solver.assembly);
            if (solve_centralized(p1).st == solve_status::infeasible) r.infeasible_tasks.push_back(sc.tasks[k].id);
        }
        std::ostringstream os;
        os << "no decomposition satisfies the path constraints; ";
        if (r.infeasible_tasks.empty()) {
            os << "every task is decomposable alone, the tasks sharing path edges are jointly infeasible";
        } else {
            os << "cannot be decomposed with a positive accuracy:";
            for (const auto& id : r.infeasible_tasks) os << " " << id;
        }
        r.message = os.str();
        return r;
    }
    if (r.status == run_status::solver_failure && !r.message.empty()) return r;

    r.extracted = extract_tasks(r.problem, sc.tasks, r.sol);
    r.psi_bar = r.extracted->psi_bar;
    r.status = run_status::decomposed;
    std::ostringstream os;
    os << r.problem.inconsistent.size() << " task(s) decomposed over " << r.problem.edges.size()
       << " edge(s), total accuracy " << r.sol.objective;
    if (r.decentralized && !r.decentralized->converged)
        os << " (penalties not settled after " << r.sol.iterations << " iterations; using the exact iterate "
           << r.decentralized->best_iteration << ")";
    r.message = os.str();
    verify();
    return r;
}

} // namespace stldecomp
