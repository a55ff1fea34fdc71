#include "stldecomp/assembly.hpp"

#include <algorithm>
#include <cmath>

namespace stldecomp {

double sync_time_of(const task& t) {
    if (t.sync_time) {
        require(t.interval.contains(*t.sync_time), error_code::contract_violation,
                "task " + t.id + ": sync time outside its interval");
        return *t.sync_time;
    }
    return 0.5 * (t.interval.a + t.interval.b);
}

task make_parametric(const task& original, const directed_edge& along) {
    require(!original.parametric, error_code::contract_violation, "make_parametric: task is already parametric");
    const int sign = along.sign();
    const auto key = along.key();
    task p;
    p.id = original.id + "@" + std::to_string(key.first) + "-" + std::to_string(key.second);
    p.op = original.op;
    if (original.op == temporal_op::eventually) {
        const double tb = sync_time_of(original);
        p.interval = {tb, tb};
        p.sync_time = tb;
    } else {
        p.interval = original.interval;
    }
    p.on = {key.first, key.second};
    const auto& B = original.truth_set;
    p.truth_set = polytope(sign * B.A(), vec::Zero(B.dim()), B.z());
    p.parametric = true;
    p.origin = original.on;
    p.source = original.id;
    // neutral start: the scaled-down original centre share
    p.eta = similarity{vec::Zero(B.dim()), 0.0};
    return p;
}

int edge_problem::inclusion_rows() const {
    int m = 0;
    for (const auto& b : blocks) m += static_cast<int>(b.M.rows());
    return m;
}

double edge_problem::accuracy_part(const vec& chi) const {
    double s = 0.0;
    for (int k = 0; k < param_count(); ++k) s += chi[eta_offset(k) + n];
    return s;
}

mat edge_problem::T() const {
    mat out = mat::Zero(shared_rows, chi_dim);
    for (const auto& b : blocks) out.block(b.row_offset, eta_offset(b.param), b.M.rows(), n + 1) = b.M;
    return out;
}

vec edge_problem::t() const {
    vec out = vec::Zero(shared_rows);
    for (const auto& b : blocks) out.segment(b.row_offset, b.t.size()) = b.t;
    return out;
}

vec edge_problem::shared_term(const vec& chi) const {
    require(chi.size() == chi_dim, error_code::dimension_mismatch, "edge_problem: chi dimension");
    vec out = vec::Zero(shared_rows);
    for (const auto& b : blocks)
        out.segment(b.row_offset, b.M.rows()) = b.M * chi.segment(eta_offset(b.param), n + 1) - b.t;
    return out;
}

double edge_problem::local_violation(const vec& chi) const {
    double v = 0.0;
    for (const auto& r : rows) {
        double s = -r.rhs;
        for (const auto& [j, a] : r.terms) s += a * chi[j];
        v = std::max(v, s);
    }
    for (const auto& c : cones) {
        auto eval = [&](const conic::affine& e) {
            double s = e.constant;
            for (const auto& [j, a] : e.terms) s += a * chi[j];
            return s;
        };
        double nrm = 0.0;
        for (std::size_t k = 1; k < c.size(); ++k) nrm += std::pow(eval(c[k]), 2);
        v = std::max(v, std::sqrt(nrm) - eval(c[0]));
    }
    return v;
}

int decomposition_problem::edge_position(const edge_key& e) const {
    for (std::size_t k = 0; k < edges.size(); ++k)
        if (edges[k].edge == e) return static_cast<int>(k);
    fail(error_code::contract_violation, "decomposition_problem: edge not in the decomposition");
}

vec decomposition_problem::shared_residual(std::span<const vec> chi) const {
    require(chi.size() == edges.size(), error_code::dimension_mismatch, "shared_residual: one vector per edge");
    vec out = vec::Zero(shared_rows);
    for (std::size_t k = 0; k < edges.size(); ++k) out += edges[k].shared_term(chi[k]);
    return out;
}

int decomposition_problem::rows_of(int position) const { return static_cast<int>(inclusion[position].M.rows()); }

namespace {

// 10 x (largest centre coordinate + largest set extent)
double automatic_bound(std::span<const task> tasks) {
    double centre = 0.0, extent = 0.0;
    for (const auto& t : tasks) {
        if (t.on.independent() || t.truth_set.is_empty()) continue;
        const auto set = t.parametric ? t.truth_set : t.effective_set();
        const auto [lo, hi] = set.bounding_box();
        centre = std::max(centre, set.c().cwiseAbs().maxCoeff());
        extent = std::max(extent, (hi - lo).maxCoeff());
    }
    return 10.0 * std::max(1.0, centre + extent);
}

void add_edge_constraints(edge_problem& ep, const mat& S, double radius, double xi_max, double eta_max) {
    const int n = ep.n;
    const int P = ep.param_count();
    ep.cost = vec::Zero(ep.chi_dim);
    for (int k = 0; k < P; ++k) ep.cost[ep.eta_offset(k) + n] = -1.0;

    for (int k = 0; k < P; ++k) {
        const int off = ep.eta_offset(k);
        const auto& shape = ep.tasks[ep.fixed_count + k].truth_set;
        // scale nonnegative
        ep.rows.push_back({{{off + n, -1.0}}, 0.0});
        // every vertex of the placed copy within communication range
        for (const auto& v : shape.vertices()) {
            std::vector<conic::affine> cone;
            cone.push_back({{}, radius});
            for (int r = 0; r < S.rows(); ++r) {
                conic::affine e;
                double sv = 0.0;
                for (int j = 0; j < n; ++j) {
                    if (S(r, j) != 0.0) e.terms.push_back({off + j, S(r, j)});
                    sv += S(r, j) * v[j];
                }
                if (sv != 0.0) e.terms.push_back({off + n, sv});
                cone.push_back(std::move(e));
            }
            ep.cones.push_back(std::move(cone));
        }
        std::vector<conic::affine> bound{{{}, eta_max}};
        for (int j = 0; j <= n; ++j) bound.push_back({{{off + j, 1.0}}, 0.0});
        ep.cones.push_back(std::move(bound));
    }

    // a common witness point for every conflict-prone set
    for (int q = 0; q < ep.families.xi_count(); ++q) {
        const int xo = ep.xi_offset(q);
        for (int l : ep.families.Q[q]) {
            const auto& t = ep.tasks[l];
            const mat& A = t.truth_set.A();
            for (int r = 0; r < A.rows(); ++r) {
                linear_row row;
                for (int j = 0; j < n; ++j)
                    if (A(r, j) != 0.0) row.terms.push_back({xo + j, A(r, j)});
                if (t.parametric) {
                    // A (xi - c) - alpha z <= 0
                    const int off = ep.eta_offset(l - ep.fixed_count);
                    for (int j = 0; j < n; ++j)
                        if (A(r, j) != 0.0) row.terms.push_back({off + j, -A(r, j)});
                    row.terms.push_back({off + n, -t.truth_set.z()[r]});
                    row.rhs = 0.0;
                } else {
                    row.rhs = t.truth_set.z()[r] + A.row(r).dot(t.truth_set.c());
                }
                ep.rows.push_back(std::move(row));
            }
        }
        std::vector<conic::affine> bound{{{}, xi_max}};
        for (int j = 0; j < n; ++j) bound.push_back({{{xo + j, 1.0}}, 0.0});
        ep.cones.push_back(std::move(bound));
    }
}

} // namespace

decomposition_problem assemble(const graph_pair& g, std::span<const task> tasks, const mat& S,
                               const assembly_options& opts) {
    decomposition_problem dp;
    dp.index = build_decomposition_index(g, tasks, S);
    dp.radius = g.radius;
    dp.selection = S;
    dp.theta = edge_computing_graph(dp.index);
    if (dp.index.empty()) return dp;

    dp.n = tasks[dp.index.inconsistent.front()].truth_set.dim();
    require(S.cols() == dp.n, error_code::dimension_mismatch, "assemble: selection matrix does not match the state");
    dp.xi_max = opts.xi_max > 0.0 ? opts.xi_max : automatic_bound(tasks);
    dp.eta_max = opts.eta_max > 0.0 ? opts.eta_max : automatic_bound(tasks);

    for (int p = 0; p < static_cast<int>(dp.index.inconsistent.size()); ++p) {
        const task& t = tasks[dp.index.inconsistent[p]];
        require(!t.parametric, error_code::contract_violation, "assemble: input task " + t.id + " is parametric");
        require(t.truth_set.dim() == dp.n, error_code::dimension_mismatch, "assemble: mixed task dimensions");
        dp.inconsistent.push_back(t);
        dp.inclusion.push_back(make_inclusion_blocks(t.truth_set.A(), t.truth_set.z(), t.truth_set.A(), t.truth_set.z()));
        dp.row_offset.push_back(dp.shared_rows);
        dp.shared_rows += static_cast<int>(dp.inclusion.back().M.rows());
    }

    for (const auto& e : dp.index.edges) {
        edge_problem ep;
        ep.edge = e;
        ep.n = dp.n;
        ep.shared_rows = dp.shared_rows;
        if (auto it = dp.index.fixed.find(e); it != dp.index.fixed.end())
            for (int k : it->second) {
                const task& t = tasks[k];
                ep.tasks.push_back(t.on.i == e.first ? t : reversed(t));
            }
        ep.fixed_count = static_cast<int>(ep.tasks.size());
        for (int p : dp.index.routed.at(e)) {
            const auto& path = dp.index.paths[p];
            const auto it = std::find_if(path.edges.begin(), path.edges.end(),
                                         [&](const directed_edge& d) { return d.key() == e; });
            require(it != path.edges.end(), error_code::internal_invariant, "assemble: routed edge missing from path");
            const int slot = ep.param_count();
            ep.tasks.push_back(make_parametric(dp.inconsistent[p], *it));
            ep.positions.push_back(p);
            ep.signs.push_back(it->sign());

            shared_block b;
            b.param = slot;
            b.position = p;
            b.row_offset = dp.row_offset[p];
            b.path_length = path.length();
            // traversal-frame eta = diag(sign I, 1) canonical eta
            b.M = dp.inclusion[p].M;
            b.M.leftCols(dp.n) *= it->sign();
            const auto& B = dp.inconsistent[p].truth_set;
            vec c1(dp.n + 1);
            c1 << B.c(), 1.0;
            b.t = dp.inclusion[p].Z * c1 / static_cast<double>(path.length());
            ep.blocks.push_back(std::move(b));
        }
        family_options fo;
        fo.keep_singletons = opts.keep_singletons;
        ep.families = build_families(ep.tasks, fo);
        ep.chi_dim = (dp.n + 1) * ep.param_count() + dp.n * ep.families.xi_count();
        add_edge_constraints(ep, S, dp.radius, dp.xi_max, dp.eta_max);
        dp.edges.push_back(std::move(ep));
    }
    return dp;
}

} // namespace stldecomp
