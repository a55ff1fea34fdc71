#include "stldecomp/solver.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <limits>
#include <sstream>
#include <thread>

namespace stldecomp {

const char* to_string(solve_status st) {
    switch (st) {
    case solve_status::optimal: return "optimal";
    case solve_status::infeasible: return "infeasible";
    case solve_status::iteration_limit: return "iteration_limit";
    }
    return "unknown";
}

namespace {

void add_local(conic::builder& b, const edge_problem& ep, int offset) {
    for (const auto& r : ep.rows) {
        auto terms = r.terms;
        for (auto& t : terms) t.first += offset;
        b.add_leq(std::move(terms), r.rhs);
    }
    for (const auto& c : ep.cones) {
        auto cone = c;
        for (auto& e : cone)
            for (auto& t : e.terms) t.first += offset;
        b.add_soc(cone);
    }
}

[[noreturn]] void conic_failure(const char* where, const conic::result& r) {
    std::ostringstream os;
    os << where << ": conic solver stopped with status " << conic::to_string(r.st) << " after " << r.iterations
       << " iterations (gap " << r.gap << ", primal residual " << r.primal_residual << ", dual residual "
       << r.dual_residual << ")";
    fail(error_code::solver_failure, os.str());
}

double total_accuracy(const decomposition_problem& dp, std::span<const vec> chi) {
    double s = 0.0;
    for (std::size_t k = 0; k < dp.edges.size(); ++k) s += dp.edges[k].accuracy_part(chi[k]);
    return s;
}

} // namespace

solution solve_centralized(const decomposition_problem& dp, const conic::settings& opts) {
    solution sol;
    if (dp.empty()) {
        sol.st = solve_status::optimal;
        return sol;
    }
    std::vector<int> offset;
    int total = 0;
    for (const auto& ep : dp.edges) {
        offset.push_back(total);
        total += ep.chi_dim;
    }
    conic::builder b(total);
    for (std::size_t k = 0; k < dp.edges.size(); ++k) {
        const auto& ep = dp.edges[k];
        for (int j = 0; j < ep.chi_dim; ++j)
            if (ep.cost[j] != 0.0) b.set_cost(offset[k] + j, ep.cost[j]);
    }
    // shared rows first so their multipliers sit at the start of z
    std::vector<std::vector<conic::term>> rows(dp.shared_rows);
    vec rhs = vec::Zero(dp.shared_rows);
    for (std::size_t k = 0; k < dp.edges.size(); ++k) {
        const auto& ep = dp.edges[k];
        for (const auto& blk : ep.blocks)
            for (int r = 0; r < blk.M.rows(); ++r) {
                for (int j = 0; j <= dp.n; ++j)
                    if (blk.M(r, j) != 0.0) rows[blk.row_offset + r].push_back({offset[k] + ep.eta_offset(blk.param) + j, blk.M(r, j)});
                rhs[blk.row_offset + r] += blk.t[r];
            }
    }
    for (int r = 0; r < dp.shared_rows; ++r) b.add_leq(std::move(rows[r]), rhs[r]);
    for (std::size_t k = 0; k < dp.edges.size(); ++k) add_local(b, dp.edges[k], offset[k]);

    const auto res = conic::solve(b.build(), opts);
    sol.iterations = res.iterations;
    if (res.st == conic::status::primal_infeasible) {
        sol.st = solve_status::infeasible;
        return sol;
    }
    if (!res.ok()) conic_failure("solve_centralized", res);
    sol.st = solve_status::optimal;
    const vec mu = res.z.head(dp.shared_rows);
    for (std::size_t k = 0; k < dp.edges.size(); ++k) {
        sol.chi.push_back(res.x.segment(offset[k], dp.edges[k].chi_dim));
        sol.rho.push_back(0.0);
        sol.mu.push_back(mu);
    }
    sol.objective = total_accuracy(dp, sol.chi);
    sol.max_shared_violation = dp.shared_residual(sol.chi).maxCoeff();
    return sol;
}

double step_size(const decentralized_options& o, int t) { return o.gamma0 / std::pow(1.0 + t, o.gamma_exponent); }

std::vector<char> coupling_rows(const decomposition_problem& dp) {
    std::vector<char> keep(dp.shared_rows, 0);
    for (std::size_t p = 0; p < dp.inclusion.size(); ++p) {
        const auto& b = dp.inclusion[p];
        const int m2 = static_cast<int>(b.M.rows()) / b.vertex_count;
        for (int i = 0; i < m2; ++i) {
            int best = 0;
            for (int k = 1; k < b.vertex_count; ++k)
                if (b.M(k * m2 + i, dp.n) > b.M(best * m2 + i, dp.n)) best = k;
            keep[dp.row_offset[p] + best * m2 + i] = 1;
        }
    }
    return keep;
}

edge_node::edge_node(const edge_problem& ep, double c_rho, double margin, const conic::settings& opts,
                     std::span<const char> coupled)
    : ep_(&ep), opts_(opts) {
    require(coupled.empty() || static_cast<int>(coupled.size()) == ep.shared_rows, error_code::dimension_mismatch,
            "edge_node: coupled-row mask length");
    auto is_coupled = [&](int row) { return coupled.empty() || coupled[row]; };
    const int rho = ep.chi_dim;
    conic::builder b(ep.chi_dim + 1);
    for (int j = 0; j < ep.chi_dim; ++j)
        if (ep.cost[j] != 0.0) b.set_cost(j, ep.cost[j] / c_rho);
    // cost divided by c_rho: the penalty gets unit weight, multipliers are rescaled
    b.set_cost(rho, 1.0);
    cost_scale_ = c_rho;
    b.add_leq({{rho, -1.0}}, 0.0);

    t_ = vec::Zero(ep.shared_rows);
    routed_mask_.assign(ep.shared_rows, 0);
    coupled_.resize(ep.shared_rows);
    for (int r = 0; r < ep.shared_rows; ++r) coupled_[r] = is_coupled(r);
    first_shared_ = b.num_leq();
    for (const auto& blk : ep.blocks)
        for (int r = 0; r < blk.M.rows(); ++r) {
            const int row = blk.row_offset + r;
            if (!coupled_[row]) continue;
            std::vector<conic::term> terms;
            for (int j = 0; j <= ep.n; ++j)
                if (blk.M(r, j) != 0.0) terms.push_back({ep.eta_offset(blk.param) + j, blk.M(r, j)});
            terms.push_back({rho, -1.0});
            t_[row] = blk.t[r] - margin / blk.path_length;
            b.add_leq(std::move(terms), t_[row]);
            routed_rows_.push_back(row);
            routed_mask_[row] = 1;
        }
    // the coupled rows this edge does not touch only bound rho from below
    int coupled_count = 0;
    for (char c : coupled_) coupled_count += c;
    if (static_cast<int>(routed_rows_.size()) < coupled_count) collapsed_row_ = b.add_leq({{rho, -1.0}}, 0.0);
    for (const auto& r : ep.rows) b.add_leq(r.terms, r.rhs);
    for (const auto& c : ep.cones) b.add_soc(c);
    prog_ = b.build();
}

edge_node::local_result edge_node::solve(const vec& consensus) const {
    const auto& ep = *ep_;
    require(consensus.size() == ep.shared_rows, error_code::dimension_mismatch, "edge_node: consensus dimension");
    conic::program prog = prog_;
    for (std::size_t k = 0; k < routed_rows_.size(); ++k)
        prog.h[first_shared_ + k] = t_[routed_rows_[k]] - consensus[routed_rows_[k]];
    int arg = -1;
    if (collapsed_row_ >= 0) {
        double best = 0.0;
        for (int r = 0; r < ep.shared_rows; ++r) {
            if (routed_mask_[r] || !coupled_[r]) continue;
            const double v = t_[r] - consensus[r];
            if (arg < 0 || v < best) {
                best = v;
                arg = r;
            }
        }
        prog.h[collapsed_row_] = best;
    }
    const auto res = conic::solve(prog, opts_);
    if (!res.ok()) conic_failure("edge_node::solve", res);
    local_result out;
    out.chi = res.x.head(ep.chi_dim);
    out.rho = std::max(0.0, res.x[ep.chi_dim]);
    out.mu = vec::Zero(ep.shared_rows);
    for (std::size_t k = 0; k < routed_rows_.size(); ++k)
        out.mu[routed_rows_[k]] = cost_scale_ * res.z[first_shared_ + k];
    if (arg >= 0) out.mu[arg] = cost_scale_ * res.z[collapsed_row_];
    return out;
}

decentralized_result run_decentralized(const decomposition_problem& dp, const decentralized_options& opts) {
    decentralized_result out;
    const auto start = std::chrono::steady_clock::now();
    const int N = static_cast<int>(dp.edges.size());
    if (N == 0) {
        out.sol.st = solve_status::optimal;
        out.converged = true;
        return out;
    }
    require(opts.max_iter > 0 && opts.gamma0 > 0.0 && opts.c_rho > 0.0, error_code::contract_violation,
            "run_decentralized: invalid options");
    const double margin = opts.tighten ? N * opts.rho_tol : 0.0;
    std::vector<edge_node> nodes;
    nodes.reserve(N);
    const auto coupled = opts.prune_rows ? coupling_rows(dp) : std::vector<char>{};
    for (const auto& ep : dp.edges) nodes.emplace_back(ep, opts.c_rho, margin, opts.conic, coupled);

    const auto& nb = dp.theta.neighbors;
    const int R = dp.shared_rows;
    // lambda[a][k]: vector held by node a for its k-th neighbour
    std::vector<std::vector<vec>> lambda(N);
    for (int a = 0; a < N; ++a) lambda[a].assign(nb[a].size(), vec::Zero(R));
    auto slot_of = [&](int a, int b) {
        const auto it = std::find(nb[a].begin(), nb[a].end(), b);
        return static_cast<int>(it - nb[a].begin());
    };
    std::vector<std::vector<int>> back(N);
    for (int a = 0; a < N; ++a)
        for (int b : nb[a]) back[a].push_back(slot_of(b, a));

    int threads = opts.threads > 0 ? opts.threads : static_cast<int>(std::thread::hardware_concurrency());
    threads = std::clamp(threads, 1, N);

    std::vector<edge_node::local_result> res(N);
    std::vector<edge_node::local_result> best;
    double best_obj = -std::numeric_limits<double>::infinity();
    std::vector<vec> consensus(N, vec::Zero(R));
    int rising = 0;
    for (int t = 0; t < opts.max_iter; ++t) {
        vec tele = vec::Zero(R);
        for (int a = 0; a < N; ++a) {
            consensus[a].setZero();
            for (std::size_t k = 0; k < nb[a].size(); ++k)
                consensus[a] += lambda[a][k] - lambda[nb[a][k]][back[a][k]];
            tele += consensus[a];
        }
        out.telescoping.push_back(tele.cwiseAbs().maxCoeff());

        // bulk-synchronous round: every node solves against the same snapshot
        std::atomic<int> next{0};
        std::exception_ptr err;
        std::atomic<bool> failed{false};
        auto work = [&] {
            for (int a; (a = next.fetch_add(1)) < N;) {
                if (failed) return;
                try {
                    res[a] = nodes[a].solve(consensus[a]);
                } catch (...) {
                    if (!failed.exchange(true)) err = std::current_exception();
                    return;
                }
            }
        };
        if (threads == 1) {
            work();
        } else {
            std::vector<std::jthread> pool;
            for (int k = 0; k < threads; ++k) pool.emplace_back(work);
        }
        if (err) std::rethrow_exception(err);

        const double gamma = step_size(opts, t);
        for (int a = 0; a < N; ++a)
            for (std::size_t k = 0; k < nb[a].size(); ++k) lambda[a][k] -= gamma * (res[a].mu - res[nb[a][k]].mu);

        double max_rho = 0.0, obj = 0.0, rho_sum = 0.0;
        vec relaxed = vec::Zero(R);
        for (int a = 0; a < N; ++a) {
            const auto& ep = dp.edges[a];
            const vec term = ep.shared_term(res[a].chi);
            trace_row row;
            row.iteration = t;
            row.node = a;
            row.rho = res[a].rho;
            row.accuracy = ep.accuracy_part(res[a].chi);
            row.max_residual = term.maxCoeff();
            out.trace.push_back(row);
            max_rho = std::max(max_rho, res[a].rho);
            rho_sum += res[a].rho;
            obj += row.accuracy;
            relaxed += term + consensus[a];
        }
        if (margin > 0.0)
            for (int a = 0; a < N; ++a)
                for (const auto& blk : dp.edges[a].blocks)
                    relaxed.segment(blk.row_offset, blk.M.rows()).array() += margin / blk.path_length;
        out.relaxed_gap.push_back(relaxed.maxCoeff() - rho_sum);
        out.max_rho.push_back(max_rho);
        out.objective.push_back(obj);
        if (out.first_valid < 0 && max_rho < opts.validity_tol) out.first_valid = t;
        // keep the best iterate whose summed shared rows hold exactly
        if (obj > best_obj) {
            std::vector<vec> chi(N);
            for (int a = 0; a < N; ++a) chi[a] = res[a].chi;
            if (dp.shared_residual(chi).maxCoeff() <= sound_tol) {
                best_obj = obj;
                out.best_iteration = t;
                best = res;
            }
        }
        out.sol.iterations = t + 1;

        rising = (t > 0 && max_rho > out.max_rho[t - 1] && max_rho > opts.rho_tol) ? rising + 1 : 0;
        if (rising >= opts.divergence_window) {
            std::ostringstream os;
            os << "run_decentralized: penalties grew for " << rising << " consecutive rounds (max rho " << max_rho
               << " at iteration " << t << ")";
            fail(error_code::divergence, os.str());
        }
        if (t >= opts.window && max_rho <= opts.rho_tol &&
            std::abs(obj - out.objective[t - opts.window]) <= opts.obj_tol * std::max(1.0, std::abs(obj))) {
            out.converged = true;
            break;
        }
    }
    out.converged = out.converged || out.max_rho.back() <= opts.rho_tol;
    out.sol.st = out.converged ? solve_status::optimal : solve_status::iteration_limit;
    // an unconverged run hands back its best sound iterate, if any
    if (!out.converged && !best.empty()) res = best;
    else out.best_iteration = out.sol.iterations - 1;
    for (int a = 0; a < N; ++a) {
        out.sol.chi.push_back(res[a].chi);
        out.sol.rho.push_back(res[a].rho);
        out.sol.mu.push_back(res[a].mu);
    }
    out.sol.objective = total_accuracy(dp, out.sol.chi);
    out.sol.max_shared_violation = dp.shared_residual(out.sol.chi).maxCoeff();
    out.sound = out.sol.max_shared_violation <= sound_tol;
    out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return out;
}

extraction extract_tasks(const decomposition_problem& dp, std::span<const task> tasks, const solution& sol) {
    require(sol.st == solve_status::optimal, error_code::contract_violation,
            std::string("extract_tasks: solution is ") + to_string(sol.st));
    require(sol.chi.size() == dp.edges.size(), error_code::dimension_mismatch, "extract_tasks: one vector per edge");
    extraction ex;
    std::vector<char> drop(tasks.size(), 0);
    for (int k : dp.index.inconsistent) drop[k] = 1;
    for (std::size_t k = 0; k < tasks.size(); ++k)
        if (!drop[k]) ex.psi_bar.push_back(tasks[k]);

    const int P = static_cast<int>(dp.inconsistent.size());
    std::vector<vec> sum_center(P, vec::Zero(dp.n));
    std::vector<double> sum_scale(P, 0.0);
    for (std::size_t e = 0; e < dp.edges.size(); ++e) {
        const auto& ep = dp.edges[e];
        for (int s = 0; s < ep.param_count(); ++s) {
            const vec eta = ep.eta(sol.chi[e], s);
            task t = ep.tasks[ep.fixed_count + s];
            t.eta = similarity{eta.head(dp.n), std::max(0.0, eta[dp.n])};
            sum_center[ep.positions[s]] += ep.signs[s] * t.eta->center;
            sum_scale[ep.positions[s]] += t.eta->scale;
            ex.psi_bar.push_back(std::move(t));
        }
    }
    for (int p = 0; p < P; ++p) {
        const auto& B = dp.inconsistent[p].truth_set;
        const placed_shape inner{B.A(), B.z(), {sum_center[p], sum_scale[p]}};
        const placed_shape outer{B.A(), B.z(), {B.c(), 1.0}};
        ex.accuracy.push_back(sum_scale[p]);
        ex.inclusion_violation.push_back(inclusion_check(inner, outer).max_violation);
    }
    return ex;
}

} // namespace stldecomp
