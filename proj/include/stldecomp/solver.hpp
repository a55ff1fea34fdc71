#pragma once

// Centralized solve of the decomposition program and the decentralized
// relaxation/consensus scheme run over the edge-computing graph.

#include "stldecomp/assembly.hpp"

#include <span>
#include <vector>

namespace stldecomp {

enum class solve_status { optimal, infeasible, iteration_limit };

const char* to_string(solve_status st);

struct solution {
    solve_status st = solve_status::iteration_limit;
    std::vector<vec> chi;      // per edge, in problem order
    std::vector<double> rho;   // per edge (zero for the centralized solve)
    std::vector<vec> mu;       // per edge multipliers of the shared rows
    double objective = 0.0;    // total accuracy, sum of all scales
    int iterations = 0;
    double max_shared_violation = 0.0; // max row of sum(T chi - t)
};

// Throws solver_failure when the conic solver stops without a verdict.
solution solve_centralized(const decomposition_problem& dp, const conic::settings& opts = {});

struct decentralized_options {
    int max_iter = 3500;
    double gamma0 = 0.1;         // keep gamma0 * c_rho near 1
    double gamma_exponent = 0.75;
    double c_rho = 10.0;         // must exceed the multiplier mass (about one per decomposed task)
    double rho_tol = 1e-6;       // convergence threshold on every penalty
    double obj_tol = 1e-6;       // objective change over the window
    int window = 50;
    double validity_tol = 1e-4;  // penalties below this count as a valid decomposition
    int divergence_window = 500;
    int threads = 0;             // 0: hardware concurrency
    bool tighten = true;         // shared-row margin n_nodes * rho_tol
    bool prune_rows = true;      // couple only the irredundant inclusion rows
    conic::settings conic;
};

// summed shared residual accepted as an exact decomposition
constexpr double sound_tol = 1e-9;

double step_size(const decentralized_options& o, int t);

// Shared rows that are not dominated: for every facet of an inconsistent task
// only the row at the vertex of largest support is kept. With nonnegative
// scales the dropped rows are implied by the kept ones.
std::vector<char> coupling_rows(const decomposition_problem& dp);

struct trace_row {
    int iteration = 0;
    int node = 0;
    double rho = 0.0;
    double accuracy = 0.0;     // sum of scales at the node
    double max_residual = 0.0; // max row of the node's T chi - t
};

struct decentralized_result {
    solution sol;
    std::vector<trace_row> trace;
    std::vector<double> max_rho;          // per iteration
    std::vector<double> objective;        // per iteration
    std::vector<double> telescoping;      // per iteration: |sum of consensus terms| (exactly 0 in exact arithmetic)
    std::vector<double> relaxed_gap;      // per iteration: max(sum(T chi - t) - sum rho), must be <= 0
    int first_valid = -1;                 // first iteration with max rho < validity_tol
    int best_iteration = -1;              // iterate returned in sol (the last one unless the run did not converge)
    bool sound = false;                   // sol satisfies every shared row: sum(T chi - t) <= sound_tol
    bool converged = false;
    double seconds = 0.0;
};

// One node of the edge-computing graph holding the relaxed local problem.
class edge_node {
public:
    // `coupled` selects the shared rows taking part (empty: all)
    edge_node(const edge_problem& ep, double c_rho, double margin, const conic::settings& opts,
              std::span<const char> coupled = {});

    struct local_result {
        vec chi;
        double rho = 0.0;
        vec mu; // full shared-row length
    };

    // consensus = sum over neighbours of (lambda_out - lambda_in)
    local_result solve(const vec& consensus) const;

private:
    const edge_problem* ep_;
    conic::program prog_;
    conic::settings opts_;
    std::vector<int> routed_rows_; // shared row index of each routed constraint, in program order
    int first_shared_ = 0;         // program row of the first routed constraint
    int collapsed_row_ = -1;       // program row bounding rho by the unrouted rows
    vec t_;                        // tightened offsets of all shared rows
    std::vector<char> routed_mask_;
    std::vector<char> coupled_;
    double cost_scale_ = 1.0;      // local cost is divided by this (c_rho)
};

// Throws divergence when the penalties keep growing for divergence_window rounds.
decentralized_result run_decentralized(const decomposition_problem& dp, const decentralized_options& opts = {});

struct extraction {
    std::vector<task> psi_bar;        // consistent tasks followed by the parametric ones
    std::vector<double> accuracy;     // per inconsistent task: sum of scales along its path
    std::vector<double> inclusion_violation; // per inconsistent task: max inclusion row
};

// Instantiate every parametric task; throws contract_violation for a solution
// that is not optimal/converged.
extraction extract_tasks(const decomposition_problem& dp, std::span<const task> tasks, const solution& sol);

} // namespace stldecomp
