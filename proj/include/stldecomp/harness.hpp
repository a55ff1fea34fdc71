#pragma once

// End-to-end pipeline: graphs, validation of the input specification,
// assembly, solve, extraction of the rewritten tasks, soundness checks and
// report files.

#include "stldecomp/scenario.hpp"

#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

namespace stldecomp {

// Checks on the input: no conflicting conjunction on any edge or
// around any cycle of the task graph.
struct cycle_finding {
    std::vector<int> nodes;      // closed walk v0 -> v1 -> ... -> v0 (v0 not repeated)
    std::vector<int> task_index; // scenario task per leg
    conflict found;
};

struct input_check {
    std::map<edge_key, conflict_report> edge_conflicts; // only edges with findings
    std::vector<cycle_finding> cycle_conflicts;
    std::vector<int> inconsistent;                      // scenario task indices
    int cycles_checked = 0;

    bool clean() const { return edge_conflicts.empty() && cycle_conflicts.empty(); }
    std::string summary(const scenario& sc) const;
};

constexpr int max_cycle_length = 8;
constexpr int max_cycle_combinations = 4096;

// simple cycles of an undirected graph, each listed once (smallest node first)
std::vector<std::vector<int>> simple_cycles(const std::set<edge_key>& edges, int max_length = max_cycle_length);

input_check check_scenario(const scenario& sc, const graph_pair& g);

// Soundness of a decomposition.
struct task_verification {
    std::string id;       // decomposed task
    binding on;
    double accuracy = 0.0;          // sum of scales along the path
    double inclusion_residual = 0.0; // max inclusion row (<= 0 when the chain sum fits)
    int passed = 0;
    int total = 0;
    double worst_h = 0.0;           // smallest h of the original set over the samples
};

struct verification_report {
    std::vector<task_verification> tasks;
    bool edges_in_comm_graph = true;
    bool communication_consistent = true;
    bool conflict_free = true;
    bool witness_built = false;
    double witness_robustness_rewritten = 0.0;
    double witness_robustness_original = 0.0;
    bool witness_implication = true;
    std::vector<std::string> failures;

    bool passed() const { return failures.empty(); }
    int samples_passed() const;
    int samples_total() const;
};

constexpr double soundness_tol = 1e-9;  // h of a chain-sum sample
constexpr double witness_tol = 1e-6;    // robustness of the witness signal
constexpr int rejection_limit = 10000;

struct verify_options {
    int samples = 10000;
    unsigned seed = 0;
    int refinement = 100;
    bool witness_signal = true;
};

// Monte-Carlo chain-sum test per decomposed task, global checks on psi_bar and
// a piecewise-linear witness signal. psi_bar: consistent tasks plus the
// parametric tasks (with eta set) produced by extract_tasks.
verification_report verify_implication(const graph_pair& g, const mat& S, std::span<const task> psi,
                                       std::span<const task> psi_bar, const verify_options& opts = {});

// Same psi_bar with every scale multiplied by `factor` (negative control).
std::vector<task> inflate_scales(std::span<const task> psi_bar, double factor);

// Point of a polytope drawn by rejection over its bounding box, falling back
// to random convex combinations of the vertices.
vec sample_point(const polytope& p, std::mt19937_64& rng);

// Pipeline.
enum class run_status { decomposed, nothing_to_do, input_conflict, infeasible, solver_failure };

const char* to_string(run_status st);

struct run_options {
    std::optional<solve_mode> mode;
    std::optional<int> max_iter;
    std::optional<unsigned> seed;
    int verify_samples = 10000;
    bool verify = true;
};

struct decomposition_result {
    scenario sc;
    graph_pair graphs;
    input_check input;
    decomposition_problem problem;
    solve_mode mode = solve_mode::centralized;
    solution sol;
    std::optional<decentralized_result> decentralized;
    std::vector<task> psi_bar;
    std::optional<extraction> extracted;
    std::optional<verification_report> verification;
    run_status status = run_status::solver_failure;
    std::string message;
    std::vector<std::string> infeasible_tasks; // tasks that cannot be decomposed on their own
    double solve_seconds = 0.0;

    // 0 success, 2 input conflict, 3 infeasible, 4 solver failure / failed verification
    int exit_code() const;
};

// Throws for invalid scenarios (graphs, capacity); conflicts, infeasibility and
// solver trouble are reported through the status.
decomposition_result decompose(const scenario& sc, const run_options& opts = {});

// Writes scenario.json, psi_bar.json, result.json, accuracy.csv, tasks.csv,
// convergence.csv, graphs.json, graphs.dot and SVG plots into out_dir.
void emit_reports(const decomposition_result& r, const std::string& out_dir);

// Column order of the CSV files.
extern const char* const accuracy_columns;
extern const char* const tasks_columns;
extern const char* const convergence_columns;

} // namespace stldecomp
