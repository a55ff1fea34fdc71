#pragma once

// STL fragment: conjunctions of G_[a,b] mu and F_[a,b] mu over single agents or
// relative states e_ij = x_j - x_i, with polytopic predicates.

#include "stldecomp/geometry.hpp"

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace stldecomp {

constexpr double time_tol = 1e-9;

enum class temporal_op { always, eventually };

const char* to_string(temporal_op op);

struct time_interval {
    double a = 0.0;
    double b = 0.0;

    double length() const { return b - a; }
    bool contains(double t, double tol = time_tol) const { return t >= a - tol && t <= b + tol; }
    bool contains(const time_interval& other, double tol = time_tol) const {
        return other.a >= a - tol && other.b <= b + tol;
    }
    bool overlaps(const time_interval& other, double tol = time_tol) const {
        return std::max(a, other.a) <= std::min(b, other.b) + tol;
    }
    bool operator==(const time_interval&) const = default;
};

void validate(const time_interval& iv);

// [max a, min b] or nothing (closed intervals, tolerance time_tol)
std::optional<time_interval> intersect(std::span<const time_interval> ivs);
// merged union contains target and every member overlaps target
bool union_covers(std::span<const time_interval> parts, const time_interval& target);

// Agent binding when i == j, edge binding (relative state x_j - x_i) otherwise.
struct binding {
    int i = 0;
    int j = 0;

    bool independent() const { return i == j; }
    bool operator==(const binding&) const = default;
};

struct task {
    std::string id;
    temporal_op op = temporal_op::always;
    time_interval interval;
    binding on;
    // For a parametric task this holds the shape P(A, 0, z); the truth set is
    // the shape placed by eta. Otherwise the truth set itself.
    polytope truth_set;
    bool parametric = false;
    std::optional<similarity> eta;
    std::optional<binding> origin;   // edge of the decomposed task this one came from
    std::optional<std::string> source; // id of that task
    std::optional<double> sync_time; // t_bar for decomposed eventually tasks

    polytope effective_set() const;
    similarity parameter() const; // eta, or [c; 1] for fixed tasks
};

// Task whose truth set is read in the opposite direction: e_ji = -e_ij.
task reversed(const task& t);

struct state_signal {
    std::vector<int> agent_ids;
    int state_dim = 2;
    std::vector<double> times;
    std::vector<vec> states; // one stacked vector per time, agents in agent_ids order

    void validate() const;
    double horizon_begin() const { return times.front(); }
    double horizon_end() const { return times.back(); }
    vec agent_state(int agent, double t) const;
    // x_i for agent bindings, x_j - x_i for edges
    vec bound_state(const binding& b, double t) const;
};

struct robustness_options {
    int refinement = 100; // extra uniform samples per interval
};

// sample times used for an interval: endpoints, breakpoints inside, uniform grid
std::vector<double> sample_times(const state_signal& sig, const time_interval& iv, int refinement);

double robustness(const state_signal& sig, const task& t, double t0 = 0.0, const robustness_options& opts = {});
double robustness_conjunction(const state_signal& sig, std::span<const task> tasks, double t0 = 0.0,
                              const robustness_options& opts = {});

// Boolean evaluation on the same sampling grid, via set membership only.
bool satisfies(const state_signal& sig, const task& t, double t0 = 0.0, const robustness_options& opts = {});
bool satisfies_all(const state_signal& sig, std::span<const task> tasks, double t0 = 0.0,
                   const robustness_options& opts = {});

// mu1 U_[a,b] mu2 with a chosen switching time tau  ->  G_[a,tau] mu1 and F_[tau,tau] mu2
std::vector<task> rewrite_until(const std::string& id, const binding& on, const polytope& hold,
                                const polytope& reach, const time_interval& iv, double tau);
// G/F over [a + k T, b + k T] for every k with b + k T <= horizon
std::vector<task> unroll_recurrent(const task& pattern, double period, double horizon);

} // namespace stldecomp
