#pragma once

// Scenario files: agents, communication radius, optional explicit tokens,
// tasks and solver settings, stored as JSON (schema_version 1).

#include "stldecomp/solver.hpp"

#include <optional>
#include <set>
#include <string>
#include <vector>

namespace stldecomp {

constexpr int scenario_schema_version = 1;

enum class solve_mode { centralized, decentralized };

const char* to_string(solve_mode m);
solve_mode parse_mode(const std::string& s);

struct solver_config {
    solve_mode mode = solve_mode::centralized;
    decentralized_options decentralized;
    assembly_options assembly;
    int robustness_refinement = 100;
};

struct scenario {
    std::string name;
    bool reconstructed = false;
    int state_dim = 2;
    mat selection;
    double radius = 0.0;
    std::vector<agent> agents;
    std::optional<std::set<edge_key>> tokens;
    std::vector<task> tasks;
    solver_config solver;
    unsigned seed = 0;
};

// Throws parse / schema / dangling_reference / io with every problem listed.
scenario load_scenario(const std::string& path);
scenario parse_scenario(const std::string& text, const std::string& source = "<string>");

std::string scenario_to_json(const scenario& sc);
// tasks (including parametric ones) to and from JSON text
std::string tasks_to_json(const std::vector<task>& tasks);
std::vector<task> tasks_from_json(const std::string& text);

} // namespace stldecomp
