#include "stldecomp/scenario.hpp"

#include "json.hpp"

#include <fstream>
#include <map>
#include <sstream>

namespace stldecomp {

using nlohmann::json;

const char* to_string(solve_mode m) { return m == solve_mode::centralized ? "centralized" : "decentralized"; }

solve_mode parse_mode(const std::string& s) {
    if (s == "centralized") return solve_mode::centralized;
    if (s == "decentralized") return solve_mode::decentralized;
    fail(error_code::schema, "unknown solve mode '" + s + "' (expected centralized or decentralized)");
}

namespace {

// Collects every problem before failing.
struct issues {
    std::vector<std::pair<error_code, std::string>> list;

    void add(error_code c, const std::string& where, const std::string& what) { list.push_back({c, where + ": " + what}); }

    void raise(const std::string& source) const {
        if (list.empty()) return;
        std::ostringstream os;
        os << source << ": " << list.size() << " problem(s)";
        for (const auto& [c, m] : list) os << "\n  - " << m;
        fail(list.front().first, os.str());
    }
};

std::optional<double> get_number(const json& j, const std::string& where, issues& is) {
    if (!j.is_number()) {
        is.add(error_code::schema, where, "expected a number");
        return std::nullopt;
    }
    return j.get<double>();
}

std::optional<vec> get_vector(const json& j, const std::string& where, issues& is, int expected = -1) {
    if (!j.is_array()) {
        is.add(error_code::schema, where, "expected an array of numbers");
        return std::nullopt;
    }
    vec v(j.size());
    for (std::size_t k = 0; k < j.size(); ++k) {
        if (!j[k].is_number()) {
            is.add(error_code::schema, where + "[" + std::to_string(k) + "]", "expected a number");
            return std::nullopt;
        }
        v[k] = j[k].get<double>();
    }
    if (expected >= 0 && v.size() != expected) {
        is.add(error_code::schema, where, "expected " + std::to_string(expected) + " entries, got " + std::to_string(v.size()));
        return std::nullopt;
    }
    return v;
}

std::optional<mat> get_matrix(const json& j, const std::string& where, issues& is, int cols) {
    if (!j.is_array() || j.empty()) {
        is.add(error_code::schema, where, "expected a non-empty array of rows");
        return std::nullopt;
    }
    mat A(j.size(), cols);
    for (std::size_t r = 0; r < j.size(); ++r) {
        const auto row = get_vector(j[r], where + "[" + std::to_string(r) + "]", is, cols);
        if (!row) return std::nullopt;
        A.row(r) = row->transpose();
    }
    return A;
}

std::optional<polytope> get_shape(const json& j, const std::string& where, issues& is, int n) {
    if (!j.is_object()) {
        is.add(error_code::schema, where, "expected a shape object");
        return std::nullopt;
    }
    try {
        if (j.contains("regular")) {
            const auto& r = j["regular"];
            const std::string w = where + ".regular";
            if (n != 2) {
                is.add(error_code::schema, w, "regular shapes are planar; state_dim must be 2");
                return std::nullopt;
            }
            if (!r.is_object() || !r.contains("sides") || !r.contains("beta") || !r.contains("center")) {
                is.add(error_code::schema, w, "needs sides, beta and center");
                return std::nullopt;
            }
            if (!r["sides"].is_number_integer()) {
                is.add(error_code::schema, w + ".sides", "expected an integer");
                return std::nullopt;
            }
            const auto beta = get_number(r["beta"], w + ".beta", is);
            const auto c = get_vector(r["center"], w + ".center", is, 2);
            if (!beta || !c) return std::nullopt;
            return regular_polytope(r["sides"].get<int>(), *beta, *c);
        }
        if (j.contains("A")) {
            const auto A = get_matrix(j["A"], where + ".A", is, n);
            const auto c = j.contains("c") ? get_vector(j["c"], where + ".c", is, n) : std::optional<vec>(vec::Zero(n));
            const auto z = j.contains("z") ? get_vector(j["z"], where + ".z", is) : std::nullopt;
            if (!j.contains("z")) is.add(error_code::schema, where, "raw shape needs z");
            if (!A || !c || !z) return std::nullopt;
            polytope p(*A, *c, *z);
            if (p.is_empty()) {
                is.add(error_code::schema, where, "empty truth set");
                return std::nullopt;
            }
            return p;
        }
    } catch (const error& e) {
        is.add(error_code::schema, where, e.what());
        return std::nullopt;
    }
    is.add(error_code::schema, where, "expected 'regular' or raw 'A', 'c', 'z'");
    return std::nullopt;
}

std::optional<time_interval> get_interval(const json& j, const std::string& where, issues& is) {
    const auto v = get_vector(j, where, is, 2);
    if (!v) return std::nullopt;
    time_interval iv{(*v)[0], (*v)[1]};
    if (!(iv.a >= 0.0 && iv.a <= iv.b)) {
        is.add(error_code::schema, where, "need 0 <= a <= b");
        return std::nullopt;
    }
    return iv;
}

void parse_tasks(const json& arr, scenario& sc, issues& is, const std::set<int>& ids) {
    if (!arr.is_array()) {
        is.add(error_code::schema, "tasks", "expected an array");
        return;
    }
    std::set<std::string> names;
    for (std::size_t k = 0; k < arr.size(); ++k) {
        const auto& j = arr[k];
        const std::string w = "tasks[" + std::to_string(k) + "]";
        if (!j.is_object()) {
            is.add(error_code::schema, w, "expected an object");
            continue;
        }
        const std::string id = j.value("id", "task" + std::to_string(k));
        if (!names.insert(id).second) is.add(error_code::schema, w + ".id", "duplicate task id '" + id + "'");
        binding on;
        if (j.contains("agent") == j.contains("edge")) {
            is.add(error_code::schema, w, "exactly one of 'agent' or 'edge' is required");
            continue;
        }
        if (j.contains("agent")) {
            if (!j["agent"].is_number_integer()) {
                is.add(error_code::schema, w + ".agent", "expected an integer id");
                continue;
            }
            on = {j["agent"].get<int>(), j["agent"].get<int>()};
        } else {
            const auto& e = j["edge"];
            if (!e.is_array() || e.size() != 2 || !e[0].is_number_integer() || !e[1].is_number_integer()) {
                is.add(error_code::schema, w + ".edge", "expected [i, j]");
                continue;
            }
            on = {e[0].get<int>(), e[1].get<int>()};
            if (on.i == on.j) is.add(error_code::schema, w + ".edge", "edge endpoints must differ (use 'agent')");
        }
        bool dangling = false;
        for (int a : {on.i, on.j})
            if (!ids.count(a)) {
                is.add(error_code::dangling_reference, w, "references unknown agent " + std::to_string(a));
                dangling = true;
            }
        if (dangling) continue;
        const std::string op = j.value("operator", "");
        const auto iv = j.contains("interval") ? get_interval(j["interval"], w + ".interval", is) : std::nullopt;
        if (!j.contains("interval")) is.add(error_code::schema, w, "missing interval");
        if (!iv) continue;

        std::vector<task> made;
        if (op == "until") {
            if (!j.contains("tau") || !j.contains("hold") || !j.contains("reach")) {
                is.add(error_code::schema, w, "until needs tau, hold and reach");
                continue;
            }
            const auto tau = get_number(j["tau"], w + ".tau", is);
            const auto hold = get_shape(j["hold"], w + ".hold", is, sc.state_dim);
            const auto reach = get_shape(j["reach"], w + ".reach", is, sc.state_dim);
            if (!tau || !hold || !reach) continue;
            if (!iv->contains(*tau, 0.0)) {
                is.add(error_code::schema, w + ".tau", "switching time outside the interval");
                continue;
            }
            made = rewrite_until(id, on, *hold, *reach, *iv, *tau);
        } else if (op == "always" || op == "eventually") {
            if (!j.contains("shape")) {
                is.add(error_code::schema, w, "missing shape");
                continue;
            }
            const auto shape = get_shape(j["shape"], w + ".shape", is, sc.state_dim);
            if (!shape) continue;
            task t;
            t.id = id;
            t.op = op == "always" ? temporal_op::always : temporal_op::eventually;
            t.interval = *iv;
            t.on = on;
            t.truth_set = *shape;
            if (j.contains("sync_time")) {
                const auto tb = get_number(j["sync_time"], w + ".sync_time", is);
                if (!tb) continue;
                if (!iv->contains(*tb, 0.0)) {
                    is.add(error_code::schema, w + ".sync_time", "outside the interval");
                    continue;
                }
                t.sync_time = *tb;
            }
            made.push_back(std::move(t));
        } else {
            is.add(error_code::schema, w + ".operator", "expected always, eventually or until");
            continue;
        }
        if (j.contains("period")) {
            const auto period = get_number(j["period"], w + ".period", is);
            const auto horizon = j.contains("horizon") ? get_number(j["horizon"], w + ".horizon", is) : std::nullopt;
            if (!j.contains("horizon")) is.add(error_code::schema, w, "period needs a horizon");
            if (!period || !horizon) continue;
            std::vector<task> unrolled;
            try {
                for (const auto& t : made)
                    for (auto& u : unroll_recurrent(t, *period, *horizon)) unrolled.push_back(std::move(u));
            } catch (const error& e) {
                is.add(error_code::schema, w, e.what());
                continue;
            }
            made = std::move(unrolled);
        }
        for (auto& t : made) sc.tasks.push_back(std::move(t));
    }
}

void parse_solver(const json& j, solver_config& cfg, issues& is) {
    if (!j.is_object()) {
        is.add(error_code::schema, "solver", "expected an object");
        return;
    }
    auto num = [&](const char* key, double& out) {
        if (!j.contains(key)) return;
        if (const auto v = get_number(j[key], std::string("solver.") + key, is)) out = *v;
    };
    auto integer = [&](const char* key, int& out) {
        if (!j.contains(key)) return;
        if (!j[key].is_number_integer() || j[key].get<int>() <= 0)
            is.add(error_code::schema, std::string("solver.") + key, "expected a positive integer");
        else
            out = j[key].get<int>();
    };
    if (j.contains("mode")) {
        if (!j["mode"].is_string())
            is.add(error_code::schema, "solver.mode", "expected a string");
        else if (j["mode"] == "centralized")
            cfg.mode = solve_mode::centralized;
        else if (j["mode"] == "decentralized")
            cfg.mode = solve_mode::decentralized;
        else
            is.add(error_code::schema, "solver.mode", "expected centralized or decentralized");
    }
    auto& d = cfg.decentralized;
    integer("max_iter", d.max_iter);
    num("gamma0", d.gamma0);
    num("gamma_exponent", d.gamma_exponent);
    num("c_rho", d.c_rho);
    num("rho_tol", d.rho_tol);
    num("obj_tol", d.obj_tol);
    num("validity_tol", d.validity_tol);
    num("xi_max", cfg.assembly.xi_max);
    num("eta_max", cfg.assembly.eta_max);
    integer("refinement", cfg.robustness_refinement);
    if (j.contains("keep_singletons")) {
        if (!j["keep_singletons"].is_boolean())
            is.add(error_code::schema, "solver.keep_singletons", "expected a boolean");
        else
            cfg.assembly.keep_singletons = j["keep_singletons"].get<bool>();
    }
    if (d.gamma0 <= 0.0) is.add(error_code::schema, "solver.gamma0", "must be positive");
    if (d.gamma_exponent <= 0.5 || d.gamma_exponent > 1.0)
        is.add(error_code::schema, "solver.gamma_exponent", "must lie in (0.5, 1] for a diminishing, square-summable step");
    if (d.c_rho <= 0.0) is.add(error_code::schema, "solver.c_rho", "must be positive");
}

json shape_json(const polytope& p) {
    json A = json::array();
    for (int r = 0; r < p.rows(); ++r) {
        json row = json::array();
        for (int c = 0; c < p.dim(); ++c) row.push_back(p.A()(r, c));
        A.push_back(row);
    }
    return {{"A", A},
            {"c", std::vector<double>(p.c().data(), p.c().data() + p.c().size())},
            {"z", std::vector<double>(p.z().data(), p.z().data() + p.z().size())}};
}

json task_json(const task& t) {
    json j{{"id", t.id},
           {"operator", to_string(t.op)},
           {"interval", {t.interval.a, t.interval.b}},
           {"shape", shape_json(t.truth_set)}};
    if (t.on.independent())
        j["agent"] = t.on.i;
    else
        j["edge"] = {t.on.i, t.on.j};
    if (t.sync_time) j["sync_time"] = *t.sync_time;
    if (t.parametric) {
        j["parametric"] = true;
        if (t.eta) {
            j["eta"] = {{"center", std::vector<double>(t.eta->center.data(), t.eta->center.data() + t.eta->center.size())},
                        {"scale", t.eta->scale}};
        }
    }
    if (t.origin) j["origin"] = {t.origin->i, t.origin->j};
    if (t.source) j["source"] = *t.source;
    return j;
}

} // namespace

scenario parse_scenario(const std::string& text, const std::string& source) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        fail(error_code::parse, source + ": " + e.what());
    }
    issues is;
    scenario sc;
    if (!j.is_object()) {
        is.add(error_code::schema, "<root>", "expected an object");
        is.raise(source);
    }
    if (!j.contains("schema_version"))
        is.add(error_code::schema, "schema_version", "missing");
    else if (j["schema_version"] != scenario_schema_version)
        is.add(error_code::schema, "schema_version", "unsupported version " + j["schema_version"].dump());
    sc.name = j.value("name", "unnamed");
    sc.reconstructed = j.value("reconstructed", false);
    if (j.contains("seed")) {
        if (!j["seed"].is_number_unsigned())
            is.add(error_code::schema, "seed", "expected a non-negative integer");
        else
            sc.seed = j["seed"].get<unsigned>();
    }
    if (j.contains("state_dim")) {
        if (!j["state_dim"].is_number_integer() || j["state_dim"].get<int>() < 1)
            is.add(error_code::schema, "state_dim", "expected a positive integer");
        else
            sc.state_dim = j["state_dim"].get<int>();
    }
    sc.selection = mat::Identity(sc.state_dim, sc.state_dim);
    if (j.contains("selection")) {
        if (const auto S = get_matrix(j["selection"], "selection", is, sc.state_dim)) {
            try {
                validate_selection(*S);
                sc.selection = *S;
            } catch (const error& e) {
                is.add(error_code::schema, "selection", e.what());
            }
        }
    }
    if (!j.contains("radius"))
        is.add(error_code::schema, "radius", "missing");
    else if (const auto r = get_number(j["radius"], "radius", is)) {
        if (*r <= 0.0) is.add(error_code::schema, "radius", "must be positive");
        sc.radius = *r;
    }
    std::set<int> ids;
    if (!j.contains("agents") || !j["agents"].is_array() || j["agents"].empty()) {
        is.add(error_code::schema, "agents", "expected a non-empty array");
    } else {
        for (std::size_t k = 0; k < j["agents"].size(); ++k) {
            const auto& a = j["agents"][k];
            const std::string w = "agents[" + std::to_string(k) + "]";
            if (!a.is_object() || !a.contains("id") || !a["id"].is_number_integer()) {
                is.add(error_code::schema, w, "needs an integer id");
                continue;
            }
            const int id = a["id"].get<int>();
            if (!ids.insert(id).second) is.add(error_code::schema, w + ".id", "duplicate agent id " + std::to_string(id));
            if (!a.contains("state")) {
                is.add(error_code::schema, w, "missing state");
                continue;
            }
            const auto x = get_vector(a["state"], w + ".state", is, sc.state_dim);
            if (!x) continue;
            sc.agents.push_back({id, *x, sc.selection});
        }
    }
    if (j.contains("tokens")) {
        std::set<edge_key> tk;
        if (!j["tokens"].is_array()) is.add(error_code::schema, "tokens", "expected an array of [i, j]");
        for (std::size_t k = 0; j["tokens"].is_array() && k < j["tokens"].size(); ++k) {
            const auto& e = j["tokens"][k];
            const std::string w = "tokens[" + std::to_string(k) + "]";
            if (!e.is_array() || e.size() != 2 || !e[0].is_number_integer() || !e[1].is_number_integer()) {
                is.add(error_code::schema, w, "expected [i, j]");
                continue;
            }
            const int a = e[0].get<int>(), b = e[1].get<int>();
            if (!ids.count(a) || !ids.count(b)) {
                is.add(error_code::dangling_reference, w, "references an unknown agent");
                continue;
            }
            if (a == b) {
                is.add(error_code::schema, w, "self loop");
                continue;
            }
            tk.insert(canonical(a, b));
        }
        sc.tokens = tk;
    }
    if (j.contains("tasks"))
        parse_tasks(j["tasks"], sc, is, ids);
    else
        is.add(error_code::schema, "tasks", "missing");
    if (j.contains("solver")) parse_solver(j["solver"], sc.solver, is);
    is.raise(source);
    return sc;
}

scenario load_scenario(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(error_code::io, "cannot open scenario file " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_scenario(ss.str(), path);
}

std::string scenario_to_json(const scenario& sc) {
    json j;
    j["schema_version"] = scenario_schema_version;
    j["name"] = sc.name;
    j["reconstructed"] = sc.reconstructed;
    j["state_dim"] = sc.state_dim;
    json S = json::array();
    for (int r = 0; r < sc.selection.rows(); ++r) {
        json row = json::array();
        for (int c = 0; c < sc.selection.cols(); ++c) row.push_back(sc.selection(r, c));
        S.push_back(row);
    }
    j["selection"] = S;
    j["radius"] = sc.radius;
    j["seed"] = sc.seed;
    j["agents"] = json::array();
    for (const auto& a : sc.agents)
        j["agents"].push_back({{"id", a.id}, {"state", std::vector<double>(a.state.data(), a.state.data() + a.state.size())}});
    if (sc.tokens) {
        j["tokens"] = json::array();
        for (const auto& [a, b] : *sc.tokens) j["tokens"].push_back({a, b});
    }
    j["tasks"] = json::array();
    for (const auto& t : sc.tasks) j["tasks"].push_back(task_json(t));
    const auto& d = sc.solver.decentralized;
    j["solver"] = {{"mode", to_string(sc.solver.mode)},
                   {"max_iter", d.max_iter},
                   {"gamma0", d.gamma0},
                   {"gamma_exponent", d.gamma_exponent},
                   {"c_rho", d.c_rho},
                   {"rho_tol", d.rho_tol},
                   {"obj_tol", d.obj_tol},
                   {"validity_tol", d.validity_tol},
                   {"xi_max", sc.solver.assembly.xi_max},
                   {"eta_max", sc.solver.assembly.eta_max},
                   {"keep_singletons", sc.solver.assembly.keep_singletons},
                   {"refinement", sc.solver.robustness_refinement}};
    return j.dump(2);
}

std::string tasks_to_json(const std::vector<task>& tasks) {
    json j = json::array();
    for (const auto& t : tasks) j.push_back(task_json(t));
    return j.dump(2);
}

std::vector<task> tasks_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        fail(error_code::parse, std::string("task list: ") + e.what());
    }
    require(j.is_array(), error_code::schema, "task list: expected an array");
    std::vector<task> out;
    issues is;
    for (std::size_t k = 0; k < j.size(); ++k) {
        const auto& e = j[k];
        const std::string w = "task list[" + std::to_string(k) + "]";
        try {
            task t;
            t.id = e.at("id").get<std::string>();
            t.op = e.at("operator") == "always" ? temporal_op::always : temporal_op::eventually;
            t.interval = {e.at("interval")[0].get<double>(), e.at("interval")[1].get<double>()};
            if (e.contains("agent"))
                t.on = {e["agent"].get<int>(), e["agent"].get<int>()};
            else
                t.on = {e.at("edge")[0].get<int>(), e.at("edge")[1].get<int>()};
            const auto& sh = e.at("shape");
            const int n = static_cast<int>(sh.at("c").size());
            const auto A = get_matrix(sh.at("A"), w + ".shape.A", is, n);
            const auto c = get_vector(sh.at("c"), w + ".shape.c", is, n);
            const auto z = get_vector(sh.at("z"), w + ".shape.z", is);
            if (!A || !c || !z) continue;
            t.truth_set = polytope(*A, *c, *z);
            if (e.contains("sync_time")) t.sync_time = e["sync_time"].get<double>();
            t.parametric = e.value("parametric", false);
            if (e.contains("eta")) {
                const auto ctr = get_vector(e["eta"].at("center"), w + ".eta.center", is, n);
                if (!ctr) continue;
                t.eta = similarity{*ctr, e["eta"].at("scale").get<double>()};
            }
            if (e.contains("origin")) t.origin = binding{e["origin"][0].get<int>(), e["origin"][1].get<int>()};
            if (e.contains("source")) t.source = e["source"].get<std::string>();
            out.push_back(std::move(t));
        } catch (const json::exception& ex) {
            is.add(error_code::schema, w, ex.what());
        } catch (const error& ex) {
            is.add(error_code::schema, w, ex.what());
        }
    }
    is.raise("task list");
    return out;
}

} // namespace stldecomp
