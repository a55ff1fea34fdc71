#include "stldecomp/harness.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <sstream>

namespace stldecomp {

const char* const accuracy_columns = "edge_i,edge_j,paths,chi_dim,inclusion_rows,q,accuracy,rho";
const char* const tasks_columns = "id,source,kind,op,edge_i,edge_j,a,b,scale,center";
const char* const convergence_columns = "iteration,edge_i,edge_j,rho,accuracy,max_residual";

namespace {

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

void write_file(const fs::path& p, const std::string& text) {
    std::ofstream f(p);
    if (!f) fail(error_code::io, "cannot write " + p.string());
    f << text;
    if (!f) fail(error_code::io, "write failed for " + p.string());
}

std::string num(double x) {
    std::ostringstream os;
    os << std::setprecision(12) << x;
    return os.str();
}

json to_json(const vec& v) {
    json a = json::array();
    for (int k = 0; k < v.size(); ++k) a.push_back(v[k]);
    return a;
}

json verification_json(const verification_report& v) {
    json j;
    j["passed"] = v.passed();
    j["samples_passed"] = v.samples_passed();
    j["samples_total"] = v.samples_total();
    j["edges_in_comm_graph"] = v.edges_in_comm_graph;
    j["communication_consistent"] = v.communication_consistent;
    j["conflict_free"] = v.conflict_free;
    j["witness_built"] = v.witness_built;
    j["witness_robustness_rewritten"] = v.witness_robustness_rewritten;
    j["witness_robustness_original"] = v.witness_robustness_original;
    j["witness_implication"] = v.witness_implication;
    j["tasks"] = json::array();
    for (const auto& t : v.tasks)
        j["tasks"].push_back({{"id", t.id},
                              {"edge", {t.on.i, t.on.j}},
                              {"accuracy", t.accuracy},
                              {"inclusion_residual", t.inclusion_residual},
                              {"passed", t.passed},
                              {"total", t.total},
                              {"worst_h", t.worst_h}});
    j["failures"] = v.failures;
    return j;
}

// ---- SVG -------------------------------------------------------------------

struct frame {
    double x0, y0, x1, y1;
    double size = 480.0;
    double pad = 20.0;

    double sx() const { return (size - 2 * pad) / std::max(x1 - x0, y1 - y0); }
    double px(double x) const { return pad + (x - x0) * sx(); }
    double py(double y) const { return size - pad - (y - y0) * sx(); }
};

frame fit(const std::vector<vec>& pts) {
    double x0 = pts.front()[0], x1 = x0, y0 = pts.front()[1], y1 = y0;
    for (const auto& p : pts) {
        x0 = std::min(x0, p[0]);
        x1 = std::max(x1, p[0]);
        y0 = std::min(y0, p[1]);
        y1 = std::max(y1, p[1]);
    }
    const double m = 0.1 * std::max({x1 - x0, y1 - y0, 1.0});
    return {x0 - m, y0 - m, x1 + m, y1 + m};
}

std::string svg_open(const frame& f) {
    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << f.size << "\" height=\"" << f.size
       << "\" viewBox=\"0 0 " << f.size << " " << f.size << "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    return os.str();
}

std::string polygon(const frame& f, std::vector<vec> vs, const std::string& stroke, const std::string& fill) {
    vec c = vec::Zero(2);
    for (const auto& v : vs) c += v;
    c /= static_cast<double>(vs.size());
    std::sort(vs.begin(), vs.end(), [&](const vec& a, const vec& b) {
        return std::atan2(a[1] - c[1], a[0] - c[0]) < std::atan2(b[1] - c[1], b[0] - c[0]);
    });
    std::ostringstream os;
    os << "<polygon points=\"";
    for (const auto& v : vs) os << f.px(v[0]) << "," << f.py(v[1]) << " ";
    os << "\" stroke=\"" << stroke << "\" fill=\"" << fill << "\" fill-opacity=\"0.25\"/>\n";
    return os.str();
}

std::string label(const frame& f, const vec& at, const std::string& text) {
    std::ostringstream os;
    os << "<text x=\"" << f.px(at[0]) + 4 << "\" y=\"" << f.py(at[1]) - 4
       << "\" font-size=\"11\" font-family=\"sans-serif\">" << text << "</text>\n";
    return os.str();
}

std::string graph_svg(const decomposition_result& r) {
    std::map<int, vec> pos;
    std::vector<vec> pts;
    for (const auto& a : r.sc.agents) {
        pos[a.id] = a.position();
        pts.push_back(pos[a.id]);
    }
    const frame f = fit(pts);
    std::ostringstream os;
    os << svg_open(f);
    auto line = [&](int a, int b, const std::string& style) {
        os << "<line x1=\"" << f.px(pos[a][0]) << "\" y1=\"" << f.py(pos[a][1]) << "\" x2=\"" << f.px(pos[b][0])
           << "\" y2=\"" << f.py(pos[b][1]) << "\" " << style << "/>\n";
    };
    for (const auto& [a, b] : r.graphs.comm_edges) line(a, b, "stroke=\"black\" stroke-width=\"2\"");
    for (int k : r.problem.index.inconsistent) {
        const auto& t = r.sc.tasks[k];
        line(t.on.i, t.on.j, "stroke=\"crimson\" stroke-dasharray=\"6,4\"");
    }
    for (const auto& [id, p] : pos) {
        os << "<circle cx=\"" << f.px(p[0]) << "\" cy=\"" << f.py(p[1]) << "\" r=\"5\" fill=\"steelblue\"/>\n";
        os << label(f, p, std::to_string(id));
    }
    os << "</svg>\n";
    return os.str();
}

// original truth set, its parametric parts (each in its own edge frame, read
// along the path) and their Minkowski sum
std::string task_svg(const task& orig, const std::vector<const task*>& parts, const path& p) {
    const auto& B = orig.truth_set;
    std::vector<vec> pts = B.vertices();
    std::vector<std::vector<vec>> sets;
    vec center = vec::Zero(2);
    double alpha = 0.0;
    for (const auto& de : p.edges) {
        const auto it = std::find_if(parts.begin(), parts.end(),
                                     [&](const task* t) { return canonical(t->on.i, t->on.j) == de.key(); });
        if (it == parts.end()) continue;
        const polytope s = (*it)->effective_set();
        const polytope along = de.sign() > 0 ? s : s.reflected();
        sets.push_back(along.vertices());
        pts.insert(pts.end(), along.vertices().begin(), along.vertices().end());
        center += de.sign() * (*it)->eta->center;
        alpha += (*it)->eta->scale;
    }
    const frame f = fit(pts);
    std::ostringstream os;
    os << svg_open(f);
    os << polygon(f, B.vertices(), "black", "none");
    static const char* colors[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#9467bd", "#8c564b", "#e377c2", "#17becf"};
    for (std::size_t k = 0; k < sets.size(); ++k) os << polygon(f, sets[k], colors[k % 7], colors[k % 7]);
    if (alpha > 0.0) {
        const polytope sum = B.base().scaled({center, alpha});
        os << polygon(f, sum.vertices(), "crimson", "none");
    }
    os << label(f, B.c(), orig.id);
    os << "</svg>\n";
    return os.str();
}

} // namespace

void emit_reports(const decomposition_result& r, const std::string& out_dir) {
    const fs::path dir(out_dir);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) fail(error_code::io, "cannot create " + out_dir + ": " + ec.message());

    write_file(dir / "scenario.json", scenario_to_json(r.sc));
    write_file(dir / "psi_bar.json", tasks_to_json(r.psi_bar));

    json res;
    res["status"] = to_string(r.status);
    res["exit_code"] = r.exit_code();
    res["message"] = r.message;
    res["mode"] = to_string(r.mode);
    res["seed"] = r.sc.seed;
    res["inconsistent_tasks"] = json::array();
    for (int k : r.input.inconsistent) res["inconsistent_tasks"].push_back(r.sc.tasks[k].id);
    res["infeasible_tasks"] = r.infeasible_tasks;
    if (!r.problem.empty() && (r.status == run_status::decomposed || r.status == run_status::solver_failure)) {
        res["objective"] = r.sol.objective;
        res["iterations"] = r.sol.iterations;
        res["max_shared_violation"] = r.sol.max_shared_violation;
        res["solve_seconds"] = r.solve_seconds;
    }
    if (r.decentralized) {
        res["converged"] = r.decentralized->converged;
        res["first_valid"] = r.decentralized->first_valid;
        res["max_rho"] = r.decentralized->max_rho.empty() ? 0.0 : r.decentralized->max_rho.back();
    }
    if (r.extracted) {
        res["task_accuracy"] = json::object();
        for (std::size_t k = 0; k < r.problem.inconsistent.size(); ++k)
            res["task_accuracy"][r.problem.inconsistent[k].id] = r.extracted->accuracy[k];
    }
    if (!r.input.clean()) res["input_conflicts"] = r.input.summary(r.sc);
    if (r.verification) res["verification"] = verification_json(*r.verification);
    write_file(dir / "result.json", res.dump(2) + "\n");

    // per decomposition edge
    {
        std::ostringstream os;
        os << accuracy_columns << "\n";
        const bool solved = r.sol.chi.size() == r.problem.edges.size();
        for (std::size_t e = 0; e < r.problem.edges.size(); ++e) {
            const auto& ep = r.problem.edges[e];
            os << ep.edge.first << "," << ep.edge.second << "," << ep.param_count() << "," << ep.chi_dim << ","
               << ep.inclusion_rows() << "," << ep.families.xi_count() << ","
               << (solved ? num(ep.accuracy_part(r.sol.chi[e])) : "") << ","
               << (solved && e < r.sol.rho.size() ? num(r.sol.rho[e]) : "") << "\n";
        }
        write_file(dir / "accuracy.csv", os.str());
    }
    {
        std::ostringstream os;
        os << tasks_columns << "\n";
        for (const auto& t : r.psi_bar) {
            const auto eta = t.parameter();
            os << t.id << "," << t.source.value_or("") << ","
               << (t.parametric ? "parametric" : (t.on.independent() ? "independent" : "collaborative")) << ","
               << to_string(t.op) << "," << t.on.i << "," << t.on.j << "," << num(t.interval.a) << ","
               << num(t.interval.b) << "," << num(eta.scale) << ",";
            for (int k = 0; k < eta.center.size(); ++k) os << (k ? " " : "") << num(eta.center[k]);
            os << "\n";
        }
        write_file(dir / "tasks.csv", os.str());
    }
    {
        std::ostringstream os;
        os << convergence_columns << "\n";
        if (r.decentralized)
            for (const auto& row : r.decentralized->trace) {
                const auto& key = r.problem.edges[row.node].edge;
                os << row.iteration << "," << key.first << "," << key.second << "," << num(row.rho) << ","
                   << num(row.accuracy) << "," << num(row.max_residual) << "\n";
            }
        write_file(dir / "convergence.csv", os.str());
    }

    // graphs
    {
        json g;
        g["agents"] = json::array();
        for (const auto& a : r.sc.agents) g["agents"].push_back({{"id", a.id}, {"position", to_json(a.position())}});
        g["radius"] = r.graphs.radius;
        g["communication_edges"] = json::array();
        for (const auto& [a, b] : r.graphs.comm_edges) g["communication_edges"].push_back({a, b});
        g["task_edges"] = json::array();
        for (const auto& [key, idx] : r.graphs.task_edges) {
            json ids = json::array();
            for (int k : idx) ids.push_back(r.sc.tasks[k].id);
            g["task_edges"].push_back({{"edge", {key.first, key.second}}, {"tasks", ids}});
        }
        std::map<edge_key, std::vector<std::string>> rewritten;
        for (const auto& t : r.psi_bar) rewritten[canonical(t.on.i, t.on.j)].push_back(t.id);
        g["rewritten_task_edges"] = json::array();
        for (const auto& [key, ids] : rewritten)
            g["rewritten_task_edges"].push_back({{"edge", {key.first, key.second}}, {"tasks", ids}});
        g["decomposition_paths"] = json::array();
        for (std::size_t k = 0; k < r.problem.index.paths.size(); ++k)
            g["decomposition_paths"].push_back({{"task", r.problem.inconsistent[k].id},
                                                {"nodes", r.problem.index.paths[k].nodes}});
        g["edge_computing_graph"] = json::array();
        for (std::size_t k = 0; k < r.problem.theta.nodes.size(); ++k) {
            json nb = json::array();
            for (int j : r.problem.theta.neighbors[k])
                nb.push_back({r.problem.theta.nodes[j].first, r.problem.theta.nodes[j].second});
            g["edge_computing_graph"].push_back(
                {{"node", {r.problem.theta.nodes[k].first, r.problem.theta.nodes[k].second}}, {"neighbors", nb}});
        }
        write_file(dir / "graphs.json", g.dump(2) + "\n");

        std::ostringstream dot;
        dot << "graph stldecomp {\n  node [shape=circle];\n";
        for (const auto& a : r.sc.agents) {
            const vec p = a.position();
            dot << "  " << a.id << " [pos=\"" << num(p[0]) << "," << num(p.size() > 1 ? p[1] : 0.0) << "!\"];\n";
        }
        for (const auto& [a, b] : r.graphs.comm_edges) dot << "  " << a << " -- " << b << " [penwidth=2];\n";
        for (int k : r.problem.index.inconsistent) {
            const auto& t = r.sc.tasks[k];
            dot << "  " << t.on.i << " -- " << t.on.j << " [style=dashed, color=crimson, label=\"" << t.id << "\"];\n";
        }
        dot << "}\n";
        write_file(dir / "graphs.dot", dot.str());
    }

    // plots: only for a planar, non-empty decomposition
    if (r.problem.empty() || r.sc.state_dim != 2 || r.sc.selection.rows() != 2) return;
    write_file(dir / "graph.svg", graph_svg(r));
    if (!r.extracted) return;
    std::map<std::string, std::vector<const task*>> parts;
    for (const auto& t : r.psi_bar)
        if (t.parametric && t.source) parts[*t.source].push_back(&t);
    for (std::size_t k = 0; k < r.problem.inconsistent.size(); ++k) {
        const auto& orig = r.problem.inconsistent[k];
        if (orig.truth_set.dim() != 2) continue;
        write_file(dir / ("task_" + orig.id + ".svg"), task_svg(orig, parts[orig.id], r.problem.index.paths[k]));
    }
}

} // namespace stldecomp
