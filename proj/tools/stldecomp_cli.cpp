#include "stldecomp/harness.hpp"

#include "CLI11.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

using namespace stldecomp;

namespace {

std::string read_text(const std::filesystem::path& p) {
    std::ifstream f(p);
    if (!f) fail(error_code::io, "cannot read " + p.string());
    std::ostringstream os;
    os << f.rdbuf();
    return os.str();
}

void print_verification(const verification_report& v) {
    std::cout << "verification: " << (v.passed() ? "passed" : "FAILED") << " (" << v.samples_passed() << "/"
              << v.samples_total() << " chain-sum samples";
    if (v.witness_built)
        std::cout << ", witness robustness " << v.witness_robustness_rewritten << " -> "
                  << v.witness_robustness_original;
    std::cout << ")\n";
    for (const auto& t : v.tasks)
        std::cout << "  " << t.id << " (" << t.on.i << "," << t.on.j << "): accuracy " << t.accuracy
                  << ", inclusion residual " << t.inclusion_residual << ", " << t.passed << "/" << t.total << "\n";
    for (const auto& f : v.failures) std::cout << "  failure: " << f << "\n";
}

int run_decompose(const std::string& path, const run_options& opts, const std::string& out) {
    const auto sc = load_scenario(path);
    const auto r = decompose(sc, opts);
    std::cout << sc.name << ": " << to_string(r.status) << "\n" << r.message << "\n";
    if (r.decentralized)
        std::cout << "decentralized: " << r.sol.iterations << " iterations, first valid "
                  << r.decentralized->first_valid << ", max penalty "
                  << (r.decentralized->max_rho.empty() ? 0.0 : r.decentralized->max_rho.back()) << ", "
                  << r.solve_seconds << " s\n";
    if (r.verification) print_verification(*r.verification);
    if (!out.empty()) {
        emit_reports(r, out);
        std::cout << "reports written to " << out << "\n";
    }
    return r.exit_code();
}

int run_check(const std::string& path) {
    const auto sc = load_scenario(path);
    const auto g = build_graphs(sc.agents, sc.tasks, sc.radius, sc.tokens);
    const auto c = check_scenario(sc, g);
    std::cout << sc.name << ": " << sc.agents.size() << " agents, " << sc.tasks.size() << " tasks, "
              << g.comm_edges.size() << " communication edges, " << c.cycles_checked << " task-graph cycles checked\n";
    if (!c.clean()) {
        std::cout << "conflicting conjunctions:\n" << c.summary(sc);
        return 2;
    }
    std::cout << "no conflicting conjunctions\n";
    if (c.inconsistent.empty()) {
        std::cout << "every task is communication consistent\n";
    } else {
        std::cout << "communication-inconsistent tasks:";
        for (int k : c.inconsistent) std::cout << " " << sc.tasks[k].id;
        std::cout << "\n";
    }
    return 0;
}

int run_verify(const std::string& dir, int samples, std::optional<unsigned> seed) {
    const std::filesystem::path d(dir);
    const auto sc = load_scenario((d / "scenario.json").string());
    const auto psi_bar = tasks_from_json(read_text(d / "psi_bar.json"));
    const auto g = build_graphs(sc.agents, sc.tasks, sc.radius, sc.tokens);
    verify_options vo;
    vo.samples = samples;
    vo.seed = seed.value_or(sc.seed);
    vo.refinement = sc.solver.robustness_refinement;
    const auto v = verify_implication(g, sc.selection, sc.tasks, psi_bar, vo);
    print_verification(v);
    return v.passed() ? 0 : 4;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Decomposition of communication-inconsistent STL tasks"};
    app.require_subcommand(1);

    std::string scenario_path, out_dir, mode;
    run_options opts;
    int max_iter = 0;
    unsigned seed = 0;
    auto* dec = app.add_subcommand("decompose", "decompose the inconsistent tasks of a scenario");
    dec->add_option("scenario", scenario_path, "scenario file")->required()->check(CLI::ExistingFile);
    dec->add_option("--mode", mode, "centralized or decentralized")
        ->check(CLI::IsMember({"centralized", "decentralized"}));
    dec->add_option("--max-iter", max_iter, "decentralized iteration budget")->check(CLI::PositiveNumber);
    dec->add_option("--out", out_dir, "directory for the report files");
    dec->add_option("--seed", seed, "seed of the verification sampler");
    dec->add_option("--verify-samples", opts.verify_samples, "chain-sum samples per decomposed task")
        ->check(CLI::NonNegativeNumber);

    std::string check_path;
    auto* chk = app.add_subcommand("check", "report conflicting conjunctions and inconsistent tasks");
    chk->add_option("scenario", check_path, "scenario file")->required()->check(CLI::ExistingFile);

    std::string verify_dir;
    int verify_samples = 10000;
    unsigned verify_seed = 0;
    auto* ver = app.add_subcommand("verify", "re-run the soundness checks on a report directory");
    ver->add_option("dir", verify_dir, "directory written by decompose --out")->required()->check(CLI::ExistingDirectory);
    ver->add_option("--samples", verify_samples, "chain-sum samples per decomposed task")
        ->check(CLI::NonNegativeNumber);
    ver->add_option("--seed", verify_seed, "sampler seed (default: the scenario seed)");

    CLI11_PARSE(app, argc, argv);
    try {
        if (*dec) {
            if (!mode.empty()) opts.mode = parse_mode(mode);
            if (dec->count("--max-iter")) opts.max_iter = max_iter;
            if (dec->count("--seed")) opts.seed = seed;
            opts.verify = opts.verify_samples > 0;
            return run_decompose(scenario_path, opts, out_dir);
        }
        if (*chk) return run_check(check_path);
        if (*ver)
            return run_verify(verify_dir, verify_samples,
                              ver->count("--seed") ? std::optional<unsigned>(verify_seed) : std::nullopt);
    } catch (const error& e) {
        std::cerr << "error (" << to_string(e.code()) << "): " << e.what() << "\n";
        switch (e.code()) {
        case error_code::input_conflict: return 2;
        case error_code::infeasible_decomposition: return 3;
        case error_code::parse:
        case error_code::schema:
        case error_code::dangling_reference:
        case error_code::io: return 1;
        default: return 4;
        }
    }
    return 0;
}
