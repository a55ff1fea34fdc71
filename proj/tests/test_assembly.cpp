#include "stldecomp/assembly.hpp"
#include "stldecomp/scenario.hpp"

#include <gtest/gtest.h>

using namespace stldecomp;

namespace {

vec v2(double x, double y) { return (vec(2) << x, y).finished(); }

struct built {
    scenario sc;
    graph_pair g;
    decomposition_problem dp;
};

built build(const std::string& file, const assembly_options& opts = {}) {
    built b;
    b.sc = load_scenario(std::string(STLDECOMP_SCENARIO_DIR) + "/" + file);
    b.g = build_graphs(b.sc.agents, b.sc.tasks, b.sc.radius, b.sc.tokens);
    b.dp = assemble(b.g, b.sc.tasks, b.sc.selection, opts);
    return b;
}

struct column {
    edge_key e;
    int paths, dim, rows, q;
};

// per-edge size data of the planetary exploration mission
const column mission_columns[] = {
    {{9, 10}, 4, 14, 208, 1}, {{10, 15}, 1, 3, 64, 0},  {{1, 2}, 5, 21, 253, 3},  {{3, 4}, 2, 6, 100, 0},
    {{10, 14}, 2, 6, 80, 0},  {{1, 11}, 3, 13, 153, 2}, {{12, 13}, 2, 6, 89, 0},  {{11, 12}, 3, 11, 153, 1},
    {{1, 6}, 8, 30, 436, 3},  {{2, 5}, 2, 6, 89, 0},    {{6, 9}, 5, 17, 272, 1},  {{7, 8}, 2, 6, 100, 0},
    {{2, 3}, 3, 11, 164, 1},  {{6, 7}, 3, 11, 164, 1},
};

} // namespace

TEST(assembly, mission_edge_sizes_match_reference_table) {
    const auto b = build("mars_exploration.json");
    ASSERT_EQ(b.dp.edges.size(), std::size(mission_columns));
    for (const auto& col : mission_columns) {
        const int k = b.dp.edge_position(col.e);
        ASSERT_GE(k, 0) << col.e.first << "," << col.e.second;
        const auto& ep = b.dp.edges[k];
        SCOPED_TRACE(std::to_string(col.e.first) + "," + std::to_string(col.e.second));
        EXPECT_EQ(ep.param_count(), col.paths);
        EXPECT_EQ(ep.chi_dim, col.dim);
        EXPECT_EQ(ep.inclusion_rows(), col.rows);
        EXPECT_EQ(static_cast<int>(ep.families.Q.size()), col.q);
    }
}

TEST(assembly, chi_dimension_formula_holds_on_every_edge) {
    for (const char* f : {"mars_exploration.json", "five_agent.json", "toy_chain.json"}) {
        const auto b = build(f);
        for (const auto& ep : b.dp.edges)
            EXPECT_EQ(ep.chi_dim, (ep.n + 1) * ep.param_count() + ep.n * static_cast<int>(ep.families.Q.size())) << f;
    }
}

TEST(assembly, shared_rows_sum_to_inclusion_rows) {
    const auto b = build("mars_exploration.json");
    int total = 0;
    for (std::size_t p = 0; p < b.dp.inconsistent.size(); ++p) total += b.dp.rows_of(static_cast<int>(p));
    EXPECT_EQ(total, b.dp.shared_rows);
    for (const auto& ep : b.dp.edges) {
        EXPECT_EQ(ep.T().rows(), b.dp.shared_rows);
        EXPECT_EQ(ep.T().cols(), ep.chi_dim);
        EXPECT_EQ(ep.t().size(), b.dp.shared_rows);
    }
}

// Residual of the shared rows equals the direct Minkowski inclusion test.
TEST(assembly, shared_residual_matches_direct_inclusion_of_path_sum) {
    const auto b = build("toy_chain.json");
    ASSERT_EQ(b.dp.inconsistent.size(), 1u);
    ASSERT_EQ(b.dp.edges.size(), 2u);
    const auto& orig = b.dp.inconsistent[0];
    std::vector<vec> chi;
    std::vector<similarity> etas;
    const double placement[2][3] = {{4.8, 0.3, 0.4}, {5.1, -0.2, 0.3}};
    for (int k = 0; k < 2; ++k) {
        const auto& ep = b.dp.edges[k];
        vec x = vec::Zero(ep.chi_dim);
        x.segment(ep.eta_offset(0), 3) << placement[k][0], placement[k][1], placement[k][2];
        chi.push_back(x);
        // traversal 1->2->3 runs along the canonical orientation of both edges
        EXPECT_EQ(ep.signs[0], 1);
        etas.push_back({v2(placement[k][0], placement[k][1]), placement[k][2]});
    }
    const vec r = b.dp.shared_residual(chi);
    const polytope sum = minkowski_sum_similar(orig.truth_set.base().A(), orig.truth_set.base().z(), etas);
    const auto direct = inclusion_check({sum.A(), sum.base().z(), {sum.c(), 1.0}},
                                        {orig.truth_set.A(), orig.truth_set.z(), {orig.truth_set.c(), 1.0}});
    EXPECT_NEAR(r.maxCoeff(), direct.max_violation, 1e-9);
    EXPECT_TRUE(r.maxCoeff() <= 1e-9);
}

TEST(assembly, reversed_traversal_flips_shape_and_block) {
    const auto b = build("five_agent.json");
    // task (4,5) routes 4 -> 2 -> 3 -> 5; edge (2,4) is traversed against its orientation
    const int k = b.dp.edge_position({2, 4});
    ASSERT_GE(k, 0);
    const auto& ep = b.dp.edges[k];
    ASSERT_EQ(ep.param_count(), 1);
    EXPECT_EQ(ep.signs[0], -1);
    const auto& t = ep.tasks[ep.fixed_count];
    const auto& orig = b.dp.inconsistent[ep.positions[0]];
    EXPECT_TRUE(t.truth_set.A().isApprox(-orig.truth_set.A()));
    EXPECT_EQ(t.interval.a, t.interval.b); // eventually task pinned at its sync time
    EXPECT_DOUBLE_EQ(t.interval.a, 10.0);
}

TEST(assembly, fixed_tasks_keep_their_edge_and_count) {
    const auto b = build("five_agent.json");
    const int k = b.dp.edge_position({2, 3});
    ASSERT_GE(k, 0);
    const auto& ep = b.dp.edges[k];
    EXPECT_EQ(ep.fixed_count, 1);
    EXPECT_EQ(ep.param_count(), 2);
    EXPECT_EQ(b.dp.index.pre_existing({2, 3}), 1);
}

TEST(assembly, all_consistent_scenario_assembles_empty) {
    const auto b = build("minimal.json");
    EXPECT_TRUE(b.dp.empty());
    EXPECT_EQ(b.dp.shared_rows, 0);
}

TEST(assembly, parametric_task_records_its_origin) {
    task t;
    t.id = "far";
    t.op = temporal_op::eventually;
    t.interval = {2, 6};
    t.on = {3, 1};
    t.truth_set = regular_polytope(4, 1.0, v2(-8, 0));
    const auto p = make_parametric(t, {2, 1});
    EXPECT_TRUE(p.parametric);
    EXPECT_EQ(p.on, (binding{1, 2}));
    ASSERT_TRUE(p.source);
    EXPECT_EQ(*p.source, "far");
    EXPECT_DOUBLE_EQ(p.interval.a, 4.0);
    EXPECT_DOUBLE_EQ(p.interval.b, 4.0);
    t.sync_time = 5.0;
    EXPECT_DOUBLE_EQ(make_parametric(t, {2, 1}).interval.a, 5.0);
}
