#include "stldecomp/conflicts.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace stldecomp;

namespace {

vec v2(double x, double y) { return (vec(2) << x, y).finished(); }

task make(temporal_op op, double a, double b, polytope set, binding on = {1, 2}) {
    task t;
    t.id = "k";
    t.op = op;
    t.interval = {a, b};
    t.on = on;
    t.truth_set = std::move(set);
    return t;
}

task G(double a, double b, polytope set) { return make(temporal_op::always, a, b, std::move(set)); }
task F(double a, double b, polytope set) { return make(temporal_op::eventually, a, b, std::move(set)); }

polytope box(double x, double y, double r = 1.0) { return regular_polytope(4, r, v2(x, y)); }

bool has_type(const conflict_report& r, conflict_type t) {
    for (const auto& c : r.conflicts)
        if (c.type == t) return true;
    return false;
}

// thin rectangle around the segment p-q
polytope strip(const vec& p, const vec& q, double w) {
    const vec u = (q - p).normalized();
    const vec n = v2(-u[1], u[0]);
    mat A(4, 2);
    A << u.transpose(), -u.transpose(), n.transpose(), -n.transpose();
    const double h = 0.5 * (q - p).norm();
    return polytope(A, 0.5 * (p + q), (vec(4) << h, h, w, w).finished());
}

polytope rect(double x0, double x1, double y0, double y1) {
    mat A(4, 2);
    A << 1, 0, -1, 0, 0, 1, 0, -1;
    return polytope(A, v2(0, 0), (vec(4) << x1, -x0, y1, -y0).finished());
}

oracle::hrep as_hrep(const polytope& p) { return {p.A(), p.c(), p.z()}; }

} // namespace

TEST(conflicts_partition, mixed_operators) {
    const std::vector<task> ts{G(0, 1, box(0, 0)), F(0, 1, box(0, 0)), G(0, 1, box(0, 0))};
    const auto p = partition_operators(ts);
    EXPECT_EQ(p.always, (std::vector<int>{0, 2}));
    EXPECT_EQ(p.eventually, (std::vector<int>{1}));
    const std::vector<task> gs{G(0, 1, box(0, 0)), G(2, 3, box(0, 0))};
    EXPECT_TRUE(partition_operators(gs).eventually.empty());
}

// Indices: 0 = l1, 1 = l2, 2 = l3, 3 = d
TEST(conflicts_families, window_inside_long_always_families) {
    const std::vector<task> ts{G(0, 10, box(0, 0)), G(0, 4.5, box(1.5, 0)), G(5.5, 10, box(-1.5, 0)),
                               F(2, 8, box(0, 1.5))};
    const auto f = build_families(ts);
    EXPECT_EQ(f.L, (std::vector<index_set>{{0}, {1}, {2}, {0, 1}, {0, 2}}));
    EXPECT_EQ(f.L_max, (std::vector<index_set>{{0, 1}, {0, 2}}));
    // every cover containing l1 covers the window; minimal covers are {l1} and {l2,l3}
    // l2 and l3 leave a gap, so every cover contains l1
    EXPECT_EQ(f.C.at(3), (std::vector<index_set>{{0}, {0, 1}, {0, 2}, {0, 1, 2}}));
    EXPECT_EQ(f.C_min.at(3), (std::vector<index_set>{{0}}));
    EXPECT_TRUE(f.D.at(3).size() == 1 && f.D.at(3)[0] == index_set{0});
    EXPECT_TRUE(detect_conflicts_static(ts).clean());
}

// The configuration with l1 not spanning the whole window has exactly the
// families below and no conflict.
TEST(conflicts_families, split_window_families) {
    const std::vector<task> ts{G(4, 6, box(0, 0)), G(0, 4.5, box(1.5, 0)), G(5.5, 10, box(-1.5, 0)),
                               F(2, 8, box(0, 1.5))};
    const auto f = build_families(ts);
    EXPECT_EQ(f.L, (std::vector<index_set>{{0}, {1}, {2}, {0, 1}, {0, 2}}));
    EXPECT_EQ(f.C.at(3), (std::vector<index_set>{{0, 1, 2}}));
    EXPECT_EQ(f.C_min.at(3), (std::vector<index_set>{{0, 1, 2}}));
    EXPECT_FALSE(f.D.count(3));
    EXPECT_TRUE(detect_conflicts_static(ts).clean());
}

// Indices: 0 = l1, 1 = l2, 2 = d
TEST(conflicts_families, spanning_always_families) {
    const std::vector<task> ts{G(0, 10, box(0, 0)), G(2, 12, box(1, 0)), F(4, 6, box(0.5, 0.5))};
    const auto f = build_families(ts);
    EXPECT_EQ(f.D.at(2), (std::vector<index_set>{{0}, {1}, {0, 1}}));
    EXPECT_EQ(f.D_max.at(2), (std::vector<index_set>{{0, 1}}));
    EXPECT_TRUE(detect_conflicts_static(ts).clean());
}

TEST(conflicts_families, single_always_task) {
    std::vector<task> ts{G(0, 10, box(0, 0))};
    ts[0].parametric = true;
    ts[0].eta = similarity{v2(0, 0), 1.0};
    const auto f = build_families(ts);
    EXPECT_EQ(f.L_max, (std::vector<index_set>{{0}}));
    EXPECT_TRUE(f.Q.empty());
    family_options keep;
    keep.keep_singletons = true;
    EXPECT_EQ(build_families(ts, keep).Q, (std::vector<index_set>{{0}}));
}

TEST(conflicts_families, q_requires_a_parametric_member) {
    std::vector<task> ts{G(0, 10, box(0, 0)), G(0, 10, box(0.5, 0)), F(2, 3, box(0, 0.5))};
    EXPECT_TRUE(build_families(ts).Q.empty());
    ts[1].parametric = true;
    ts[1].eta = similarity{v2(0.5, 0), 1.0};
    const auto f = build_families(ts);
    // {d,l2} from the cover {l2}, {l1,l2,d} from D, {l1,l2} from L
    EXPECT_EQ(f.Q, (std::vector<index_set>{{1, 2}, {0, 1, 2}, {0, 1}}));
    for (int q = 0; q < f.xi_count(); ++q) EXPECT_EQ(f.y(f.Q[q]), q + 1);
    EXPECT_THROW(f.y({0, 2}), error);
}

TEST(conflicts_families, capacity_cap) {
    std::vector<task> ts;
    for (int k = 0; k < family_capacity; ++k) ts.push_back(G(0, 1, box(0, 0)));
    EXPECT_NO_THROW(build_families(ts));
    ts.push_back(G(0, 1, box(0, 0)));
    try {
        build_families(ts);
        FAIL();
    } catch (const error& e) {
        EXPECT_EQ(e.code(), error_code::capacity);
    }
}

TEST(conflicts_static, type1_disjoint_boxes) {
    const std::vector<task> ts{G(0, 5, box(0, 0)), G(3, 8, box(5, 0))};
    const auto r = detect_conflicts_static(ts);
    ASSERT_EQ(r.conflicts.size(), 1u);
    EXPECT_EQ(r.conflicts[0].type, conflict_type::always_intersection);
    EXPECT_EQ(r.conflicts[0].witness, (index_set{0, 1}));
    const std::vector<task> apart{G(0, 5, box(0, 0)), G(5.5, 8, box(5, 0))};
    EXPECT_TRUE(detect_conflicts_static(apart).clean());
}

TEST(conflicts_static, touching_intervals_conflict) {
    const std::vector<task> ts{G(0, 5, box(0, 0)), G(5, 8, box(5, 0))};
    EXPECT_TRUE(has_type(detect_conflicts_static(ts), conflict_type::always_intersection));
}

TEST(conflicts_static, type2_single_cover) {
    const std::vector<task> ts{G(0, 10, box(0, 0)), F(2, 5, box(5, 0))};
    EXPECT_TRUE(has_type(detect_conflicts_static(ts), conflict_type::eventually_cover));
}

TEST(conflicts_static, type3_without_type2) {
    // d meets l1 and l2 separately but not their common part
    const std::vector<task> ts{G(0, 10, box(0, 0)), G(2, 12, box(1.5, 1.5)),
                               F(4, 6, strip(v2(0.9, 0.3), v2(1.2, 0.6), 0.02))};
    const auto r = detect_conflicts_static(ts);
    EXPECT_FALSE(has_type(r, conflict_type::eventually_cover));
    EXPECT_FALSE(has_type(r, conflict_type::always_intersection));
    EXPECT_TRUE(has_type(r, conflict_type::eventually_common));
    EXPECT_TRUE(oracle::hreps_intersect({as_hrep(ts[2].truth_set), as_hrep(ts[0].truth_set)}));
    EXPECT_TRUE(oracle::hreps_intersect({as_hrep(ts[2].truth_set), as_hrep(ts[1].truth_set)}));
    EXPECT_FALSE(oracle::hreps_intersect({as_hrep(ts[2].truth_set), as_hrep(ts[0].truth_set), as_hrep(ts[1].truth_set)}));
}

TEST(conflicts_static, incomplete_case_documented) {
    // d cannot be satisfied: during [0,6] it must meet l1 and l2, during [4,10] l1 and l3.
    // The pairwise intersections are nonempty and no family captures the triple, so
    // none of the single-edge conditions fires.
    const std::vector<task> ts{G(0, 10, box(0, 0, 2)), G(0, 6, rect(-0.5, 2.5, -1, 1)), G(4, 10, rect(-2.5, 0.5, -1, 1)),
                               F(0, 10, strip(v2(1.9, 1.5), v2(2.4, 0.9), 0.02))};
    EXPECT_TRUE(detect_conflicts_static(ts).clean());
    EXPECT_FALSE(oracle::hreps_intersect({as_hrep(ts[3].truth_set), as_hrep(ts[0].truth_set), as_hrep(ts[1].truth_set)}));
    EXPECT_FALSE(oracle::hreps_intersect({as_hrep(ts[3].truth_set), as_hrep(ts[0].truth_set), as_hrep(ts[2].truth_set)}));
}

TEST(conflicts_static, representatives_capture_every_type1_conflict) {
    std::mt19937 rng(5);
    std::uniform_real_distribution<double> t(0, 10), p(-2, 2), r(0.3, 1.5);
    for (int trial = 0; trial < 150; ++trial) {
        std::vector<task> ts;
        const int k = 2 + trial % 4;
        for (int i = 0; i < k; ++i) {
            double a = t(rng), b = t(rng);
            if (a > b) std::swap(a, b);
            ts.push_back(G(a, b, box(p(rng), p(rng), r(rng))));
        }
        const auto f = build_families(ts);
        for (const auto& l : f.L)
            EXPECT_TRUE(std::any_of(f.L_max.begin(), f.L_max.end(), [&](const index_set& m) {
                return std::includes(m.begin(), m.end(), l.begin(), l.end());
            }));
        bool any_empty = false;
        for (const auto& l : f.L) {
            std::vector<oracle::hrep> hs;
            for (int i : l) hs.push_back(as_hrep(ts[i].truth_set));
            any_empty |= !oracle::hreps_intersect(hs);
        }
        EXPECT_EQ(has_type(detect_conflicts_static(ts), conflict_type::always_intersection), any_empty);
    }
}

TEST(conflicts_static, common_witness_clears_q_sets) {
    std::mt19937 rng(9);
    std::uniform_real_distribution<double> t(0, 10), p(-0.5, 0.5);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<task> ts;
        for (int i = 0; i < 4; ++i) {
            double a = t(rng), b = t(rng);
            if (a > b) std::swap(a, b);
            // every box contains the origin -> any Q set has the common witness 0
            auto tk = make(i % 2 ? temporal_op::eventually : temporal_op::always, a, b, box(p(rng), p(rng), 1.0));
            tk.parametric = true;
            tk.truth_set = tk.truth_set.base();
            tk.eta = similarity{v2(p(rng), p(rng)), 1.0};
            ts.push_back(tk);
        }
        EXPECT_TRUE(detect_conflicts_static(ts).clean());
    }
}

// --- cycles ---

namespace {

cycle_leg leg(int from, int to, temporal_op op, double a, double b, polytope set, bool stored_reversed = false) {
    task t = make(op, a, b, std::move(set), stored_reversed ? binding{to, from} : binding{from, to});
    if (stored_reversed) t.truth_set = t.truth_set.reflected();
    return {t, {from, to}};
}

} // namespace

TEST(conflicts_cycle, centred_triangle_is_clean) {
    const std::vector<cycle_leg> legs{leg(1, 2, temporal_op::always, 0, 10, box(0, 0)),
                                      leg(2, 3, temporal_op::always, 0, 10, box(0, 0)),
                                      leg(3, 1, temporal_op::always, 0, 10, box(0, 0))};
    EXPECT_TRUE(detect_cycle_conflicts(legs).clean());
}

TEST(conflicts_cycle, far_centres_conflict) {
    const std::vector<cycle_leg> legs{leg(1, 2, temporal_op::always, 0, 10, box(4, 0)),
                                      leg(2, 3, temporal_op::always, 0, 10, box(3, 0)),
                                      leg(3, 1, temporal_op::always, 0, 10, box(3, 0))};
    const auto r = detect_cycle_conflicts(legs);
    ASSERT_EQ(r.conflicts.size(), 1u);
    EXPECT_EQ(r.conflicts[0].type, conflict_type::cycle_always);
    // same sets with a reversed binding on one leg are still read along the cycle
    const std::vector<cycle_leg> rev{leg(1, 2, temporal_op::always, 0, 10, box(4, 0), true),
                                     leg(2, 3, temporal_op::always, 0, 10, box(3, 0)),
                                     leg(3, 1, temporal_op::always, 0, 10, box(3, 0))};
    EXPECT_FALSE(detect_cycle_conflicts(rev).clean());
    // disjoint time windows: no conflict
    const std::vector<cycle_leg> apart{leg(1, 2, temporal_op::always, 0, 3, box(4, 0)),
                                       leg(2, 3, temporal_op::always, 4, 10, box(3, 0)),
                                       leg(3, 1, temporal_op::always, 0, 10, box(3, 0))};
    EXPECT_TRUE(detect_cycle_conflicts(apart).clean());
}

TEST(conflicts_cycle, eventually_leg) {
    const std::vector<cycle_leg> inside{leg(1, 2, temporal_op::eventually, 2, 4, box(4, 0)),
                                        leg(2, 3, temporal_op::always, 0, 10, box(3, 0)),
                                        leg(3, 1, temporal_op::always, 1, 10, box(3, 0))};
    EXPECT_TRUE(has_type(detect_cycle_conflicts(inside), conflict_type::cycle_eventually));
    const std::vector<cycle_leg> outside{leg(1, 2, temporal_op::eventually, 0, 4, box(4, 0)),
                                         leg(2, 3, temporal_op::always, 0, 10, box(3, 0)),
                                         leg(3, 1, temporal_op::always, 1, 10, box(3, 0))};
    EXPECT_TRUE(detect_cycle_conflicts(outside).clean());
}

TEST(conflicts_cycle, malformed_cycles_rejected) {
    const std::vector<cycle_leg> open{leg(1, 2, temporal_op::always, 0, 10, box(0, 0)),
                                      leg(2, 3, temporal_op::always, 0, 10, box(0, 0)),
                                      leg(3, 4, temporal_op::always, 0, 10, box(0, 0))};
    EXPECT_THROW(detect_cycle_conflicts(open), error);
    const std::vector<cycle_leg> two{leg(1, 2, temporal_op::always, 0, 10, box(0, 0)),
                                     leg(2, 1, temporal_op::always, 0, 10, box(0, 0))};
    EXPECT_THROW(detect_cycle_conflicts(two), error);
    const std::vector<cycle_leg> two_f{leg(1, 2, temporal_op::eventually, 0, 10, box(0, 0)),
                                       leg(2, 3, temporal_op::eventually, 0, 10, box(0, 0)),
                                       leg(3, 1, temporal_op::always, 0, 10, box(0, 0))};
    EXPECT_THROW(detect_cycle_conflicts(two_f), error);
    auto bad = leg(1, 2, temporal_op::always, 0, 10, box(0, 0));
    bad.t.on = {1, 3};
    const std::vector<cycle_leg> unbound{bad, leg(2, 3, temporal_op::always, 0, 10, box(0, 0)),
                                         leg(3, 1, temporal_op::always, 0, 10, box(0, 0))};
    EXPECT_THROW(detect_cycle_conflicts(unbound), error);
}

TEST(conflicts_cycle, random_cycles_match_hull_oracle) {
    std::mt19937 rng(31);
    std::uniform_real_distribution<double> c(-4, 4), r(0.2, 1.5);
    std::uniform_int_distribution<int> sides(3, 8);
    int conflicts = 0;
    for (int trial = 0; trial < 60; ++trial) {
        const int m = 3 + trial % 3;
        std::vector<cycle_leg> legs;
        std::vector<oracle::point2> sum{oracle::point2::Zero()};
        for (int k = 0; k < m; ++k) {
            const auto p = regular_polytope(sides(rng), r(rng), v2(c(rng), c(rng)));
            legs.push_back(leg(k + 1, (k + 1) % m + 1, temporal_op::always, 0, 10, p, trial % 2 == 1));
            std::vector<oracle::point2> vs;
            for (const auto& v : p.vertices()) vs.emplace_back(v[0], v[1]);
            sum = oracle::minkowski(sum, vs);
        }
        const bool conflict = !detect_cycle_conflicts(legs).clean();
        conflicts += conflict;
        EXPECT_EQ(conflict, !oracle::origin_in_hull(sum, 1e-7)) << "trial " << trial;
    }
    EXPECT_GT(conflicts, 0);
    EXPECT_LT(conflicts, 60);
}
