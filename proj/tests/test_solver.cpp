#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "cgpo/lp_format.hpp"
#include "cgpo/simplex.hpp"
#include "cgpo/solver.hpp"

#include "milp_corpus.hpp"

using namespace cgpo;

static LpProblem standard_lp(int m, int n) {
    LpProblem p;
    p.m = m;
    p.n = n;
    p.cols.resize(n);
    p.lb.assign(n, 0.0);
    p.ub.assign(n, 1e9);
    p.c.assign(n, 0.0);
    p.b.assign(m, 0.0);
    return p;
}

TEST_CASE("simplex solves a textbook production LP") {
    // max 3x + 5y s.t. x <= 4, 2y <= 12, 3x + 2y <= 18  ->  (2, 6), obj 36
    LpProblem p = standard_lp(3, 5);
    auto put = [&](int col, int row, double v) { p.cols[col].emplace_back(row, v); };
    put(0, 0, 1.0); put(0, 2, 3.0);
    put(1, 1, 2.0); put(1, 2, 2.0);
    put(2, 0, 1.0); put(3, 1, 1.0); put(4, 2, 1.0);  // slacks
    p.b = {4.0, 12.0, 18.0};
    p.c = {-3.0, -5.0, 0.0, 0.0, 0.0};  // minimize the negation
    LpSolution s = solve_lp(p);
    REQUIRE(s.status == LpSolution::Status::Optimal);
    CHECK(s.obj == doctest::Approx(-36.0));
    CHECK(s.x[0] == doctest::Approx(2.0));
    CHECK(s.x[1] == doctest::Approx(6.0));
}

TEST_CASE("simplex detects infeasibility") {
    // x >= 5 and x <= 2 via equalities with slacks in [0, inf)
    LpProblem p = standard_lp(2, 3);
    p.cols[0] = {{0, 1.0}, {1, 1.0}};
    p.cols[1] = {{0, -1.0}};  // surplus for x - s = 5
    p.cols[2] = {{1, 1.0}};   // slack for x + t = 2
    p.b = {5.0, 2.0};
    p.c = {1.0, 0.0, 0.0};
    CHECK(solve_lp(p).status == LpSolution::Status::Infeasible);
}

TEST_CASE("simplex honors upper bounds via bound flips") {
    // min -x - y s.t. x + y <= 3, x <= 2, y <= 2  ->  obj -3
    LpProblem p = standard_lp(1, 3);
    p.cols[0] = {{0, 1.0}};
    p.cols[1] = {{0, 1.0}};
    p.cols[2] = {{0, 1.0}};
    p.ub = {2.0, 2.0, 1e9};
    p.b = {3.0};
    p.c = {-1.0, -1.0, 0.0};
    LpSolution s = solve_lp(p);
    REQUIRE(s.status == LpSolution::Status::Optimal);
    CHECK(s.obj == doctest::Approx(-3.0));
}

TEST_CASE("branch and bound solves a small knapsack to optimality") {
    MipModel m;
    int a = m.add_var("a", VarType::Bin, Interval(0, 1));
    int b = m.add_var("b", VarType::Bin, Interval(0, 1));
    int c = m.add_var("c", VarType::Bin, Interval(0, 1));
    LinExpr w;
    w.add(a, 3.0); w.add(b, 4.0); w.add(c, 5.0);
    m.add_le(w, 7.0);
    LinExpr val;
    val.add(a, 2.0); val.add(b, 3.0); val.add(c, 4.0);
    m.set_objective(ObjSense::Max, val);
    SolveConfig cfg;
    cfg.gap = 0.0;
    Solution s = solve_milp(m, cfg);
    REQUIRE(s.status == SolveStatus::Optimal);
    CHECK(s.objective == doctest::Approx(5.0));  // a + b beats c alone? 2+3 vs 4: take a+b
    CHECK(s.bound == doctest::Approx(5.0));
}

TEST_CASE("solver matches exhaustive enumeration on 200 random integer programs") {
    int feasible = 0;
    for (int i = 0; i < 200; ++i) {
        MipModel m = corpus::instance(i);
        corpus::Reference ref = corpus::enumerate(m);
        SolveConfig cfg;
        cfg.gap = 0.0;
        Solution s = solve_milp(m, cfg);
        CAPTURE(i);
        if (!ref.feasible) {
            CHECK(s.status == SolveStatus::Infeasible);
            continue;
        }
        ++feasible;
        REQUIRE(s.status == SolveStatus::Optimal);
        CHECK(s.objective == doctest::Approx(ref.objective).epsilon(1e-6));
        // the reported bound must bracket the true optimum
        if (m.obj_sense == ObjSense::Min) {
            CHECK(s.bound <= ref.objective + 1e-6);
        } else {
            CHECK(s.bound >= ref.objective - 1e-6);
        }
        CHECK(detail::rel_gap(s.objective, s.bound) <= 1e-9);
    }
    CHECK(feasible > 50);  // the generator must not collapse to trivial cases
}

TEST_CASE("solver is deterministic") {
    MipModel m = corpus::instance(7);
    SolveConfig cfg;
    cfg.gap = 0.0;
    Solution s1 = solve_milp(m, cfg);
    Solution s2 = solve_milp(m, cfg);
    CHECK(s1.status == s2.status);
    CHECK(s1.assignment == s2.assignment);
    CHECK(s1.nodes == s2.nodes);
}

TEST_CASE("gap report matches its definition") {
    MipModel m = corpus::instance(3);
    SolveConfig cfg;
    cfg.gap = 0.0;
    Solution s = solve_milp(m, cfg);
    if (s.status == SolveStatus::Optimal || s.status == SolveStatus::GapReached)
        CHECK(s.gap == doctest::Approx(detail::rel_gap(s.objective, s.bound)));
}

TEST_CASE("indicator lowering preserves semantics") {
    // y = 1 forces x <= 2; maximizing x with y pinned to 1 must respect it
    MipModel m;
    int x = m.add_var("x", VarType::Int, Interval(0, 10));
    int y = m.add_var("y", VarType::Bin, Interval(1, 1));
    Indicator ind;
    ind.bin = y;
    ind.active_value = true;
    ind.con.coef = {{x, 1.0}};
    ind.con.sense = Sense::Le;
    ind.con.rhs = 2.0;
    m.indicators.push_back(ind);
    m.set_objective(ObjSense::Max, LinExpr::term(x));
    SolveConfig cfg;
    cfg.gap = 0.0;
    Solution s = solve_milp(m, cfg);
    REQUIRE(s.status == SolveStatus::Optimal);
    CHECK(s.objective == doctest::Approx(2.0));
}

TEST_CASE("SOS2 groups admit at most two adjacent positive weights") {
    // convex-combination encoding of f(z) = |z - 1.5| on breakpoints 0..3:
    // minimizing f over the SOS2 simplex must land between breakpoints
    MipModel m;
    std::vector<int> lam;
    std::vector<double> xs = {0, 1, 2, 3};
    LinExpr sum, zx, fx;
    for (size_t i = 0; i < xs.size(); ++i) {
        int v = m.add_var("l" + std::to_string(i), VarType::Cont, Interval(0, 1));
        lam.push_back(v);
        sum.add(v, 1.0);
        zx.add(v, xs[i]);
        fx.add(v, std::abs(xs[i] - 1.5));
    }
    m.add_eq(sum, 1.0);
    m.sos2.push_back({lam});
    m.set_objective(ObjSense::Min, fx);
    SolveConfig cfg;
    cfg.gap = 0.0;
    Solution s = solve_milp(m, cfg);
    REQUIRE(s.status == SolveStatus::Optimal);
    CHECK(s.objective == doctest::Approx(0.5));
    int positive = 0;
    for (int v : lam)
        if (s.value(v) > 1e-7) ++positive;
    CHECK(positive <= 2);
}

TEST_CASE("LP file round trip preserves the optimum") {
    MipModel m = corpus::instance(11);
    std::string text = export_lp(m);
    MipModel back = parse_lp(text);
    SolveConfig cfg;
    cfg.gap = 0.0;
    Solution a = solve_milp(m, cfg);
    Solution b = solve_milp(back, cfg);
    REQUIRE(a.status == b.status);
    if (a.status == SolveStatus::Optimal)
        CHECK(a.objective == doctest::Approx(b.objective));
}

#ifdef CGPO_CLI_PATH
TEST_CASE("external solver command protocol round-trips through the CLI") {
    int pick = 0;
    while (!corpus::enumerate(corpus::instance(pick)).feasible) ++pick;
    MipModel m = corpus::instance(pick);
    SolveConfig ext;
    ext.gap = 0.0;
    ext.external_cmd = std::string(CGPO_CLI_PATH) + " solve-lp {in} {out} --gap 0";
    Solution a = solve(m, ext);
    SolveConfig bun;
    bun.gap = 0.0;
    Solution b = solve_milp(m, bun);
    REQUIRE((a.status == SolveStatus::Optimal || a.status == SolveStatus::GapReached));
    CHECK(a.objective == doctest::Approx(b.objective).epsilon(1e-6));
}
#endif
