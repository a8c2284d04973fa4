#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "oracle.hpp"

namespace {

cgpo::ExprPtr pe(const std::string& text) {
    return cgpo::parse_expr(
        text, [](const std::string& n, int, int) { return cgpo::var(n, cgpo::VarRole::State); });
}

}  // namespace

using namespace cgpo;

namespace {

/// Compile `e` over variables pinned (by equality rows, not bounds, so the
/// MILP encodings see the full boxes) to `point`, solve, and return the value
/// the model assigns to the expression.
double model_value(const ExprPtr& e, const std::map<std::string, Interval>& boxes,
                   const Env& point, const CompileConfig& ccfg, double* pwl = nullptr) {
    MipModel model;
    CompileCtx ctx(model, ccfg);
    for (const auto& [n, box] : boxes) {
        int id = model.add_var(n, VarType::Cont, box);
        ctx.env[n] = CV{LinExpr::term(id), box, ValueType::Numeric};
        model.add_eq(LinExpr::term(id), point.at(n));
    }
    int v = compile_expr(ctx, e);
    model.set_objective(ObjSense::Max, LinExpr::term(v));
    SolveConfig cfg;
    cfg.gap = 0.0;
    Solution sol = solve_milp(model, cfg);
    REQUIRE(sol.status == SolveStatus::Optimal);
    if (pwl) *pwl = ctx.pwl_error;
    return sol.value(v);
}

}  // namespace

TEST_CASE("piecewise-linear-exact operators agree with direct evaluation") {
    std::map<std::string, Interval> boxes{{"x", Interval(-5, 5)}, {"y", Interval(-5, 5)}};
    std::vector<ExprPtr> exprs = {
        pe("abs(x - y)"),
        pe("min(x, y)"),
        pe("max(2 * x, y - 1)"),
        pe("min(abs(x), max(y, 0))"),
        pe("clip(x + y, -3, 3)"),
        pe("if(x <= y, x + 1, y - 1)"),
        pe("if(x <= 0 and y <= 0, 1, 0)"),
        pe("if(x <= 1 or y >= 2, x, y)"),
    };
    Rng rng(41);
    for (const auto& e : exprs)
        for (int i = 0; i < 30; ++i) {
            Env pt{{"x", rng.uniform(-5, 5)}, {"y", rng.uniform(-5, 5)}};
            double want = eval(e, pt);
            double got = model_value(e, boxes, pt, {});
            CAPTURE(print_expr(e));
            CHECK(got == doctest::Approx(want).epsilon(1e-9));
        }
}

TEST_CASE("strict comparisons use the epsilon band, resolving ties consistently") {
    CompileConfig ccfg;
    ccfg.eps_strict = 1e-3;
    std::map<std::string, Interval> boxes{{"x", Interval(0, 2)}};
    ExprPtr e = pe("if(x < 1, 10, 0)");
    // clearly on either side of the threshold the semantics are exact
    CHECK(model_value(e, boxes, {{"x", 0.5}}, ccfg) == doctest::Approx(10.0));
    CHECK(model_value(e, boxes, {{"x", 1.5}}, ccfg) == doctest::Approx(0.0));
    CHECK(model_value(e, boxes, {{"x", 1.0}}, ccfg) == doctest::Approx(0.0));
    // just outside the band the strict side is still reachable
    CHECK(model_value(e, boxes, {{"x", 1.0 - 2 * ccfg.eps_strict}}, ccfg) ==
          doctest::Approx(10.0));
}

TEST_CASE("cosine is approximated within the reported worst-case budget") {
    std::map<std::string, Interval> boxes{{"x", Interval(-3, 3)}};
    ExprPtr e = pe("cos(x)");
    Rng rng(7);
    for (int i = 0; i < 20; ++i) {
        Env pt{{"x", rng.uniform(-3, 3)}};
        double pwl = 0.0;
        double got = model_value(e, boxes, pt, {}, &pwl);
        CHECK(pwl > 0.0);
        CHECK(pwl < 0.1);  // 16 segments over [-3, 3] should be tight
        CHECK(std::abs(got - std::cos(pt.at("x"))) <= pwl + 1e-9);
    }
}

TEST_CASE("finer piecewise grids shrink the reported budget") {
    MipModel m1, m2;
    CompileConfig c1, c2;
    c1.pwl_segments = 8;
    c2.pwl_segments = 32;
    CompileCtx ctx1(m1, c1), ctx2(m2, c2);
    int x1 = m1.add_var("x", VarType::Cont, Interval(-3, 3));
    int x2 = m2.add_var("x", VarType::Cont, Interval(-3, 3));
    ctx1.env["x"] = CV{LinExpr::term(x1), Interval(-3, 3), ValueType::Numeric};
    ctx2.env["x"] = CV{LinExpr::term(x2), Interval(-3, 3), ValueType::Numeric};
    ExprPtr e = pe("cos(x)");
    compile_expr(ctx1, e);
    compile_expr(ctx2, e);
    CHECK(ctx2.pwl_error < ctx1.pwl_error);
}

TEST_CASE("compiled open-loop rollouts match the simulator on every builtin") {
    struct Row {
        const char* domain;
        int horizon;
        bool exact;
    };
    for (Row row : {Row{"nav1d", 4, true}, Row{"inventory", 4, true},
                    Row{"reservoir2", 4, true}, Row{"intercept", 4, true},
                    Row{"vtol", 4, false}}) {
        DcMdp mdp = builtin_domain(row.domain);
        Rng rng(Rng::derive(2024, std::hash<std::string>{}(row.domain)));
        for (int i = 0; i < 8; ++i) {
            oracle::Case c = oracle::random_case(mdp, row.horizon, rng, true);
            oracle::Outcome o = oracle::compiled_plan_value(mdp, row.horizon, c);
            CAPTURE(row.domain);
            CAPTURE(i);
            if (row.exact)
                CHECK(o.error() <= 1e-6);
            else
                CHECK(o.error() <= o.pwl_budget + 1e-6);
        }
    }
}

TEST_CASE("compiled closed-loop rollouts match the simulator for fixed policies") {
    struct Row {
        const char* domain;
        const char* cls;
        int horizon;
        bool exact;
    };
    for (Row row : {Row{"nav1d", "L", 4, true}, Row{"inventory", "S", 4, true},
                    Row{"inventory", "C", 4, true}, Row{"reservoir2", "PWS1-C", 4, true},
                    Row{"intercept", "B", 4, true}, Row{"vtol", "L", 4, false}}) {
        DcMdp mdp = builtin_domain(row.domain);
        auto [cls, K] = parse_policy_class(row.cls);
        PolicyTemplate tpl = make_template(mdp, cls, K);
        Rng rng(Rng::derive(9090, std::hash<std::string>{}(std::string(row.domain) + row.cls)));
        for (int i = 0; i < 6; ++i) {
            PolicyParams w = oracle::random_params(tpl, rng);
            oracle::Case c = oracle::random_case(mdp, row.horizon, rng, false);
            oracle::Outcome o = oracle::compiled_policy_value(mdp, row.horizon, tpl, w, c);
            CAPTURE(row.domain);
            CAPTURE(row.cls);
            CAPTURE(i);
            if (row.exact)
                CHECK(o.error() <= 1e-6);
            else
                CHECK(o.error() <= o.pwl_budget + 1e-6);
        }
    }
}

TEST_CASE("forward evaluators rebuild a full feasible point from the inputs") {
    // compile a small rollout with free s1 and noise, pick random values for
    // the genuine decision variables, run the recorded evaluators, and check
    // the completed point satisfies every row of the model
    DcMdp mdp = builtin_domain("inventory");
    MipModel model;
    CompileCtx ctx(model);
    RolloutSpec spec;
    spec.binding = PolicyBinding::Plan;
    RolloutVars rv = compile_rollout(ctx, mdp, 3, spec);
    Rng rng(15);
    std::vector<double> x(model.vars.size(), 0.0);
    // free inputs: s1, noise, actions — everything else is derived
    auto set_box = [&](const std::map<std::string, int>& vars) {
        for (const auto& [n, id] : vars) {
            Interval b = model.vars[id].bounds;
            double v = rng.uniform(b.lo, b.hi);
            if (model.vars[id].type != VarType::Cont) v = std::floor(v + 0.5);
            x[id] = v;
        }
    };
    set_box(rv.s1);
    for (const auto& step : rv.noise) set_box(step);
    for (const auto& step : rv.actions) set_box(step);
    bool consistent = true;
    for (const auto& [id, f] : ctx.evals) {
        double v = f(x);
        if (std::isnan(v)) {
            consistent = false;
            break;
        }
        x[id] = v;
    }
    REQUIRE(consistent);
    auto lhs_of = [&](const LinCon& row) {
        double s = 0.0;
        for (const auto& [id, c] : row.coef) s += c * x[id];
        return s;
    };
    auto check_row = [&](const LinCon& row) {
        double lhs = lhs_of(row);
        switch (row.sense) {
            case Sense::Le: CHECK(lhs <= row.rhs + 1e-7); break;
            case Sense::Ge: CHECK(lhs >= row.rhs - 1e-7); break;
            case Sense::Eq: CHECK(lhs == doctest::Approx(row.rhs).epsilon(1e-9)); break;
        }
    };
    for (const auto& row : model.cons) check_row(row);
    for (const auto& ind : model.indicators)
        if (x[ind.bin] == (ind.active_value ? 1.0 : 0.0)) check_row(ind.con);
    for (size_t id = 0; id < model.vars.size(); ++id) {
        CHECK(x[id] >= model.vars[id].bounds.lo - 1e-7);
        CHECK(x[id] <= model.vars[id].bounds.hi + 1e-7);
    }
}
