#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "cgpo/cgpo.hpp"
#include "cgpo/io.hpp"

using namespace cgpo;

namespace {

CgpoResult run_nav() {
    static CgpoResult cached = [] {
        DcMdp nav = builtin_domain("nav1d");
        PolicyTemplate tpl = make_template(nav, PolicyClass::L, 0);
        CgpoConfig cfg;
        cfg.gap = 0.0;
        return run_cgpo(nav, tpl, cfg);
    }();
    return cached;
}

}  // namespace

TEST_CASE("default initialization uses midpoints and medians") {
    DcMdp inv = builtin_domain("inventory");
    Scenario sc = initial_scenario(inv, 3, 0.9);
    CHECK(sc.s1.at("stock") == 1.0);  // floor of the [0, 2] midpoint
    REQUIRE(sc.noise.size() == 3);
    CHECK(sc.noise[0].at("demand") == 4.0);  // distribution median
    REQUIRE(sc.plan.size() == 3);
    CHECK(sc.plan[0].at("order") == 5.0);  // midpoint of [0, 10]
    Trajectory tr = rollout_plan(inv, 3, sc.s1, sc.noise, sc.plan);
    CHECK(sc.plan_value == doctest::Approx(tr.total));
}

TEST_CASE("point-to-point navigation converges to the exact tracking policy") {
    CgpoResult res = run_nav();
    CHECK(res.status == CgpoResult::Status::Converged);
    CHECK(res.iterations.size() <= 3);
    CHECK(res.final_bound <= res.tau_conv);
    // the known-optimal linear policy: steer straight at the target
    CHECK(res.final_params.at("a_k0_b") == doctest::Approx(10.0).epsilon(1e-4));
    CHECK(res.final_params.at("a_k0_w_s") == doctest::Approx(-1.0).epsilon(1e-4));
    // first iteration: one scenario is beatable exactly, so epsilon is 0 and
    // the adversary finds a genuinely violating scenario
    CHECK(res.iterations.front().epsilon == doctest::Approx(0.0).epsilon(1e-6));
    if (res.iterations.size() > 1) CHECK(res.iterations.front().inner_bound > res.tau_conv);
}

TEST_CASE("each recorded scenario reproduces its recorded violation in simulation") {
    DcMdp nav = builtin_domain("nav1d");
    PolicyTemplate tpl = make_template(nav, PolicyClass::L, 0);
    CgpoResult res = run_nav();
    for (const IterationRecord& rec : res.iterations) {
        const Scenario& sc = rec.scenario;
        Trajectory plan = rollout_plan(nav, res.horizon, sc.s1, sc.noise, sc.plan);
        CHECK(plan.total == doctest::Approx(sc.plan_value).epsilon(1e-6));
        Trajectory pol = rollout_policy(nav, res.horizon, tpl, rec.params, sc.s1, sc.noise);
        double violation = sc.plan_value - pol.total;
        CHECK(std::abs(violation - rec.inner_value) <= rec.inner_pwl_error + 1e-5);
        CHECK(rec.inner_value <= rec.inner_bound + 1e-9);
    }
}

TEST_CASE("final parameters meet every accumulated constraint within epsilon") {
    DcMdp nav = builtin_domain("nav1d");
    PolicyTemplate tpl = make_template(nav, PolicyClass::L, 0);
    CgpoResult res = run_nav();
    double eps = res.iterations.back().epsilon;
    for (const Scenario& sc : res.scenarios) {
        Trajectory pol = rollout_policy(nav, res.horizon, tpl, res.final_params, sc.s1, sc.noise);
        CHECK(sc.plan_value - pol.total <= eps + 1e-5);
    }
}

TEST_CASE("outer objective grows as the constraint set accumulates") {
    DcMdp inv = builtin_domain("inventory");
    PolicyTemplate tpl = make_template(inv, PolicyClass::C, 0);
    CgpoConfig cfg;
    cfg.noise.mode = NoiseHandling::Mode::Marginalized;
    cfg.horizon = 3;
    cfg.max_iters = 2;
    cfg.solver.node_limit = 5000;
    cfg.solver.time_limit_s = 10.0;
    cfg.lex_refine = false;
    CgpoResult res = run_cgpo(inv, tpl, cfg);
    REQUIRE(res.iterations.size() >= 2);
    for (size_t i = 1; i < res.iterations.size(); ++i)
        CHECK(res.iterations[i].epsilon >= res.iterations[i - 1].epsilon - 1e-6);
    // the certificate reported is the best certified iteration
    double best = 1e300;
    for (const auto& rec : res.iterations)
        best = std::min(best, rec.inner_bound + rec.inner_pwl_error);
    CHECK(res.final_bound == doctest::Approx(best));
}

TEST_CASE("a user-supplied initial scenario is honored and kept") {
    DcMdp nav = builtin_domain("nav1d");
    PolicyTemplate tpl = make_template(nav, PolicyClass::L, 0);
    Scenario sc;
    sc.s1 = {{"s", -20.0}};
    sc.noise = {{}, {}};
    sc.plan = {{{"a", 10.0}}, {{"a", 10.0}}};
    sc.plan_value = rollout_plan(nav, 2, sc.s1, sc.noise, sc.plan).total;
    CgpoConfig cfg;
    cfg.gap = 0.0;
    cfg.initial_scenarios = {sc};
    CgpoResult res = run_cgpo(nav, tpl, cfg);
    CHECK(res.status == CgpoResult::Status::Converged);
    REQUIRE(!res.scenarios.empty());
    CHECK(res.scenarios.front().s1.at("s") == -20.0);
    CHECK(res.final_params.at("a_k0_b") == doctest::Approx(10.0).epsilon(1e-4));
    CHECK(res.final_params.at("a_k0_w_s") == doctest::Approx(-1.0).epsilon(1e-4));
}

TEST_CASE("iteration caps stop the loop but still return a certificate") {
    DcMdp inv = builtin_domain("inventory");
    PolicyTemplate tpl = make_template(inv, PolicyClass::C, 0);
    CgpoConfig cfg;
    cfg.noise.mode = NoiseHandling::Mode::Marginalized;
    cfg.horizon = 3;
    cfg.max_iters = 1;
    cfg.solver.node_limit = 5000;
    cfg.solver.time_limit_s = 10.0;
    cfg.lex_refine = false;
    CgpoResult res = run_cgpo(inv, tpl, cfg);
    CHECK(res.status == CgpoResult::Status::IterLimit);
    REQUIRE(res.iterations.size() == 1);
    CHECK(res.final_bound ==
          doctest::Approx(res.iterations[0].inner_bound + res.iterations[0].inner_pwl_error));
    CHECK(!res.final_params.empty());
}

TEST_CASE("the counterfactual report matches independent rollouts") {
    DcMdp nav = builtin_domain("nav1d");
    PolicyTemplate tpl = make_template(nav, PolicyClass::L, 0);
    CgpoResult res = run_nav();
    const Scenario& sc = res.iterations.back().scenario;
    CounterfactualReport rep = explain(nav, res.horizon, tpl, res.final_params, sc);
    CHECK(rep.plan_value == doctest::Approx(sc.plan_value));
    double pol_sum = 0.0, plan_sum = 0.0;
    for (const auto& row : rep.rows) {
        pol_sum += row.policy_reward;
        plan_sum += row.plan_reward;
    }
    CHECK(pol_sum == doctest::Approx(rep.policy_value));
    CHECK(plan_sum == doctest::Approx(rep.plan_value));
    CHECK((int)rep.rows.size() == res.horizon);
}

TEST_CASE("chance-constrained runs confine the adversary to the support box") {
    DcMdp inv = builtin_domain("inventory");
    PolicyTemplate tpl = make_template(inv, PolicyClass::S, 0);
    CgpoConfig cfg;
    cfg.noise.mode = NoiseHandling::Mode::ChanceConstrained;
    cfg.noise.p = 0.9;
    cfg.noise.per_step_convention = true;
    cfg.horizon = 2;
    cfg.max_iters = 2;
    cfg.solver.node_limit = 5000;
    cfg.solver.time_limit_s = 10.0;
    cfg.lex_refine = false;
    CgpoResult res = run_cgpo(inv, tpl, cfg);
    Interval support = noise_support(inv.noises[0].second, 0.9);
    REQUIRE(!res.iterations.empty());
    for (const auto& rec : res.iterations)
        for (const Env& e : rec.scenario.noise) {
            double d = e.at("demand");
            CHECK(d >= support.lo - 1e-9);
            CHECK(d <= support.hi + 1e-9);
        }
}
