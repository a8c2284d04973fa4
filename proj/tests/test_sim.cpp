#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sstream>

#include "cgpo/sim.hpp"

using namespace cgpo;

TEST_CASE("plan rollout accumulates exact per-step rewards") {
    DcMdp nav = builtin_domain("nav1d");
    Env s1{{"s", 0.0}};
    std::vector<Env> noise(2), plan{{{"a", 10.0}}, {{"a", 0.0}}};
    Trajectory tr = rollout_plan(nav, 2, s1, noise, plan);
    // s: 0 -> 10 -> 10, reward -|s' - 10| each step
    CHECK(tr.total == doctest::Approx(0.0));
    CHECK(tr.final_state.at("s") == doctest::Approx(10.0));
    REQUIRE(tr.steps.size() == 2);
    CHECK(tr.steps[0].reward == doctest::Approx(0.0));

    plan[0]["a"] = 4.0;
    tr = rollout_plan(nav, 2, s1, noise, plan);
    CHECK(tr.steps[0].reward == doctest::Approx(-6.0));
    CHECK(tr.steps[1].reward == doctest::Approx(-6.0));
    CHECK(tr.total == doctest::Approx(-12.0));
}

TEST_CASE("policy rollout consults the policy at every step") {
    DcMdp nav = builtin_domain("nav1d");
    PolicyTemplate tpl = make_template(nav, PolicyClass::L, 0);
    PolicyParams w{{"a_k0_b", 10.0}, {"a_k0_w_s", -1.0}};
    std::vector<Env> noise(2);
    Trajectory tr = rollout_policy(nav, 2, tpl, w, {{"s", 3.0}}, noise);
    // a = 10 - s clipped to [-10, 10]: 3 -> 10 -> 10
    CHECK(tr.steps[0].action.at("a") == doctest::Approx(7.0));
    CHECK(tr.steps[1].action.at("a") == doctest::Approx(0.0));
    CHECK(tr.total == doctest::Approx(0.0));
}

TEST_CASE("rollouts reject out-of-box inputs") {
    DcMdp nav = builtin_domain("nav1d");
    std::vector<Env> noise(2);
    CHECK_THROWS_AS(rollout_plan(nav, 2, {{"s", 1000.0}}, noise, {{{"a", 0.0}}, {{"a", 0.0}}}),
                    SimError);
    CHECK_THROWS_AS(rollout_plan(nav, 2, {{"s", 0.0}}, noise, {{{"a", 99.0}}, {{"a", 0.0}}}),
                    SimError);
    CHECK_THROWS_AS(rollout_plan(nav, 2, {{"s", 0.0}}, noise, {{{"a", 0.0}}}), SimError);
}

TEST_CASE("noise sampling is seed-deterministic and distribution-faithful") {
    DcMdp inv = builtin_domain("inventory");
    Rng a(123), b(123);
    auto na = sample_noise(inv, 8, a), nb = sample_noise(inv, 8, b);
    CHECK(na == nb);
    Rng c(7);
    double lo = 1e9, hi = -1e9;
    for (int i = 0; i < 2000; ++i) {
        double d = inv.noises[0].second.sample(c);
        CHECK(d == std::floor(d));
        lo = std::min(lo, d);
        hi = std::max(hi, d);
    }
    CHECK(lo == 2.0);
    CHECK(hi == 6.0);
}

TEST_CASE("median noise pins each distribution at its median") {
    DcMdp inv = builtin_domain("inventory");
    auto med = median_noise(inv, 3);
    REQUIRE(med.size() == 3);
    CHECK(med[0].at("demand") == 4.0);
}

TEST_CASE("evaluate reproduces identical stats for identical seeds") {
    DcMdp inv = builtin_domain("inventory");
    PolicyTemplate tpl = make_template(inv, PolicyClass::S, 0);
    PolicyParams w{{"order_k0_b", 4.0}, {"order_k0_w_stock", -1.0}};
    RolloutStats s1 = evaluate(inv, tpl, w, 50, 99);
    RolloutStats s2 = evaluate(inv, tpl, w, 50, 99);
    CHECK(s1.returns == s2.returns);
    CHECK(s1.mean == s2.mean);
    RolloutStats s3 = evaluate(inv, tpl, w, 50, 100);
    CHECK(s1.returns != s3.returns);
    // CI arithmetic
    double sum = 0.0;
    for (double r : s1.returns) sum += r;
    CHECK(s1.mean == doctest::Approx(sum / 50.0));
    CHECK(s1.half_width == doctest::Approx(1.96 * s1.sd / std::sqrt(50.0)));
}

TEST_CASE("initial states respect integrality of the domain") {
    DcMdp inv = builtin_domain("inventory");
    Rng rng(5);
    for (int i = 0; i < 100; ++i) {
        Env s1 = sample_initial_state(inv, rng);
        double v = s1.at("stock");
        CHECK(v == std::floor(v));
        CHECK(v >= 0.0);
        CHECK(v <= 2.0);
    }
}

TEST_CASE("trajectory CSV carries one row per step plus the final state") {
    DcMdp nav = builtin_domain("nav1d");
    std::vector<Env> noise(2), plan{{{"a", 5.0}}, {{"a", 5.0}}};
    Trajectory tr = rollout_plan(nav, 2, {{"s", 0.0}}, noise, plan);
    std::string csv = trajectory_csv(nav, tr);
    std::istringstream is(csv);
    std::string line;
    std::vector<std::string> lines;
    while (std::getline(is, line)) lines.push_back(line);
    REQUIRE(lines.size() == 4);  // header + 2 steps + final state
    CHECK(lines[0] == "t,s,a,reward");
    CHECK(lines[1] == "1,0,5,-5");
    CHECK(lines[3].substr(0, 4) == "3,10");
}
