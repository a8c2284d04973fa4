#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "cgpo/domain.hpp"
#include "cgpo/policy.hpp"

using namespace cgpo;

TEST_CASE("policy class names parse and print consistently") {
    CHECK(parse_policy_class("C") == std::make_pair(PolicyClass::C, 0));
    CHECK(parse_policy_class("Q") == std::make_pair(PolicyClass::Q, 0));
    CHECK(parse_policy_class("PWS-C") == std::make_pair(PolicyClass::PWS_C, 1));
    CHECK(parse_policy_class("PWS1-C") == std::make_pair(PolicyClass::PWS_C, 1));
    CHECK(parse_policy_class("PWS2-S") == std::make_pair(PolicyClass::PWS_S, 2));
    CHECK(parse_policy_class("PWL2-L") == std::make_pair(PolicyClass::PWL_L, 2));
    CHECK(parse_policy_class("PWL1-B") == std::make_pair(PolicyClass::PWL_B, 1));
    CHECK_THROWS_AS(parse_policy_class("PWX-C"), PolicyError);
    CHECK_THROWS_AS(parse_policy_class("PWS-B"), PolicyError);
    CHECK(policy_class_name(PolicyClass::PWS_C, 2) == "PWS2-C");
    CHECK(policy_class_name(PolicyClass::L) == "L");
}

TEST_CASE("templates declare one parameter block per case") {
    DcMdp inv = builtin_domain("inventory");
    PolicyTemplate s = make_template(inv, PolicyClass::S, 0);
    CHECK(s.params.size() == 2);  // intercept + one weight
    PolicyTemplate pws1 = make_template(inv, PolicyClass::PWS_C, 1);
    // case 0: l, u, b; otherwise-case: b
    CHECK(pws1.params.size() == 4);
    CHECK(pws1.rules[0].cases.size() == 2);
    CHECK(pws1.rules[0].cases[1].l_param.empty());
    CHECK_THROWS_AS(make_template(inv, PolicyClass::C, 2), PolicyError);
    CHECK_THROWS_AS(make_template(inv, PolicyClass::PWS_C, 0), PolicyError);
    // Boolean actions only take Boolean-valued heads
    DcMdp icpt = builtin_domain("intercept");
    CHECK_THROWS_AS(make_template(icpt, PolicyClass::L, 0), PolicyError);
    CHECK_NOTHROW(make_template(icpt, PolicyClass::B, 0));
}

TEST_CASE("single-state head on inventory implements order-up-to") {
    DcMdp inv = builtin_domain("inventory");
    PolicyTemplate tpl = make_template(inv, PolicyClass::S, 0);
    // order = clip(round(4 - stock)): the order-up-to-4 rule
    PolicyParams w{{"order_k0_b", 4.0}, {"order_k0_w_stock", -1.0}};
    CHECK(policy_action(tpl, w, {{"stock", 1.0}}).at("order") == 3.0);
    CHECK(policy_action(tpl, w, {{"stock", 4.0}}).at("order") == 0.0);
    CHECK(policy_action(tpl, w, {{"stock", 9.0}}).at("order") == 0.0);   // clipped at 0
    CHECK(policy_action(tpl, w, {{"stock", -20.0}}).at("order") == 10.0);  // clipped at 10
}

TEST_CASE("integer actions round half away from the floor") {
    DcMdp inv = builtin_domain("inventory");
    PolicyTemplate tpl = make_template(inv, PolicyClass::S, 0);
    PolicyParams w{{"order_k0_b", 3.5}, {"order_k0_w_stock", -1.0}};
    // raw value 3.5 - stock; the exact half at stock=0 rounds up to 4
    CHECK(policy_action(tpl, w, {{"stock", 0.0}}).at("order") == 4.0);
    CHECK(policy_action(tpl, w, {{"stock", 1.0}}).at("order") == 3.0);  // 2.5 -> 3
}

TEST_CASE("piecewise cases match first, then fall through") {
    DcMdp res = builtin_domain("reservoir2");
    PolicyTemplate tpl = make_template(res, PolicyClass::PWS_C, 1);
    PolicyParams w{{"release1_k0_l", 0.0},  {"release1_k0_u", 50.0},
                   {"release1_k0_b", 33.23}, {"release1_k1_b", 70.0},
                   {"release2_k0_l", 0.0},  {"release2_k0_u", 100.0},
                   {"release2_k0_b", 0.0},  {"release2_k1_b", 10.0}};
    Env low{{"level1", 40.0}, {"level2", 150.0}};
    CHECK(policy_action(tpl, w, low).at("release1") == doctest::Approx(33.23));
    CHECK(policy_action(tpl, w, low).at("release2") == doctest::Approx(10.0));
    Env high{{"level1", 70.0}, {"level2", 50.0}};
    CHECK(policy_action(tpl, w, high).at("release1") == doctest::Approx(70.0));
    CHECK(policy_action(tpl, w, high).at("release2") == doctest::Approx(0.0));
}

TEST_CASE("overlapping predicates resolve in declaration order") {
    DcMdp res = builtin_domain("reservoir2");
    PolicyTemplate tpl = make_template(res, PolicyClass::PWS_C, 2);
    PolicyParams w;
    for (const auto& p : tpl.params) w[p.name] = 0.0;
    w["release1_k0_l"] = 0.0;  w["release1_k0_u"] = 100.0; w["release1_k0_b"] = 11.0;
    w["release1_k1_l"] = 0.0;  w["release1_k1_u"] = 100.0; w["release1_k1_b"] = 22.0;
    Env s{{"level1", 50.0}, {"level2", 150.0}};
    CHECK(policy_action(tpl, w, s).at("release1") == doctest::Approx(11.0));
}

TEST_CASE("quadratic heads include cross terms") {
    DcMdp vtol = builtin_domain("vtol");
    PolicyTemplate tpl = make_template(vtol, PolicyClass::Q, 0);
    PolicyParams w;
    for (const auto& p : tpl.params) w[p.name] = 0.0;
    w["force_k0_b"] = 0.6;
    CHECK(policy_action(tpl, w, {{"theta", 0.0}, {"omega", 0.0}}).at("force") ==
          doctest::Approx(0.6));
    w["force_k0_q_theta_omega"] = 2.0;
    CHECK(policy_action(tpl, w, {{"theta", 0.05}, {"omega", 1.0}}).at("force") ==
          doctest::Approx(0.7));
}

TEST_CASE("missing or out-of-bounds parameters are rejected") {
    DcMdp inv = builtin_domain("inventory");
    PolicyTemplate tpl = make_template(inv, PolicyClass::S, 0);
    CHECK_THROWS_AS(check_params(tpl, PolicyParams{}), PolicyError);
    PolicyParams w{{"order_k0_b", 1e9}, {"order_k0_w_stock", 0.0}};
    CHECK_THROWS_AS(check_params(tpl, w), PolicyError);
}

TEST_CASE("dynamics classes of the builtin domains") {
    CHECK(dynamics_class(builtin_domain("nav1d")) == 'L');
    CHECK(dynamics_class(builtin_domain("inventory")) == 'L');
    CHECK(dynamics_class(builtin_domain("reservoir2")) == 'L');
    CHECK(dynamics_class(builtin_domain("vtol")) == 'N');
    CHECK(dynamics_class(builtin_domain("intercept")) == 'P');
}

TEST_CASE("problem-class grid over policy family and dynamics class") {
    struct Row { const char* policy; const char* L; const char* P; const char* N; };
    const Row rows[] = {
        {"PWS-{C,D}", "MILP", "PP", "MINLP"},
        {"PWL-{C,D}", "MILP/MIBCP", "PP", "MINLP"},
        {"S,L", "MILP/PP", "PP", "MINLP"},
        {"PW{S,L}-{S,L}", "MILP/PP", "PP", "MINLP"},
        {"PW{S,L,P}-P", "PP", "PP", "MINLP"},
        {"PWN-N", "MINLP", "MINLP", "MINLP"},
    };
    for (const auto& r : rows) {
        CAPTURE(r.policy);
        CHECK(classify(r.policy, 'L') == r.L);
        CHECK(classify(r.policy, 'P') == r.P);
        CHECK(classify(r.policy, 'N') == r.N);
    }
    // concrete classes map into the family rows
    CHECK(classify("C", 'L') == "MILP");
    CHECK(classify("B", 'L') == "MILP");
    CHECK(classify("PWS1-C", 'L') == "MILP");
    CHECK(classify("PWL1-B", 'L') == "MILP/MIBCP");
    CHECK(classify("S", 'L') == "MILP/PP");
    CHECK(classify("L", 'N') == "MINLP");
    CHECK(classify("PWS2-S", 'L') == "MILP/PP");
    CHECK(classify("Q", 'L') == "PP");
    CHECK(classify("Q", 'N') == "MINLP");
}

TEST_CASE("policy printing elides zero and unit coefficients") {
    DcMdp nav = builtin_domain("nav1d");
    PolicyTemplate tpl = make_template(nav, PolicyClass::L, 0);
    PolicyParams w{{"a_k0_b", 10.0}, {"a_k0_w_s", -1.0}};
    CHECK(print_policy(tpl, w) == "a = 10 - s\n");
    w["a_k0_w_s"] = 0.0;
    CHECK(print_policy(tpl, w) == "a = 10\n");
}
