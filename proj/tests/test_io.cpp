#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>

#include "cgpo/io.hpp"

using namespace cgpo;

TEST_CASE("policy files round-trip through JSON") {
    PolicySpec ps;
    ps.domain = "inventory";
    ps.policy_class = "PWS2-C";
    ps.options.param_bounds = Interval(-30, 30);
    ps.options.s_state = 0;
    ps.options.pws_states = {0, 0};
    ps.params = {{"order_k0_b", 4.0}, {"order_k0_l", -1.5}};
    PolicySpec back = policy_from_json(policy_to_json(ps));
    CHECK(back.domain == ps.domain);
    CHECK(back.policy_class == ps.policy_class);
    CHECK(back.options.param_bounds == ps.options.param_bounds);
    CHECK(back.options.s_state == ps.options.s_state);
    CHECK(back.options.pws_states == ps.options.pws_states);
    CHECK(back.params == ps.params);
    // the spec rebuilds a template compatible with its parameters
    DcMdp inv = builtin_domain("inventory");
    PolicyTemplate tpl = template_from_spec(inv, back);
    CHECK(tpl.params.size() == 7);
}

TEST_CASE("result JSON exposes the certificate trail") {
    CgpoResult res;
    res.status = CgpoResult::Status::Converged;
    res.final_bound = 1e-9;
    res.tau_conv = 1e-4;
    res.horizon = 2;
    IterationRecord rec;
    rec.epsilon = 0.5;
    rec.inner_value = 0.25;
    rec.inner_bound = 0.3;
    rec.params = {{"a_k0_b", 10.0}, {"a_k0_w_s", -1.0}};
    rec.scenario.s1 = {{"s", 0.0}};
    rec.scenario.noise = {{}, {}};
    rec.scenario.plan = {{{"a", 10.0}}, {{"a", 0.0}}};
    rec.scenario.plan_value = 0.0;
    res.iterations.push_back(rec);
    res.final_params = rec.params;

    DcMdp nav = builtin_domain("nav1d");
    PolicyTemplate tpl = make_template(nav, PolicyClass::L, 0);
    Json j = result_to_json(res, tpl);
    CHECK(j["status"] == "Converged");
    CHECK(j["iterations"].size() == 1);
    CHECK(j["iterations"][0]["epsilon"] == 0.5);
    CHECK(j["iterations"][0]["inner_bound"] == 0.3);
    CHECK(j["iterations"][0]["scenario"]["plan"][0]["a"] == 10.0);
    CHECK(j["policy"] == "a = 10 - s\n");
}

TEST_CASE("sizes CSV matches the recorded model dimensions") {
    CgpoResult res;
    IterationRecord rec;
    rec.outer_sizes = {3, 2, 1, 7, 4, 0};
    rec.inner_sizes = {5, 0, 2, 9, 1, 1};
    res.iterations.push_back(rec);
    std::string csv = sizes_csv(res);
    CHECK(csv.find("1,outer,3,2,1,7,4,0\n") != std::string::npos);
    CHECK(csv.find("1,inner,5,0,2,9,1,1\n") != std::string::npos);
}

TEST_CASE("SVG chart is self-contained and plots every point") {
    std::string svg = svg_line_chart("objective per iteration", "epsilon", {3.0, 1.0, 0.0});
    CHECK(svg.find("<svg") == 0);
    CHECK(svg.find("<polyline") != std::string::npos);
    CHECK(svg.find("objective per iteration") != std::string::npos);
    size_t circles = 0;
    for (size_t p = svg.find("<circle"); p != std::string::npos; p = svg.find("<circle", p + 1))
        ++circles;
    CHECK(circles == 3);
}

TEST_CASE("file helpers round-trip and report missing paths") {
    std::string path = std::filesystem::temp_directory_path() / "cgpo_io_test.txt";
    write_file(path, "hello\n");
    CHECK(read_file(path) == "hello\n");
    std::remove(path.c_str());
    CHECK_THROWS_AS(read_file("/nonexistent/nope"), IoError);
    CHECK_THROWS_AS(write_file("/nonexistent/nope", "x"), IoError);
}

TEST_CASE("counterfactual CSV reports both action streams and the regret") {
    DcMdp nav = builtin_domain("nav1d");
    PolicyTemplate tpl = make_template(nav, PolicyClass::L, 0);
    PolicyParams w{{"a_k0_b", 0.0}, {"a_k0_w_s", 0.0}};  // do-nothing policy
    Scenario sc;
    sc.s1 = {{"s", 0.0}};
    sc.noise = {{}, {}};
    sc.plan = {{{"a", 10.0}}, {{"a", 0.0}}};
    CounterfactualReport rep = explain(nav, 2, tpl, w, sc);
    CHECK(rep.plan_value == doctest::Approx(0.0));
    CHECK(rep.policy_value == doctest::Approx(-20.0));
    std::string csv = counterfactual_csv(nav, rep);
    CHECK(csv.find("policy_a") != std::string::npos);
    CHECK(csv.find("plan_a") != std::string::npos);
    CHECK(csv.find(",regret") != std::string::npos);
    CHECK(csv.find(",-10,0,10\n") != std::string::npos);  // per-step regret 10
}
