#pragma once

#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "cgpo/cgpo.hpp"
#include "cgpo/dsl.hpp"
#include "cgpo/policy.hpp"
#include "cgpo/sim.hpp"

namespace cgpo {

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

using Json = nlohmann::json;

// ---- policy files ------------------------------------------------------

/// Everything needed to rebuild a template and its instantiation: the
/// domain it was built against, the class tag, and the learned parameters.
struct PolicySpec {
    std::string domain;
    std::string policy_class;  // e.g. "L", "PWS1-C"
    TemplateOptions options;
    PolicyParams params;
};

inline Json policy_to_json(const PolicySpec& ps) {
    Json j;
    j["domain"] = ps.domain;
    j["policy_class"] = ps.policy_class;
    j["param_bounds"] = {ps.options.param_bounds.lo, ps.options.param_bounds.hi};
    if (ps.options.s_state >= 0) j["s_state"] = ps.options.s_state;
    if (!ps.options.pws_states.empty()) j["pws_states"] = ps.options.pws_states;
    j["params"] = Json::object();
    for (const auto& [n, v] : ps.params) j["params"][n] = v;
    return j;
}

inline PolicySpec policy_from_json(const Json& j) {
    PolicySpec ps;
    ps.domain = j.at("domain").get<std::string>();
    ps.policy_class = j.at("policy_class").get<std::string>();
    if (j.contains("param_bounds"))
        ps.options.param_bounds =
            Interval(j["param_bounds"][0].get<double>(), j["param_bounds"][1].get<double>());
    if (j.contains("s_state")) ps.options.s_state = j["s_state"].get<int>();
    if (j.contains("pws_states")) ps.options.pws_states = j["pws_states"].get<std::vector<int>>();
    if (j.contains("params"))
        for (auto it = j["params"].begin(); it != j["params"].end(); ++it)
            ps.params[it.key()] = it.value().get<double>();
    return ps;
}

inline PolicyTemplate template_from_spec(const DcMdp& mdp, const PolicySpec& ps) {
    auto [cls, K] = parse_policy_class(ps.policy_class);
    return make_template(mdp, cls, K, ps.options);
}

// ---- results -----------------------------------------------------------

inline Json env_to_json(const Env& e) {
    Json j = Json::object();
    for (const auto& [k, v] : e) j[k] = v;
    return j;
}

inline Json scenario_to_json(const Scenario& sc) {
    Json j;
    j["s1"] = env_to_json(sc.s1);
    j["noise"] = Json::array();
    for (const auto& e : sc.noise) j["noise"].push_back(env_to_json(e));
    j["plan"] = Json::array();
    for (const auto& e : sc.plan) j["plan"].push_back(env_to_json(e));
    j["plan_value"] = sc.plan_value;
    return j;
}

inline Json sizes_to_json(const ModelSizes& s) {
    return Json{{"continuous", s.cont},   {"integer", s.integer},
                {"binary", s.binary},     {"rows", s.rows},
                {"indicators", s.indicators}, {"sos2_groups", s.sos2_groups}};
}

inline Json result_to_json(const CgpoResult& res, const PolicyTemplate& tpl) {
    Json j;
    j["status"] = res.status == CgpoResult::Status::Converged ? "Converged" : "IterLimit";
    j["final_bound"] = res.final_bound;
    j["tau_conv"] = res.tau_conv;
    j["horizon"] = res.horizon;
    j["policy"] = print_policy(tpl, res.final_params);
    j["final_params"] = env_to_json(res.final_params);
    j["iterations"] = Json::array();
    for (const auto& it : res.iterations) {
        Json ji;
        ji["params"] = env_to_json(it.params);
        ji["epsilon"] = it.epsilon;
        ji["inner_value"] = it.inner_value;
        ji["inner_bound"] = it.inner_bound;
        ji["inner_pwl_error"] = it.inner_pwl_error;
        ji["scenario"] = scenario_to_json(it.scenario);
        ji["outer_sizes"] = sizes_to_json(it.outer_sizes);
        ji["inner_sizes"] = sizes_to_json(it.inner_sizes);
        j["iterations"].push_back(std::move(ji));
    }
    return j;
}

// ---- CSV reports -------------------------------------------------------

inline std::string sizes_csv(const CgpoResult& res) {
    std::ostringstream os;
    os << "iter,model,continuous,integer,binary,rows,indicators,sos2_groups\n";
    auto row = [&](int i, const char* which, const ModelSizes& s) {
        os << i << "," << which << "," << s.cont << "," << s.integer << "," << s.binary << ","
           << s.rows << "," << s.indicators << "," << s.sos2_groups << "\n";
    };
    for (size_t i = 0; i < res.iterations.size(); ++i) {
        row(static_cast<int>(i) + 1, "outer", res.iterations[i].outer_sizes);
        row(static_cast<int>(i) + 1, "inner", res.iterations[i].inner_sizes);
    }
    return os.str();
}

inline std::string counterfactual_csv(const DcMdp& mdp, const CounterfactualReport& rep) {
    std::ostringstream os;
    os << "t";
    for (const auto& s : mdp.states) os << "," << s.name;
    for (const auto& a : mdp.actions) os << ",policy_" << a.name;
    for (const auto& a : mdp.actions) os << ",plan_" << a.name;
    for (const auto& [n, _] : mdp.noises) os << "," << n;
    os << ",policy_reward,plan_reward,regret\n";
    for (const auto& row : rep.rows) {
        os << row.t;
        for (const auto& s : mdp.states) os << "," << format_number(row.state.at(s.name));
        for (const auto& a : mdp.actions)
            os << "," << format_number(row.policy_action.at(a.name));
        for (const auto& a : mdp.actions) os << "," << format_number(row.plan_action.at(a.name));
        for (const auto& [n, _] : mdp.noises) os << "," << format_number(row.noise.at(n));
        os << "," << format_number(row.policy_reward) << "," << format_number(row.plan_reward)
           << "," << format_number(row.plan_reward - row.policy_reward) << "\n";
    }
    return os.str();
}

inline std::string returns_csv(const RolloutStats& st) {
    std::ostringstream os;
    os << "rollout,return\n";
    for (size_t i = 0; i < st.returns.size(); ++i)
        os << i << "," << format_number(st.returns[i]) << "\n";
    return os.str();
}

// ---- SVG line charts ---------------------------------------------------

/// Minimal polyline chart: one series over iteration index, with axes and
/// tick labels. Self-contained — no external plotting dependency.
inline std::string svg_line_chart(const std::string& title, const std::string& ylabel,
                                  const std::vector<double>& ys) {
    const double W = 640, H = 400, ml = 70, mr = 20, mt = 40, mb = 50;
    double lo = 0.0, hi = 1.0;
    if (!ys.empty()) {
        lo = hi = ys[0];
        for (double y : ys) { lo = std::min(lo, y); hi = std::max(hi, y); }
    }
    if (hi - lo < 1e-12) { hi += 1.0; lo -= 1.0; }
    double pad = 0.05 * (hi - lo);
    lo -= pad; hi += pad;
    auto px = [&](size_t i) {
        double n = std::max<size_t>(ys.size() - 1, 1);
        return ml + (W - ml - mr) * static_cast<double>(i) / n;
    };
    auto py = [&](double y) { return H - mb - (H - mt - mb) * (y - lo) / (hi - lo); };
    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
       << "\" viewBox=\"0 0 " << W << " " << H << "\">\n"
       << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
       << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">"
       << title << "</text>\n"
       << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << H - mb
       << "\" stroke=\"black\"/>\n"
       << "<line x1=\"" << ml << "\" y1=\"" << H - mb << "\" x2=\"" << W - mr << "\" y2=\""
       << H - mb << "\" stroke=\"black\"/>\n";
    for (int k = 0; k <= 4; ++k) {
        double y = lo + (hi - lo) * k / 4.0;
        os << "<text x=\"" << ml - 8 << "\" y=\"" << py(y) + 4
           << "\" text-anchor=\"end\" font-size=\"11\">" << format_number(std::round(y * 1e4) / 1e4)
           << "</text>\n"
           << "<line x1=\"" << ml - 4 << "\" y1=\"" << py(y) << "\" x2=\"" << ml << "\" y2=\""
           << py(y) << "\" stroke=\"black\"/>\n";
    }
    for (size_t i = 0; i < ys.size(); ++i)
        os << "<text x=\"" << px(i) << "\" y=\"" << H - mb + 18
           << "\" text-anchor=\"middle\" font-size=\"11\">" << (i + 1) << "</text>\n";
    os << "<text x=\"" << W / 2 << "\" y=\"" << H - 12
       << "\" text-anchor=\"middle\" font-size=\"13\">iteration</text>\n"
       << "<text x=\"18\" y=\"" << H / 2 << "\" text-anchor=\"middle\" font-size=\"13\" "
       << "transform=\"rotate(-90 18 " << H / 2 << ")\">" << ylabel << "</text>\n";
    if (!ys.empty()) {
        os << "<polyline fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"2\" points=\"";
        for (size_t i = 0; i < ys.size(); ++i) os << px(i) << "," << py(ys[i]) << " ";
        os << "\"/>\n";
        for (size_t i = 0; i < ys.size(); ++i)
            os << "<circle cx=\"" << px(i) << "\" cy=\"" << py(ys[i])
               << "\" r=\"3\" fill=\"#1f77b4\"/>\n";
    }
    os << "</svg>\n";
    return os.str();
}

// ---- small file helpers ------------------------------------------------

inline std::string read_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot read " + path);
    std::ostringstream os;
    os << f.rdbuf();
    return os.str();
}

inline void write_file(const std::string& path, const std::string& content) {
    std::ofstream f(path);
    if (!f) throw IoError("cannot write " + path);
    f << content;
}

}  // namespace cgpo
