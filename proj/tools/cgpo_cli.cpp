// Command-line front end: run the constraint-generation loop, simulate
// policies, classify problem instances, and solve LP/MILP files.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cgpo/cgpo.hpp"
#include "cgpo/io.hpp"
#include "cgpo/lp_format.hpp"
#include "cgpo/sim.hpp"

namespace fs = std::filesystem;
using namespace cgpo;

namespace {

DcMdp load_domain(const std::string& name_or_path) {
    if (fs::exists(name_or_path)) {
        DcMdp m = parse_domain(read_file(name_or_path));
        return m;
    }
    return builtin_domain(name_or_path);
}

NoiseHandling::Mode parse_mode(const std::string& s) {
    if (s == "det") return NoiseHandling::Mode::Deterministic;
    if (s == "chance") return NoiseHandling::Mode::ChanceConstrained;
    if (s == "marginal") return NoiseHandling::Mode::Marginalized;
    throw IoError("unknown mode: " + s + " (expected det, chance or marginal)");
}

struct RunArgs {
    std::string domain, policy = "C", mode = "det", backend = "bundled";
    std::string solver_cmd, out_dir = ".";
    int cases = -1, horizon = -1, max_iters = 50, pwl_segments = 16;
    double p = 0.995, gap = 0.05, tol = -1.0, eps_strict = 1e-5, param_bound = 100.0;
    bool per_step_p = false, no_lex = false;
    std::uint64_t seed = 0;
    int eval_rollouts = 100;
};

int cmd_run(const RunArgs& a) {
    DcMdp mdp = load_domain(a.domain);
    auto [cls, K] = parse_policy_class(a.policy);
    if (a.cases >= 0) {
        if (pred_of(cls) == PredKind::None)
            throw IoError("--cases given for a non-piecewise policy class");
        K = a.cases;
    }
    TemplateOptions topt;
    topt.param_bounds = Interval(-a.param_bound, a.param_bound);
    PolicyTemplate tpl = make_template(mdp, cls, K, topt);

    CgpoConfig cfg;
    cfg.noise.mode = parse_mode(a.mode);
    cfg.noise.p = a.p;
    cfg.noise.per_step_convention = a.per_step_p;
    cfg.gap = a.gap;
    cfg.max_iters = a.max_iters;
    cfg.tau_conv = a.tol;
    cfg.horizon = a.horizon;
    cfg.compile.eps_strict = a.eps_strict;
    cfg.compile.pwl_segments = a.pwl_segments;
    cfg.lex_refine = !a.no_lex;
    if (a.backend == "external") {
        cfg.solver.external_cmd = a.solver_cmd.empty()
                                      ? (std::getenv("CGPO_SOLVER_CMD")
                                             ? std::getenv("CGPO_SOLVER_CMD") : "")
                                      : a.solver_cmd;
        if (cfg.solver.external_cmd.empty())
            throw IoError("external backend needs --solver-cmd or CGPO_SOLVER_CMD");
    } else if (a.backend != "bundled") {
        throw IoError("unknown backend: " + a.backend);
    }

    CgpoResult res = run_cgpo(mdp, tpl, cfg);

    fs::create_directories(a.out_dir);
    auto out = [&](const std::string& name) { return (fs::path(a.out_dir) / name).string(); };
    write_file(out("result.json"), result_to_json(res, tpl).dump(2) + "\n");
    write_file(out("policy.txt"), print_policy(tpl, res.final_params));
    PolicySpec ps{a.domain, policy_class_name(cls, K), topt, res.final_params};
    write_file(out("policy.json"), policy_to_json(ps).dump(2) + "\n");

    DcMdp work = cfg.noise.mode == NoiseHandling::Mode::Marginalized
                     ? expected_transition(mdp, cfg.noise.p) : mdp;
    const Scenario& worst = res.iterations.back().scenario;
    Trajectory wc = rollout_policy(work, res.horizon, tpl, res.final_params, worst.s1,
                                   worst.noise);
    write_file(out("worst_case.csv"), trajectory_csv(work, wc));
    write_file(out("counterfactual.csv"),
               counterfactual_csv(work, explain(work, res.horizon, tpl, res.final_params,
                                                worst)));
    write_file(out("sizes.csv"), sizes_csv(res));

    std::vector<double> eps_series, ret_series;
    for (const auto& it : res.iterations) {
        eps_series.push_back(it.epsilon);
        // empirical returns are measured on the true dynamics and noise
        // distributions, not the surrogate the guarantee refers to
        ret_series.push_back(
            evaluate(mdp, tpl, it.params, a.eval_rollouts, a.seed).mean);
    }
    write_file(out("epsilon_per_iter.svg"),
               svg_line_chart("outer objective per iteration", "epsilon", eps_series));
    write_file(out("return_per_iter.svg"),
               svg_line_chart("mean return per iteration (true noise)", "return", ret_series));

    bool conv = res.status == CgpoResult::Status::Converged;
    std::printf("%s after %zu iteration(s); certified worst-case error %.6g (tau %.6g)\n",
                conv ? "Converged" : "Iteration limit", res.iterations.size(),
                res.final_bound, res.tau_conv);
    std::printf("%s", print_policy(tpl, res.final_params).c_str());
    return conv ? 0 : 2;
}

int cmd_simulate(const std::string& domain, const std::string& policy_file, int n,
                 std::uint64_t seed, int horizon, const std::string& out_csv) {
    DcMdp mdp = load_domain(domain);
    PolicySpec ps = policy_from_json(Json::parse(read_file(policy_file)));
    PolicyTemplate tpl = template_from_spec(mdp, ps);
    check_params(tpl, ps.params);
    RolloutStats st = evaluate(mdp, tpl, ps.params, n, seed, horizon);
    std::printf("mean return %.6g +- %.6g (95%% CI over %d rollouts, seed %llu; "
                "true noise distributions)\n",
                st.mean, st.half_width, n, static_cast<unsigned long long>(seed));
    if (!out_csv.empty()) write_file(out_csv, returns_csv(st));
    return 0;
}

int cmd_inspect(const std::string& domain, const std::string& policy) {
    DcMdp mdp = load_domain(domain);
    char dc = dynamics_class(mdp);
    std::string cell = classify(policy, dc);
    std::printf("domain %s: dynamics class %c\n", mdp.name.c_str(), dc);
    std::printf("policy %s: problem class %s\n", policy.c_str(), cell.c_str());
    bool approx = dc != 'L' || cell.find("PP") != std::string::npos ||
                  cell.find("MINLP") != std::string::npos;
    std::printf("compiler path: %s\n",
                approx ? "MILP with piecewise-linear approximation of nonlinear terms"
                       : "exact MILP");
    return 0;
}

int cmd_solve_lp(const std::string& in_path, const std::string& out_path, double gap) {
    MipModel m = parse_lp(read_file(in_path));
    SolveConfig cfg;
    cfg.gap = gap;
    Solution sol = solve_milp(m, cfg);
    if (sol.status != SolveStatus::Optimal && sol.status != SolveStatus::GapReached) {
        std::fprintf(stderr, "no solution found\n");
        return 1;
    }
    std::ostringstream os;
    for (size_t v = 0; v < m.vars.size(); ++v)
        os << m.vars[v].name << " " << format_number(sol.assignment[v]) << "\n";
    write_file(out_path, os.str());
    std::printf("objective %.10g (bound %.10g, gap %.3g)\n", sol.objective, sol.bound,
                sol.gap);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"constraint-generation policy optimization for DC-MDPs"};
    app.require_subcommand(1);

    RunArgs ra;
    CLI::App* run = app.add_subcommand("run", "optimize a policy by constraint generation");
    run->add_option("--domain", ra.domain, "builtin name or domain file")->required();
    run->add_option("--policy", ra.policy, "policy class, e.g. L or PWS1-C");
    run->add_option("--cases", ra.cases, "piecewise case count");
    run->add_option("--horizon-override", ra.horizon, "override the domain horizon");
    run->add_option("--p", ra.p, "chance level for noise supports");
    run->add_option("--mode", ra.mode, "det, chance or marginal");
    run->add_option("--gap", ra.gap, "MIP optimality gap");
    run->add_option("--max-iters", ra.max_iters, "iteration limit");
    run->add_option("--tol", ra.tol, "convergence tolerance (default 1e-4*B*T)");
    run->add_option("--epsilon-strict", ra.eps_strict, "strict-comparison slack");
    run->add_option("--pwl-segments", ra.pwl_segments, "segments per nonlinear node");
    run->add_option("--param-bound", ra.param_bound, "symmetric parameter bound");
    run->add_option("--backend", ra.backend, "bundled or external");
    run->add_option("--solver-cmd", ra.solver_cmd, "external command with {in}/{out}");
    run->add_option("--seed", ra.seed, "seed for the per-iteration return estimate");
    run->add_option("--eval-rollouts", ra.eval_rollouts, "rollouts per return estimate");
    run->add_option("--out", ra.out_dir, "output directory");
    run->add_flag("--per-step-p", ra.per_step_p, "treat --p as the per-step level");
    run->add_flag("--no-lex", ra.no_lex, "skip lexicographic outer refinement");

    std::string sim_domain, sim_policy, sim_out;
    int sim_n = 100, sim_horizon = -1;
    std::uint64_t sim_seed = 0;
    CLI::App* sim = app.add_subcommand("simulate", "Monte-Carlo evaluation of a policy file");
    sim->add_option("--domain", sim_domain)->required();
    sim->add_option("--policy", sim_policy, "policy.json path")->required();
    sim->add_option("-n,--rollouts", sim_n);
    sim->add_option("--seed", sim_seed);
    sim->add_option("--horizon-override", sim_horizon);
    sim->add_option("--out", sim_out, "returns CSV path");

    std::string ins_domain, ins_policy = "C";
    CLI::App* ins = app.add_subcommand("inspect", "problem-class report");
    ins->add_option("--domain", ins_domain)->required();
    ins->add_option("--policy", ins_policy);

    std::string lp_in, lp_out;
    double lp_gap = 0.0;
    CLI::App* slv = app.add_subcommand("solve-lp", "solve an LP-format MILP file");
    slv->add_option("input", lp_in)->required();
    slv->add_option("output", lp_out, "solution file (var value per line)")->required();
    slv->add_option("--gap", lp_gap);

    CLI11_PARSE(app, argc, argv);
    try {
        if (run->parsed()) return cmd_run(ra);
        if (sim->parsed())
            return cmd_simulate(sim_domain, sim_policy, sim_n, sim_seed, sim_horizon, sim_out);
        if (ins->parsed()) return cmd_inspect(ins_domain, ins_policy);
        if (slv->parsed()) return cmd_solve_lp(lp_in, lp_out, lp_gap);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 1;
}
