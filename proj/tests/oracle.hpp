#pragma once

// Compiler-vs-simulator equivalence oracle: compile one fully fixed rollout
// (initial state, noise and either an open-loop plan or an instantiated
// policy), solve it exactly, and compare the model's value variable against
// the reference simulator. Shared by the compiler tests and the acceptance
// checks.

#include <cmath>

#include "cgpo/cgpo.hpp"
#include "cgpo/sim.hpp"
#include "cgpo/solver.hpp"

namespace oracle {

using namespace cgpo;

struct Case {
    Env s1;
    std::vector<Env> noise;
    std::vector<Env> plan;  // empty when exercising a policy rollout
};

inline Case random_case(const DcMdp& mdp, int horizon, Rng& rng, bool with_plan) {
    Case c;
    c.s1 = sample_initial_state(mdp, rng);
    c.noise = sample_noise(mdp, horizon, rng);
    if (with_plan)
        for (int t = 0; t < horizon; ++t) {
            Env a;
            for (const auto& av : mdp.actions) {
                double v = rng.uniform(av.bounds.lo, av.bounds.hi);
                if (av.kind != VarKind::Real) v = std::floor(v + 0.5);
                a[av.name] = v;
            }
            c.plan.push_back(std::move(a));
        }
    return c;
}

struct Outcome {
    double model_v = 0.0;
    double sim_v = 0.0;
    double pwl_budget = 0.0;
    double error() const { return std::abs(model_v - sim_v); }
};

/// Value of the compiled open-loop rollout with every input pinned.
inline Outcome compiled_plan_value(const DcMdp& mdp, int horizon, const Case& c,
                                   const CompileConfig& ccfg = {}) {
    MipModel model;
    CompileCtx ctx(model, ccfg);
    RolloutSpec spec;
    spec.binding = PolicyBinding::Plan;
    spec.fixed_s1 = &c.s1;
    spec.fixed_noise = &c.noise;
    RolloutVars rv = compile_rollout(ctx, mdp, horizon, spec);
    for (int t = 0; t < horizon; ++t)
        for (const auto& [n, id] : rv.actions[t])
            model.vars[id].bounds = Interval(c.plan[t].at(n));
    model.set_objective(ObjSense::Max, LinExpr::term(rv.V));
    SolveConfig cfg;
    cfg.gap = 0.0;
    Solution sol = solve_milp(model, cfg);
    if (sol.status != SolveStatus::Optimal)
        throw std::runtime_error("oracle: fixed plan model did not solve");
    Outcome o;
    o.model_v = sol.value(rv.V);
    o.sim_v = rollout_plan(mdp, horizon, c.s1, c.noise, c.plan).total;
    o.pwl_budget = ctx.pwl_error;
    return o;
}

/// Value of the compiled closed-loop rollout of a fixed policy.
inline Outcome compiled_policy_value(const DcMdp& mdp, int horizon, const PolicyTemplate& tpl,
                                     const PolicyParams& params, const Case& c,
                                     const CompileConfig& ccfg = {}) {
    MipModel model;
    CompileCtx ctx(model, ccfg);
    RolloutSpec spec;
    spec.binding = PolicyBinding::TemplateFixed;
    spec.tpl = &tpl;
    spec.fixed_params = &params;
    spec.fixed_s1 = &c.s1;
    spec.fixed_noise = &c.noise;
    RolloutVars rv = compile_rollout(ctx, mdp, horizon, spec);
    model.set_objective(ObjSense::Max, LinExpr::term(rv.V));
    SolveConfig cfg;
    cfg.gap = 0.0;
    Solution sol = solve_milp(model, cfg);
    if (sol.status != SolveStatus::Optimal)
        throw std::runtime_error("oracle: fixed policy model did not solve");
    Outcome o;
    o.model_v = sol.value(rv.V);
    o.sim_v = rollout_policy(mdp, horizon, tpl, params, c.s1, c.noise).total;
    o.pwl_budget = ctx.pwl_error;
    return o;
}

/// Random in-bounds parameters for a template.
inline PolicyParams random_params(const PolicyTemplate& tpl, Rng& rng) {
    PolicyParams w;
    for (const auto& p : tpl.params) {
        Interval b = p.bounds;
        // keep weights moderate so rollouts are not all saturated
        double lo = std::max(b.lo, -5.0), hi = std::min(b.hi, 5.0);
        if (lo > hi) { lo = b.lo; hi = b.hi; }
        double v = rng.uniform(lo, hi);
        if (p.kind != VarKind::Real) v = std::floor(v + 0.5);
        w[p.name] = v;
    }
    return w;
}

}  // namespace oracle
