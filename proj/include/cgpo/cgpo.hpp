#pragma once

#include <cmath>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "cgpo/compile.hpp"
#include "cgpo/domain.hpp"
#include "cgpo/policy.hpp"
#include "cgpo/sim.hpp"
#include "cgpo/solver.hpp"

namespace cgpo {

struct CgpoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// A fixed (initial state, noise trajectory, open-loop plan) triple. Its plan
/// value is a constant, so it contributes one linear constraint to the outer
/// problem: eps >= plan_value - V_policy.
struct Scenario {
    Env s1;
    std::vector<Env> noise;  // one map per step; empty maps when noise-free
    std::vector<Env> plan;   // one map per step
    double plan_value = 0.0;
};

struct ModelSizes {
    int cont = 0, integer = 0, binary = 0;
    int rows = 0, indicators = 0, sos2_groups = 0;

    static ModelSizes of(const MipModel& m) {
        ModelSizes s;
        for (const auto& v : m.vars) {
            if (v.type == VarType::Cont) ++s.cont;
            else if (v.type == VarType::Int) ++s.integer;
            else ++s.binary;
        }
        s.rows = static_cast<int>(m.cons.size());
        s.indicators = static_cast<int>(m.indicators.size());
        s.sos2_groups = static_cast<int>(m.sos2.size());
        return s;
    }
};

struct CgpoConfig {
    NoiseHandling noise;
    double gap = 0.05;          // MIP optimality gap for outer and inner solves
    int max_iters = 50;
    double tau_conv = -1.0;     // convergence threshold; < 0 = 1e-4 * B * T
    int horizon = -1;           // override; < 0 uses the domain's horizon
    CompileConfig compile;
    SolveConfig solver;         // gap field is overwritten per solve
    // refine each outer solution lexicographically: with eps fixed at its
    // optimum, maximize the summed scenario values, then minimize the
    // parameter 1-norm; yields canonical parameters among the outer optima
    bool lex_refine = true;
    std::vector<Scenario> initial_scenarios;  // empty = default rule
};

struct IterationRecord {
    PolicyParams params;       // outer solution of this iteration
    double epsilon = 0.0;      // outer objective
    double inner_value = 0.0;  // inner incumbent: worst found violation
    double inner_bound = 0.0;  // inner certified upper bound
    Scenario scenario;         // the inner maximizer
    ModelSizes outer_sizes, inner_sizes;
    double inner_pwl_error = 0.0;  // approximation budget of the inner model
};

struct CgpoResult {
    enum class Status { Converged, IterLimit };
    Status status = Status::IterLimit;
    std::vector<IterationRecord> iterations;
    PolicyParams final_params;
    // certified worst-case error: inner bound plus the PWL approximation
    // budget, so it holds for the exact dynamics as well
    double final_bound = 0.0;
    double tau_conv = 0.0;  // threshold the run actually used
    int horizon = 0;
    std::vector<Scenario> scenarios;  // final constraint set
};

// ---- scenario construction --------------------------------------------

/// Default initialization: box midpoints for s1 and the plan (discrete
/// values rounded down), distribution medians clipped into the per-step
/// support for the noise.
inline Scenario initial_scenario(const DcMdp& mdp, int horizon, double p_step) {
    Scenario sc;
    for (const auto& sv : mdp.states) {
        double v = mdp.init.at(sv.name).mid();
        if (sv.kind != VarKind::Real) v = std::floor(v);
        sc.s1[sv.name] = v;
    }
    for (int t = 0; t < horizon; ++t) {
        Env xi, al;
        for (const auto& [n, dist] : mdp.noises) {
            Interval sup = noise_support(dist, p_step);
            xi[n] = std::clamp(dist.median(), sup.lo, sup.hi);
        }
        for (const auto& av : mdp.actions) {
            double v = av.bounds.mid();
            if (av.kind != VarKind::Real) v = std::floor(v);
            al[av.name] = v;
        }
        sc.noise.push_back(std::move(xi));
        sc.plan.push_back(std::move(al));
    }
    sc.plan_value = rollout_plan(mdp, horizon, sc.s1, sc.noise, sc.plan).total;
    return sc;
}

// ---- outer / inner model construction ---------------------------------

namespace detail {

using EvalList = std::vector<std::pair<int, VarEval>>;

/// Snap the free input variables of a candidate to their bounds and
/// integrality, then derive every compiler-created variable from them.
inline bool run_evals(const std::vector<std::pair<int, MipVarDecl>>& inputs,
                      const EvalList& evals, std::vector<double>& x) {
    for (const auto& [id, d] : inputs) {
        double v = x[id];
        if (d.type != VarType::Cont) v = std::round(v);
        x[id] = std::clamp(v, d.bounds.lo, d.bounds.hi);
    }
    for (const auto& [id, fn] : evals) {
        double v = fn(x);
        if (!std::isfinite(v)) return false;
        x[id] = v;
    }
    return true;
}

}  // namespace detail

struct OuterBuild {
    MipModel model;
    int eps = -1;
    std::map<std::string, int> params;
    std::vector<int> V;  // per-scenario policy-value variables
    double pwl_error = 0.0;
    std::shared_ptr<detail::EvalList> evals;
    std::vector<double> plan_values;

    enum class Goal { MinEps, MaxSumV };

    /// Primal heuristic for the solver: any parameter assignment extends to a
    /// feasible point by evaluating the rollouts and setting eps to the
    /// largest residual violation. The relaxation's parameters are refined by
    /// a pattern search over the exact residual (cheap: one forward
    /// evaluation per trial), with the best parameters cached across nodes.
    /// eps_hi carries the (possibly tightened) eps upper bound of the model
    /// being solved; MaxSumV searches for high summed value within it.
    std::function<bool(std::vector<double>&)> completion(double eps_hi,
                                                         Goal goal = Goal::MinEps) const {
        std::vector<std::pair<int, MipVarDecl>> inputs;
        for (const auto& [name, id] : params) inputs.emplace_back(id, model.vars[id]);
        auto cache = std::make_shared<std::vector<double>>();
        return [inputs, ev = evals, vids = V, pv = plan_values, eps_id = eps, eps_hi, goal,
                cache](std::vector<double>& x) {
            const double INF = std::numeric_limits<double>::infinity();
            std::vector<double> xs;
            auto score = [&](const std::vector<double>& pvec) {
                xs = x;
                for (size_t i = 0; i < inputs.size(); ++i) xs[inputs[i].first] = pvec[i];
                if (!detail::run_evals(inputs, *ev, xs)) return INF;
                double need = 0.0, sumv = 0.0;
                for (size_t i = 0; i < vids.size(); ++i) {
                    need = std::max(need, pv[i] - xs[vids[i]]);
                    sumv += xs[vids[i]];
                }
                if (goal == Goal::MinEps) return need;
                // lexicographic: reach the eps slab first, then lift the value
                return need > eps_hi + 1e-9 ? 1e30 + need : -sumv;
            };
            std::vector<double> best(inputs.size());
            for (size_t i = 0; i < inputs.size(); ++i) best[i] = x[inputs[i].first];
            double best_s = score(best);
            // the search below is orders of magnitude costlier than a single
            // score, so rerun it only when this node's relaxation beats the
            // best parameters any earlier node produced
            bool explore = cache->size() != best.size();
            if (!explore) {
                double s = score(*cache);
                explore = best_s < s - 1e-9;
                if (s < best_s) { best_s = s; best = *cache; }
            }
            // coordinate pattern search with a halving step schedule
            double width = 0.0;
            for (const auto& [id, d] : inputs) width = std::max(width, d.bounds.width());
            for (double step = std::max(1.0, width / 16.0); explore && step >= 0.125;
                 step /= 2.0) {
                bool improved = true;
                while (improved) {
                    improved = false;
                    for (size_t i = 0; i < inputs.size(); ++i) {
                        const auto& d = inputs[i].second;
                        double st = d.type == VarType::Cont ? step : std::max(1.0, step);
                        for (double dir : {st, -st}) {
                            std::vector<double> cand = best;
                            cand[i] = std::clamp(cand[i] + dir, d.bounds.lo, d.bounds.hi);
                            double s = score(cand);
                            if (s < best_s - 1e-12) {
                                best_s = s;
                                best = std::move(cand);
                                improved = true;
                            }
                        }
                    }
                }
            }
            if (best_s == INF) return false;
            *cache = best;
            for (size_t i = 0; i < inputs.size(); ++i) x[inputs[i].first] = best[i];
            if (!detail::run_evals(inputs, *ev, x)) return false;
            double need = 0.0;
            for (size_t i = 0; i < vids.size(); ++i)
                need = std::max(need, pv[i] - x[vids[i]]);
            if (need > eps_hi + 1e-9) return false;
            x[eps_id] = need;
            return true;
        };
    }
};

/// min eps s.t. eps >= plan_value_i - V_i(w) for every scenario. Only the
/// policy rollout is symbolic; the plan side of each constraint is the
/// scenario's constant value.
inline OuterBuild build_outer(const DcMdp& mdp, int horizon, const PolicyTemplate& tpl,
                              const std::vector<Scenario>& scenarios, double p_step,
                              const CompileConfig& ccfg) {
    if (scenarios.empty()) throw CgpoError("outer problem needs at least one scenario");
    OuterBuild ob;
    CompileCtx ctx(ob.model, ccfg);
    double B = mdp.reward_bound(mdp.declared_box(true));
    ob.eps = ob.model.add_var("eps", VarType::Cont, Interval(0.0, 2.0 * B * horizon));
    for (const auto& p : tpl.params) {
        VarType t = p.kind == VarKind::Real ? VarType::Cont
                    : p.kind == VarKind::Int ? VarType::Int : VarType::Bin;
        ob.params[p.name] = ob.model.add_var(p.name, t, p.bounds);
    }
    for (size_t i = 0; i < scenarios.size(); ++i) {
        RolloutSpec spec;
        spec.binding = PolicyBinding::TemplateParams;
        spec.tpl = &tpl;
        spec.shared_param_vars = &ob.params;
        spec.fixed_s1 = &scenarios[i].s1;
        spec.fixed_noise = &scenarios[i].noise;
        spec.p_step = p_step;
        spec.prefix = "c" + std::to_string(i) + "_";
        RolloutVars rv = compile_rollout(ctx, mdp, horizon, spec);
        ob.V.push_back(rv.V);
        ob.model.add_ge(LinExpr::term(ob.eps) + LinExpr::term(rv.V), scenarios[i].plan_value,
                        "cut" + std::to_string(i));
    }
    ob.model.set_objective(ObjSense::Min, LinExpr::term(ob.eps));
    ob.pwl_error = ctx.pwl_error;
    ob.evals = std::make_shared<detail::EvalList>(std::move(ctx.evals));
    for (const auto& sc : scenarios) ob.plan_values.push_back(sc.plan_value);
    return ob;
}

struct InnerBuild {
    MipModel model;
    RolloutVars plan, policy;  // share s1 and noise variables
    double pwl_error = 0.0;
    std::shared_ptr<detail::EvalList> evals;
    // branch s1 and the policy-side encoding first: the policy trajectory is
    // a function of (s1, noise), so fixing it makes its value exact in the
    // relaxation and the plan-side search strongly bounded
    std::vector<int> branch_priority;

    /// Primal heuristic: any (s1, noise, plan) choice extends to a feasible
    /// point by evaluating both rollouts forward.
    std::function<bool(std::vector<double>&)> completion() const {
        std::vector<std::pair<int, MipVarDecl>> inputs;
        auto take = [&](const std::map<std::string, int>& ids) {
            for (const auto& [name, id] : ids) inputs.emplace_back(id, model.vars[id]);
        };
        take(plan.s1);
        for (const auto& step : plan.noise) take(step);
        for (const auto& step : plan.actions) take(step);
        return [inputs, ev = evals](std::vector<double>& x) {
            return detail::run_evals(inputs, *ev, x);
        };
    }
};

/// max V_plan - V_policy over s1, per-step noise and the open-loop plan;
/// both rollouts face the same initial state and disturbances. A non-null
/// fixed_s1 pins the initial state instead (used when enumerating a finite
/// initial-state grid), which constant-folds the whole policy side.
inline InnerBuild build_inner(const DcMdp& mdp, int horizon, const PolicyTemplate& tpl,
                              const PolicyParams& params, double p_step,
                              const CompileConfig& ccfg, const Env* fixed_s1 = nullptr) {
    InnerBuild ib;
    CompileCtx ctx(ib.model, ccfg);
    RolloutSpec ps;
    ps.binding = PolicyBinding::Plan;
    ps.fixed_s1 = fixed_s1;
    ps.p_step = p_step;
    ps.prefix = "p_";
    ib.plan = compile_rollout(ctx, mdp, horizon, ps);
    int policy_first = static_cast<int>(ib.model.vars.size());
    RolloutSpec qs;
    qs.binding = PolicyBinding::TemplateFixed;
    qs.tpl = &tpl;
    qs.fixed_params = &params;
    if (fixed_s1) qs.fixed_s1 = fixed_s1;
    else qs.shared_s1 = &ib.plan.s1;
    qs.shared_noise = &ib.plan.noise;
    qs.p_step = p_step;
    qs.prefix = "q_";
    ib.policy = compile_rollout(ctx, mdp, horizon, qs);
    for (const auto& [name, id] : ib.plan.s1) ib.branch_priority.push_back(id);
    for (const auto& step : ib.plan.noise)
        for (const auto& [name, id] : step) ib.branch_priority.push_back(id);
    for (int v = policy_first; v < static_cast<int>(ib.model.vars.size()); ++v)
        ib.branch_priority.push_back(v);
    ib.model.set_objective(ObjSense::Max,
                           LinExpr::term(ib.plan.V) - LinExpr::term(ib.policy.V));
    ib.pwl_error = ctx.pwl_error;
    ib.evals = std::make_shared<detail::EvalList>(std::move(ctx.evals));
    return ib;
}

// ---- the driver --------------------------------------------------------

namespace detail {

inline double snap_value(const MipVarDecl& d, double v) {
    if (d.type != VarType::Cont) v = std::round(v);
    return std::clamp(v, d.bounds.lo, d.bounds.hi);
}

inline PolicyParams extract_params(const MipModel& m, const std::map<std::string, int>& ids,
                                   const Solution& sol) {
    PolicyParams out;
    for (const auto& [name, id] : ids) out[name] = snap_value(m.vars[id], sol.value(id));
    return out;
}

/// Read the inner maximizer back into a Scenario; its plan value comes from
/// the reference simulator, cross-checked against the model's own V within
/// the PWL budget.
inline Scenario extract_scenario(const DcMdp& mdp, int horizon, const InnerBuild& ib,
                                 const Solution& sol, const Env* fixed_s1 = nullptr) {
    Scenario sc;
    const MipModel& m = ib.model;
    for (const auto& sv : mdp.states) {
        Interval init = mdp.init.at(sv.name);
        double v = fixed_s1 ? fixed_s1->at(sv.name)
                            : snap_value(m.vars[ib.plan.s1.at(sv.name)],
                                         sol.value(ib.plan.s1.at(sv.name)));
        sc.s1[sv.name] = std::clamp(v, init.lo, init.hi);
    }
    for (int t = 0; t < horizon; ++t) {
        Env xi, al;
        for (const auto& [n, id] : ib.plan.noise[t]) xi[n] = snap_value(m.vars[id], sol.value(id));
        for (const auto& [n, id] : ib.plan.actions[t])
            al[n] = snap_value(m.vars[id], sol.value(id));
        sc.noise.push_back(std::move(xi));
        sc.plan.push_back(std::move(al));
    }
    sc.plan_value = rollout_plan(mdp, horizon, sc.s1, sc.noise, sc.plan).total;
    double model_v = sol.value(ib.plan.V);
    double tol = 1e-5 * std::max(1.0, std::abs(sc.plan_value)) + ib.plan.pwl_error;
    if (std::abs(model_v - sc.plan_value) > tol)
        throw CgpoError("inner plan value " + std::to_string(model_v) +
                        " disagrees with the simulator value " +
                        std::to_string(sc.plan_value) + " — compiler defect");
    return sc;
}

/// Enumerable initial-state grid: every state is discrete and the box holds
/// at most `cap` points. Empty result means "not enumerable".
inline std::vector<Env> s1_cells(const DcMdp& mdp, size_t cap = 64) {
    std::vector<Env> cells(1);
    for (const auto& sv : mdp.states) {
        if (sv.kind == VarKind::Real) return {};
        Interval b = mdp.init.at(sv.name);
        long long lo = static_cast<long long>(std::ceil(b.lo));
        long long hi = static_cast<long long>(std::floor(b.hi));
        if (hi < lo) return {};
        if (cells.size() * static_cast<size_t>(hi - lo + 1) > cap) return {};
        std::vector<Env> next;
        for (const Env& c : cells)
            for (long long v = lo; v <= hi; ++v) {
                Env e = c;
                e[sv.name] = static_cast<double>(v);
                next.push_back(std::move(e));
            }
        cells = std::move(next);
    }
    return cells;
}

struct InnerOutcome {
    InnerBuild ib;   // model of the maximizing cell (or the joint model)
    Solution sol;
    Env fixed_s1;    // non-empty when the initial state was enumerated
    double value = 0.0, bound = 0.0, pwl = 0.0;  // aggregates over cells
    ModelSizes sizes;
};

/// Solve the inner maximization, either jointly or — when the initial-state
/// box is a small discrete grid — cell by cell with s1 constant-folded into
/// both rollouts, which keeps each MIP small and its relaxation tight.
inline InnerOutcome solve_inner(const DcMdp& work, int T, const PolicyTemplate& tpl,
                                const PolicyParams& params, double p_step,
                                const CompileConfig& ccfg, SolveConfig scfg, double tau) {
    std::vector<Env> cells = s1_cells(work);
    auto solve_one = [&](const Env* s1, const SolveConfig& base) {
        InnerBuild ib = build_inner(work, T, tpl, params, p_step, ccfg, s1);
        SolveConfig sc = base;
        sc.complete = ib.completion();
        sc.branch_priority = ib.branch_priority;
        Solution sol = solve(ib.model, sc);
        if (sol.status == SolveStatus::Infeasible)
            throw CgpoError("inner problem infeasible — compiler defect");
        return std::make_pair(std::move(ib), std::move(sol));
    };
    auto attempt = [&](const SolveConfig& sc) {
        InnerOutcome o;
        if (cells.empty()) {
            auto [ib, sol] = solve_one(nullptr, sc);
            o.value = sol.objective;
            o.bound = sol.bound;
            o.pwl = ib.pwl_error;
            o.sizes = ModelSizes::of(ib.model);
            o.ib = std::move(ib);
            o.sol = std::move(sol);
            return o;
        }
        bool first = true;
        for (const Env& cell : cells) {
            auto [ib, sol] = solve_one(&cell, sc);
            o.bound = first ? sol.bound : std::max(o.bound, sol.bound);
            o.pwl = std::max(o.pwl, ib.pwl_error);
            if (first) o.sizes = ModelSizes::of(ib.model);
            if (first || sol.objective > o.value) {
                o.value = sol.objective;
                o.ib = std::move(ib);
                o.sol = std::move(sol);
                o.fixed_s1 = cell;
            }
            first = false;
        }
        return o;
    };
    InnerOutcome o = attempt(scfg);
    // an incumbent below threshold cannot certify convergence on its own;
    // close the gap before deciding
    if (o.bound > tau && o.value <= tau && scfg.gap > 0.0) {
        scfg.gap = 0.0;
        o = attempt(scfg);
    }
    return o;
}

/// Stages 2 and 3: among the eps-optimal policies, prefer high summed
/// scenario value, then a small parameter 1-norm. Pure tie-breaking — the
/// reported epsilon is stage 1's.
inline bool usable(const Solution& s) {
    return (s.status == SolveStatus::Optimal || s.status == SolveStatus::GapReached ||
            s.status == SolveStatus::TimeLimit) &&
           !s.assignment.empty();
}

/// Refinement is tie-breaking only, so a failed stage falls back to the best
/// earlier solution instead of aborting the run.
inline Solution lex_refine_outer(const OuterBuild& ob, const Solution& stage1,
                                 double eps_star, const SolveConfig& sc) {
    MipModel m2 = ob.model;
    double slack = 1e-7 * std::max(1.0, std::abs(eps_star));
    double eps_hi = std::min(m2.vars[ob.eps].bounds.hi, eps_star + slack);
    m2.vars[ob.eps].bounds.hi = eps_hi;
    LinExpr sumv;
    for (int v : ob.V) sumv.add(v, 1.0);
    m2.set_objective(ObjSense::Max, sumv);
    SolveConfig sc2 = sc;
    sc2.complete = ob.completion(eps_hi, OuterBuild::Goal::MaxSumV);
    // refinement earns no certificate, so a deterministic node cap bounds its
    // cost; a TimeLimit incumbent is still a valid eps-optimal policy
    sc2.node_limit = std::min(sc2.node_limit, 3000LL);
    Solution s2 = solve(m2, sc2);
    if (!usable(s2)) return stage1;

    MipModel m3 = m2;
    double vslack = 1e-7 * std::max(1.0, std::abs(s2.objective));
    m3.add_ge(sumv, s2.objective - vslack, "lexv");
    LinExpr norm;
    std::vector<std::pair<int, int>> abs_of;  // abs var, param var
    for (const auto& [name, id] : ob.params) {
        Interval b = m3.vars[id].bounds;
        int t = m3.add_var("absw_" + name, VarType::Cont,
                           Interval(0.0, std::max(std::abs(b.lo), std::abs(b.hi))));
        m3.add_ge(LinExpr::term(t) - LinExpr::term(id), 0.0);
        m3.add_ge(LinExpr::term(t) + LinExpr::term(id), 0.0);
        norm.add(t, 1.0);
        abs_of.emplace_back(t, id);
    }
    m3.set_objective(ObjSense::Min, norm);
    SolveConfig sc3 = sc;
    sc3.complete = [base = ob.completion(eps_hi, OuterBuild::Goal::MaxSumV),
                    abs_of](std::vector<double>& x) {
        if (!base(x)) return false;
        for (const auto& [t, id] : abs_of) x[t] = std::abs(x[id]);
        return true;
    };
    sc3.node_limit = std::min(sc3.node_limit, 3000LL);
    Solution s3 = solve(m3, sc3);
    return usable(s3) ? s3 : s2;
}

}  // namespace detail

/// Alternate outer (fit the accumulated scenarios) and inner (find the worst
/// new scenario) solves until the inner certified bound drops to tau_conv.
/// Every iteration leaves a usable policy and bound behind (anytime).
inline CgpoResult run_cgpo(const DcMdp& mdp, const PolicyTemplate& tpl,
                           const CgpoConfig& cfg) {
    using Mode = NoiseHandling::Mode;
    DcMdp work = cfg.noise.mode == Mode::Marginalized ? expected_transition(mdp, cfg.noise.p)
                                                      : mdp;
    if (cfg.noise.mode == Mode::Deterministic)
        for (const auto& [n, dist] : work.noises)
            if (dist.kind != NoiseDist::Kind::Degenerate)
                throw CgpoError("deterministic mode on stochastic noise " + n +
                                "; use chance or marginal handling");
    int T = cfg.horizon > 0 ? cfg.horizon : work.horizon;
    if (T < 1) throw CgpoError("horizon must be at least 1");
    double p_step = cfg.noise.p_step(T);
    double B = work.reward_bound(work.declared_box(true));

    CgpoResult res;
    res.horizon = T;
    res.tau_conv = cfg.tau_conv >= 0.0 ? cfg.tau_conv : 1e-4 * B * T;
    if (cfg.initial_scenarios.empty()) {
        res.scenarios.push_back(initial_scenario(work, T, p_step));
    } else {
        for (Scenario sc : cfg.initial_scenarios) {
            // recompute the plan value so externally supplied triples are
            // consistent with the model
            sc.plan_value = rollout_plan(work, T, sc.s1, sc.noise, sc.plan).total;
            res.scenarios.push_back(std::move(sc));
        }
    }

    SolveConfig scfg = cfg.solver;
    scfg.gap = cfg.gap;
    for (int iter = 0; iter < cfg.max_iters; ++iter) {
        IterationRecord rec;
        OuterBuild ob = build_outer(work, T, tpl, res.scenarios, p_step, cfg.compile);
        rec.outer_sizes = ModelSizes::of(ob.model);
        scfg.complete = ob.completion(ob.model.vars[ob.eps].bounds.hi);
        scfg.branch_priority.clear();
        Solution osol = solve(ob.model, scfg);
        if (osol.status == SolveStatus::Infeasible)
            throw CgpoError("outer problem infeasible — compiler defect");
        rec.epsilon = osol.value(ob.eps);
        if (cfg.lex_refine && !tpl.params.empty()) {
            Solution refined = detail::lex_refine_outer(ob, osol, rec.epsilon, scfg);
            rec.params = detail::extract_params(ob.model, ob.params, refined);
        } else {
            rec.params = detail::extract_params(ob.model, ob.params, osol);
        }

        detail::InnerOutcome io = detail::solve_inner(work, T, tpl, rec.params, p_step,
                                                      cfg.compile, scfg, res.tau_conv);
        rec.inner_sizes = io.sizes;
        rec.inner_pwl_error = io.pwl;
        rec.inner_value = io.value;
        rec.inner_bound = io.bound;
        rec.scenario = detail::extract_scenario(work, T, io.ib, io.sol,
                                                io.fixed_s1.empty() ? nullptr : &io.fixed_s1);

        res.iterations.push_back(rec);
        // anytime: keep the best certified iteration, not merely the last —
        // capped runs on weak policy classes can plateau or oscillate
        if (res.iterations.size() == 1 || io.bound + io.pwl < res.final_bound) {
            res.final_params = rec.params;
            res.final_bound = io.bound + io.pwl;
        }
        if (io.bound <= res.tau_conv) {
            res.status = CgpoResult::Status::Converged;
            return res;
        }
        res.scenarios.push_back(rec.scenario);
    }
    res.status = CgpoResult::Status::IterLimit;
    return res;
}

// ---- counterfactual explanation ---------------------------------------

struct CounterfactualRow {
    int t = 0;
    Env state;        // policy trajectory state at the start of the step
    Env policy_action;
    Env plan_action;  // what the adversarial plan did instead
    Env noise;
    double policy_reward = 0.0;
    double plan_reward = 0.0;
};

struct CounterfactualReport {
    std::vector<CounterfactualRow> rows;
    double policy_value = 0.0;
    double plan_value = 0.0;
};

/// Per-step comparison of the policy against the scenario's plan on the
/// scenario's own disturbances.
inline CounterfactualReport explain(const DcMdp& mdp, int horizon, const PolicyTemplate& tpl,
                                    const PolicyParams& params, const Scenario& sc) {
    Trajectory pol = rollout_policy(mdp, horizon, tpl, params, sc.s1, sc.noise);
    Trajectory plan = rollout_plan(mdp, horizon, sc.s1, sc.noise, sc.plan);
    CounterfactualReport rep;
    rep.policy_value = pol.total;
    rep.plan_value = plan.total;
    for (int t = 0; t < horizon; ++t) {
        CounterfactualRow row;
        row.t = t + 1;
        row.state = pol.steps[t].state;
        row.policy_action = pol.steps[t].action;
        row.plan_action = plan.steps[t].action;
        row.noise = pol.steps[t].noise;
        row.policy_reward = pol.steps[t].reward;
        row.plan_reward = plan.steps[t].reward;
        rep.rows.push_back(std::move(row));
    }
    return rep;
}

}  // namespace cgpo
