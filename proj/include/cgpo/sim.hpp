#pragma once

#include <cmath>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "cgpo/domain.hpp"
#include "cgpo/dsl.hpp"
#include "cgpo/policy.hpp"
#include "cgpo/stats.hpp"

namespace cgpo {

struct SimError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct StepRecord {
    Env state;    // state at the start of the step
    Env action;
    Env noise;
    double reward = 0.0;
};

struct Trajectory {
    std::vector<StepRecord> steps;
    Env final_state;
    double total = 0.0;
};

struct RolloutStats {
    double mean = 0.0;
    double sd = 0.0;
    double half_width = 0.0;  // 95% CI: 1.96 * sd / sqrt(n)
    std::vector<double> returns;
    std::uint64_t seed = 0;
};

namespace detail {

/// One exact step: evaluate transitions and the reward at (s, a, xi, s').
inline double sim_step(const DcMdp& mdp, Env& state, const Env& action, const Env& noise) {
    Env env = state;
    for (const auto& [k, v] : action) env[k] = v;
    for (const auto& [k, v] : noise) env[k] = v;
    Env next;
    for (const auto& sv : mdp.states) next[sv.name] = eval(mdp.transitions.at(sv.name), env);
    for (const auto& [k, v] : next) env[primed(k)] = v;
    double r = eval(mdp.reward, env);
    state = std::move(next);
    return r;
}

inline void check_in_box(const Env& values, const std::vector<VarDecl>& decls,
                         const char* what) {
    for (const auto& d : decls) {
        auto it = values.find(d.name);
        if (it == values.end())
            throw SimError(std::string("rollout: missing ") + what + " value for " + d.name);
        if (!d.bounds.contains(it->second))
            throw SimError(std::string("rollout: ") + what + " value for " + d.name +
                           " outside bounds");
    }
}

}  // namespace detail

/// Fresh per-step noise draws from the true (unclipped) distributions.
inline std::vector<Env> sample_noise(const DcMdp& mdp, int horizon, Rng& rng) {
    std::vector<Env> out(horizon);
    for (int t = 0; t < horizon; ++t)
        for (const auto& [n, dist] : mdp.noises) out[t][n] = dist.sample(rng);
    return out;
}

/// Per-step noise pinned at the distribution medians.
inline std::vector<Env> median_noise(const DcMdp& mdp, int horizon) {
    std::vector<Env> out(horizon);
    for (int t = 0; t < horizon; ++t)
        for (const auto& [n, dist] : mdp.noises) out[t][n] = dist.median();
    return out;
}

/// Open-loop rollout of a fixed action sequence.
inline Trajectory rollout_plan(const DcMdp& mdp, int horizon, const Env& s1,
                               const std::vector<Env>& noise, const std::vector<Env>& plan) {
    if (static_cast<int>(plan.size()) < horizon)
        throw SimError("rollout: plan shorter than horizon");
    if (static_cast<int>(noise.size()) < horizon)
        throw SimError("rollout: noise shorter than horizon");
    detail::check_in_box(s1, mdp.states, "state");
    Trajectory tr;
    Env state = s1;
    for (int t = 0; t < horizon; ++t) {
        detail::check_in_box(plan[t], mdp.actions, "action");
        StepRecord rec{state, plan[t], noise[t], 0.0};
        rec.reward = detail::sim_step(mdp, state, plan[t], noise[t]);
        tr.total += rec.reward;
        tr.steps.push_back(std::move(rec));
    }
    tr.final_state = std::move(state);
    return tr;
}

/// Closed-loop rollout of an instantiated policy.
inline Trajectory rollout_policy(const DcMdp& mdp, int horizon, const PolicyTemplate& tpl,
                                 const PolicyParams& params, const Env& s1,
                                 const std::vector<Env>& noise) {
    if (static_cast<int>(noise.size()) < horizon)
        throw SimError("rollout: noise shorter than horizon");
    detail::check_in_box(s1, mdp.states, "state");
    Trajectory tr;
    Env state = s1;
    for (int t = 0; t < horizon; ++t) {
        Env action = policy_action(tpl, params, state);
        StepRecord rec{state, action, noise[t], 0.0};
        rec.reward = detail::sim_step(mdp, state, action, noise[t]);
        tr.total += rec.reward;
        tr.steps.push_back(std::move(rec));
    }
    tr.final_state = std::move(state);
    return tr;
}

/// Initial state drawn uniformly over the initial box (integer states take
/// uniformly random integer values in it).
inline Env sample_initial_state(const DcMdp& mdp, Rng& rng) {
    Env s1;
    for (const auto& sv : mdp.states) {
        Interval b = mdp.init.at(sv.name);
        if (sv.kind == VarKind::Real) {
            s1[sv.name] = rng.uniform(b.lo, b.hi);
        } else {
            s1[sv.name] = static_cast<double>(
                rng.uniform_int(static_cast<long long>(std::ceil(b.lo)),
                                static_cast<long long>(std::floor(b.hi))));
        }
    }
    return s1;
}

/// n independent seeded rollouts; rollout i uses Rng::derive(seed, i), so
/// the estimate is reproducible and independent of evaluation order.
inline RolloutStats evaluate(const DcMdp& mdp, const PolicyTemplate& tpl,
                             const PolicyParams& params, int n, std::uint64_t seed,
                             int horizon = -1) {
    if (n < 1) throw SimError("evaluate: need n >= 1");
    if (horizon < 0) horizon = mdp.horizon;
    RolloutStats st;
    st.seed = seed;
    st.returns.reserve(n);
    for (int i = 0; i < n; ++i) {
        Rng rng = Rng::derive(seed, static_cast<std::uint64_t>(i));
        Env s1 = sample_initial_state(mdp, rng);
        std::vector<Env> noise = sample_noise(mdp, horizon, rng);
        st.returns.push_back(rollout_policy(mdp, horizon, tpl, params, s1, noise).total);
    }
    double sum = 0.0;
    for (double r : st.returns) sum += r;
    st.mean = sum / n;
    double ss = 0.0;
    for (double r : st.returns) ss += (r - st.mean) * (r - st.mean);
    st.sd = n > 1 ? std::sqrt(ss / (n - 1)) : 0.0;
    st.half_width = 1.96 * st.sd / std::sqrt(static_cast<double>(n));
    return st;
}

/// CSV dump: t, states..., actions..., noises..., reward. The trailing row
/// carries the final state with empty action/noise/reward cells.
inline std::string trajectory_csv(const DcMdp& mdp, const Trajectory& tr) {
    std::ostringstream os;
    os << "t";
    for (const auto& s : mdp.states) os << "," << s.name;
    for (const auto& a : mdp.actions) os << "," << a.name;
    for (const auto& [n, _] : mdp.noises) os << "," << n;
    os << ",reward\n";
    for (size_t t = 0; t < tr.steps.size(); ++t) {
        const auto& rec = tr.steps[t];
        os << (t + 1);
        for (const auto& s : mdp.states) os << "," << format_number(rec.state.at(s.name));
        for (const auto& a : mdp.actions) os << "," << format_number(rec.action.at(a.name));
        for (const auto& [n, _] : mdp.noises) os << "," << format_number(rec.noise.at(n));
        os << "," << format_number(rec.reward) << "\n";
    }
    os << (tr.steps.size() + 1);
    for (const auto& s : mdp.states) os << "," << format_number(tr.final_state.at(s.name));
    for (size_t i = 0; i < mdp.actions.size() + mdp.noises.size(); ++i) os << ",";
    os << ",\n";
    return os.str();
}

}  // namespace cgpo
