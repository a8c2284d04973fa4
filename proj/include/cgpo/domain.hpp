#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "cgpo/expr.hpp"
#include "cgpo/interval.hpp"
#include "cgpo/stats.hpp"

namespace cgpo {

struct DomainError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// ---- noise ------------------------------------------------------------

struct NoiseDist {
    enum class Kind { DiscreteUniform, Normal, Degenerate };
    Kind kind = Kind::Degenerate;
    long long lo = 0, hi = 0;  // DiscreteUniform: integer support {lo..hi}
    double mean = 0.0, variance = 1.0;
    double value = 0.0;  // Degenerate

    static NoiseDist discrete_uniform(long long l, long long u) {
        if (l > u) throw DomainError("DiscreteUniform: L > U");
        NoiseDist d; d.kind = Kind::DiscreteUniform; d.lo = l; d.hi = u;
        return d;
    }
    static NoiseDist normal(double m, double v) {
        if (!(v > 0.0)) throw DomainError("Normal: variance must be > 0");
        NoiseDist d; d.kind = Kind::Normal; d.mean = m; d.variance = v;
        return d;
    }
    static NoiseDist degenerate(double x) {
        NoiseDist d; d.kind = Kind::Degenerate; d.value = x;
        return d;
    }

    bool is_discrete() const { return kind != Kind::Normal; }

    double median() const {
        switch (kind) {
            case Kind::DiscreteUniform: return static_cast<double>((lo + hi) / 2);
            case Kind::Normal: return mean;
            case Kind::Degenerate: return value;
        }
        return 0.0;
    }

    double sample(Rng& rng) const {
        switch (kind) {
            case Kind::DiscreteUniform: return static_cast<double>(rng.uniform_int(lo, hi));
            case Kind::Normal: return rng.normal(mean, variance);
            case Kind::Degenerate: return value;
        }
        return 0.0;
    }
};

struct NoiseHandling {
    enum class Mode { Deterministic, ChanceConstrained, Marginalized };
    Mode mode = Mode::Deterministic;
    double p = 0.995;  // trajectory-level confidence (or raw per-step, below)
    // Some setups fix the per-step level directly; with this set the p above
    // is used per step instead of being split as p^(1/T).
    bool per_step_convention = false;

    double p_step(int horizon) const {
        if (per_step_convention || horizon <= 1) return p;
        return std::pow(p, 1.0 / horizon);
    }
};

/// Smallest symmetric-in-probability interval holding mass >= p_step.
inline Interval noise_support(const NoiseDist& dist, double p_step) {
    if (!(p_step > 0.0 && p_step < 1.0)) throw DomainError("noise_support: p outside (0,1)");
    switch (dist.kind) {
        case NoiseDist::Kind::DiscreteUniform:
            return Interval(static_cast<double>(dist.lo), static_cast<double>(dist.hi));
        case NoiseDist::Kind::Normal: {
            double z = norm_ppf(0.5 * (1.0 + p_step));
            double s = z * std::sqrt(dist.variance);
            return Interval(dist.mean - s, dist.mean + s);
        }
        case NoiseDist::Kind::Degenerate:
            return Interval(dist.value);
    }
    throw DomainError("noise_support: bad distribution");
}

/// Support values with weights summing to one. Finite supports need no
/// truncation; continuous distributions are rejected.
inline std::vector<std::pair<double, double>> marginalize(const NoiseDist& dist, double /*p*/) {
    switch (dist.kind) {
        case NoiseDist::Kind::DiscreteUniform: {
            std::vector<std::pair<double, double>> out;
            double w = 1.0 / static_cast<double>(dist.hi - dist.lo + 1);
            for (long long v = dist.lo; v <= dist.hi; ++v)
                out.emplace_back(static_cast<double>(v), w);
            return out;
        }
        case NoiseDist::Kind::Degenerate:
            return {{dist.value, 1.0}};
        case NoiseDist::Kind::Normal:
            throw DomainError("marginalize: continuous distribution; use ChanceConstrained");
    }
    throw DomainError("marginalize: bad distribution");
}

// ---- the decision process ---------------------------------------------

struct VarDecl {
    std::string name;
    VarKind kind = VarKind::Real;
    Interval bounds;
};

inline std::string primed(const std::string& name) { return name + "'"; }

/// Finite-horizon DC-MDP with reparameterized transitions s' = g(s, a, xi).
/// Immutable after construction/parsing; shareable across threads.
struct DcMdp {
    std::string name;
    int horizon = 1;
    std::vector<VarDecl> states;
    std::vector<VarDecl> actions;
    std::vector<std::pair<std::string, NoiseDist>> noises;
    std::map<std::string, ExprPtr> transitions;  // state name -> g
    ExprPtr reward;                              // over state, action, next-state (primed)
    std::map<std::string, Interval> init;        // S1, per state variable

    const VarDecl* find_state(const std::string& n) const {
        for (const auto& v : states) if (v.name == n) return &v;
        return nullptr;
    }
    const VarDecl* find_action(const std::string& n) const {
        for (const auto& v : actions) if (v.name == n) return &v;
        return nullptr;
    }
    const NoiseDist* find_noise(const std::string& n) const {
        for (const auto& v : noises) if (v.first == n) return &v.second;
        return nullptr;
    }

    Decls decls(bool with_primed) const {
        Decls d;
        for (const auto& v : states) {
            d[v.name] = v.kind;
            if (with_primed) d[primed(v.name)] = v.kind;
        }
        for (const auto& v : actions) d[v.name] = v.kind;
        for (const auto& [n, dist] : noises)
            d[n] = dist.kind == NoiseDist::Kind::DiscreteUniform ? VarKind::Int : VarKind::Real;
        return d;
    }

    /// Box over states/actions/noise supports (noise at full support for
    /// discrete, +-8 sigma for normal) used by the boundedness check.
    Box declared_box(bool with_primed) const {
        Box box;
        for (const auto& v : states) {
            box[v.name] = v.bounds;
            if (with_primed) box[primed(v.name)] = v.bounds;
        }
        for (const auto& v : actions) box[v.name] = v.bounds;
        for (const auto& [n, dist] : noises) {
            switch (dist.kind) {
                case NoiseDist::Kind::DiscreteUniform:
                    box[n] = Interval(static_cast<double>(dist.lo), static_cast<double>(dist.hi));
                    break;
                case NoiseDist::Kind::Normal: {
                    double s = 8.0 * std::sqrt(dist.variance);
                    box[n] = Interval(dist.mean - s, dist.mean + s);
                    break;
                }
                case NoiseDist::Kind::Degenerate:
                    box[n] = Interval(dist.value);
                    break;
            }
        }
        return box;
    }

    void validate() const {
        if (horizon < 0) throw DomainError(name + ": horizon must be nonnegative");
        Decls d = decls(true);
        for (const auto& s : states) {
            auto it = transitions.find(s.name);
            if (it == transitions.end())
                throw DomainError(name + ": missing transition for state " + s.name);
            Decls no_primed = decls(false);
            ValueType t = typecheck(it->second, no_primed);
            if ((s.kind == VarKind::Bool) != (t == ValueType::Boolean))
                throw DomainError(name + ": transition type mismatch for " + s.name);
        }
        if (!reward) throw DomainError(name + ": missing reward");
        if (typecheck(reward, d) != ValueType::Numeric)
            throw DomainError(name + ": reward must be numeric");
        for (const auto& a : actions)
            if (a.kind == VarKind::Real && !a.bounds.is_finite())
                throw DomainError(name + ": real action " + a.name + " needs finite bounds");
        for (const auto& s : states) {
            auto it = init.find(s.name);
            if (it == init.end())
                throw DomainError(name + ": missing initial interval for " + s.name);
            if (!s.bounds.contains(it->second))
                throw DomainError(name + ": initial box for " + s.name + " outside state bounds");
        }
        // reward must be uniformly bounded on the declared boxes
        Interval r = interval_eval(reward, declared_box(true));
        if (!r.is_finite())
            throw DomainError(name + ": reward unbounded on the declared boxes");
    }

    /// sup |r| over the given per-step boxes (reward bound B).
    double reward_bound(const Box& box) const {
        Interval r = interval_eval(reward, box);
        return std::max(std::abs(r.lo), std::abs(r.hi));
    }
};

/// Replace stochastic transitions by their noise expectation, yielding a
/// deterministic surrogate model. Requires all noise to be discrete.
inline DcMdp expected_transition(const DcMdp& mdp, double p) {
    for (const auto& [n, dist] : mdp.noises)
        if (!dist.is_discrete())
            throw DomainError("expected_transition: continuous noise " + n);
    DcMdp out = mdp;
    out.noises.clear();
    for (auto& [sname, g] : out.transitions) {
        std::map<std::string, VarRole> used;
        collect_vars(*g, used);
        std::vector<std::pair<std::string, NoiseDist>> active;
        for (const auto& [n, dist] : mdp.noises)
            if (used.count(n)) active.emplace_back(n, dist);
        if (active.empty()) continue;
        // blend over the joint support of the noise variables in this expr
        std::vector<std::vector<std::pair<double, double>>> supports;
        size_t total = 1;
        for (const auto& [n, dist] : active) {
            supports.push_back(marginalize(dist, p));
            total *= supports.back().size();
            if (total > 100000) throw DomainError("expected_transition: joint support too large");
        }
        ExprPtr blended;
        std::vector<size_t> idx(active.size(), 0);
        for (size_t combo = 0; combo < total; ++combo) {
            std::map<std::string, ExprPtr> subst;
            double w = 1.0;
            for (size_t k = 0; k < active.size(); ++k) {
                subst[active[k].first] = constant(supports[k][idx[k]].first);
                w *= supports[k][idx[k]].second;
            }
            ExprPtr term = mul(constant(w), substitute(g, subst));
            blended = blended ? add(blended, term) : term;
            for (size_t k = 0; k < active.size(); ++k) {
                if (++idx[k] < supports[k].size()) break;
                idx[k] = 0;
            }
        }
        g = blended;
    }
    return out;
}

// ---- builtin benchmark domains ----------------------------------------

struct BuiltinOptions {
    double intercept_delta = 0.1;  // interception tolerance; not stated upstream
    double intercept_vy = 0.54;    // interceptor climb per step
};

namespace detail {

inline ExprPtr svar(const std::string& n) { return var(n, VarRole::State); }
inline ExprPtr avar(const std::string& n) { return var(n, VarRole::Action); }
inline ExprPtr nvar(const std::string& n) { return var(n, VarRole::Noise); }
inline ExprPtr pvar(const std::string& n) { return var(primed(n), VarRole::State); }
inline ExprPtr relu(ExprPtr e) { return emax(constant(0.0), std::move(e)); }

inline DcMdp make_nav1d() {
    DcMdp m;
    m.name = "nav1d";
    m.horizon = 2;
    m.states = {{"s", VarKind::Real, Interval(-100, 100)}};
    m.actions = {{"a", VarKind::Real, Interval(-10, 10)}};
    m.transitions["s"] = add(svar("s"), avar("a"));
    m.reward = neg(eabs(sub(pvar("s"), constant(10.0))));
    m.init["s"] = Interval(0, 5);
    return m;
}

inline DcMdp make_inventory() {
    DcMdp m;
    m.name = "inventory";
    m.horizon = 8;
    m.states = {{"stock", VarKind::Int, Interval(-50, 50)}};
    m.actions = {{"order", VarKind::Int, Interval(0, 10)}};
    m.noises = {{"demand", NoiseDist::discrete_uniform(2, 6)}};
    m.transitions["stock"] = sub(add(svar("stock"), avar("order")), nvar("demand"));
    // -C*a - P*(s')+ - S*(-s')+ with C=0.5, P=S=2
    m.reward = sub(sub(mul(constant(-0.5), avar("order")),
                       mul(constant(2.0), relu(pvar("stock")))),
                   mul(constant(2.0), relu(neg(pvar("stock")))));
    m.init["stock"] = Interval(0, 2);
    return m;
}

inline DcMdp make_reservoir2() {
    DcMdp m;
    m.name = "reservoir2";
    m.horizon = 10;
    m.states = {{"level1", VarKind::Real, Interval(0, 100)},
                {"level2", VarKind::Real, Interval(0, 200)}};
    m.actions = {{"release1", VarKind::Real, Interval(0, 100)},
                 {"release2", VarKind::Real, Interval(0, 200)}};
    m.noises = {{"rain1", NoiseDist::normal(5, 5)}, {"rain2", NoiseDist::normal(10, 10)}};
    // releases implicitly clipped to [0, level] inside the dynamics
    ExprPtr flow1 = relu(emin(avar("release1"), svar("level1")));
    ExprPtr flow2 = relu(emin(avar("release2"), svar("level2")));
    m.transitions["level1"] =
        emin(constant(100.0), relu(sub(add(svar("level1"), relu(nvar("rain1"))), flow1)));
    m.transitions["level2"] =
        emin(constant(200.0),
             relu(add(sub(add(svar("level2"), relu(nvar("rain2"))), flow2), flow1)));
    // l*(L-s')+ + h*(s'-H)+ with l=-10, h=-100 per reservoir
    auto shortfall = [](ExprPtr next, double L, double H) {
        return add(mul(constant(-10.0), relu(sub(constant(L), next))),
                   mul(constant(-100.0), relu(sub(next, constant(H)))));
    };
    m.reward = add(shortfall(pvar("level1"), 20.0, 80.0), shortfall(pvar("level2"), 30.0, 180.0));
    m.init["level1"] = Interval(50, 100);
    m.init["level2"] = Interval(100, 200);
    return m;
}

inline DcMdp make_vtol() {
    DcMdp m;
    m.name = "vtol";
    m.horizon = 6;
    const double l1 = 1.0, l2 = 0.5, m1 = 10.0, m2 = 1.0, h = 0.4, tau = 0.1;
    const double J = m1 * l1 * l1 + m2 * l2 * l2;  // 10.25
    const double th_lo = -std::sin(h / l1), th_hi = std::sin(h / l2);
    m.states = {{"theta", VarKind::Real, Interval(th_lo, th_hi)},
                {"omega", VarKind::Real, Interval(-10, 10)}};
    m.actions = {{"force", VarKind::Real, Interval(0, 1)}};
    m.transitions["theta"] = clip(add(svar("theta"), mul(constant(tau), svar("omega"))), th_lo, th_hi);
    m.transitions["omega"] =
        add(svar("omega"),
            mul(constant(tau / J),
                add(mul(constant(9.8 * (m2 * l2 - m1 * l1)), ecos(svar("theta"))),
                    mul(constant(150.0 * l1), avar("force")))));
    m.reward = neg(eabs(pvar("theta")));
    m.init["theta"] = Interval(0.1);
    m.init["omega"] = Interval(0.0);
    return m;
}

inline DcMdp make_intercept(const BuiltinOptions& opt) {
    DcMdp m;
    m.name = "intercept";
    m.horizon = 8;
    const double vx = 0.1, h = 5.0, g = 9.8, ix = 0.7;
    m.states = {{"x", VarKind::Real, Interval(0, 2)},
                {"y", VarKind::Real, Interval(-15, 6)},
                {"f", VarKind::Bool, Interval(0, 1)},
                {"i", VarKind::Real, Interval(0, 10)}};
    m.actions = {{"fire", VarKind::Bool, Interval(0, 1)}};
    m.transitions["x"] = add(svar("x"), constant(vx));
    m.transitions["y"] = sub(constant(h), mul(constant(0.5 * g), pow_int(svar("x"), 2)));
    m.transitions["f"] = lor(svar("f"), avar("fire"));
    m.transitions["i"] = ite(svar("f"), add(svar("i"), constant(opt.intercept_vy)), svar("i"));
    ExprPtr hit = land(pvar("f"),
                       land(cmp(CmpOp::Le, eabs(sub(pvar("x"), constant(ix))),
                                constant(opt.intercept_delta)),
                            cmp(CmpOp::Le, eabs(sub(pvar("y"), pvar("i"))),
                                constant(opt.intercept_delta))));
    m.reward = ite(hit, constant(1.0), constant(0.0));
    m.init["x"] = Interval(0.0);
    m.init["y"] = Interval(5.0);
    m.init["f"] = Interval(0.0);
    m.init["i"] = Interval(0.0);
    return m;
}

}  // namespace detail

inline DcMdp builtin_domain(const std::string& name, const BuiltinOptions& opt = {}) {
    DcMdp m;
    if (name == "nav1d") m = detail::make_nav1d();
    else if (name == "inventory") m = detail::make_inventory();
    else if (name == "reservoir2") m = detail::make_reservoir2();
    else if (name == "vtol") m = detail::make_vtol();
    else if (name == "intercept") m = detail::make_intercept(opt);
    else throw DomainError("unknown builtin domain: " + name);
    m.validate();
    return m;
}

}  // namespace cgpo
