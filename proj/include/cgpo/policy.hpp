#pragma once

#include <cmath>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "cgpo/domain.hpp"
#include "cgpo/dsl.hpp"
#include "cgpo/expr.hpp"

namespace cgpo {

struct PolicyError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Expressivity classes: plain heads (constant / discrete / Boolean constant,
/// single-state linear, linear, quadratic) and their piecewise variants with
/// axis-aligned (PWS) or linear-band (PWL) case predicates.
enum class PolicyClass { C, D, S, L, B, Q, PWS_C, PWS_S, PWS_L, PWL_C, PWL_B, PWL_L };

enum class HeadKind { ConstReal, ConstInt, ConstBool, SingleLinear, Linear, Quadratic };
enum class PredKind { None, Box, Band };

inline HeadKind head_of(PolicyClass c) {
    switch (c) {
        case PolicyClass::C: case PolicyClass::PWS_C: case PolicyClass::PWL_C:
            return HeadKind::ConstReal;
        case PolicyClass::D: return HeadKind::ConstInt;
        case PolicyClass::B: case PolicyClass::PWL_B: return HeadKind::ConstBool;
        case PolicyClass::S: case PolicyClass::PWS_S: return HeadKind::SingleLinear;
        case PolicyClass::L: case PolicyClass::PWS_L: case PolicyClass::PWL_L:
            return HeadKind::Linear;
        case PolicyClass::Q: return HeadKind::Quadratic;
    }
    throw PolicyError("bad policy class");
}

inline PredKind pred_of(PolicyClass c) {
    switch (c) {
        case PolicyClass::PWS_C: case PolicyClass::PWS_S: case PolicyClass::PWS_L:
            return PredKind::Box;
        case PolicyClass::PWL_C: case PolicyClass::PWL_B: case PolicyClass::PWL_L:
            return PredKind::Band;
        default: return PredKind::None;
    }
}

inline std::string policy_class_name(PolicyClass c, int K = 0) {
    auto pw = [K](const char* fam, const char* head) {
        return std::string(fam) + (K > 0 ? std::to_string(K) : "") + "-" + head;
    };
    switch (c) {
        case PolicyClass::C: return "C";
        case PolicyClass::D: return "D";
        case PolicyClass::S: return "S";
        case PolicyClass::L: return "L";
        case PolicyClass::B: return "B";
        case PolicyClass::Q: return "Q";
        case PolicyClass::PWS_C: return pw("PWS", "C");
        case PolicyClass::PWS_S: return pw("PWS", "S");
        case PolicyClass::PWS_L: return pw("PWS", "L");
        case PolicyClass::PWL_C: return pw("PWL", "C");
        case PolicyClass::PWL_B: return pw("PWL", "B");
        case PolicyClass::PWL_L: return pw("PWL", "L");
    }
    throw PolicyError("bad policy class");
}

/// Parse "C", "Q", "PWS-C", "PWS1-C", "PWL2-L", ... Returns (class, K);
/// K defaults to 1 for piecewise classes without an explicit count.
inline std::pair<PolicyClass, int> parse_policy_class(const std::string& s) {
    static const std::map<std::string, PolicyClass> plain = {
        {"C", PolicyClass::C}, {"D", PolicyClass::D}, {"S", PolicyClass::S},
        {"L", PolicyClass::L}, {"B", PolicyClass::B}, {"Q", PolicyClass::Q}};
    auto it = plain.find(s);
    if (it != plain.end()) return {it->second, 0};
    for (const char* fam : {"PWS", "PWL"}) {
        if (s.rfind(fam, 0) != 0) continue;
        size_t i = 3;
        int K = 0;
        while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i])))
            K = K * 10 + (s[i++] - '0');
        if (K == 0) K = 1;
        if (i >= s.size() || s[i] != '-') break;
        std::string head = s.substr(i + 1);
        bool pws = fam[2] == 'S';
        if (head == "C") return {pws ? PolicyClass::PWS_C : PolicyClass::PWL_C, K};
        if (head == "S" && pws) return {PolicyClass::PWS_S, K};
        if (head == "L") return {pws ? PolicyClass::PWS_L : PolicyClass::PWL_L, K};
        if (head == "B" && !pws) return {PolicyClass::PWL_B, K};
        break;
    }
    throw PolicyError("unknown policy class: " + s);
}

struct ParamDecl {
    std::string name;
    VarKind kind = VarKind::Real;
    Interval bounds;
};

/// One case of a piecewise rule. Field names refer to parameter declarations
/// in the owning template. The final case of a rule has no predicate.
struct CaseSpec {
    int pws_state = 0;               // Box predicate: which state variable
    std::string l_param, u_param;    // predicate bounds (empty for otherwise)
    std::vector<std::string> pred_w; // Band predicate: per-state weights
    std::string b_param;             // head constant / intercept
    std::vector<std::string> w_params;  // SingleLinear: 1; Linear/Quadratic: per state
    std::vector<std::string> q_params;  // Quadratic: upper triangle, (i,j) with i <= j
};

struct ActionRule {
    std::string action;
    VarKind action_kind = VarKind::Real;
    Interval action_bounds;
    PolicyClass cls = PolicyClass::C;
    int K = 0;
    int s_state = 0;              // SingleLinear head: which state variable
    std::vector<CaseSpec> cases;  // K predicated cases + 1 otherwise
};

struct PolicyTemplate {
    std::string domain;
    std::vector<std::string> state_names;  // fixes the ordering of weight vectors
    std::vector<ActionRule> rules;
    std::vector<ParamDecl> params;

    const ParamDecl* find_param(const std::string& n) const {
        for (const auto& p : params) if (p.name == n) return &p;
        return nullptr;
    }
};

using PolicyParams = std::map<std::string, double>;

struct TemplateOptions {
    Interval param_bounds = Interval(-100, 100);  // weights and intercepts
    // state read by single-state heads and Box predicates; -1 pairs action i
    // with state i (each controller watches its own channel)
    int s_state = -1;
    std::vector<int> pws_states;   // per-case Box-predicate state override
};

inline PolicyTemplate make_template(const DcMdp& mdp, PolicyClass cls, int K,
                                    const TemplateOptions& opt = {}) {
    if (pred_of(cls) == PredKind::None && K != 0)
        throw PolicyError("class " + policy_class_name(cls) + " takes no cases");
    if (pred_of(cls) != PredKind::None && K < 1)
        throw PolicyError("piecewise class needs K >= 1");
    PolicyTemplate tpl;
    tpl.domain = mdp.name;
    for (const auto& s : mdp.states) tpl.state_names.push_back(s.name);
    size_t n = tpl.state_names.size();
    if (opt.s_state >= static_cast<int>(n))
        throw PolicyError("single-state index out of range");

    HeadKind head = head_of(cls);
    for (size_t ai = 0; ai < mdp.actions.size(); ++ai) {
        const auto& a = mdp.actions[ai];
        int default_state = opt.s_state >= 0
                                ? opt.s_state
                                : static_cast<int>(std::min(ai, n - 1));
        if (a.kind == VarKind::Bool && head != HeadKind::ConstBool)
            throw PolicyError("continuous-valued class " + policy_class_name(cls) +
                              " requested for Boolean action " + a.name);
        if (a.kind != VarKind::Bool && head == HeadKind::ConstBool)
            throw PolicyError("Boolean-valued class for non-Boolean action " + a.name);
        ActionRule rule;
        rule.action = a.name;
        rule.action_kind = a.kind;
        rule.action_bounds = a.bounds;
        rule.cls = cls;
        rule.K = K;
        rule.s_state = default_state;
        auto declare = [&](const std::string& name, VarKind k, Interval b) {
            tpl.params.push_back({name, k, b});
            return name;
        };
        for (int c = 0; c <= K; ++c) {
            CaseSpec cs;
            std::string pre = a.name + "_k" + std::to_string(c) + "_";
            if (c < K) {
                switch (pred_of(cls)) {
                    case PredKind::Box: {
                        cs.pws_state = c < static_cast<int>(opt.pws_states.size())
                                           ? opt.pws_states[c] : default_state;
                        if (cs.pws_state < 0 || static_cast<size_t>(cs.pws_state) >= n)
                            throw PolicyError("case state index out of range");
                        Interval sb = mdp.states[cs.pws_state].bounds;
                        cs.l_param = declare(pre + "l", VarKind::Real, sb);
                        cs.u_param = declare(pre + "u", VarKind::Real, sb);
                        break;
                    }
                    case PredKind::Band:
                        cs.l_param = declare(pre + "l", VarKind::Real, opt.param_bounds);
                        cs.u_param = declare(pre + "u", VarKind::Real, opt.param_bounds);
                        for (const auto& sname : tpl.state_names)
                            cs.pred_w.push_back(
                                declare(pre + "p_" + sname, VarKind::Real, opt.param_bounds));
                        break;
                    case PredKind::None: break;
                }
            }
            switch (head) {
                case HeadKind::ConstReal:
                    cs.b_param = declare(pre + "b", VarKind::Real, a.bounds);
                    break;
                case HeadKind::ConstInt:
                    cs.b_param = declare(pre + "b", VarKind::Int, a.bounds);
                    break;
                case HeadKind::ConstBool:
                    cs.b_param = declare(pre + "b", VarKind::Bool, Interval(0, 1));
                    break;
                case HeadKind::SingleLinear:
                    cs.b_param = declare(pre + "b", VarKind::Real, opt.param_bounds);
                    cs.w_params.push_back(
                        declare(pre + "w_" + tpl.state_names[rule.s_state], VarKind::Real,
                                opt.param_bounds));
                    break;
                case HeadKind::Linear:
                    cs.b_param = declare(pre + "b", VarKind::Real, opt.param_bounds);
                    for (const auto& sname : tpl.state_names)
                        cs.w_params.push_back(
                            declare(pre + "w_" + sname, VarKind::Real, opt.param_bounds));
                    break;
                case HeadKind::Quadratic:
                    cs.b_param = declare(pre + "b", VarKind::Real, opt.param_bounds);
                    for (const auto& sname : tpl.state_names)
                        cs.w_params.push_back(
                            declare(pre + "w_" + sname, VarKind::Real, opt.param_bounds));
                    for (size_t i = 0; i < n; ++i)
                        for (size_t j = i; j < n; ++j)
                            cs.q_params.push_back(
                                declare(pre + "q_" + tpl.state_names[i] + "_" +
                                            tpl.state_names[j],
                                        VarKind::Real, opt.param_bounds));
                    break;
            }
            rule.cases.push_back(std::move(cs));
        }
        tpl.rules.push_back(std::move(rule));
    }
    return tpl;
}

inline void check_params(const PolicyTemplate& tpl, const PolicyParams& params) {
    for (const auto& p : tpl.params) {
        auto it = params.find(p.name);
        if (it == params.end()) throw PolicyError("missing parameter " + p.name);
        if (!p.bounds.contains(it->second))
            throw PolicyError("parameter " + p.name + " out of bounds");
    }
}

namespace detail {

inline double param_at(const PolicyParams& params, const std::string& name) {
    auto it = params.find(name);
    if (it == params.end()) throw PolicyError("missing parameter " + name);
    return it->second;
}

inline double head_value(const PolicyTemplate& tpl, const ActionRule& rule,
                         const CaseSpec& cs, const PolicyParams& params, const Env& state) {
    double v = param_at(params, cs.b_param);
    if (!cs.w_params.empty()) {
        if (head_of(rule.cls) == HeadKind::SingleLinear) {
            v += param_at(params, cs.w_params[0]) * state.at(tpl.state_names[rule.s_state]);
        } else {
            for (size_t i = 0; i < cs.w_params.size(); ++i)
                v += param_at(params, cs.w_params[i]) * state.at(tpl.state_names[i]);
        }
    }
    if (!cs.q_params.empty()) {
        size_t n = tpl.state_names.size(), k = 0;
        for (size_t i = 0; i < n; ++i)
            for (size_t j = i; j < n; ++j)
                v += param_at(params, cs.q_params[k++]) * state.at(tpl.state_names[i]) *
                     state.at(tpl.state_names[j]);
    }
    return v;
}

inline bool case_fires(const PolicyTemplate& tpl, const CaseSpec& cs,
                       const PolicyParams& params, const Env& state) {
    if (cs.l_param.empty()) return true;  // otherwise-case
    double val;
    if (cs.pred_w.empty()) {
        val = state.at(tpl.state_names[cs.pws_state]);
    } else {
        val = 0.0;
        for (size_t i = 0; i < cs.pred_w.size(); ++i)
            val += param_at(params, cs.pred_w[i]) * state.at(tpl.state_names[i]);
    }
    return param_at(params, cs.l_param) <= val && val <= param_at(params, cs.u_param);
}

}  // namespace detail

/// First-match evaluation: cases are tested in order, the first satisfied
/// predicate supplies the value, otherwise the final case. The raw value is
/// clipped into the action's bounds and rounded half-up for int/bool actions.
inline Env policy_action(const PolicyTemplate& tpl, const PolicyParams& params,
                         const Env& state) {
    Env actions;
    for (const auto& rule : tpl.rules) {
        double v = 0.0;
        for (const auto& cs : rule.cases) {
            if (detail::case_fires(tpl, cs, params, state)) {
                v = detail::head_value(tpl, rule, cs, params, state);
                break;
            }
        }
        v = std::clamp(v, rule.action_bounds.lo, rule.action_bounds.hi);
        if (rule.action_kind != VarKind::Real)
            v = std::clamp(std::floor(v + 0.5), rule.action_bounds.lo, rule.action_bounds.hi);
        actions[rule.action] = v;
    }
    return actions;
}

// ---- problem-class table ----------------------------------------------

namespace detail {

inline bool expr_has_var(const Expr& e) {
    if (e.kind == ExprKind::Var) return true;
    for (const auto& k : e.kids)
        if (expr_has_var(*k)) return true;
    return false;
}

/// 'N' for transcendental nodes, 'P' for polynomial ones (powers, products
/// of two variable-dependent factors), 'L' otherwise — piecewise-linear
/// constructs (min/max/abs/clip/if/comparisons) stay linear-class.
inline char expr_class(const Expr& e) {
    char c = 'L';
    switch (e.kind) {
        case ExprKind::Cos: case ExprKind::Sin: case ExprKind::Exp: return 'N';
        case ExprKind::Pow:
            if (e.exponent >= 2 && expr_has_var(*e.kids[0])) c = 'P';
            break;
        case ExprKind::Mul:
            if (expr_has_var(*e.kids[0]) && expr_has_var(*e.kids[1])) c = 'P';
            break;
        case ExprKind::Div:
            if (expr_has_var(*e.kids[1])) c = 'P';
            break;
        default: break;
    }
    for (const auto& k : e.kids) {
        char kc = expr_class(*k);
        if (kc == 'N') return 'N';
        if (kc == 'P') c = 'P';
    }
    return c;
}

}  // namespace detail

/// Dynamics/reward expressivity class of a domain: L, P or N.
inline char dynamics_class(const DcMdp& mdp) {
    char c = 'L';
    auto bump = [&](char k) {
        if (k == 'N') c = 'N';
        else if (k == 'P' && c == 'L') c = 'P';
    };
    for (const auto& [n, g] : mdp.transitions) bump(detail::expr_class(*g));
    bump(detail::expr_class(*mdp.reward));
    return c;
}

/// Problem class of the inner/outer programs by policy family (rows) and
/// dynamics/reward class L/P/N (columns).
inline std::string classify(const std::string& policy_cls, char dynamics_cls) {
    int col;
    switch (dynamics_cls) {
        case 'L': col = 0; break;
        case 'P': col = 1; break;
        case 'N': col = 2; break;
        default: throw PolicyError(std::string("unknown dynamics class: ") + dynamics_cls);
    }
    static const char* rows[][3] = {
        {"MILP", "PP", "MINLP"},        // PWS-{C,D} (incl. plain constants)
        {"MILP/MIBCP", "PP", "MINLP"},  // PWL-{C,D}
        {"MILP/PP", "PP", "MINLP"},     // S, L
        {"MILP/PP", "PP", "MINLP"},     // PW{S,L}-{S,L}
        {"PP", "PP", "MINLP"},          // PW{S,L,P}-P
        {"PP", "PP", "MINLP"},          // Q
        {"MINLP", "MINLP", "MINLP"},    // PWN-N
    };
    int row = -1;
    // generic row tags first, then concrete classes
    if (policy_cls == "PWS-{C,D}") row = 0;
    else if (policy_cls == "PWL-{C,D}") row = 1;
    else if (policy_cls == "S,L" || policy_cls == "S, L") row = 2;
    else if (policy_cls == "PW{S,L}-{S,L}") row = 3;
    else if (policy_cls == "PW{S,L,P}-P" || policy_cls == "PWP-P" || policy_cls == "P") row = 4;
    else if (policy_cls == "PWN-N" || policy_cls == "N") row = 6;
    else {
        auto [cls, K] = parse_policy_class(policy_cls);
        (void)K;
        switch (cls) {
            case PolicyClass::C: case PolicyClass::D: case PolicyClass::B:
            case PolicyClass::PWS_C:
                row = 0; break;
            case PolicyClass::PWL_C: case PolicyClass::PWL_B:
                row = 1; break;
            case PolicyClass::S: case PolicyClass::L:
                row = 2; break;
            case PolicyClass::PWS_S: case PolicyClass::PWS_L: case PolicyClass::PWL_L:
                row = 3; break;
            case PolicyClass::Q:
                row = 5; break;
        }
    }
    if (row < 0) throw PolicyError("unknown policy class: " + policy_cls);
    return rows[row][col];
}

// ---- pretty-printing ---------------------------------------------------

namespace detail {

/// "b + w1*x1 - w2*x2" with zero terms and unit coefficients elided.
inline std::string poly_text(double b, const std::vector<std::pair<double, std::string>>& terms) {
    std::ostringstream os;
    bool first = true;
    if (b != 0.0 || terms.empty()) {
        os << format_number(b);
        first = false;
    }
    for (const auto& [w, t] : terms) {
        if (w == 0.0) continue;
        double mag = std::abs(w);
        if (first) {
            if (w < 0) os << "-";
            first = false;
        } else {
            os << (w < 0 ? " - " : " + ");
        }
        if (mag != 1.0) os << format_number(mag) << "*";
        os << t;
    }
    if (os.str().empty()) return "0";  // every weight vanished
    return os.str();
}

inline std::string head_text(const PolicyTemplate& tpl, const ActionRule& rule,
                             const CaseSpec& cs, const PolicyParams& params) {
    double b = param_at(params, cs.b_param);
    std::vector<std::pair<double, std::string>> terms;
    if (!cs.w_params.empty()) {
        if (head_of(rule.cls) == HeadKind::SingleLinear) {
            terms.emplace_back(param_at(params, cs.w_params[0]), tpl.state_names[rule.s_state]);
        } else {
            for (size_t i = 0; i < cs.w_params.size(); ++i)
                terms.emplace_back(param_at(params, cs.w_params[i]), tpl.state_names[i]);
        }
    }
    if (!cs.q_params.empty()) {
        size_t n = tpl.state_names.size(), k = 0;
        for (size_t i = 0; i < n; ++i)
            for (size_t j = i; j < n; ++j) {
                std::string t = i == j ? tpl.state_names[i] + "^2"
                                       : tpl.state_names[i] + "*" + tpl.state_names[j];
                terms.emplace_back(param_at(params, cs.q_params[k++]), t);
            }
    }
    return poly_text(b, terms);
}

inline std::string pred_text(const PolicyTemplate& tpl, const CaseSpec& cs,
                             const PolicyParams& params) {
    std::string middle;
    if (cs.pred_w.empty()) {
        middle = tpl.state_names[cs.pws_state];
    } else {
        std::vector<std::pair<double, std::string>> terms;
        for (size_t i = 0; i < cs.pred_w.size(); ++i)
            terms.emplace_back(param_at(params, cs.pred_w[i]), tpl.state_names[i]);
        middle = poly_text(0.0, terms);
    }
    return format_number(param_at(params, cs.l_param)) + " <= " + middle +
           " <= " + format_number(param_at(params, cs.u_param));
}

}  // namespace detail

/// Case-notation rendering of an instantiated policy, one rule per action.
inline std::string print_policy(const PolicyTemplate& tpl, const PolicyParams& params) {
    std::ostringstream os;
    for (const auto& rule : tpl.rules) {
        if (rule.K == 0) {
            os << rule.action << " = "
               << detail::head_text(tpl, rule, rule.cases[0], params) << "\n";
            continue;
        }
        os << rule.action << " =\n";
        for (const auto& cs : rule.cases) {
            os << "  " << detail::head_text(tpl, rule, cs, params);
            if (!cs.l_param.empty())
                os << "  if " << detail::pred_text(tpl, cs, params);
            else
                os << "  otherwise";
            os << "\n";
        }
    }
    return os.str();
}

}  // namespace cgpo
