#pragma once

#include <cmath>
#include <map>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "cgpo/interval.hpp"

namespace cgpo {

enum class ExprKind {
    Const, Var,
    Add, Sub, Mul, Div, Neg,
    Min, Max, Abs, Clip,
    IfThenElse, Cmp, And, Or, Not,
    Pow, Cos, Sin, Exp,
};

enum class VarRole { State, Action, Noise, Param, Derived };

enum class CmpOp { Le, Lt, Ge, Gt, Eq, Ne };

enum class ValueType { Numeric, Boolean };

struct Expr;
using ExprPtr = std::shared_ptr<const Expr>;

/// Immutable expression tree node. Shared freely across threads after
/// construction; evaluation is reentrant.
struct Expr {
    ExprKind kind;
    double value = 0.0;             // Const
    std::string name;               // Var
    VarRole role = VarRole::State;  // Var
    CmpOp cmp = CmpOp::Le;          // Cmp
    double clip_lo = 0.0;           // Clip
    double clip_hi = 0.0;           // Clip
    int exponent = 0;               // Pow
    std::vector<ExprPtr> kids;
};

struct EvalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct TypeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// ---- constructors -----------------------------------------------------

inline ExprPtr make_node(Expr&& e) { return std::make_shared<Expr>(std::move(e)); }

inline ExprPtr constant(double v) {
    Expr e; e.kind = ExprKind::Const; e.value = v;
    return make_node(std::move(e));
}
inline ExprPtr var(std::string name, VarRole role) {
    Expr e; e.kind = ExprKind::Var; e.name = std::move(name); e.role = role;
    return make_node(std::move(e));
}
inline ExprPtr nary(ExprKind k, std::vector<ExprPtr> kids) {
    Expr e; e.kind = k; e.kids = std::move(kids);
    return make_node(std::move(e));
}
inline ExprPtr add(ExprPtr a, ExprPtr b) { return nary(ExprKind::Add, {std::move(a), std::move(b)}); }
inline ExprPtr sub(ExprPtr a, ExprPtr b) { return nary(ExprKind::Sub, {std::move(a), std::move(b)}); }
inline ExprPtr mul(ExprPtr a, ExprPtr b) { return nary(ExprKind::Mul, {std::move(a), std::move(b)}); }
inline ExprPtr div(ExprPtr a, ExprPtr b) { return nary(ExprKind::Div, {std::move(a), std::move(b)}); }
inline ExprPtr neg(ExprPtr a) { return nary(ExprKind::Neg, {std::move(a)}); }
inline ExprPtr emin(ExprPtr a, ExprPtr b) { return nary(ExprKind::Min, {std::move(a), std::move(b)}); }
inline ExprPtr emax(ExprPtr a, ExprPtr b) { return nary(ExprKind::Max, {std::move(a), std::move(b)}); }
inline ExprPtr eabs(ExprPtr a) { return nary(ExprKind::Abs, {std::move(a)}); }
inline ExprPtr clip(ExprPtr a, double lo, double hi) {
    Expr e; e.kind = ExprKind::Clip; e.clip_lo = lo; e.clip_hi = hi;
    e.kids = {std::move(a)};
    return make_node(std::move(e));
}
inline ExprPtr ite(ExprPtr c, ExprPtr a, ExprPtr b) {
    return nary(ExprKind::IfThenElse, {std::move(c), std::move(a), std::move(b)});
}
inline ExprPtr cmp(CmpOp op, ExprPtr a, ExprPtr b) {
    Expr e; e.kind = ExprKind::Cmp; e.cmp = op; e.kids = {std::move(a), std::move(b)};
    return make_node(std::move(e));
}
inline ExprPtr land(ExprPtr a, ExprPtr b) { return nary(ExprKind::And, {std::move(a), std::move(b)}); }
inline ExprPtr lor(ExprPtr a, ExprPtr b) { return nary(ExprKind::Or, {std::move(a), std::move(b)}); }
inline ExprPtr lnot(ExprPtr a) { return nary(ExprKind::Not, {std::move(a)}); }
inline ExprPtr pow_int(ExprPtr a, int n) {
    if (n < 0) throw std::invalid_argument("pow_int: exponent must be >= 0");
    Expr e; e.kind = ExprKind::Pow; e.exponent = n; e.kids = {std::move(a)};
    return make_node(std::move(e));
}
inline ExprPtr ecos(ExprPtr a) { return nary(ExprKind::Cos, {std::move(a)}); }
inline ExprPtr esin(ExprPtr a) { return nary(ExprKind::Sin, {std::move(a)}); }
inline ExprPtr eexp(ExprPtr a) { return nary(ExprKind::Exp, {std::move(a)}); }

// ---- evaluation -------------------------------------------------------

using Env = std::map<std::string, double>;
using Box = std::map<std::string, Interval>;

/// Exact recursive evaluation. Booleans are {0, 1}; strict comparisons are
/// evaluated exactly with no epsilon.
inline double eval(const Expr& e, const Env& env) {
    switch (e.kind) {
        case ExprKind::Const: return e.value;
        case ExprKind::Var: {
            auto it = env.find(e.name);
            if (it == env.end()) throw EvalError("unbound variable: " + e.name);
            return it->second;
        }
        case ExprKind::Add: return eval(*e.kids[0], env) + eval(*e.kids[1], env);
        case ExprKind::Sub: return eval(*e.kids[0], env) - eval(*e.kids[1], env);
        case ExprKind::Mul: return eval(*e.kids[0], env) * eval(*e.kids[1], env);
        case ExprKind::Div: {
            double d = eval(*e.kids[1], env);
            if (d == 0.0) throw EvalError("division by zero");
            return eval(*e.kids[0], env) / d;
        }
        case ExprKind::Neg: return -eval(*e.kids[0], env);
        case ExprKind::Min: return std::min(eval(*e.kids[0], env), eval(*e.kids[1], env));
        case ExprKind::Max: return std::max(eval(*e.kids[0], env), eval(*e.kids[1], env));
        case ExprKind::Abs: return std::abs(eval(*e.kids[0], env));
        case ExprKind::Clip:
            return std::max(e.clip_lo, std::min(e.clip_hi, eval(*e.kids[0], env)));
        case ExprKind::IfThenElse:
            return eval(*e.kids[0], env) != 0.0 ? eval(*e.kids[1], env) : eval(*e.kids[2], env);
        case ExprKind::Cmp: {
            double a = eval(*e.kids[0], env), b = eval(*e.kids[1], env);
            switch (e.cmp) {
                case CmpOp::Le: return a <= b ? 1.0 : 0.0;
                case CmpOp::Lt: return a < b ? 1.0 : 0.0;
                case CmpOp::Ge: return a >= b ? 1.0 : 0.0;
                case CmpOp::Gt: return a > b ? 1.0 : 0.0;
                case CmpOp::Eq: return a == b ? 1.0 : 0.0;
                case CmpOp::Ne: return a != b ? 1.0 : 0.0;
            }
            throw EvalError("bad cmp op");
        }
        case ExprKind::And:
            return (eval(*e.kids[0], env) != 0.0 && eval(*e.kids[1], env) != 0.0) ? 1.0 : 0.0;
        case ExprKind::Or:
            return (eval(*e.kids[0], env) != 0.0 || eval(*e.kids[1], env) != 0.0) ? 1.0 : 0.0;
        case ExprKind::Not: return eval(*e.kids[0], env) != 0.0 ? 0.0 : 1.0;
        case ExprKind::Pow: {
            double x = eval(*e.kids[0], env);
            if (e.exponent == 0) return 1.0;
            double r = x;
            for (int i = 1; i < e.exponent; ++i) r *= x;
            return r;
        }
        case ExprKind::Cos: return std::cos(eval(*e.kids[0], env));
        case ExprKind::Sin: return std::sin(eval(*e.kids[0], env));
        case ExprKind::Exp: return std::exp(eval(*e.kids[0], env));
    }
    throw EvalError("bad expr kind");
}

inline double eval(const ExprPtr& e, const Env& env) { return eval(*e, env); }

/// Sound enclosure: for every env with env(v) in box(v), eval(expr, env)
/// lies inside the returned interval.
inline Interval interval_eval(const Expr& e, const Box& box) {
    switch (e.kind) {
        case ExprKind::Const: return Interval(e.value);
        case ExprKind::Var: {
            auto it = box.find(e.name);
            if (it == box.end()) throw EvalError("unbounded variable: " + e.name);
            return it->second;
        }
        case ExprKind::Add: return interval_eval(*e.kids[0], box) + interval_eval(*e.kids[1], box);
        case ExprKind::Sub: return interval_eval(*e.kids[0], box) - interval_eval(*e.kids[1], box);
        case ExprKind::Mul: return interval_eval(*e.kids[0], box) * interval_eval(*e.kids[1], box);
        case ExprKind::Div: return interval_eval(*e.kids[0], box) / interval_eval(*e.kids[1], box);
        case ExprKind::Neg: return -interval_eval(*e.kids[0], box);
        case ExprKind::Min: return imin(interval_eval(*e.kids[0], box), interval_eval(*e.kids[1], box));
        case ExprKind::Max: return imax(interval_eval(*e.kids[0], box), interval_eval(*e.kids[1], box));
        case ExprKind::Abs: return iabs(interval_eval(*e.kids[0], box));
        case ExprKind::Clip: return iclip(interval_eval(*e.kids[0], box), e.clip_lo, e.clip_hi);
        case ExprKind::IfThenElse: {
            Interval c = interval_eval(*e.kids[0], box);
            // hull of both branches unless the condition is decided
            if (c.lo >= 1.0) return interval_eval(*e.kids[1], box);
            if (c.hi <= 0.0) return interval_eval(*e.kids[2], box);
            return hull(interval_eval(*e.kids[1], box), interval_eval(*e.kids[2], box));
        }
        case ExprKind::Cmp: {
            Interval a = interval_eval(*e.kids[0], box), b = interval_eval(*e.kids[1], box);
            auto decided = [](bool v) { return Interval(v ? 1.0 : 0.0); };
            switch (e.cmp) {
                case CmpOp::Le:
                    if (a.hi <= b.lo) return decided(true);
                    if (a.lo > b.hi) return decided(false);
                    break;
                case CmpOp::Lt:
                    if (a.hi < b.lo) return decided(true);
                    if (a.lo >= b.hi) return decided(false);
                    break;
                case CmpOp::Ge:
                    if (a.lo >= b.hi) return decided(true);
                    if (a.hi < b.lo) return decided(false);
                    break;
                case CmpOp::Gt:
                    if (a.lo > b.hi) return decided(true);
                    if (a.hi <= b.lo) return decided(false);
                    break;
                case CmpOp::Eq:
                    if (a.is_point() && b.is_point() && a.lo == b.lo) return decided(true);
                    if (a.hi < b.lo || a.lo > b.hi) return decided(false);
                    break;
                case CmpOp::Ne:
                    if (a.hi < b.lo || a.lo > b.hi) return decided(true);
                    if (a.is_point() && b.is_point() && a.lo == b.lo) return decided(false);
                    break;
            }
            return Interval::boolean();
        }
        case ExprKind::And: {
            Interval a = interval_eval(*e.kids[0], box), b = interval_eval(*e.kids[1], box);
            return Interval(std::min(a.lo, b.lo) > 0.0 ? 1.0 : 0.0,
                            (a.hi > 0.0 && b.hi > 0.0) ? 1.0 : 0.0);
        }
        case ExprKind::Or: {
            Interval a = interval_eval(*e.kids[0], box), b = interval_eval(*e.kids[1], box);
            return Interval((a.lo > 0.0 || b.lo > 0.0) ? 1.0 : 0.0,
                            (a.hi > 0.0 || b.hi > 0.0) ? 1.0 : 0.0);
        }
        case ExprKind::Not: {
            Interval a = interval_eval(*e.kids[0], box);
            return Interval(a.hi > 0.0 ? 0.0 : 1.0, a.lo > 0.0 ? 0.0 : 1.0);
        }
        case ExprKind::Pow: return ipow(interval_eval(*e.kids[0], box), e.exponent);
        case ExprKind::Cos: return icos(interval_eval(*e.kids[0], box));
        case ExprKind::Sin: return isin(interval_eval(*e.kids[0], box));
        case ExprKind::Exp: return iexp(interval_eval(*e.kids[0], box));
    }
    throw EvalError("bad expr kind");
}

inline Interval interval_eval(const ExprPtr& e, const Box& box) { return interval_eval(*e, box); }

// ---- typing -----------------------------------------------------------

enum class VarKind { Real, Int, Bool };

using Decls = std::map<std::string, VarKind>;

namespace detail {
inline ValueType typecheck_at(const Expr& e, const Decls& decls, const std::string& path) {
    auto need = [&](const Expr& kid, ValueType want, const std::string& sub) {
        ValueType got = typecheck_at(kid, decls, path + sub);
        if (got != want)
            throw TypeError(std::string(want == ValueType::Numeric
                                            ? "expected numeric operand"
                                            : "expected Boolean operand") +
                            " at " + path + sub);
        return got;
    };
    switch (e.kind) {
        case ExprKind::Const: return ValueType::Numeric;
        case ExprKind::Var: {
            auto it = decls.find(e.name);
            if (it == decls.end()) throw TypeError("undeclared variable " + e.name + " at " + path);
            return it->second == VarKind::Bool ? ValueType::Boolean : ValueType::Numeric;
        }
        case ExprKind::Add: case ExprKind::Sub: case ExprKind::Mul:
        case ExprKind::Div: case ExprKind::Min: case ExprKind::Max:
            need(*e.kids[0], ValueType::Numeric, "/0");
            need(*e.kids[1], ValueType::Numeric, "/1");
            return ValueType::Numeric;
        case ExprKind::Neg: case ExprKind::Abs: case ExprKind::Clip:
        case ExprKind::Pow: case ExprKind::Cos: case ExprKind::Sin: case ExprKind::Exp:
            need(*e.kids[0], ValueType::Numeric, "/0");
            return ValueType::Numeric;
        case ExprKind::IfThenElse: {
            need(*e.kids[0], ValueType::Boolean, "/cond");
            ValueType a = typecheck_at(*e.kids[1], decls, path + "/then");
            ValueType b = typecheck_at(*e.kids[2], decls, path + "/else");
            if (a != b) throw TypeError("branch type mismatch at " + path);
            return a;
        }
        case ExprKind::Cmp:
            // comparisons accept either side: Booleans are {0,1} numerics
            typecheck_at(*e.kids[0], decls, path + "/0");
            typecheck_at(*e.kids[1], decls, path + "/1");
            return ValueType::Boolean;
        case ExprKind::And: case ExprKind::Or:
            need(*e.kids[0], ValueType::Boolean, "/0");
            need(*e.kids[1], ValueType::Boolean, "/1");
            return ValueType::Boolean;
        case ExprKind::Not:
            need(*e.kids[0], ValueType::Boolean, "/0");
            return ValueType::Boolean;
    }
    throw TypeError("bad expr kind at " + path);
}
}  // namespace detail

/// Bottom-up type assignment; rejects Boolean arithmetic and numeric logical
/// operands. Boolean variables may appear in arithmetic only via if().
inline ValueType typecheck(const Expr& e, const Decls& decls) {
    return detail::typecheck_at(e, decls, "");
}
inline ValueType typecheck(const ExprPtr& e, const Decls& decls) { return typecheck(*e, decls); }

// ---- utilities --------------------------------------------------------

/// Substitute variables by expressions (used to instantiate noise values).
inline ExprPtr substitute(const ExprPtr& e, const std::map<std::string, ExprPtr>& subst) {
    if (e->kind == ExprKind::Var) {
        auto it = subst.find(e->name);
        return it == subst.end() ? e : it->second;
    }
    if (e->kids.empty()) return e;
    Expr copy = *e;
    for (auto& k : copy.kids) k = substitute(k, subst);
    return make_node(std::move(copy));
}

inline void collect_vars(const Expr& e, std::map<std::string, VarRole>& out) {
    if (e.kind == ExprKind::Var) out.emplace(e.name, e.role);
    for (const auto& k : e.kids) collect_vars(*k, out);
}

/// Structural equality (used by serialization round-trip checks).
inline bool expr_equal(const Expr& a, const Expr& b) {
    if (a.kind != b.kind || a.kids.size() != b.kids.size()) return false;
    switch (a.kind) {
        case ExprKind::Const: if (a.value != b.value) return false; break;
        case ExprKind::Var: if (a.name != b.name || a.role != b.role) return false; break;
        case ExprKind::Cmp: if (a.cmp != b.cmp) return false; break;
        case ExprKind::Clip: if (a.clip_lo != b.clip_lo || a.clip_hi != b.clip_hi) return false; break;
        case ExprKind::Pow: if (a.exponent != b.exponent) return false; break;
        default: break;
    }
    for (size_t i = 0; i < a.kids.size(); ++i)
        if (!expr_equal(*a.kids[i], *b.kids[i])) return false;
    return true;
}

}  // namespace cgpo
