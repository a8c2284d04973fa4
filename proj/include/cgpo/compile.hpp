#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "cgpo/domain.hpp"
#include "cgpo/expr.hpp"
#include "cgpo/mip.hpp"
#include "cgpo/policy.hpp"

namespace cgpo {

struct CompileConfig {
    double eps_strict = 1e-5;   // slack for strict comparisons
    int pwl_segments = 16;      // per nonlinear node
    double blowup_limit = 1e6;  // abort when an enclosure gets wider than this
};

/// A compiled value: affine form over model variables plus a sound enclosure.
struct CV {
    LinExpr lin;
    Interval iv;
    ValueType type = ValueType::Numeric;

    bool decided() const { return type == ValueType::Boolean && iv.is_point(); }
};

/// Computes one derived variable's value from the values of earlier
/// variables; NaN signals "no consistent value" (e.g. a strict-comparison
/// input inside the epsilon band).
using VarEval = std::function<double(const std::vector<double>&)>;

inline double lin_value(const LinExpr& e, const std::vector<double>& x) {
    double v = e.constant;
    for (const auto& [id, c] : e.coef) v += c * x[id];
    return v;
}

struct CompileCtx {
    MipModel& model;
    CompileConfig cfg;
    std::map<std::string, CV> env;  // current variable bindings
    double pwl_error = 0.0;         // accumulated worst-case PWL error
    int counter = 0;                // fresh-name source
    // per-variable forward evaluators, in creation (dependency) order; they
    // let a solver complete any assignment of the free inputs into a full
    // feasible point
    std::vector<std::pair<int, VarEval>> evals;

    explicit CompileCtx(MipModel& m, CompileConfig c = {}) : model(m), cfg(c) {}

    std::string fresh(const std::string& tag) {
        return "_" + tag + std::to_string(counter++);
    }

    void defeval(int id, VarEval f) { evals.emplace_back(id, std::move(f)); }
};

namespace detail {

inline CV cv_const(double v) { return {LinExpr(v), Interval(v), ValueType::Numeric}; }
inline CV cv_bool_const(bool b) {
    return {LinExpr(b ? 1.0 : 0.0), Interval(b ? 1.0 : 0.0), ValueType::Boolean};
}

inline int new_cont(CompileCtx& ctx, const std::string& tag, Interval iv) {
    if (!iv.is_finite() || iv.width() > ctx.cfg.blowup_limit)
        throw ModelError("interval enclosure blow-up at " + tag + ": width " +
                         std::to_string(iv.width()));
    return ctx.model.add_var(ctx.fresh(tag), VarType::Cont, iv);
}

inline int new_bin(CompileCtx& ctx, const std::string& tag) {
    return ctx.model.add_var(ctx.fresh(tag), VarType::Bin, Interval(0, 1));
}

/// Variable id carrying the value of a compiled form.
inline int materialize(CompileCtx& ctx, const CV& cv, const std::string& tag) {
    if (cv.lin.coef.size() == 1 && cv.lin.constant == 0.0) {
        auto [v, c] = *cv.lin.coef.begin();
        if (c == 1.0) return v;
    }
    VarType t = cv.type == ValueType::Boolean ? VarType::Bin : VarType::Cont;
    if (t == VarType::Bin && !cv.iv.is_point()) {
        int z = new_bin(ctx, tag);
        ctx.model.add_eq(cv.lin - LinExpr::term(z), 0.0);
        ctx.defeval(z, [l = cv.lin](const std::vector<double>& x) { return lin_value(l, x); });
        return z;
    }
    int z = new_cont(ctx, tag, cv.iv);
    ctx.model.add_eq(cv.lin - LinExpr::term(z), 0.0);
    ctx.defeval(z, [l = cv.lin](const std::vector<double>& x) { return lin_value(l, x); });
    return z;
}

/// A Boolean CV as (binary var, active value); constants are rejected —
/// callers fold decided conditions before asking.
inline std::pair<int, bool> to_bin(CompileCtx& ctx, const CV& cv) {
    if (cv.lin.coef.size() == 1) {
        auto [v, c] = *cv.lin.coef.begin();
        if (ctx.model.vars[v].type == VarType::Bin) {
            if (c == 1.0 && cv.lin.constant == 0.0) return {v, true};
            if (c == -1.0 && cv.lin.constant == 1.0) return {v, false};
        }
    }
    int z = new_bin(ctx, "bool");
    ctx.model.add_eq(cv.lin - LinExpr::term(z), 0.0);
    ctx.defeval(z, [l = cv.lin](const std::vector<double>& x) { return lin_value(l, x); });
    return {z, true};
}

// ---- logical connectives on CVs ---------------------------------------

inline CV cv_not(const CV& a) {
    return {LinExpr(1.0) - a.lin, Interval(1.0 - a.iv.hi, 1.0 - a.iv.lo), ValueType::Boolean};
}

inline CV cv_and(CompileCtx& ctx, const CV& a, const CV& b) {
    if (a.decided()) return a.iv.lo > 0.0 ? b : cv_bool_const(false);
    if (b.decided()) return b.iv.lo > 0.0 ? a : cv_bool_const(false);
    int z = new_bin(ctx, "and");
    ctx.model.add_le(LinExpr::term(z) - a.lin, 0.0);
    ctx.model.add_le(LinExpr::term(z) - b.lin, 0.0);
    ctx.model.add_ge(LinExpr::term(z) - a.lin - b.lin, -1.0);
    ctx.defeval(z, [al = a.lin, bl = b.lin](const std::vector<double>& x) {
        return lin_value(al, x) >= 0.5 && lin_value(bl, x) >= 0.5 ? 1.0 : 0.0;
    });
    return {LinExpr::term(z), Interval(0, 1), ValueType::Boolean};
}

inline CV cv_or(CompileCtx& ctx, const CV& a, const CV& b) {
    if (a.decided()) return a.iv.lo > 0.0 ? cv_bool_const(true) : b;
    if (b.decided()) return b.iv.lo > 0.0 ? cv_bool_const(true) : a;
    int z = new_bin(ctx, "or");
    ctx.model.add_ge(LinExpr::term(z) - a.lin, 0.0);
    ctx.model.add_ge(LinExpr::term(z) - b.lin, 0.0);
    ctx.model.add_le(LinExpr::term(z) - a.lin - b.lin, 0.0);
    ctx.defeval(z, [al = a.lin, bl = b.lin](const std::vector<double>& x) {
        return lin_value(al, x) >= 0.5 || lin_value(bl, x) >= 0.5 ? 1.0 : 0.0;
    });
    return {LinExpr::term(z), Interval(0, 1), ValueType::Boolean};
}

// ---- comparisons -------------------------------------------------------

/// a <= b (non-strict): y = 1 ⟹ a − b ≤ 0; y = 0 ⟹ a − b ≥ ε.
/// a >  b (strict):     y = 1 ⟹ a − b ≥ ε; y = 0 ⟹ a − b ≤ 0.
/// The strict side always carries the ε, matching exact evaluation except on
/// inputs within ε of the boundary.
inline CV compile_cmp(CompileCtx& ctx, CmpOp op, const CV& a, const CV& b) {
    double eps = ctx.cfg.eps_strict;
    CV d{a.lin - b.lin, a.iv - b.iv, ValueType::Numeric};
    switch (op) {
        case CmpOp::Le: {
            if (d.iv.hi <= 0.0) return cv_bool_const(true);
            if (d.iv.lo > 0.0) return cv_bool_const(false);
            int y = new_bin(ctx, "le");
            ctx.model.add_indicator(y, true, d.lin, Sense::Le, 0.0);
            ctx.model.add_indicator(y, false, d.lin, Sense::Ge, eps);
            ctx.defeval(y, [dl = d.lin, eps](const std::vector<double>& x) {
                double v = lin_value(dl, x);
                if (v <= 0.0) return 1.0;
                if (v >= eps) return 0.0;
                return std::nan("");  // inside the epsilon band: no consistent value
            });
            return {LinExpr::term(y), Interval(0, 1), ValueType::Boolean};
        }
        case CmpOp::Lt: {
            if (d.iv.hi < 0.0) return cv_bool_const(true);
            if (d.iv.lo >= 0.0) return cv_bool_const(false);
            int y = new_bin(ctx, "lt");
            ctx.model.add_indicator(y, true, d.lin, Sense::Le, -eps);
            ctx.model.add_indicator(y, false, d.lin, Sense::Ge, 0.0);
            ctx.defeval(y, [dl = d.lin, eps](const std::vector<double>& x) {
                double v = lin_value(dl, x);
                if (v <= -eps) return 1.0;
                if (v >= 0.0) return 0.0;
                return std::nan("");
            });
            return {LinExpr::term(y), Interval(0, 1), ValueType::Boolean};
        }
        case CmpOp::Ge: return compile_cmp(ctx, CmpOp::Le, b, a);
        case CmpOp::Gt: return compile_cmp(ctx, CmpOp::Lt, b, a);
        case CmpOp::Eq: {
            if (d.iv.is_point() && d.iv.lo == 0.0) return cv_bool_const(true);
            if (d.iv.lo > 0.0 || d.iv.hi < 0.0) return cv_bool_const(false);
            CV le = compile_cmp(ctx, CmpOp::Le, a, b);
            CV ge = compile_cmp(ctx, CmpOp::Ge, a, b);
            return cv_and(ctx, le, ge);
        }
        case CmpOp::Ne: return cv_not(compile_cmp(ctx, CmpOp::Eq, a, b));
    }
    throw ModelError("bad cmp op");
}

// ---- min / max / abs / if ---------------------------------------------

inline CV compile_min(CompileCtx& ctx, const CV& a, const CV& b) {
    if (a.iv.hi <= b.iv.lo) return a;
    if (b.iv.hi <= a.iv.lo) return b;
    int z = new_cont(ctx, "min", imin(a.iv, b.iv));
    ctx.model.add_le(LinExpr::term(z) - a.lin, 0.0);
    ctx.model.add_le(LinExpr::term(z) - b.lin, 0.0);
    int y = new_bin(ctx, "minsel");
    ctx.model.add_indicator(y, true, LinExpr::term(z) - a.lin, Sense::Ge, 0.0);
    ctx.model.add_indicator(y, false, LinExpr::term(z) - b.lin, Sense::Ge, 0.0);
    ctx.defeval(z, [al = a.lin, bl = b.lin](const std::vector<double>& x) {
        return std::min(lin_value(al, x), lin_value(bl, x));
    });
    ctx.defeval(y, [al = a.lin, bl = b.lin](const std::vector<double>& x) {
        return lin_value(al, x) <= lin_value(bl, x) ? 1.0 : 0.0;
    });
    return {LinExpr::term(z), imin(a.iv, b.iv), ValueType::Numeric};
}

inline CV compile_max(CompileCtx& ctx, const CV& a, const CV& b) {
    if (a.iv.lo >= b.iv.hi) return a;
    if (b.iv.lo >= a.iv.hi) return b;
    int z = new_cont(ctx, "max", imax(a.iv, b.iv));
    ctx.model.add_ge(LinExpr::term(z) - a.lin, 0.0);
    ctx.model.add_ge(LinExpr::term(z) - b.lin, 0.0);
    int y = new_bin(ctx, "maxsel");
    ctx.model.add_indicator(y, true, LinExpr::term(z) - a.lin, Sense::Le, 0.0);
    ctx.model.add_indicator(y, false, LinExpr::term(z) - b.lin, Sense::Le, 0.0);
    ctx.defeval(z, [al = a.lin, bl = b.lin](const std::vector<double>& x) {
        return std::max(lin_value(al, x), lin_value(bl, x));
    });
    ctx.defeval(y, [al = a.lin, bl = b.lin](const std::vector<double>& x) {
        return lin_value(al, x) >= lin_value(bl, x) ? 1.0 : 0.0;
    });
    return {LinExpr::term(z), imax(a.iv, b.iv), ValueType::Numeric};
}

inline CV compile_abs(CompileCtx& ctx, const CV& a) {
    if (a.iv.lo >= 0.0) return a;
    CV na{-a.lin, -a.iv, ValueType::Numeric};
    if (a.iv.hi <= 0.0) return na;
    return compile_max(ctx, a, na);
}

inline CV compile_ite(CompileCtx& ctx, const CV& c, const CV& a, const CV& b) {
    if (c.decided()) return c.iv.lo > 0.0 ? a : b;
    auto [y, act] = to_bin(ctx, c);
    Interval iv = hull(a.iv, b.iv);
    ValueType t = a.type == ValueType::Boolean && b.type == ValueType::Boolean
                      ? ValueType::Boolean : ValueType::Numeric;
    int z = t == ValueType::Boolean ? new_bin(ctx, "ite") : new_cont(ctx, "ite", iv);
    ctx.model.add_indicator(y, act, LinExpr::term(z) - a.lin, Sense::Eq, 0.0);
    ctx.model.add_indicator(y, !act, LinExpr::term(z) - b.lin, Sense::Eq, 0.0);
    ctx.defeval(z, [y, act, al = a.lin, bl = b.lin](const std::vector<double>& x) {
        return (x[y] >= 0.5) == act ? lin_value(al, x) : lin_value(bl, x);
    });
    return {LinExpr::term(z), iv, t};
}

// ---- piecewise-linear approximation -----------------------------------

/// z ≈ f(s) on s's enclosure via an SOS2 convex-combination grid. The
/// worst-case deviation (densely sampled) is added to ctx.pwl_error.
inline CV pwl_univariate(CompileCtx& ctx, const CV& s, const std::function<double(double)>& f,
                         const std::string& tag) {
    if (s.iv.is_point()) return cv_const(f(s.iv.lo));
    if (!s.iv.is_finite()) throw ModelError("PWL over unbounded interval at " + tag);
    int n = ctx.cfg.pwl_segments;
    double lo = s.iv.lo, w = s.iv.width();
    std::vector<double> xs(n + 1), fs(n + 1);
    for (int i = 0; i <= n; ++i) {
        xs[i] = i == n ? s.iv.hi : lo + w * i / n;
        fs[i] = f(xs[i]);
    }
    std::vector<int> lambda(n + 1);
    LinExpr sum, sx, fx;
    for (int i = 0; i <= n; ++i) {
        lambda[i] = ctx.model.add_var(ctx.fresh(tag + "_lam"), VarType::Cont, Interval(0, 1));
        sum.add(lambda[i], 1.0);
        sx.add(lambda[i], xs[i]);
        fx.add(lambda[i], fs[i]);
        // weight of knot i when s sits in its grid cell (0 elsewhere)
        ctx.defeval(lambda[i], [i, xs, sl = s.lin](const std::vector<double>& x) {
            double sv = std::clamp(lin_value(sl, x), xs.front(), xs.back());
            int n2 = static_cast<int>(xs.size()) - 1;
            int j = n2 - 1;
            while (j > 0 && sv < xs[j]) --j;
            double t = (sv - xs[j]) / (xs[j + 1] - xs[j]);
            if (i == j) return 1.0 - t;
            if (i == j + 1) return t;
            return 0.0;
        });
    }
    ctx.model.add_eq(sum, 1.0);
    ctx.model.add_eq(sx - s.lin, 0.0);
    ctx.model.add_sos2(lambda);
    // worst sampled chord deviation
    double err = 0.0;
    for (int i = 0; i < n; ++i)
        for (int k = 1; k < 16; ++k) {
            double t = static_cast<double>(k) / 16.0;
            double x = xs[i] + (xs[i + 1] - xs[i]) * t;
            double chord = fs[i] + (fs[i + 1] - fs[i]) * t;
            err = std::max(err, std::abs(chord - f(x)));
        }
    ctx.pwl_error += err;
    double flo = *std::min_element(fs.begin(), fs.end());
    double fhi = *std::max_element(fs.begin(), fs.end());
    return {fx, Interval(flo, fhi), ValueType::Numeric};
}

// ---- products ----------------------------------------------------------

inline CV scale_cv(const CV& a, double s) {
    return {a.lin * s, a.iv * Interval(s), ValueType::Numeric};
}

/// y Boolean times x: exact via indicators (z = x when y, else 0).
inline CV bool_product(CompileCtx& ctx, const CV& yb, const CV& x) {
    if (yb.decided()) return yb.iv.lo > 0.0 ? x : cv_const(0.0);
    if (x.iv.is_point()) return scale_cv(yb, x.iv.lo);
    auto [y, act] = to_bin(ctx, yb);
    Interval iv = hull(x.iv, Interval(0.0));
    int z = new_cont(ctx, "bprod", iv);
    ctx.model.add_indicator(y, act, LinExpr::term(z) - x.lin, Sense::Eq, 0.0);
    ctx.model.add_indicator(y, !act, LinExpr::term(z), Sense::Eq, 0.0);
    ctx.defeval(z, [y, act, xl = x.lin](const std::vector<double>& xv) {
        return (xv[y] >= 0.5) == act ? lin_value(xl, xv) : 0.0;
    });
    return {LinExpr::term(z), iv, ValueType::Numeric};
}

/// True when the affine form provably takes integer values only.
inline bool integral_affine(const MipModel& m, const CV& a) {
    if (a.type == ValueType::Boolean) return true;
    if (a.lin.constant != std::floor(a.lin.constant)) return false;
    for (const auto& [v, c] : a.lin.coef) {
        if (c != std::floor(c)) return false;
        if (m.vars[v].type == VarType::Cont) return false;
    }
    return true;
}

CV compile_product(CompileCtx& ctx, const CV& a, const CV& b);

/// x integer-valued times y: exact via binary expansion of x.
inline CV int_product(CompileCtx& ctx, const CV& x, const CV& y) {
    double lo = std::ceil(x.iv.lo), hi = std::floor(x.iv.hi);
    double range = hi - lo;
    int bits = 0;
    while ((1LL << bits) <= static_cast<long long>(range)) ++bits;
    CV acc = scale_cv(y, lo);
    CV rem{x.lin - LinExpr(lo), x.iv - Interval(lo), ValueType::Numeric};
    LinExpr bitsum;
    for (int k = 0; k < bits; ++k) {
        int bk = new_bin(ctx, "bit");
        bitsum.add(bk, static_cast<double>(1LL << k));
        ctx.defeval(bk, [k, lo, xl = x.lin](const std::vector<double>& xv) {
            double rv = lin_value(xl, xv) - lo;
            long long n2 = std::llround(rv);
            if (n2 < 0 || std::abs(rv - static_cast<double>(n2)) > 1e-6)
                return std::nan("");
            return static_cast<double>((n2 >> k) & 1);
        });
        CV bit{LinExpr::term(bk), Interval(0, 1), ValueType::Boolean};
        CV term = bool_product(ctx, bit, y);
        acc = {acc.lin + term.lin * static_cast<double>(1LL << k),
               acc.iv + term.iv * Interval(static_cast<double>(1LL << k)),
               ValueType::Numeric};
    }
    ctx.model.add_eq(bitsum - rem.lin, 0.0);
    acc.iv = intersect(acc.iv, x.iv * y.iv);
    return acc;
}

/// x² via PWL (convex, so the chord overestimates; error still sampled).
inline CV pwl_square(CompileCtx& ctx, const CV& s) {
    return pwl_univariate(ctx, s, [](double x) { return x * x; }, "sq");
}

inline CV compile_product(CompileCtx& ctx, const CV& a, const CV& b) {
    if (a.lin.is_constant()) return scale_cv(b, a.lin.constant);
    if (b.lin.is_constant()) return scale_cv(a, b.lin.constant);
    if (a.type == ValueType::Boolean) return bool_product(ctx, a, b);
    if (b.type == ValueType::Boolean) return bool_product(ctx, b, a);
    const double max_expand = 4096;
    if (integral_affine(ctx.model, a) && a.iv.width() <= max_expand)
        return int_product(ctx, a, b);
    if (integral_affine(ctx.model, b) && b.iv.width() <= max_expand)
        return int_product(ctx, b, a);
    // continuous × continuous: exact bilinear constraint, enforced by the
    // solver through McCormick envelopes and spatial branching
    int xa = materialize(ctx, a, "pfac");
    int xb = materialize(ctx, b, "pfac");
    Interval iv = a.iv * b.iv;
    int z = new_cont(ctx, "prod", iv);
    ctx.model.add_product(xa, xb, z);
    ctx.defeval(z, [xa, xb](const std::vector<double>& xv) { return xv[xa] * xv[xb]; });
    return {LinExpr::term(z), iv, ValueType::Numeric};
}

// ---- expression compilation -------------------------------------------

inline CV compile_node(CompileCtx& ctx, const Expr& e) {
    switch (e.kind) {
        case ExprKind::Const: return cv_const(e.value);
        case ExprKind::Var: {
            auto it = ctx.env.find(e.name);
            if (it == ctx.env.end()) throw ModelError("unbound variable " + e.name);
            return it->second;
        }
        case ExprKind::Add: {
            CV a = compile_node(ctx, *e.kids[0]), b = compile_node(ctx, *e.kids[1]);
            return {a.lin + b.lin, a.iv + b.iv, ValueType::Numeric};
        }
        case ExprKind::Sub: {
            CV a = compile_node(ctx, *e.kids[0]), b = compile_node(ctx, *e.kids[1]);
            return {a.lin - b.lin, a.iv - b.iv, ValueType::Numeric};
        }
        case ExprKind::Neg: {
            CV a = compile_node(ctx, *e.kids[0]);
            return {-a.lin, -a.iv, ValueType::Numeric};
        }
        case ExprKind::Mul:
            return compile_product(ctx, compile_node(ctx, *e.kids[0]),
                                   compile_node(ctx, *e.kids[1]));
        case ExprKind::Div: {
            CV a = compile_node(ctx, *e.kids[0]), b = compile_node(ctx, *e.kids[1]);
            if (!b.lin.is_constant())
                throw ModelError("division by a decision expression is not MIP-encodable");
            if (b.lin.constant == 0.0) throw ModelError("division by zero");
            return scale_cv(a, 1.0 / b.lin.constant);
        }
        case ExprKind::Min:
            return compile_min(ctx, compile_node(ctx, *e.kids[0]),
                               compile_node(ctx, *e.kids[1]));
        case ExprKind::Max:
            return compile_max(ctx, compile_node(ctx, *e.kids[0]),
                               compile_node(ctx, *e.kids[1]));
        case ExprKind::Abs: return compile_abs(ctx, compile_node(ctx, *e.kids[0]));
        case ExprKind::Clip: {
            CV a = compile_node(ctx, *e.kids[0]);
            CV m = compile_max(ctx, a, cv_const(e.clip_lo));
            return compile_min(ctx, m, cv_const(e.clip_hi));
        }
        case ExprKind::IfThenElse: {
            CV c = compile_node(ctx, *e.kids[0]);
            // fold decided conditions without compiling the dead branch
            if (c.decided())
                return compile_node(ctx, c.iv.lo > 0.0 ? *e.kids[1] : *e.kids[2]);
            return compile_ite(ctx, c, compile_node(ctx, *e.kids[1]),
                               compile_node(ctx, *e.kids[2]));
        }
        case ExprKind::Cmp:
            return compile_cmp(ctx, e.cmp, compile_node(ctx, *e.kids[0]),
                               compile_node(ctx, *e.kids[1]));
        case ExprKind::And:
            return cv_and(ctx, compile_node(ctx, *e.kids[0]), compile_node(ctx, *e.kids[1]));
        case ExprKind::Or:
            return cv_or(ctx, compile_node(ctx, *e.kids[0]), compile_node(ctx, *e.kids[1]));
        case ExprKind::Not: return cv_not(compile_node(ctx, *e.kids[0]));
        case ExprKind::Pow: {
            if (e.exponent == 0) return cv_const(1.0);
            CV x = compile_node(ctx, *e.kids[0]);
            CV r = x;
            for (int i = 1; i < e.exponent; ++i) r = compile_product(ctx, r, x);
            return r;
        }
        case ExprKind::Cos: {
            CV x = compile_node(ctx, *e.kids[0]);
            CV r = pwl_univariate(ctx, x, [](double v) { return std::cos(v); }, "cos");
            r.iv = intersect(r.iv, Interval(-1.0, 1.0));
            return r;
        }
        case ExprKind::Sin: {
            CV x = compile_node(ctx, *e.kids[0]);
            CV r = pwl_univariate(ctx, x, [](double v) { return std::sin(v); }, "sin");
            r.iv = intersect(r.iv, Interval(-1.0, 1.0));
            return r;
        }
        case ExprKind::Exp: {
            CV x = compile_node(ctx, *e.kids[0]);
            CV r = pwl_univariate(ctx, x, [](double v) { return std::exp(v); }, "exp");
            r.iv = Interval(std::max(0.0, r.iv.lo), r.iv.hi);
            return r;
        }
    }
    throw ModelError("bad expr kind");
}

}  // namespace detail

/// Compile an expression under the ctx bindings; returns a model variable
/// carrying its value in every feasible solution.
inline int compile_expr(CompileCtx& ctx, const Expr& e) {
    CV cv = detail::compile_node(ctx, e);
    return detail::materialize(ctx, cv, "expr");
}
inline int compile_expr(CompileCtx& ctx, const ExprPtr& e) { return compile_expr(ctx, *e); }

// ---- rollout compilation ----------------------------------------------

enum class PolicyBinding { Plan, TemplateParams, TemplateFixed };

struct RolloutSpec {
    PolicyBinding binding = PolicyBinding::Plan;
    const PolicyTemplate* tpl = nullptr;            // template bindings
    const PolicyParams* fixed_params = nullptr;     // TemplateFixed
    const std::map<std::string, int>* shared_param_vars = nullptr;  // TemplateParams
    const Env* fixed_s1 = nullptr;                  // else decision vars over S1
    const std::vector<Env>* fixed_noise = nullptr;  // else decision vars over Ξ_p
    // reuse another rollout's s1/noise variables (both rollouts face the same
    // initial state and disturbance trajectory)
    const std::map<std::string, int>* shared_s1 = nullptr;
    const std::vector<std::map<std::string, int>>* shared_noise = nullptr;
    double p_step = 0.995;                          // support level for noise vars
    std::string prefix;                             // variable-name prefix
};

struct RolloutVars {
    int V = -1;                                     // total-reward variable
    std::map<std::string, int> s1;                  // empty when fixed
    std::vector<std::map<std::string, int>> noise;  // per step, empty when fixed
    std::vector<std::map<std::string, int>> actions;  // per step
    std::map<std::string, int> params;              // created here unless shared
    double pwl_error = 0.0;
};

namespace detail {

/// Bindings for the policy parameters as CVs (fixed constants or model vars).
inline std::map<std::string, CV> param_cvs(CompileCtx& ctx, const RolloutSpec& spec,
                                           RolloutVars& out) {
    std::map<std::string, CV> cvs;
    if (spec.binding == PolicyBinding::Plan) return cvs;
    if (!spec.tpl) throw ModelError("rollout: template binding without a template");
    if (spec.binding == PolicyBinding::TemplateFixed) {
        if (!spec.fixed_params) throw ModelError("rollout: missing fixed parameters");
        check_params(*spec.tpl, *spec.fixed_params);
        for (const auto& p : spec.tpl->params)
            cvs[p.name] = cv_const(spec.fixed_params->at(p.name));
        return cvs;
    }
    for (const auto& p : spec.tpl->params) {
        int id;
        if (spec.shared_param_vars) {
            id = spec.shared_param_vars->at(p.name);
        } else {
            VarType t = p.kind == VarKind::Real ? VarType::Cont
                        : p.kind == VarKind::Int ? VarType::Int : VarType::Bin;
            id = ctx.model.add_var(spec.prefix + p.name, t, p.bounds);
            out.params[p.name] = id;
        }
        CV cv{LinExpr::term(id), ctx.model.vars[id].bounds,
              p.kind == VarKind::Bool ? ValueType::Boolean : ValueType::Numeric};
        cvs[p.name] = cv;
    }
    if (spec.shared_param_vars)
        for (const auto& [n, id] : *spec.shared_param_vars) out.params[n] = id;
    return cvs;
}

inline CV head_cv(CompileCtx& ctx, const PolicyTemplate& tpl, const ActionRule& rule,
                  const CaseSpec& cs, const std::map<std::string, CV>& pv,
                  const std::map<std::string, CV>& state) {
    CV v = pv.at(cs.b_param);
    auto addprod = [&](const std::string& pname, const CV& x) {
        CV t = compile_product(ctx, pv.at(pname), x);
        v = {v.lin + t.lin, v.iv + t.iv, ValueType::Numeric};
    };
    if (!cs.w_params.empty()) {
        if (head_of(rule.cls) == HeadKind::SingleLinear) {
            addprod(cs.w_params[0], state.at(tpl.state_names[rule.s_state]));
        } else {
            for (size_t i = 0; i < cs.w_params.size(); ++i)
                addprod(cs.w_params[i], state.at(tpl.state_names[i]));
        }
    }
    if (!cs.q_params.empty()) {
        size_t n = tpl.state_names.size(), k = 0;
        for (size_t i = 0; i < n; ++i)
            for (size_t j = i; j < n; ++j) {
                CV xij = compile_product(ctx, state.at(tpl.state_names[i]),
                                         state.at(tpl.state_names[j]));
                addprod(cs.q_params[k++], xij);
            }
    }
    return v;
}

inline CV pred_cv(CompileCtx& ctx, const PolicyTemplate& tpl, const CaseSpec& cs,
                  const std::map<std::string, CV>& pv,
                  const std::map<std::string, CV>& state) {
    CV val;
    if (cs.pred_w.empty()) {
        val = state.at(tpl.state_names[cs.pws_state]);
    } else {
        val = cv_const(0.0);
        for (size_t i = 0; i < cs.pred_w.size(); ++i) {
            CV t = compile_product(ctx, pv.at(cs.pred_w[i]), state.at(tpl.state_names[i]));
            val = {val.lin + t.lin, val.iv + t.iv, ValueType::Numeric};
        }
    }
    CV lo_ok = compile_cmp(ctx, CmpOp::Le, pv.at(cs.l_param), val);
    CV hi_ok = compile_cmp(ctx, CmpOp::Le, val, pv.at(cs.u_param));
    return cv_and(ctx, lo_ok, hi_ok);
}

/// First-match case selection and action production for one rule at one step.
inline CV rule_action_cv(CompileCtx& ctx, const PolicyTemplate& tpl, const ActionRule& rule,
                         const std::map<std::string, CV>& pv,
                         const std::map<std::string, CV>& state, const std::string& tag) {
    CV raw;
    if (rule.K == 0) {
        raw = head_cv(ctx, tpl, rule, rule.cases[0], pv, state);
    } else {
        // sel_c = (no earlier case fired) ∧ fire_c; last case catches the rest
        std::vector<CV> sel;
        CV notyet = cv_bool_const(true);
        for (int c = 0; c < rule.K; ++c) {
            CV fire = pred_cv(ctx, tpl, rule.cases[c], pv, state);
            sel.push_back(cv_and(ctx, notyet, fire));
            notyet = cv_and(ctx, notyet, cv_not(fire));
        }
        sel.push_back(notyet);
        Interval iv;
        bool first = true;
        std::vector<CV> heads;
        for (int c = 0; c <= rule.K; ++c) {
            heads.push_back(head_cv(ctx, tpl, rule, rule.cases[c], pv, state));
            iv = first ? heads.back().iv : hull(iv, heads.back().iv);
            first = false;
        }
        // z equals the selected head; encoded per case so exactly one binds
        bool all_decided = true;
        for (const auto& s : sel) all_decided = all_decided && s.decided();
        if (all_decided) {
            for (int c = 0; c <= rule.K; ++c)
                if (sel[c].iv.lo > 0.0) { raw = heads[c]; break; }
        } else {
            int z = new_cont(ctx, tag + "_raw", iv);
            {
                std::vector<std::pair<LinExpr, LinExpr>> arms;
                for (int c = 0; c <= rule.K; ++c) arms.emplace_back(sel[c].lin, heads[c].lin);
                ctx.defeval(z, [arms](const std::vector<double>& x) {
                    for (const auto& [s, h] : arms)
                        if (lin_value(s, x) >= 0.5) return lin_value(h, x);
                    return std::nan("");
                });
            }
            LinExpr selsum;
            for (int c = 0; c <= rule.K; ++c) {
                if (sel[c].decided()) {
                    if (sel[c].iv.lo > 0.0)
                        ctx.model.add_eq(LinExpr::term(z) - heads[c].lin, 0.0);
                    selsum += sel[c].lin;
                    continue;
                }
                auto [y, act] = to_bin(ctx, sel[c]);
                ctx.model.add_indicator(y, act, LinExpr::term(z) - heads[c].lin, Sense::Eq,
                                        0.0);
                selsum += sel[c].lin;
            }
            ctx.model.add_eq(selsum, 1.0);  // redundant but tightens the relaxation
            raw = {LinExpr::term(z), iv, ValueType::Numeric};
        }
    }
    // clip into the action bounds, then round for discrete actions
    CV clipped = compile_min(ctx, compile_max(ctx, raw, cv_const(rule.action_bounds.lo)),
                             cv_const(rule.action_bounds.hi));
    if (rule.action_kind == VarKind::Real) return clipped;
    if (clipped.iv.is_point()) return cv_const(std::floor(clipped.iv.lo + 0.5));
    VarType t = rule.action_kind == VarKind::Bool ? VarType::Bin : VarType::Int;
    Interval ab(std::ceil(rule.action_bounds.lo), std::floor(rule.action_bounds.hi));
    int a = ctx.model.add_var(ctx.fresh(tag + "_int"), t, ab);
    // round-half-up band: a = floor(v + 1/2), i.e. v − 1/2 < a ≤ v + 1/2;
    // the strict side carries eps_strict so exact half ties resolve upward
    ctx.model.add_le(LinExpr::term(a) - clipped.lin, 0.5);
    ctx.model.add_ge(LinExpr::term(a) - clipped.lin, -0.5 + ctx.cfg.eps_strict);
    ctx.defeval(a, [ab, cl = clipped.lin](const std::vector<double>& x) {
        return std::clamp(std::floor(lin_value(cl, x) + 0.5), ab.lo, ab.hi);
    });
    return {LinExpr::term(a), ab, rule.action_kind == VarKind::Bool ? ValueType::Boolean
                                                                    : ValueType::Numeric};
}

}  // namespace detail

/// Unroll the horizon: bind s1 and per-step noise (fixed or as decision
/// variables), produce actions from the configured policy binding, compile
/// each transition and reward, and return the total-reward variable. Bounds
/// are propagated per timestep through the CV enclosures so every big-M
/// stays instance-tight.
inline RolloutVars compile_rollout(CompileCtx& ctx, const DcMdp& mdp, int horizon,
                                   const RolloutSpec& spec) {
    using detail::cv_const;
    RolloutVars out;
    double pwl_before = ctx.pwl_error;
    std::map<std::string, CV> pv = detail::param_cvs(ctx, spec, out);

    // initial state
    std::map<std::string, CV> state;
    for (const auto& sv : mdp.states) {
        if (spec.fixed_s1) {
            auto it = spec.fixed_s1->find(sv.name);
            if (it == spec.fixed_s1->end())
                throw ModelError("rollout: missing fixed initial value for " + sv.name);
            state[sv.name] = sv.kind == VarKind::Bool
                                 ? detail::cv_bool_const(it->second != 0.0)
                                 : cv_const(it->second);
        } else if (spec.shared_s1) {
            int id = spec.shared_s1->at(sv.name);
            out.s1[sv.name] = id;
            state[sv.name] = CV{LinExpr::term(id), ctx.model.vars[id].bounds,
                                sv.kind == VarKind::Bool ? ValueType::Boolean
                                                         : ValueType::Numeric};
        } else {
            Interval s1 = mdp.init.at(sv.name);
            VarType t = sv.kind == VarKind::Real ? VarType::Cont
                        : sv.kind == VarKind::Int ? VarType::Int : VarType::Bin;
            int id = ctx.model.add_var(spec.prefix + sv.name + "_t0", t, s1);
            out.s1[sv.name] = id;
            state[sv.name] = CV{LinExpr::term(id), s1,
                                sv.kind == VarKind::Bool ? ValueType::Boolean
                                                         : ValueType::Numeric};
        }
    }

    LinExpr v_lin;
    Interval v_iv(0.0);
    for (int t = 0; t < horizon; ++t) {
        std::string st = "_t" + std::to_string(t);
        // noise bindings for this step
        std::map<std::string, CV> step_env = state;
        std::map<std::string, int> step_noise;
        for (const auto& [nname, dist] : mdp.noises) {
            if (spec.fixed_noise) {
                if (t >= static_cast<int>(spec.fixed_noise->size()))
                    throw ModelError("rollout: fixed noise shorter than horizon");
                step_env[nname] = cv_const(spec.fixed_noise->at(t).at(nname));
            } else if (spec.shared_noise) {
                if (t >= static_cast<int>(spec.shared_noise->size()))
                    throw ModelError("rollout: shared noise shorter than horizon");
                int id = spec.shared_noise->at(t).at(nname);
                step_noise[nname] = id;
                step_env[nname] = CV{LinExpr::term(id), ctx.model.vars[id].bounds,
                                     ValueType::Numeric};
            } else {
                Interval sup = noise_support(dist, spec.p_step);
                VarType vt = dist.kind == NoiseDist::Kind::DiscreteUniform ? VarType::Int
                                                                           : VarType::Cont;
                int id = ctx.model.add_var(spec.prefix + nname + st, vt, sup);
                step_noise[nname] = id;
                step_env[nname] = CV{LinExpr::term(id), sup, ValueType::Numeric};
            }
        }
        out.noise.push_back(std::move(step_noise));

        // actions
        std::map<std::string, int> step_actions;
        if (spec.binding == PolicyBinding::Plan) {
            for (const auto& av : mdp.actions) {
                VarType vt = av.kind == VarKind::Real ? VarType::Cont
                             : av.kind == VarKind::Int ? VarType::Int : VarType::Bin;
                int id = ctx.model.add_var(spec.prefix + av.name + st, vt, av.bounds);
                step_actions[av.name] = id;
                step_env[av.name] = CV{LinExpr::term(id), av.bounds,
                                       av.kind == VarKind::Bool ? ValueType::Boolean
                                                                : ValueType::Numeric};
            }
        } else {
            for (const auto& rule : spec.tpl->rules) {
                CV a = detail::rule_action_cv(ctx, *spec.tpl, rule, pv, state,
                                              spec.prefix + rule.action + st);
                step_actions[rule.action] =
                    detail::materialize(ctx, a, spec.prefix + rule.action + st);
                step_env[rule.action] = a;
            }
        }
        out.actions.push_back(std::move(step_actions));

        // transitions, then the reward over (s, a, xi, s')
        std::map<std::string, CV> next;
        ctx.env = step_env;
        for (const auto& sv : mdp.states) {
            CV g = detail::compile_node(ctx, *mdp.transitions.at(sv.name));
            if (sv.kind == VarKind::Int && !detail::integral_affine(ctx.model, g)) {
                // keep integer states on integer model variables
                int id = ctx.model.add_var(ctx.fresh(spec.prefix + sv.name + st + "n"),
                                           VarType::Int, g.iv);
                ctx.model.add_eq(g.lin - LinExpr::term(id), 0.0);
                ctx.defeval(id, [gl = g.lin](const std::vector<double>& x) {
                    return static_cast<double>(std::llround(lin_value(gl, x)));
                });
                g = CV{LinExpr::term(id), g.iv, ValueType::Numeric};
            }
            next[sv.name] = g;
            step_env[primed(sv.name)] = g;
        }
        ctx.env = step_env;
        CV r = detail::compile_node(ctx, *mdp.reward);
        v_lin += r.lin;
        v_iv = v_iv + r.iv;
        state = std::move(next);
    }
    ctx.env.clear();
    out.V = detail::materialize(ctx, CV{v_lin, v_iv, ValueType::Numeric}, spec.prefix + "V");
    out.pwl_error = ctx.pwl_error - pwl_before;
    return out;
}

}  // namespace cgpo
