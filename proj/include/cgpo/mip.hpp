#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "cgpo/interval.hpp"

namespace cgpo {

struct ModelError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class VarType { Cont, Int, Bin };
enum class Sense { Le, Eq, Ge };
enum class ObjSense { Min, Max };

/// Sparse affine form c^T x + constant.
struct LinExpr {
    std::map<int, double> coef;
    double constant = 0.0;

    LinExpr() = default;
    LinExpr(double c) : constant(c) {}

    static LinExpr term(int var, double c = 1.0) {
        LinExpr e;
        if (c != 0.0) e.coef[var] = c;
        return e;
    }

    LinExpr& add(int var, double c) {
        if (c == 0.0) return *this;
        double& slot = coef[var];
        slot += c;
        if (slot == 0.0) coef.erase(var);
        return *this;
    }

    LinExpr& operator+=(const LinExpr& o) {
        for (const auto& [v, c] : o.coef) add(v, c);
        constant += o.constant;
        return *this;
    }
    LinExpr& operator-=(const LinExpr& o) {
        for (const auto& [v, c] : o.coef) add(v, -c);
        constant -= o.constant;
        return *this;
    }
    LinExpr& operator*=(double s) {
        if (s == 0.0) { coef.clear(); constant = 0.0; return *this; }
        for (auto& [v, c] : coef) c *= s;
        constant *= s;
        return *this;
    }

    friend LinExpr operator+(LinExpr a, const LinExpr& b) { return a += b; }
    friend LinExpr operator-(LinExpr a, const LinExpr& b) { return a -= b; }
    friend LinExpr operator*(LinExpr a, double s) { return a *= s; }
    friend LinExpr operator*(double s, LinExpr a) { return a *= s; }
    friend LinExpr operator-(LinExpr a) { return a *= -1.0; }

    bool is_constant() const { return coef.empty(); }
};

struct MipVarDecl {
    std::string name;
    VarType type = VarType::Cont;
    Interval bounds;
};

/// Linear row: coef^T x (sense) rhs. The affine constant is folded into rhs
/// when the row is added.
struct LinCon {
    std::map<int, double> coef;
    Sense sense = Sense::Le;
    double rhs = 0.0;
    std::string name;
};

/// bin == active_value implies the attached row holds.
struct Indicator {
    int bin = -1;
    bool active_value = true;
    LinCon con;
};

/// At most two of the listed variables nonzero, and adjacent in list order.
struct Sos2 {
    std::vector<int> vars;
};

/// Nonconvex bilinear constraint z = x·y, enforced by McCormick envelopes
/// plus spatial branching in the bundled solver.
struct Product {
    int x = -1, y = -1, z = -1;
};

struct MipModel {
    std::vector<MipVarDecl> vars;
    std::vector<LinCon> cons;
    std::vector<Indicator> indicators;
    std::vector<Sos2> sos2;
    std::vector<Product> products;
    ObjSense obj_sense = ObjSense::Min;
    LinExpr objective;

    int add_var(const std::string& name, VarType type, Interval bounds) {
        if (type == VarType::Bin) bounds = intersect(bounds, Interval(0, 1));
        if (!bounds.is_finite())
            throw ModelError("variable " + name + " needs finite bounds");
        vars.push_back({name, type, bounds});
        return static_cast<int>(vars.size()) - 1;
    }

    void fix(int var, double value) {
        check_var(var);
        if (!vars[var].bounds.contains(value))
            throw ModelError("fix outside bounds for " + vars[var].name);
        vars[var].bounds = Interval(value);
    }

    LinCon make_row(const LinExpr& e, Sense s, double rhs, const std::string& name = "") const {
        LinCon c;
        c.coef = e.coef;
        c.sense = s;
        c.rhs = rhs - e.constant;
        c.name = name;
        for (const auto& [v, _] : c.coef) check_var(v);
        return c;
    }

    void add_con(const LinExpr& e, Sense s, double rhs, const std::string& name = "") {
        cons.push_back(make_row(e, s, rhs, name));
    }
    void add_le(const LinExpr& e, double rhs, const std::string& name = "") {
        add_con(e, Sense::Le, rhs, name);
    }
    void add_ge(const LinExpr& e, double rhs, const std::string& name = "") {
        add_con(e, Sense::Ge, rhs, name);
    }
    void add_eq(const LinExpr& e, double rhs, const std::string& name = "") {
        add_con(e, Sense::Eq, rhs, name);
    }

    void add_indicator(int bin, bool active_value, const LinExpr& e, Sense s, double rhs,
                       const std::string& name = "") {
        check_var(bin);
        if (vars[bin].type != VarType::Bin)
            throw ModelError("indicator on non-binary variable " + vars[bin].name);
        indicators.push_back({bin, active_value, make_row(e, s, rhs, name)});
    }

    void add_sos2(std::vector<int> group) {
        for (int v : group) check_var(v);
        if (group.size() < 2) throw ModelError("SOS2 group needs at least 2 variables");
        sos2.push_back({std::move(group)});
    }

    void add_product(int x, int y, int z) {
        check_var(x);
        check_var(y);
        check_var(z);
        products.push_back({x, y, z});
    }

    void set_objective(ObjSense sense, LinExpr e) {
        for (const auto& [v, _] : e.coef) check_var(v);
        obj_sense = sense;
        objective = std::move(e);
    }

    /// Interval of a row's left-hand side over the variable bounds.
    Interval activity(const std::map<int, double>& coef) const {
        Interval acc(0.0);
        for (const auto& [v, c] : coef) acc = acc + vars[v].bounds * Interval(c);
        return acc;
    }
    Interval activity(const LinExpr& e) const {
        return activity(e.coef) + Interval(e.constant);
    }

    double eval(const LinExpr& e, const std::vector<double>& x) const {
        double v = e.constant;
        for (const auto& [id, c] : e.coef) v += c * x[id];
        return v;
    }

  private:
    void check_var(int v) const {
        if (v < 0 || v >= static_cast<int>(vars.size()))
            throw ModelError("undeclared variable id " + std::to_string(v));
    }
};

/// Replace indicator constraints by big-M rows. The M for each row comes from
/// the row's activity interval over the variable bounds, so it is finite by
/// construction and never a global default. Exact, not a relaxation.
inline void lower_indicators(MipModel& m) {
    for (const auto& ind : m.indicators) {
        Interval act = m.activity(ind.con.coef);
        if (!act.is_finite())
            throw ModelError("indicator row has unbounded activity; cannot derive big-M");
        // y = active ⟹ row; relax by M·(1 − [y = active])
        auto relaxed = [&](Sense s, double rhs) {
            LinCon c;
            c.coef = ind.con.coef;
            c.sense = s;
            c.name = ind.con.name;
            double slack = s == Sense::Le ? std::max(0.0, act.hi - rhs)
                                          : std::max(0.0, rhs - act.lo);
            double sgn = s == Sense::Le ? 1.0 : -1.0;
            if (ind.active_value) {
                // rhs + M(1-y): move M·y to the left
                if (slack != 0.0) c.coef[ind.bin] += sgn * slack;
                c.rhs = rhs + sgn * slack;
            } else {
                if (slack != 0.0) c.coef[ind.bin] += -sgn * slack;
                c.rhs = rhs;
            }
            if (c.coef.count(ind.bin) && c.coef[ind.bin] == 0.0) c.coef.erase(ind.bin);
            m.cons.push_back(std::move(c));
        };
        if (ind.con.sense == Sense::Le || ind.con.sense == Sense::Eq)
            relaxed(Sense::Le, ind.con.rhs);
        if (ind.con.sense == Sense::Ge || ind.con.sense == Sense::Eq)
            relaxed(Sense::Ge, ind.con.rhs);
    }
    m.indicators.clear();
}

/// Replace SOS2 groups by the standard binary formulation (one binary per
/// segment; lambdas of a group covered by adjacent-segment binaries). Used
/// for export; the bundled solver branches on the groups directly.
inline void lower_sos2(MipModel& m) {
    int g = 0;
    for (const auto& grp : m.sos2) {
        size_t n = grp.vars.size();
        std::vector<int> seg(n - 1);
        LinExpr sum;
        for (size_t i = 0; i + 1 < n; ++i) {
            seg[i] = m.add_var("sos2g" + std::to_string(g) + "_seg" + std::to_string(i),
                               VarType::Bin, Interval(0, 1));
            sum.add(seg[i], 1.0);
        }
        m.add_eq(sum, 1.0);
        for (size_t i = 0; i < n; ++i) {
            LinExpr cover = LinExpr::term(grp.vars[i]);
            if (i > 0) cover.add(seg[i - 1], -1.0);
            if (i + 1 < n) cover.add(seg[i], -1.0);
            m.add_le(cover, 0.0);
        }
        ++g;
    }
    m.sos2.clear();
}

}  // namespace cgpo
