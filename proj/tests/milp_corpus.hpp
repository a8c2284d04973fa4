#pragma once

// Random small all-integer MILPs with a brute-force reference solver, shared
// by the solver unit tests and the acceptance checks.

#include <optional>
#include <vector>

#include "cgpo/mip.hpp"
#include "cgpo/stats.hpp"

namespace corpus {

using namespace cgpo;

struct Reference {
    bool feasible = false;
    double objective = 0.0;  // in the model's own sense
};

/// Exhaustive enumeration over the integer grid; indicators are checked by
/// their definition (binary at its active value forces the row).
inline Reference enumerate(const MipModel& m) {
    std::vector<long long> lo(m.vars.size()), hi(m.vars.size());
    for (size_t v = 0; v < m.vars.size(); ++v) {
        lo[v] = static_cast<long long>(m.vars[v].bounds.lo);
        hi[v] = static_cast<long long>(m.vars[v].bounds.hi);
    }
    Reference ref;
    std::vector<long long> x(lo);
    while (true) {
        auto row_value = [&](const std::map<int, double>& coef) {
            double s = 0.0;
            for (const auto& [v, c] : coef) s += c * static_cast<double>(x[v]);
            return s;
        };
        auto row_ok = [&](const LinCon& c) {
            double s = row_value(c.coef);
            switch (c.sense) {
                case Sense::Le: return s <= c.rhs + 1e-9;
                case Sense::Ge: return s >= c.rhs - 1e-9;
                case Sense::Eq: return std::abs(s - c.rhs) <= 1e-9;
            }
            return false;
        };
        bool ok = true;
        for (const auto& c : m.cons)
            if (!row_ok(c)) { ok = false; break; }
        if (ok)
            for (const auto& ind : m.indicators) {
                bool active = (x[ind.bin] != 0) == ind.active_value;
                if (active && !row_ok(ind.con)) { ok = false; break; }
            }
        if (ok) {
            double obj = m.objective.constant;
            for (const auto& [v, c] : m.objective.coef) obj += c * static_cast<double>(x[v]);
            if (!ref.feasible ||
                (m.obj_sense == ObjSense::Min ? obj < ref.objective : obj > ref.objective)) {
                ref.feasible = true;
                ref.objective = obj;
            }
        }
        size_t k = 0;
        while (k < x.size() && ++x[k] > hi[k]) x[k++] = lo[k];
        if (k == x.size()) break;
    }
    return ref;
}

/// Instance i of the corpus: 3-8 integer variables with small ranges, a few
/// random rows, sometimes an indicator pair, random objective and sense.
inline MipModel instance(int i) {
    Rng rng = Rng::derive(0xC0FFEE, static_cast<uint64_t>(i));
    MipModel m;
    int n = 3 + static_cast<int>(rng.uniform_int(0, 5));
    for (int v = 0; v < n; ++v) {
        long long hi = rng.uniform_int(1, 3);
        m.add_var("x" + std::to_string(v), VarType::Int,
                  Interval(0.0, static_cast<double>(hi)));
    }
    int rows = 2 + static_cast<int>(rng.uniform_int(0, 5));
    for (int r = 0; r < rows; ++r) {
        LinExpr e;
        for (int v = 0; v < n; ++v) {
            long long c = rng.uniform_int(-3, 3);
            if (c != 0) e.add(v, static_cast<double>(c));
        }
        double rhs = static_cast<double>(rng.uniform_int(-4, 8));
        switch (rng.uniform_int(0, 2)) {
            case 0: m.add_le(e, rhs); break;
            case 1: m.add_ge(e, -rhs); break;
            default: m.add_eq(e, static_cast<double>(rng.uniform_int(0, 4))); break;
        }
    }
    if (i % 2 == 0) {
        int b = m.add_var("ind", VarType::Bin, Interval(0, 1));
        LinExpr e;
        for (int v = 0; v < std::min(n, 3); ++v)
            e.add(v, static_cast<double>(rng.uniform_int(-2, 2)));
        Indicator ind;
        ind.bin = b;
        ind.active_value = rng.uniform_int(0, 1) != 0;
        ind.con.coef = e.coef;
        ind.con.sense = Sense::Le;
        ind.con.rhs = static_cast<double>(rng.uniform_int(0, 4));
        m.indicators.push_back(ind);
        // couple the binary to the rest so it is not always free
        LinExpr link = LinExpr::term(b);
        link.add(0, 1.0);
        m.add_le(link, static_cast<double>(rng.uniform_int(1, 4)));
    }
    LinExpr obj;
    for (int v = 0; v < static_cast<int>(m.vars.size()); ++v)
        obj.add(v, static_cast<double>(rng.uniform_int(-5, 5)));
    m.set_objective(rng.uniform_int(0, 1) ? ObjSense::Max : ObjSense::Min, obj);
    return m;
}

}  // namespace corpus
