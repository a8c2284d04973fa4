#pragma once

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <queue>
#include <string>
#include <vector>

#include "cgpo/lp_format.hpp"
#include "cgpo/mip.hpp"
#include "cgpo/simplex.hpp"

namespace cgpo {

struct SolverError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class SolveStatus { Optimal, GapReached, Infeasible, Unbounded, TimeLimit };

struct Solution {
    SolveStatus status = SolveStatus::Infeasible;
    std::vector<double> assignment;  // var id -> value
    double objective = 0.0;
    double bound = 0.0;
    double gap = 0.0;
    long long nodes = 0;

    double value(int var) const { return assignment.at(var); }
};

struct SolveConfig {
    double gap = 0.05;
    long long node_limit = 2000000;
    double time_limit_s = 1e9;
    double int_tol = 1e-6;
    double feas_tol = 1e-6;
    std::string external_cmd;  // "{in}"/"{out}" placeholders; empty = bundled
    // optional primal heuristic: rewrite the relaxation values in place into a
    // full candidate assignment (or return false when none exists); candidates
    // are feasibility-checked before becoming incumbents
    std::function<bool(std::vector<double>&)> complete;
    // variables to branch before all others, in the given order; the rest
    // follow in creation order
    std::vector<int> branch_priority;
};

namespace detail {

/// Relative gap with the near-zero guard from the convergence criterion.
inline double rel_gap(double obj, double bound) {
    return std::abs(obj - bound) / std::max(1.0, std::abs(obj));
}

/// Check every constraint, bound, integrality and SOS2 condition.
inline bool check_feasible(const MipModel& m, const std::vector<double>& x, double tol,
                           std::string* why = nullptr) {
    auto fail = [&](const std::string& msg) {
        if (why) *why = msg;
        return false;
    };
    if (x.size() != m.vars.size()) return fail("assignment size mismatch");
    for (size_t v = 0; v < m.vars.size(); ++v) {
        const auto& d = m.vars[v];
        if (x[v] < d.bounds.lo - tol || x[v] > d.bounds.hi + tol)
            return fail("bound violated on " + d.name);
        if (d.type != VarType::Cont && std::abs(x[v] - std::round(x[v])) > tol)
            return fail("integrality violated on " + d.name);
    }
    auto row_val = [&](const LinCon& c) {
        double s = 0.0;
        for (const auto& [v, cf] : c.coef) s += cf * x[v];
        return s;
    };
    for (const auto& c : m.cons) {
        double s = row_val(c);
        double scale = std::max(1.0, std::abs(c.rhs));
        if (c.sense == Sense::Le && s > c.rhs + tol * scale) return fail("row " + c.name);
        if (c.sense == Sense::Ge && s < c.rhs - tol * scale) return fail("row " + c.name);
        if (c.sense == Sense::Eq && std::abs(s - c.rhs) > tol * scale)
            return fail("row " + c.name);
    }
    for (const auto& ind : m.indicators) {
        double y = x[ind.bin];
        bool active = (y > 0.5) == ind.active_value;
        if (!active) continue;
        double s = row_val(ind.con);
        double scale = std::max(1.0, std::abs(ind.con.rhs));
        if (ind.con.sense == Sense::Le && s > ind.con.rhs + tol * scale)
            return fail("indicator row");
        if (ind.con.sense == Sense::Ge && s < ind.con.rhs - tol * scale)
            return fail("indicator row");
        if (ind.con.sense == Sense::Eq && std::abs(s - ind.con.rhs) > tol * scale)
            return fail("indicator row");
    }
    for (const auto& g : m.sos2) {
        int first = -1, last = -1, count = 0;
        for (size_t i = 0; i < g.vars.size(); ++i)
            if (std::abs(x[g.vars[i]]) > tol) {
                if (first < 0) first = static_cast<int>(i);
                last = static_cast<int>(i);
                ++count;
            }
        if (count > 2 || (count == 2 && last != first + 1)) return fail("SOS2 violated");
    }
    for (const auto& p : m.products) {
        double want = x[p.x] * x[p.y];
        if (std::abs(x[p.z] - want) > tol * std::max(1.0, std::abs(want)))
            return fail("product " + m.vars[p.z].name + " violated");
    }
    if (why) why->clear();
    return true;
}

/// The solver works on the indicator-lowered model; SOS2 stays native and is
/// enforced by branching.
struct BnbProblem {
    MipModel model;          // lowered (no indicators)
    LpProblem lp;            // equality standard form with slacks
    int nstruct = 0;         // structural variable count
    double obj_sign = 1.0;   // +1 min, -1 max (internal sense is min)

    explicit BnbProblem(const MipModel& src) : model(src) {
        lower_indicators(model);
        nstruct = static_cast<int>(model.vars.size());
        lp.n = nstruct;
        lp.m = static_cast<int>(model.cons.size());
        lp.cols.assign(lp.n, {});
        lp.lb.resize(lp.n);
        lp.ub.resize(lp.n);
        lp.c.assign(lp.n, 0.0);
        for (int v = 0; v < lp.n; ++v) {
            lp.lb[v] = model.vars[v].bounds.lo;
            lp.ub[v] = model.vars[v].bounds.hi;
        }
        obj_sign = model.obj_sense == ObjSense::Min ? 1.0 : -1.0;
        for (const auto& [v, c] : model.objective.coef) lp.c[v] = obj_sign * c;
        lp.b.resize(lp.m);
        for (int i = 0; i < lp.m; ++i) {
            const LinCon& c = model.cons[i];
            for (const auto& [v, cf] : c.coef) lp.cols[v].emplace_back(i, cf);
            lp.b[i] = c.rhs;
            // slack with bounds from the row activity: keeps the LP all-finite
            Interval act = model.activity(c.coef);
            double slo = 0.0, shi = 0.0;
            if (c.sense == Sense::Le) shi = std::max(0.0, c.rhs - act.lo);
            if (c.sense == Sense::Ge) slo = std::min(0.0, c.rhs - act.hi);
            int s = static_cast<int>(lp.cols.size());
            lp.cols.push_back({{i, 1.0}});
            lp.lb.push_back(slo);
            lp.ub.push_back(shi);
            lp.c.push_back(0.0);
            (void)s;
        }
        lp.n = static_cast<int>(lp.cols.size());
    }
};

struct BnbNode {
    std::vector<std::pair<int, Interval>> overrides;  // var -> tightened bounds
    double bound = -std::numeric_limits<double>::infinity();
    int depth = 0;
    long long seq = 0;  // push order; ties broken newest-first (a dive)
};

/// Best-bound first; among equal bounds the oldest node, giving breadth on a
/// flat bound so the primal completion sees diverse relaxation points.
struct NodeOrder {
    bool operator()(const BnbNode& a, const BnbNode& b) const {
        if (a.bound != b.bound) return a.bound > b.bound;
        return a.seq > b.seq;
    }
};

/// Append the four McCormick envelope rows of each product, built from the
/// node's current variable bounds. A relaxation of z = x·y that becomes
/// exact as spatial branching shrinks the factor intervals.
inline void append_mccormick(LpProblem& lp, const std::vector<Product>& products) {
    auto over = [&](double c, int v) {  // interval of c·v over the node box
        double a = c * lp.lb[v], b = c * lp.ub[v];
        return std::pair<double, double>(std::min(a, b), std::max(a, b));
    };
    auto add_row = [&](int z, int y, double cy, int x, double cx, double rhs, bool le) {
        int r = lp.m++;
        lp.cols[z].emplace_back(r, 1.0);
        if (cy != 0.0) lp.cols[y].emplace_back(r, cy);
        if (cx != 0.0) lp.cols[x].emplace_back(r, cx);
        lp.b.push_back(rhs);
        auto [zl, zh] = over(1.0, z);
        auto [yl, yh] = over(cy, y);
        auto [xl, xh] = over(cx, x);
        double alo = zl + yl + xl, ahi = zh + yh + xh;
        lp.cols.push_back({{r, 1.0}});
        lp.lb.push_back(le ? 0.0 : std::min(0.0, rhs - ahi));
        lp.ub.push_back(le ? std::max(0.0, rhs - alo) : 0.0);
        lp.c.push_back(0.0);
        ++lp.n;
    };
    for (const Product& p : products) {
        double lx = lp.lb[p.x], ux = lp.ub[p.x];
        double ly = lp.lb[p.y], uy = lp.ub[p.y];
        add_row(p.z, p.y, -lx, p.x, -ly, -lx * ly, false);  // z >= lx·y + ly·x − lx·ly
        add_row(p.z, p.y, -ux, p.x, -uy, -ux * uy, false);  // z >= ux·y + uy·x − ux·uy
        add_row(p.z, p.y, -lx, p.x, -uy, -lx * uy, true);   // z <= lx·y + uy·x − lx·uy
        add_row(p.z, p.y, -ux, p.x, -ly, -ux * ly, true);   // z <= ux·y + ly·x − ux·ly
    }
}

}  // namespace detail

/// Bundled exact solve: branch-and-bound over the simplex relaxation.
/// Best-bound node selection with newest-first tie-breaking (a dive while the
/// bound is flat); branching on the first fractional integer in creation
/// order or on violated SOS2 groups. Deterministic by construction.
inline Solution solve_milp(const MipModel& input, const SolveConfig& cfg = {}) {
    using detail::BnbNode;
    auto t0 = std::chrono::steady_clock::now();
    detail::BnbProblem P(input);
    const MipModel& m = P.model;
    const double INF = std::numeric_limits<double>::infinity();

    Solution result;
    result.bound = -INF;

    std::priority_queue<BnbNode, std::vector<BnbNode>, detail::NodeOrder> open;
    open.push(BnbNode{});
    long long seq = 0;
    bool have_inc = false;
    double inc_obj = INF;  // internal min sense
    std::vector<double> inc_x;
    long long nodes = 0;
    bool hit_limit = false;
    double open_bound = -INF;  // bound over remaining nodes at exit

    std::vector<long long> rank(P.nstruct);
    for (int v = 0; v < P.nstruct; ++v) rank[v] = P.nstruct + v;
    for (size_t i = 0; i < cfg.branch_priority.size(); ++i) {
        int v = cfg.branch_priority[i];
        if (v >= 0 && v < P.nstruct) rank[v] = static_cast<long long>(i);
    }

    LpProblem lp = P.lp;  // mutated bounds per node
    while (!open.empty()) {
        if (nodes >= cfg.node_limit ||
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() >
                cfg.time_limit_s) {
            hit_limit = true;
            break;
        }
        open_bound = open.top().bound;  // heap min = global lower bound
        if (have_inc && (open_bound >= inc_obj - 1e-12 ||
                         detail::rel_gap(inc_obj, open_bound) <= cfg.gap))
            break;
        BnbNode node = open.top();
        open.pop();
        if (have_inc && node.bound >= inc_obj - 1e-12) continue;
        ++nodes;

        // apply bound overrides
        for (int v = 0; v < P.nstruct; ++v) {
            lp.lb[v] = P.lp.lb[v];
            lp.ub[v] = P.lp.ub[v];
        }
        bool pruned = false;
        for (const auto& [v, b] : node.overrides) {
            lp.lb[v] = std::max(lp.lb[v], b.lo);
            lp.ub[v] = std::min(lp.ub[v], b.hi);
            if (lp.lb[v] > lp.ub[v]) pruned = true;
        }
        if (pruned) continue;

        LpSolution rel;
        if (m.products.empty()) {
            rel = solve_lp(lp);
        } else {
            LpProblem lpx = lp;  // node-local copy carrying the envelope rows
            detail::append_mccormick(lpx, m.products);
            rel = solve_lp(lpx);
        }
        if (rel.status == LpSolution::Status::Infeasible) continue;
        if (rel.status != LpSolution::Status::Optimal)
            throw SolverError("LP relaxation failed numerically");
        if (have_inc && rel.obj >= inc_obj - 1e-12) continue;

        // primal completion: derive a full feasible assignment from the
        // relaxation's free inputs, giving an incumbent long before the
        // branching reaches integrality on its own
        if (cfg.complete) {
            std::vector<double> cand(rel.x.begin(), rel.x.begin() + P.nstruct);
            // validate against the original model: its native indicators are
            // strict where the lowered big-M rows are tolerance-scaled by M
            if (cfg.complete(cand) && detail::check_feasible(input, cand, cfg.feas_tol)) {
                double cobj = 0.0;
                for (int v = 0; v < P.nstruct; ++v) cobj += P.lp.c[v] * cand[v];
                if (cobj < inc_obj - 1e-12) {
                    inc_obj = cobj;
                    inc_x = std::move(cand);
                    have_inc = true;
                }
            }
        }

        // branch on the first fractional integer in priority order (creation
        // order by default): rollout models are causal, so this pins down
        // early-step behavior before later steps depend on it
        int frac_var = -1;
        long long frac_rank = std::numeric_limits<long long>::max();
        for (int v = 0; v < P.nstruct; ++v) {
            if (m.vars[v].type == VarType::Cont) continue;
            double f = rel.x[v] - std::floor(rel.x[v]);
            if (std::min(f, 1.0 - f) <= cfg.int_tol) continue;
            if (rank[v] < frac_rank) {
                frac_rank = rank[v];
                frac_var = v;
            }
        }
        // SOS2 violation
        int bad_group = -1, split_at = -1;
        if (frac_var < 0) {
            for (size_t g = 0; g < m.sos2.size() && bad_group < 0; ++g) {
                const auto& vars = m.sos2[g].vars;
                int first = -1, last = -1, count = 0;
                double wsum = 0.0, wpos = 0.0;
                for (size_t i = 0; i < vars.size(); ++i) {
                    double xv = rel.x[vars[i]];
                    if (std::abs(xv) > cfg.int_tol) {
                        if (first < 0) first = static_cast<int>(i);
                        last = static_cast<int>(i);
                        ++count;
                        wsum += std::abs(xv);
                        wpos += std::abs(xv) * static_cast<double>(i);
                    }
                }
                if (count > 2 || (count == 2 && last != first + 1)) {
                    bad_group = static_cast<int>(g);
                    split_at = static_cast<int>(std::floor(wpos / wsum));
                    // strict interior split so both children cut off the
                    // current point (violation implies last >= first + 2)
                    split_at = std::max(first + 1, std::min(last - 1, split_at));
                }
            }
        }

        // violated products: spatial branching on the wider factor
        int sp_var = -1;
        double sp_point = 0.0;
        if (frac_var < 0 && bad_group < 0) {
            double worst = cfg.feas_tol;
            for (const auto& p : m.products) {
                double want = rel.x[p.x] * rel.x[p.y];
                double v = std::abs(rel.x[p.z] - want) / std::max(1.0, std::abs(want));
                if (v <= worst) continue;
                double wx = lp.ub[p.x] - lp.lb[p.x], wy = lp.ub[p.y] - lp.lb[p.y];
                int cand = wx >= wy ? p.x : p.y;
                if (std::max(wx, wy) <= 1e-9) continue;  // factors pinned: noise only
                worst = v;
                sp_var = cand;
                double lo = lp.lb[cand], hi = lp.ub[cand], w = hi - lo;
                // split at the relaxation point, kept in the middle to
                // guarantee both children shrink the interval
                sp_point = std::clamp(rel.x[cand], lo + 0.25 * w, hi - 0.25 * w);
            }
        }

        if (frac_var < 0 && bad_group < 0 && sp_var < 0) {
            // integral and SOS2-feasible: new incumbent, unless it only looks
            // feasible through the M-scaled tolerance of a lowered row
            if (rel.obj < inc_obj) {
                std::vector<double> cand(rel.x.begin(), rel.x.begin() + P.nstruct);
                for (int v = 0; v < P.nstruct; ++v)
                    if (m.vars[v].type != VarType::Cont) cand[v] = std::round(cand[v]);
                if (detail::check_feasible(input, cand, cfg.feas_tol)) {
                    inc_obj = rel.obj;
                    inc_x = std::move(cand);
                    have_inc = true;
                }
            }
            continue;
        }

        BnbNode left = node, right = node;
        left.depth = right.depth = node.depth + 1;
        left.bound = right.bound = rel.obj;
        bool prefer_left = true;
        if (frac_var >= 0) {
            double f = std::floor(rel.x[frac_var]);
            left.overrides.emplace_back(frac_var, Interval(-1e300, f));
            right.overrides.emplace_back(frac_var, Interval(f + 1.0, 1e300));
            prefer_left = rel.x[frac_var] - f <= 0.5;
        } else if (sp_var >= 0) {
            left.overrides.emplace_back(sp_var, Interval(-1e300, sp_point));
            right.overrides.emplace_back(sp_var, Interval(sp_point, 1e300));
            prefer_left = rel.x[sp_var] <= sp_point;
        } else {
            const auto& vars = m.sos2[bad_group].vars;
            // left: zero everything right of the split; right: zero the left part
            double wl = 0.0, wr = 0.0;
            for (size_t i = static_cast<size_t>(split_at) + 1; i < vars.size(); ++i) {
                left.overrides.emplace_back(vars[i], Interval(0.0, 0.0));
                wr += std::abs(rel.x[vars[i]]);
            }
            for (size_t i = 0; i < static_cast<size_t>(split_at); ++i) {
                right.overrides.emplace_back(vars[i], Interval(0.0, 0.0));
                wl += std::abs(rel.x[vars[i]]);
            }
            prefer_left = wl >= wr;
        }
        // both children share the parent's bound, so the tie-break dives into
        // the child nearest the relaxation (the larger sequence number) first
        if (prefer_left) {
            right.seq = ++seq;
            left.seq = ++seq;
        } else {
            left.seq = ++seq;
            right.seq = ++seq;
        }
        open.push(std::move(left));
        open.push(std::move(right));
    }

    // final bound over remaining open nodes
    double final_bound = open.empty() && !hit_limit ? inc_obj : INF;
    if (!open.empty()) {
        final_bound = open.top().bound;
        if (final_bound == -INF || final_bound == INF)
            final_bound = have_inc ? inc_obj : -INF;  // root never solved
    }
    if (hit_limit && open.empty()) final_bound = have_inc ? inc_obj : -INF;

    if (!have_inc) {
        result.status = hit_limit ? SolveStatus::TimeLimit : SolveStatus::Infeasible;
        result.nodes = nodes;
        return result;
    }
    result.objective = P.obj_sign * inc_obj;
    result.bound = P.obj_sign * std::min(final_bound, inc_obj);
    result.gap = detail::rel_gap(inc_obj, std::min(final_bound, inc_obj));
    result.assignment = inc_x;
    result.nodes = nodes;
    if (hit_limit) result.status = SolveStatus::TimeLimit;
    else if (result.gap <= 1e-9) result.status = SolveStatus::Optimal;
    else result.status = SolveStatus::GapReached;

    std::string why;
    if (!detail::check_feasible(input, result.assignment, cfg.feas_tol, &why))
        throw SolverError("solver produced an infeasible assignment: " + why);
    return result;
}

/// Invoke a configured external solver through LP-file exchange and validate
/// the returned assignment locally before accepting it.
inline Solution solve_external(const MipModel& input, const SolveConfig& cfg,
                               const std::string& workdir = "/tmp") {
    if (cfg.external_cmd.empty()) throw SolverError("external solver command not configured");
    static int run_id = 0;
    std::string base = workdir + "/cgpo_ext_" + std::to_string(run_id++);
    std::string in_path = base + ".lp", out_path = base + ".sol";
    {
        std::ofstream f(in_path);
        if (!f) throw SolverError("cannot write " + in_path);
        f << export_lp(input);
    }
    std::string cmd = cfg.external_cmd;
    auto replace_all = [](std::string& s, const std::string& from, const std::string& to) {
        for (size_t p = s.find(from); p != std::string::npos; p = s.find(from, p + to.size()))
            s.replace(p, from.size(), to);
    };
    replace_all(cmd, "{in}", in_path);
    replace_all(cmd, "{out}", out_path);
    int rc = std::system(cmd.c_str());
    if (rc != 0) throw SolverError("external solver failed with exit code " +
                                   std::to_string(rc));
    std::ifstream f(out_path);
    if (!f) throw SolverError("external solver produced no solution file");

    // solution format: one "var value" pair per line; x<id> names as exported
    std::vector<double> x(input.vars.size(), 0.0);
    std::vector<bool> seen(input.vars.size(), false);
    std::string name;
    double value;
    while (f >> name >> value) {
        if (name.empty() || name[0] != 'x') continue;
        int id;
        try { id = std::stoi(name.substr(1)); } catch (...) { continue; }
        if (id < 0 || id >= static_cast<int>(input.vars.size())) continue;  // aux vars
        x[id] = value;
        seen[id] = true;
    }
    for (size_t v = 0; v < input.vars.size(); ++v)
        if (!seen[v]) x[v] = input.vars[v].bounds.lo;  // unmentioned: at lower bound

    std::string why;
    if (!detail::check_feasible(input, x, cfg.feas_tol, &why))
        throw SolverError("external solution failed validation: " + why);
    Solution s;
    s.status = SolveStatus::GapReached;
    s.assignment = std::move(x);
    s.objective = input.eval(input.objective, s.assignment);
    s.bound = s.objective;
    s.gap = 0.0;
    return s;
}

/// Dispatch on the configured backend.
inline Solution solve(const MipModel& model, const SolveConfig& cfg = {}) {
    return cfg.external_cmd.empty() ? solve_milp(model, cfg) : solve_external(model, cfg);
}

}  // namespace cgpo
