#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace cgpo {

/// LP in computational standard form: min c^T x s.t. A x = b, l <= x <= u,
/// all bounds finite. Columns are sparse (row, value) lists.
struct LpProblem {
    int m = 0, n = 0;
    std::vector<std::vector<std::pair<int, double>>> cols;
    std::vector<double> lb, ub, c, b;
};

struct LpSolution {
    enum class Status { Optimal, Infeasible, IterLimit, Numerical };
    Status status = Status::Numerical;
    double obj = 0.0;
    std::vector<double> x;
};

/// Bounded-variable primal revised simplex with a dense basis inverse and an
/// artificial-variable phase 1. Pricing is largest-reduced-cost with a
/// Bland's-rule fallback after a long degenerate streak, so the pivot
/// sequence — and hence the returned basic solution — is deterministic.
class Simplex {
  public:
    explicit Simplex(const LpProblem& p) : p_(p) {}

    LpSolution solve(long long iter_limit = 2000000) {
        const int m = p_.m, n = p_.n;
        ntot_ = n + m;  // structurals + artificials
        lb_ = p_.lb; ub_ = p_.ub;
        lb_.resize(ntot_, 0.0);
        ub_.resize(ntot_, 0.0);
        status_.assign(ntot_, AtLo);
        x_.assign(ntot_, 0.0);
        basis_.assign(m, -1);
        binv_.assign(static_cast<size_t>(m) * m, 0.0);

        // crash: structurals at the bound of smaller magnitude
        for (int j = 0; j < n; ++j) {
            status_[j] = std::abs(ub_[j]) < std::abs(lb_[j]) ? AtUp : AtLo;
            x_[j] = status_[j] == AtUp ? ub_[j] : lb_[j];
        }
        std::vector<double> r = p_.b;
        for (int j = 0; j < n; ++j)
            if (x_[j] != 0.0)
                for (const auto& [i, v] : p_.cols[j]) r[i] -= v * x_[j];
        // prefer a singleton column (a slack) as the basic variable of its
        // row when its implied value fits the bounds; rows left uncovered get
        // an artificial carrying the residual
        std::vector<int> slack_of(m, -1);
        for (int j = 0; j < n; ++j)
            if (p_.cols[j].size() == 1) {
                int i = p_.cols[j][0].first;
                if (slack_of[i] < 0) slack_of[i] = j;
            }
        art_sign_.assign(m, 1.0);
        bool any_art = false;
        for (int i = 0; i < m; ++i) {
            int sj = slack_of[i];
            if (sj >= 0) {
                double a = p_.cols[sj][0].second;
                double want = x_[sj] + r[i] / a;
                if (want >= lb_[sj] - 1e-11 && want <= ub_[sj] + 1e-11) {
                    r[i] -= a * (want - x_[sj]);
                    x_[sj] = std::clamp(want, lb_[sj], ub_[sj]);
                    basis_[i] = sj;
                    status_[sj] = Basic;
                    binv_[static_cast<size_t>(i) * m + i] = 1.0 / a;
                    continue;
                }
            }
            int aj = n + i;
            art_sign_[i] = r[i] < 0.0 ? -1.0 : 1.0;
            x_[aj] = std::abs(r[i]);
            ub_[aj] = x_[aj];
            basis_[i] = aj;
            status_[aj] = Basic;
            binv_[static_cast<size_t>(i) * m + i] = art_sign_[i];
            if (x_[aj] > 0.0) any_art = true;
        }

        // phase 1: drive the artificials to zero
        std::vector<double> cost(ntot_, 0.0);
        if (any_art) {
            for (int i = 0; i < m; ++i)
                if (basis_[i] >= n) cost[basis_[i]] = 1.0;
            LpSolution::Status st1 = iterate(cost, iter_limit);
            if (st1 != LpSolution::Status::Optimal) return finish(st1);
            double infeas = 0.0;
            for (int i = 0; i < m; ++i) infeas += x_[n + i];
            if (infeas > 1e-7) return finish(LpSolution::Status::Infeasible);
        }
        for (int i = 0; i < m; ++i) ub_[n + i] = 0.0;  // artificials pinned

        // phase 2: the real objective
        std::fill(cost.begin(), cost.end(), 0.0);
        for (int j = 0; j < n; ++j) cost[j] = p_.c[j];
        return finish(iterate(cost, iter_limit));
    }

  private:
    enum VStatus : unsigned char { AtLo, AtUp, Basic };
    static constexpr double kDualTol = 1e-7;
    static constexpr double kPivTol = 1e-9;

    const LpProblem& p_;
    int ntot_ = 0;
    std::vector<double> lb_, ub_, x_, binv_, art_sign_;
    std::vector<int> basis_;
    std::vector<VStatus> status_;

    void column(int j, std::vector<std::pair<int, double>>& out) const {
        out.clear();
        if (j < p_.n) {
            out = p_.cols[j];
        } else {
            out.emplace_back(j - p_.n, art_sign_[j - p_.n]);
        }
    }

    LpSolution::Status iterate(const std::vector<double>& cost, long long iter_limit) {
        const int m = p_.m;
        std::vector<double> y(m), w(m);
        std::vector<std::pair<int, double>> col;
        long long degen_streak = 0;
        bool bland = false;
        double last_obj = std::numeric_limits<double>::infinity();
        for (long long iter = 0; iter < iter_limit; ++iter) {
            // y = c_B^T B^{-1}
            for (int i = 0; i < m; ++i) y[i] = 0.0;
            for (int i = 0; i < m; ++i) {
                double cb = cost[basis_[i]];
                if (cb == 0.0) continue;
                const double* row = &binv_[static_cast<size_t>(i) * m];
                for (int k = 0; k < m; ++k) y[k] += cb * row[k];
            }
            // pricing
            int enter = -1;
            double best = kDualTol;
            for (int j = 0; j < ntot_; ++j) {
                if (status_[j] == Basic || lb_[j] == ub_[j]) continue;
                column(j, col);
                double d = cost[j];
                for (const auto& [i, v] : col) d -= y[i] * v;
                double score = status_[j] == AtLo ? -d : d;
                if (score > best) {
                    best = score;
                    enter = j;
                    if (bland) break;
                }
                if (bland && enter >= 0) break;
            }
            if (enter < 0) return LpSolution::Status::Optimal;

            // w = B^{-1} A_enter
            column(enter, col);
            for (int i = 0; i < m; ++i) w[i] = 0.0;
            for (const auto& [i, v] : col)
                for (int k = 0; k < m; ++k) w[k] += binv_[static_cast<size_t>(k) * m + i] * v;

            // ratio test: entering moves by sigma * t
            double sigma = status_[enter] == AtLo ? 1.0 : -1.0;
            double t = ub_[enter] - lb_[enter];  // bound flip
            int leave = -1;
            double leave_to = 0.0;
            for (int i = 0; i < m; ++i) {
                double delta = -sigma * w[i];  // change rate of x_B[i]
                if (std::abs(delta) < kPivTol) continue;
                int bj = basis_[i];
                double ti, to;
                if (delta > 0) { ti = (ub_[bj] - x_[bj]) / delta; to = ub_[bj]; }
                else           { ti = (lb_[bj] - x_[bj]) / delta; to = lb_[bj]; }
                if (ti < -1e-9) ti = 0.0;
                if (ti < t - 1e-12 || (ti < t + 1e-12 && leave >= 0 && bj < basis_[leave])) {
                    t = std::max(0.0, ti);
                    leave = i;
                    leave_to = to;
                }
            }
            if (t >= 1e30) return LpSolution::Status::Numerical;  // can't happen: finite bounds

            // apply step
            if (t > 0.0) {
                x_[enter] += sigma * t;
                for (int i = 0; i < m; ++i) x_[basis_[i]] -= sigma * t * w[i];
                degen_streak = 0;
                bland = false;
            } else {
                if (++degen_streak > 2LL * m + 200) bland = true;
            }
            (void)last_obj;

            if (leave < 0) {
                // bound flip, no basis change
                status_[enter] = status_[enter] == AtLo ? AtUp : AtLo;
                x_[enter] = status_[enter] == AtUp ? ub_[enter] : lb_[enter];
                continue;
            }
            if (std::abs(w[leave]) < kPivTol) return LpSolution::Status::Numerical;
            int out = basis_[leave];
            status_[out] = leave_to == ub_[out] ? AtUp : AtLo;
            x_[out] = leave_to;
            status_[enter] = Basic;
            basis_[leave] = enter;
            // eta update of B^{-1}
            double piv = w[leave];
            double* rr = &binv_[static_cast<size_t>(leave) * m];
            for (int k = 0; k < m; ++k) rr[k] /= piv;
            for (int i = 0; i < m; ++i) {
                if (i == leave || std::abs(w[i]) < 1e-300) continue;
                double f = w[i];
                double* ri = &binv_[static_cast<size_t>(i) * m];
                for (int k = 0; k < m; ++k) ri[k] -= f * rr[k];
            }
        }
        return LpSolution::Status::IterLimit;
    }

    LpSolution finish(LpSolution::Status st) {
        LpSolution s;
        s.status = st;
        s.x.assign(x_.begin(), x_.begin() + p_.n);
        s.obj = 0.0;
        for (int j = 0; j < p_.n; ++j) s.obj += p_.c[j] * s.x[j];
        return s;
    }
};

inline LpSolution solve_lp(const LpProblem& p, long long iter_limit = 2000000) {
    return Simplex(p).solve(iter_limit);
}

}  // namespace cgpo
