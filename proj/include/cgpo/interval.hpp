#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <stdexcept>

namespace cgpo {

/// Closed interval over the extended reals. Boolean-valued quantities are
/// carried as sub-intervals of [0, 1].
struct Interval {
    double lo;
    double hi;

    Interval() : lo(0.0), hi(0.0) {}
    Interval(double point) : lo(point), hi(point) {}
    Interval(double l, double h) : lo(l), hi(h) {
        if (!(l <= h)) throw std::invalid_argument("Interval: lo > hi");
    }

    static Interval whole() {
        const double inf = std::numeric_limits<double>::infinity();
        return Interval(-inf, inf);
    }
    static Interval boolean() { return Interval(0.0, 1.0); }

    bool contains(double x) const { return lo <= x && x <= hi; }
    bool contains(const Interval& o) const { return lo <= o.lo && o.hi <= hi; }
    bool is_point() const { return lo == hi; }
    bool is_finite() const { return std::isfinite(lo) && std::isfinite(hi); }
    double width() const { return hi - lo; }
    double mid() const {
        if (is_finite()) return 0.5 * (lo + hi);
        if (std::isfinite(lo)) return lo;
        if (std::isfinite(hi)) return hi;
        return 0.0;
    }

    bool operator==(const Interval& o) const { return lo == o.lo && hi == o.hi; }
};

inline std::ostream& operator<<(std::ostream& os, const Interval& iv) {
    return os << "[" << iv.lo << ", " << iv.hi << "]";
}

namespace detail {
// Widen by a few ulps; used after operations computed through libm, whose
// faithful (not correct) rounding breaks the monotone-rounding containment
// argument that makes the exact arithmetic ops safe.
inline double down(double x) {
    double y = std::nextafter(x, -std::numeric_limits<double>::infinity());
    return std::nextafter(y, -std::numeric_limits<double>::infinity());
}
inline double up(double x) {
    double y = std::nextafter(x, std::numeric_limits<double>::infinity());
    return std::nextafter(y, std::numeric_limits<double>::infinity());
}
}  // namespace detail

inline Interval operator+(const Interval& a, const Interval& b) {
    return Interval(a.lo + b.lo, a.hi + b.hi);
}
inline Interval operator-(const Interval& a, const Interval& b) {
    return Interval(a.lo - b.hi, a.hi - b.lo);
}
inline Interval operator-(const Interval& a) { return Interval(-a.hi, -a.lo); }

inline Interval operator*(const Interval& a, const Interval& b) {
    auto prod = [](double x, double y) {
        // 0 * inf arises only from unbounded inputs; 0 is the sound choice
        // for enclosure purposes since the zero factor annihilates.
        if (x == 0.0 || y == 0.0) return 0.0;
        return x * y;
    };
    double c1 = prod(a.lo, b.lo), c2 = prod(a.lo, b.hi);
    double c3 = prod(a.hi, b.lo), c4 = prod(a.hi, b.hi);
    return Interval(std::min(std::min(c1, c2), std::min(c3, c4)),
                    std::max(std::max(c1, c2), std::max(c3, c4)));
}

inline Interval operator/(const Interval& a, const Interval& b) {
    if (b.contains(0.0)) throw std::domain_error("interval division by interval containing 0");
    double c1 = a.lo / b.lo, c2 = a.lo / b.hi, c3 = a.hi / b.lo, c4 = a.hi / b.hi;
    return Interval(std::min(std::min(c1, c2), std::min(c3, c4)),
                    std::max(std::max(c1, c2), std::max(c3, c4)));
}

inline Interval imin(const Interval& a, const Interval& b) {
    return Interval(std::min(a.lo, b.lo), std::min(a.hi, b.hi));
}
inline Interval imax(const Interval& a, const Interval& b) {
    return Interval(std::max(a.lo, b.lo), std::max(a.hi, b.hi));
}
inline Interval iabs(const Interval& a) {
    if (a.lo >= 0.0) return a;
    if (a.hi <= 0.0) return -a;
    return Interval(0.0, std::max(-a.lo, a.hi));
}
inline Interval iclip(const Interval& a, double lo, double hi) {
    return Interval(std::clamp(a.lo, lo, hi), std::clamp(a.hi, lo, hi));
}
inline Interval hull(const Interval& a, const Interval& b) {
    return Interval(std::min(a.lo, b.lo), std::max(a.hi, b.hi));
}
inline Interval intersect(const Interval& a, const Interval& b) {
    double l = std::max(a.lo, b.lo), h = std::min(a.hi, b.hi);
    if (l > h) throw std::domain_error("empty interval intersection");
    return Interval(l, h);
}

/// x^n for integer n >= 0, evaluated as the enclosure of repeated products.
inline Interval ipow(const Interval& a, int n) {
    if (n < 0) throw std::invalid_argument("ipow: negative exponent");
    if (n == 0) return Interval(1.0);
    if (n == 1) return a;
    auto chain = [n](double x) {
        double r = x;
        for (int i = 1; i < n; ++i) r *= x;
        return r;
    };
    if (n % 2 == 1 || a.lo >= 0.0) return Interval(chain(a.lo), chain(a.hi));
    if (a.hi <= 0.0) return Interval(chain(a.hi), chain(a.lo));
    // even exponent across zero
    return Interval(0.0, std::max(chain(a.lo), chain(a.hi)));
}

inline Interval iexp(const Interval& a) {
    double lo = a.lo == -std::numeric_limits<double>::infinity() ? 0.0 : detail::down(std::exp(a.lo));
    return Interval(std::max(0.0, lo), detail::up(std::exp(a.hi)));
}

/// cos enclosure by locating extrema at multiples of pi inside the interval.
inline Interval icos(const Interval& a) {
    constexpr double pi = 3.14159265358979323846;
    if (!a.is_finite() || a.width() >= 2.0 * pi) return Interval(-1.0, 1.0);
    double lo = std::min(std::cos(a.lo), std::cos(a.hi));
    double hi = std::max(std::cos(a.lo), std::cos(a.hi));
    // maxima of cos at 2k*pi, minima at (2k+1)*pi
    double k_min = std::ceil(a.lo / (2.0 * pi));
    if (2.0 * pi * k_min <= a.hi) hi = 1.0;
    double k_max = std::ceil((a.lo - pi) / (2.0 * pi));
    if (2.0 * pi * k_max + pi <= a.hi) lo = -1.0;
    return Interval(std::max(-1.0, detail::down(lo)), std::min(1.0, detail::up(hi)));
}

inline Interval isin(const Interval& a) {
    constexpr double half_pi = 1.57079632679489661923;
    if (!a.is_finite()) return Interval(-1.0, 1.0);
    // sin(x) = cos(x - pi/2); widen slightly for the argument shift
    Interval c = icos(Interval(a.lo - half_pi, a.hi - half_pi));
    return Interval(std::max(-1.0, detail::down(c.lo)), std::min(1.0, detail::up(c.hi)));
}

}  // namespace cgpo
