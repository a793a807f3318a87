// Strong-Wolfe line search with bracketing and safeguarded quadratic zoom.

#pragma once

#include "cfcal/optimize/common.hpp"

namespace cfcal::opt::detail {

struct LinePoint {
    double alpha{0.0};
    double f{kInf};
    double slope{0.0};
    Vector x;
    Vector g;
};

struct LineResult {
    bool ok{false};
    LinePoint point;
};

// Searches x + α d for α in (0, alpha_max]. `d` must be a descent direction.
// Returns the best sufficient-decrease point when the curvature condition
// cannot be met within the budget.
inline LineResult wolfe_search(Evaluator& ev, const Vector& x, double f0, const Vector& g0, const Vector& d,
                               double alpha0, double alpha_max, double c1, double c2, int max_evals = 20) {
    const double slope0 = g0.dot(d);
    LineResult res;
    if (!(slope0 < 0.0) || !(alpha_max > 0.0)) return res;

    auto eval = [&](double a) {
        LinePoint p;
        p.alpha = a;
        p.x = x + a * d;
        p.f = ev.fg(p.x, p.g);
        p.slope = std::isfinite(p.f) ? p.g.dot(d) : kInf;
        return p;
    };
    auto armijo = [&](const LinePoint& p) { return p.f <= f0 + c1 * p.alpha * slope0; };
    auto curvature = [&](const LinePoint& p) { return std::abs(p.slope) <= -c2 * slope0; };

    LinePoint best;  // best point satisfying sufficient decrease
    auto note = [&](const LinePoint& p) {
        if (std::isfinite(p.f) && armijo(p) && p.f < best.f) best = p;
    };

    auto zoom = [&](LinePoint lo, LinePoint hi, int budget) -> LineResult {
        for (int it = 0; it < budget; ++it) {
            const double a_lo = lo.alpha, a_hi = hi.alpha;
            const double span = a_hi - a_lo;
            double a = 0.5 * (a_lo + a_hi);
            if (std::isfinite(hi.f)) {
                const double denom = 2.0 * (hi.f - lo.f - lo.slope * span);
                if (denom > 0.0) a = a_lo - lo.slope * span * span / denom;
            } else {
                a = a_lo + 0.1 * span;
            }
            const double lo_guard = std::min(a_lo, a_hi) + 0.1 * std::abs(span);
            const double hi_guard = std::max(a_lo, a_hi) - 0.1 * std::abs(span);
            a = std::clamp(a, lo_guard, hi_guard);
            const LinePoint p = eval(a);
            note(p);
            if (!std::isfinite(p.f) || !armijo(p) || p.f >= lo.f) {
                hi = p;
            } else {
                if (curvature(p)) return {true, p};
                if (p.slope * (hi.alpha - lo.alpha) >= 0.0) hi = lo;
                lo = p;
            }
            if (std::abs(hi.alpha - lo.alpha) <= 1e-16 * std::max(1.0, std::abs(lo.alpha))) break;
        }
        return {false, best};
    };

    LinePoint prev;
    prev.alpha = 0.0;
    prev.f = f0;
    prev.slope = slope0;
    prev.x = x;
    prev.g = g0;
    double a = std::min(alpha0, alpha_max);
    for (int it = 0; it < max_evals; ++it) {
        const LinePoint p = eval(a);
        note(p);
        const int left = max_evals - it - 1;
        if (!std::isfinite(p.f) || !armijo(p) || (it > 0 && p.f >= prev.f)) {
            auto r = zoom(prev, p, left);
            if (!r.ok && std::isfinite(best.f)) r.point = best;
            return r;
        }
        if (curvature(p)) return {true, p};
        if (p.slope >= 0.0) {
            auto r = zoom(p, prev, left);
            if (!r.ok && std::isfinite(best.f)) r.point = best;
            return r;
        }
        if (a >= alpha_max) return {true, p};  // sufficient decrease at the largest allowed step
        prev = p;
        a = std::min(2.0 * a, alpha_max);
    }
    return {false, best};
}

}  // namespace cfcal::opt::detail
