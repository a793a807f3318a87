// Derivative-based bound-constrained methods: spectral projected gradient,
// limited-memory BFGS with Cauchy-point active set, truncated Newton, and a
// Hessian-based SQP iteration.

#pragma once

#include <algorithm>
#include <deque>
#include <numeric>

#include "cfcal/optimize/linesearch.hpp"

namespace cfcal::opt {

// Spectral (Barzilai-Borwein) projected gradient with nonmonotone
// backtracking.
inline RunRecord gd_spectral(const Problem& prob, const Vector& x0, const Config& cfg = {}) {
    detail::check_start(prob, x0);
    Evaluator ev(prob);
    detail::Tracker tr;
    tr.rec.algorithm = "gd_spectral";
    tr.rec.initial_guesses = {x0};
    Vector x = x0, g;
    double f = ev.fg(x, g);
    if (!std::isfinite(f)) throw ParameterError("objective not finite at the initial guess");
    tr.accept(x, f);
    std::deque<double> hist{f};
    double pg = projected_gradient_norm(x, g, prob);
    double alpha = pg > 0.0 ? std::clamp(1.0 / pg, 1e-10, 1e10) : 1.0;
    std::string why = "max iterations";
    for (int it = 0; it < cfg.max_iter; ++it) {
        if (pg <= cfg.pgtol) {
            why = "projected gradient below tolerance";
            break;
        }
        if (f <= cfg.fstop) {
            why = "objective target reached";
            break;
        }
        if (static_cast<int>(ev.counts().objective) >= cfg.max_evals) {
            why = "evaluation limit";
            break;
        }
        const Vector d = project(x - alpha * g, prob) - x;
        const double fmax = *std::max_element(hist.begin(), hist.end());
        const double gd = g.dot(d);
        double lam = 1.0;
        Vector xn, gn;
        double fn = kInf;
        bool accepted = false;
        while (lam > 1e-20 && static_cast<int>(ev.counts().objective) < cfg.max_evals) {
            xn = project(x + lam * d, prob);
            fn = ev.fg(xn, gn);
            if (std::isfinite(fn) && fn <= fmax + cfg.armijo * lam * gd) {
                accepted = true;
                break;
            }
            lam *= 0.5;
        }
        if (!accepted) {
            why = lam <= 1e-20 ? "step collapse" : "evaluation limit";
            break;
        }
        const Vector s = xn - x;
        const Vector y = gn - g;
        const double sty = s.dot(y);
        alpha = sty <= 0.0 ? 1e10 : std::clamp(s.dot(s) / sty, 1e-10, 1e10);
        const double f_old = f;
        x = xn;
        g = gn;
        f = fn;
        tr.accept(x, f);
        ++tr.rec.iterations;
        hist.push_back(f);
        if (static_cast<int>(hist.size()) > cfg.nonmonotone) hist.pop_front();
        pg = projected_gradient_norm(x, g, prob);
        if (f < f_old && detail::small_change(f_old, f, cfg.ftol)) {
            why = "relative reduction below tolerance";
            break;
        }
    }
    return tr.finish(ev, why);
}

namespace detail {

// Dense limited-memory BFGS matrix θI updated by the stored pairs.
inline Matrix lbfgs_matrix(const std::deque<std::pair<Vector, Vector>>& pairs, Eigen::Index n) {
    double theta = 1.0;
    if (!pairs.empty()) {
        const auto& [s, y] = pairs.back();
        theta = y.dot(y) / s.dot(y);
    }
    Matrix B = theta * Matrix::Identity(n, n);
    for (const auto& [s, y] : pairs) {
        const Vector Bs = B * s;
        const double sBs = s.dot(Bs);
        const double ys = y.dot(s);
        if (sBs <= 0.0 || ys <= 0.0) continue;
        B += (y * y.transpose()) / ys - (Bs * Bs.transpose()) / sBs;
    }
    return B;
}

// First local minimizer of the quadratic model along the projected
// steepest-descent path P(x - t g).
inline Vector cauchy_point(const Vector& x, const Vector& g, const Matrix& B, const Problem& prob) {
    const auto n = x.size();
    Vector t(n);
    Vector d = -g;
    for (Eigen::Index i = 0; i < n; ++i) {
        if (g[i] < 0.0)
            t[i] = (x[i] - prob.upper[i]) / g[i];
        else if (g[i] > 0.0)
            t[i] = (x[i] - prob.lower[i]) / g[i];
        else
            t[i] = kInf;
        if (t[i] <= 0.0) d[i] = 0.0;
    }
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return t[a] < t[b]; });
    Vector z = Vector::Zero(n);
    double t_old = 0.0;
    std::size_t next = 0;
    while (next < order.size() && t[order[next]] <= 0.0) ++next;
    while (true) {
        if (d.squaredNorm() == 0.0) break;
        const Vector Bd = B * d;
        const double fp = g.dot(d) + z.dot(Bd);
        const double fpp = d.dot(Bd);
        if (fp >= 0.0) break;
        const double t_next = next < order.size() ? t[order[next]] : kInf;
        const double dt_min = fpp > 0.0 ? -fp / fpp : kInf;
        if (dt_min < t_next - t_old) {
            z += dt_min * d;
            break;
        }
        if (!std::isfinite(t_next)) break;
        z += (t_next - t_old) * d;
        t_old = t_next;
        while (next < order.size() && t[order[next]] <= t_next) {
            const auto b = order[next++];
            z[b] = (d[b] > 0.0 ? prob.upper[b] : prob.lower[b]) - x[b];
            d[b] = 0.0;
        }
    }
    return project(x + z, prob);
}

// Minimizes the quadratic model over the variables free at the Cauchy point,
// then truncates the step to the box.
inline Vector subspace_min(const Vector& x, const Vector& g, const Matrix& B, const Vector& xc, const Problem& prob) {
    const auto n = x.size();
    std::vector<Eigen::Index> free;
    for (Eigen::Index i = 0; i < n; ++i)
        if (xc[i] > prob.lower[i] && xc[i] < prob.upper[i]) free.push_back(i);
    if (free.empty()) return xc;
    const auto nf = static_cast<Eigen::Index>(free.size());
    const Vector r = g + B * (xc - x);
    Matrix Bf(nf, nf);
    Vector rf(nf);
    for (Eigen::Index a = 0; a < nf; ++a) {
        rf[a] = r[free[a]];
        for (Eigen::Index b = 0; b < nf; ++b) Bf(a, b) = B(free[a], free[b]);
    }
    const Vector du = Bf.ldlt().solve(-rf);
    if (!du.allFinite()) return xc;
    double amax = 1.0;
    for (Eigen::Index a = 0; a < nf; ++a) {
        const auto i = free[a];
        if (du[a] > 0.0) amax = std::min(amax, (prob.upper[i] - xc[i]) / du[a]);
        if (du[a] < 0.0) amax = std::min(amax, (prob.lower[i] - xc[i]) / du[a]);
    }
    Vector out = xc;
    for (Eigen::Index a = 0; a < nf; ++a) out[free[a]] += amax * du[a];
    return project(out, prob);
}

}  // namespace detail

// Limited-memory BFGS for box constraints: Cauchy point, subspace
// minimization, strong-Wolfe line search.
inline RunRecord lbfgsb_like(const Problem& prob, const Vector& x0, const Config& cfg = {}) {
    detail::check_start(prob, x0);
    Evaluator ev(prob);
    detail::Tracker tr;
    tr.rec.algorithm = "lbfgsb_like";
    tr.rec.initial_guesses = {x0};
    const auto n = x0.size();
    Vector x = x0, g;
    double f = ev.fg(x, g);
    if (!std::isfinite(f)) throw ParameterError("objective not finite at the initial guess");
    tr.accept(x, f);
    std::deque<std::pair<Vector, Vector>> pairs;
    std::string why = "max iterations";
    for (int it = 0; it < cfg.max_iter; ++it) {
        if (projected_gradient_norm(x, g, prob) <= cfg.pgtol) {
            why = "projected gradient below tolerance";
            break;
        }
        if (f <= cfg.fstop) {
            why = "objective target reached";
            break;
        }
        if (static_cast<int>(ev.counts().objective) >= cfg.max_evals) {
            why = "evaluation limit";
            break;
        }
        const Matrix B = detail::lbfgs_matrix(pairs, n);
        const Vector xc = detail::cauchy_point(x, g, B, prob);
        Vector d = detail::subspace_min(x, g, B, xc, prob) - x;
        if (!(g.dot(d) < 0.0)) {
            d = project(x - g, prob) - x;
            pairs.clear();
        }
        if (!(g.dot(d) < 0.0)) {
            why = "no descent direction";
            break;
        }
        const double a0 = pairs.empty() && it == 0 ? std::min(1.0, 1.0 / d.norm()) : 1.0;
        auto ls = detail::wolfe_search(ev, x, f, g, d, a0, 1.0, cfg.armijo, cfg.wolfe);
        if (!std::isfinite(ls.point.f) || !(ls.point.f < f)) {
            if (!pairs.empty()) {
                pairs.clear();  // restart from the gradient model once
                continue;
            }
            why = "line search failed";
            break;
        }
        Vector xn = project(ls.point.x, prob);
        const Vector s = xn - x;
        const Vector y = ls.point.g - g;
        if (s.dot(y) > 1e-10 * s.norm() * y.norm()) {
            pairs.emplace_back(s, y);
            if (static_cast<int>(pairs.size()) > cfg.memory) pairs.pop_front();
        }
        const double f_old = f;
        x = xn;
        f = ls.point.f;
        g = ls.point.g;
        tr.accept(x, f);
        ++tr.rec.iterations;
        if (detail::small_change(f_old, f, cfg.ftol)) {
            why = "relative reduction below tolerance";
            break;
        }
    }
    return tr.finish(ev, why);
}

// Truncated Newton: conjugate gradient on the free variables with Hessian-
// vector products from gradient differences.
inline RunRecord tnc(const Problem& prob, const Vector& x0, const Config& cfg = {}) {
    detail::check_start(prob, x0);
    Evaluator ev(prob);
    detail::Tracker tr;
    tr.rec.algorithm = "tnc";
    tr.rec.initial_guesses = {x0};
    const auto n = x0.size();
    Vector w = Vector::Ones(n);
    if (cfg.scale)
        for (Eigen::Index i = 0; i < n; ++i)
            if (std::isfinite(prob.upper[i] - prob.lower[i])) w[i] = prob.upper[i] - prob.lower[i];
    // Variables this close to a bound count as on it; capped steps land
    // within rounding of the bound rather than exactly on it.
    Vector tol(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double width = prob.upper[i] - prob.lower[i];
        tol[i] = 1e-12 * (std::isfinite(width) ? std::max(width, 1.0) : 1.0 + std::abs(x0[i]));
    }
    Vector x = x0, g;
    double f = ev.fg(x, g);
    if (!std::isfinite(f)) throw ParameterError("objective not finite at the initial guess");
    tr.accept(x, f);
    std::string why = "max iterations";
    Vector free_mask(n), gy(n), d(n), r(n), p(n), Hp(n), gtmp;
    for (int it = 0; it < cfg.max_iter; ++it) {
        if (projected_gradient_norm(x, g, prob) <= cfg.pgtol) {
            why = "projected gradient below tolerance";
            break;
        }
        if (f <= cfg.fstop) {
            why = "objective target reached";
            break;
        }
        if (static_cast<int>(ev.counts().objective) >= cfg.max_evals) {
            why = "evaluation limit";
            break;
        }
        // Scaled gradient and active set.
        gy = w.cwiseProduct(g);
        for (Eigen::Index i = 0; i < n; ++i) {
            const bool at_lo = x[i] <= prob.lower[i] + tol[i] && gy[i] > 0.0;
            const bool at_hi = x[i] >= prob.upper[i] - tol[i] && gy[i] < 0.0;
            free_mask[i] = (at_lo || at_hi) ? 0.0 : 1.0;
        }
        const Vector gf = gy.cwiseProduct(free_mask);
        const double gnorm = gf.norm();
        if (gnorm == 0.0) {
            why = "projected gradient below tolerance";
            break;
        }
        const double eta = std::min(0.5, std::sqrt(gnorm));
        d.setZero();
        r = -gf;
        p = r;
        double rr = r.squaredNorm();
        for (int k = 0; k < cfg.max_cg; ++k) {
            // Hessian-vector product in scaled coordinates.
            const Vector px = w.cwiseProduct(p);
            const double eps = cfg.hv_step * (1.0 + x.norm()) / px.norm();
            const double fe = ev.fg(x + eps * px, gtmp);
            if (!std::isfinite(fe)) {
                if (k == 0) d = -gf;
                break;
            }
            Hp = (w.cwiseProduct(gtmp - g) / eps).cwiseProduct(free_mask);
            const double pHp = p.dot(Hp);
            if (!(pHp > 1e-16 * p.squaredNorm())) {
                if (k == 0) d = -gf;
                break;
            }
            const double a = rr / pHp;
            d += a * p;
            r -= a * Hp;
            const double rr_new = r.squaredNorm();
            if (std::sqrt(rr_new) <= eta * gnorm) break;
            p = r + (rr_new / rr) * p;
            rr = rr_new;
        }
        if (!(d.dot(gf) < 0.0)) d = -gf;
        // Drop components pushing outward at a bound, then cap the step at
        // the nearest bound. A failed search along the Newton direction is
        // retried once along the scaled steepest descent direction.
        auto search = [&](const Vector& dir, detail::LineResult& out) {
            Vector dx = w.cwiseProduct(dir);
            for (Eigen::Index i = 0; i < n; ++i)
                if ((x[i] <= prob.lower[i] + tol[i] && dx[i] < 0.0) || (x[i] >= prob.upper[i] - tol[i] && dx[i] > 0.0))
                    dx[i] = 0.0;
            double amax = kInf;
            for (Eigen::Index i = 0; i < n; ++i) {
                if (dx[i] > 0.0) amax = std::min(amax, (prob.upper[i] - x[i]) / dx[i]);
                if (dx[i] < 0.0) amax = std::min(amax, (prob.lower[i] - x[i]) / dx[i]);
            }
            if (!(g.dot(dx) < 0.0) || !(amax > 0.0)) return false;
            const double step_cap = std::isfinite(amax) ? amax : 1e10;
            out = detail::wolfe_search(ev, x, f, g, dx, std::min(1.0, step_cap), step_cap, cfg.armijo, cfg.wolfe);
            return std::isfinite(out.point.f) && out.point.f < f;
        };
        detail::LineResult ls;
        bool moved = search(d, ls);
        if (!moved && d != -gf) moved = search(-gf, ls);
        if (!moved) {
            why = "line search failed";
            break;
        }
        const double f_old = f;
        const Vector x_old = x;
        x = project(ls.point.x, prob);
        f = ls.point.f;
        g = ls.point.g;
        tr.accept(x, f);
        ++tr.rec.iterations;
        if (detail::small_change(f_old, f, cfg.ftol)) {
            why = "relative reduction below tolerance";
            break;
        }
        if ((x - x_old).cwiseQuotient(w).lpNorm<Eigen::Infinity>() <= cfg.xtol) {
            why = "step below tolerance";
            break;
        }
    }
    return tr.finish(ev, why);
}

// Newton-type SQP step from the explicit Hessian with regularization, a
// gradient fallback, projection, and nonmonotone backtracking.
inline RunRecord sqp_explicit(const Problem& prob, const Vector& x0, const Config& cfg = {}) {
    detail::check_start(prob, x0);
    if (!prob.objective_hessian) throw StructuralError("Hessian unavailable for this problem");
    Evaluator ev(prob);
    detail::Tracker tr;
    tr.rec.algorithm = "sqp_explicit";
    tr.rec.initial_guesses = {x0};
    const auto n = x0.size();
    Vector x = x0, g;
    Matrix H;
    double f = ev.fgh(x, g, H);
    if (!std::isfinite(f)) throw ParameterError("objective not finite at the initial guess");
    tr.accept(x, f);
    std::deque<double> hist{f};
    std::string why = "max iterations";
    for (int it = 0; it < cfg.max_iter; ++it) {
        if (projected_gradient_norm(x, g, prob) <= cfg.pgtol) {
            why = "projected gradient below tolerance";
            break;
        }
        if (f <= cfg.fstop) {
            why = "objective target reached";
            break;
        }
        if (static_cast<int>(ev.counts().objective) >= cfg.max_evals) {
            why = "evaluation limit";
            break;
        }
        const double eps = cfg.regularization * H.norm();
        Vector d = (H + eps * Matrix::Identity(n, n)).ldlt().solve(-g);
        if (!d.allFinite() || !(d.dot(g) < 0.0)) d = -g;
        const double fmax = *std::max_element(hist.begin(), hist.end());
        bool accepted = false;
        Vector xn;
        double fn = kInf;
        for (int attempt = 0; attempt < 2 && !accepted; ++attempt) {
            double lam = 1.0;
            while (lam > 1e-12 && static_cast<int>(ev.counts().objective) < cfg.max_evals) {
                xn = project(x + lam * d, prob);
                const double decrease = g.dot(xn - x);
                if (decrease < 0.0) {
                    fn = ev.f(xn);
                    if (std::isfinite(fn) && fn <= fmax + cfg.armijo * decrease) {
                        accepted = true;
                        break;
                    }
                }
                lam *= 0.5;
            }
            if (!accepted) d = -g;  // projected Newton step failed; retry along the gradient
        }
        if (!accepted) {
            why = "step collapse";
            break;
        }
        const double f_old = f;
        x = xn;
        f = ev.fgh(x, g, H);
        tr.accept(x, f);
        ++tr.rec.iterations;
        hist.push_back(f);
        if (static_cast<int>(hist.size()) > cfg.nonmonotone) hist.pop_front();
        if (f < f_old && detail::small_change(f_old, f, cfg.ftol)) {
            why = "relative reduction below tolerance";
            break;
        }
    }
    return tr.finish(ev, why);
}

}  // namespace cfcal::opt
