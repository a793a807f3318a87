// Objective-only methods: SPSA descent, penalized Nelder-Mead, and
// differential evolution.

#pragma once

#include <algorithm>
#include <numeric>
#include <random>

#include "cfcal/optimize/common.hpp"

namespace cfcal::opt {

// Projected stochastic approximation with gains a_k = a/(k+1+A)^α and
// c_k = c/(k+1)^γ. Three objective evaluations per iteration (two probes
// and the new iterate).
inline RunRecord spsa_descent(const Problem& prob, const Vector& x0, const Config& cfg = {}) {
    detail::check_start(prob, x0);
    Evaluator ev(prob);
    detail::Tracker tr;
    tr.rec.algorithm = "spsa";
    tr.rec.initial_guesses = {x0};
    const auto n = x0.size();
    std::mt19937_64 rng(cfg.seed);
    std::bernoulli_distribution coin(0.5);
    Vector x = x0;
    const double f0 = ev.f(x);
    if (!std::isfinite(f0)) throw ParameterError("objective not finite at the initial guess");
    tr.accept(x, f0);
    Vector delta(n);
    std::string why = "iteration budget";
    for (int k = 0; k < cfg.max_iter; ++k) {
        if (static_cast<int>(ev.counts().objective) + 3 > cfg.max_evals) {
            why = "evaluation limit";
            break;
        }
        const double ak = cfg.spsa_a / std::pow(k + 1 + cfg.spsa_A, cfg.spsa_alpha);
        const double ck = cfg.spsa_c / std::pow(k + 1, cfg.spsa_gamma);
        for (Eigen::Index j = 0; j < n; ++j) delta[j] = coin(rng) ? 1.0 : -1.0;
        const double fp = ev.f(x + ck * delta);
        const double fm = ev.f(x - ck * delta);
        Vector ghat = Vector::Zero(n);
        if (std::isfinite(fp) && std::isfinite(fm))
            for (Eigen::Index j = 0; j < n; ++j) ghat[j] = (fp - fm) / (2.0 * ck * delta[j]);
        x = project(x - ak * ghat, prob);
        tr.accept(x, ev.f(x));
        ++tr.rec.iterations;
    }
    return tr.finish(ev, why);
}

// Nelder-Mead on F + penalty·(squared bound violation); the reported answer
// is clamped into the box and re-evaluated when clamping moved it.
inline RunRecord nelder_mead_penalty(const Problem& prob, const Vector& x0, const Config& cfg = {}) {
    detail::check_start(prob, x0);
    Evaluator ev(prob);
    detail::Tracker tr;
    tr.rec.algorithm = "nelder_mead";
    tr.rec.initial_guesses = {x0};
    const auto n = x0.size();
    auto pf = [&](const Vector& x) {
        const double viol = (x - project(x, prob)).squaredNorm();
        return ev.f(x) + cfg.penalty * viol;
    };
    std::vector<Vector> sim(static_cast<std::size_t>(n + 1), x0);
    for (Eigen::Index j = 0; j < n; ++j) {
        auto& v = sim[static_cast<std::size_t>(j + 1)];
        v[j] = x0[j] != 0.0 ? (1.0 + cfg.simplex) * x0[j] : 0.00025;
    }
    std::vector<double> fv(sim.size());
    for (std::size_t i = 0; i < sim.size(); ++i) fv[i] = pf(sim[i]);
    std::vector<std::size_t> idx(sim.size());
    auto sort_simplex = [&]() {
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return fv[a] < fv[b]; });
        std::vector<Vector> s2;
        std::vector<double> f2;
        for (auto i : idx) {
            s2.push_back(sim[i]);
            f2.push_back(fv[i]);
        }
        sim = std::move(s2);
        fv = std::move(f2);
    };
    sort_simplex();
    std::string why = "max iterations";
    const double rho = 1.0, chi = 2.0, psi = 0.5, sigma = 0.5;
    for (int it = 0; it < cfg.max_iter; ++it) {
        double xspread = 0.0, fspread = 0.0;
        for (std::size_t i = 1; i < sim.size(); ++i) {
            xspread = std::max(xspread, (sim[i] - sim[0]).lpNorm<Eigen::Infinity>());
            fspread = std::max(fspread, std::abs(fv[i] - fv[0]));
        }
        if (xspread <= cfg.xatol && fspread <= cfg.fatol) {
            why = "simplex converged";
            break;
        }
        if (fv[0] <= cfg.fstop) {
            why = "objective target reached";
            break;
        }
        if (static_cast<int>(ev.counts().objective) >= cfg.max_evals) {
            why = "evaluation limit";
            break;
        }
        Vector xbar = Vector::Zero(n);
        for (std::size_t i = 0; i + 1 < sim.size(); ++i) xbar += sim[i];
        xbar /= static_cast<double>(n);
        const auto last = sim.size() - 1;
        const Vector xr = (1.0 + rho) * xbar - rho * sim[last];
        const double fr = pf(xr);
        bool shrink = false;
        if (fr < fv[0]) {
            const Vector xe = (1.0 + rho * chi) * xbar - rho * chi * sim[last];
            const double fe = pf(xe);
            if (fe < fr) {
                sim[last] = xe;
                fv[last] = fe;
            } else {
                sim[last] = xr;
                fv[last] = fr;
            }
        } else if (fr < fv[last - 1]) {
            sim[last] = xr;
            fv[last] = fr;
        } else if (fr < fv[last]) {
            const Vector xc = (1.0 + psi * rho) * xbar - psi * rho * sim[last];
            const double fc = pf(xc);
            if (fc <= fr) {
                sim[last] = xc;
                fv[last] = fc;
            } else {
                shrink = true;
            }
        } else {
            const Vector xcc = (1.0 - psi) * xbar + psi * sim[last];
            const double fcc = pf(xcc);
            if (fcc < fv[last]) {
                sim[last] = xcc;
                fv[last] = fcc;
            } else {
                shrink = true;
            }
        }
        if (shrink)
            for (std::size_t i = 1; i < sim.size(); ++i) {
                sim[i] = sim[0] + sigma * (sim[i] - sim[0]);
                fv[i] = pf(sim[i]);
            }
        sort_simplex();
        tr.rec.trace.push_back(fv[0]);
        ++tr.rec.iterations;
    }
    tr.rec.best_raw = sim[0];
    tr.rec.best = project(sim[0], prob);
    tr.rec.best_F = tr.rec.best == sim[0] ? fv[0] : ev.f(tr.rec.best);
    return tr.finish(ev, why);
}

// Differential evolution, rand/1/bin with dithered mutation weight and
// greedy selection. Population size popsize·m, Latin hypercube start.
inline RunRecord genetic(const Problem& prob, const Config& cfg = {}) {
    prob.check();
    if (!prob.lower.allFinite() || !prob.upper.allFinite())
        throw StructuralError("differential evolution needs a bounded box");
    Evaluator ev(prob);
    detail::Tracker tr;
    tr.rec.algorithm = "genetic";
    const auto n = prob.dim();
    const auto np = std::max<std::size_t>(5, static_cast<std::size_t>(std::llround(cfg.popsize * n)));
    std::mt19937_64 rng(cfg.seed);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    const Vector width = prob.upper - prob.lower;

    // Population lives in unit-cube coordinates.
    std::vector<Vector> pop(np, Vector(n));
    for (Eigen::Index j = 0; j < n; ++j) {
        std::vector<std::size_t> perm(np);
        std::iota(perm.begin(), perm.end(), std::size_t{0});
        std::shuffle(perm.begin(), perm.end(), rng);
        for (std::size_t i = 0; i < np; ++i)
            pop[i][j] = (static_cast<double>(perm[i]) + u01(rng)) / static_cast<double>(np);
    }
    auto to_x = [&](const Vector& y) -> Vector { return prob.lower + width.cwiseProduct(y); };
    std::vector<double> energy(np);
    for (std::size_t i = 0; i < np; ++i) energy[i] = ev.f(to_x(pop[i]));
    auto best_index = [&]() {
        return static_cast<std::size_t>(std::min_element(energy.begin(), energy.end()) - energy.begin());
    };
    {
        const auto b = best_index();
        tr.accept(to_x(pop[b]), energy[b]);
    }
    std::uniform_int_distribution<std::size_t> pick(0, np - 1);
    std::uniform_int_distribution<Eigen::Index> pick_dim(0, n - 1);
    std::string why = "generation limit";
    for (int gen = 0; gen < cfg.max_generations; ++gen) {
        const double F = cfg.mutation_lo + (cfg.mutation_hi - cfg.mutation_lo) * u01(rng);
        for (std::size_t i = 0; i < np; ++i) {
            std::size_t r0, r1, r2;
            do r0 = pick(rng); while (r0 == i);
            do r1 = pick(rng); while (r1 == i || r1 == r0);
            do r2 = pick(rng); while (r2 == i || r2 == r0 || r2 == r1);
            Vector trial = pop[i];
            const Eigen::Index jr = pick_dim(rng);
            for (Eigen::Index j = 0; j < n; ++j) {
                if (j == jr || u01(rng) < cfg.crossover) {
                    double v = pop[r0][j] + F * (pop[r1][j] - pop[r2][j]);
                    if (v < 0.0 || v > 1.0) v = u01(rng);
                    trial[j] = v;
                }
            }
            const double e = ev.f(to_x(trial));
            if (e <= energy[i]) {
                pop[i] = std::move(trial);
                energy[i] = e;
            }
        }
        const auto b = best_index();
        tr.accept(to_x(pop[b]), energy[b]);
        ++tr.rec.iterations;
        double mean = 0.0;
        for (double e : energy) mean += e;
        mean /= static_cast<double>(np);
        double var = 0.0;
        for (double e : energy) var += (e - mean) * (e - mean);
        const double sd = std::sqrt(var / static_cast<double>(np));
        if (std::isfinite(mean) && sd <= cfg.de_atol + cfg.de_tol * std::abs(mean)) {
            why = "population converged";
            break;
        }
        if (energy[b] <= cfg.fstop) {
            why = "objective target reached";
            break;
        }
        if (static_cast<int>(ev.counts().objective) >= cfg.max_evals) {
            why = "evaluation limit";
            break;
        }
    }
    tr.rec.initial_guesses = {};
    return tr.finish(ev, why);
}

}  // namespace cfcal::opt
