// Gradient oracles (finite differences, simultaneous perturbation) and the
// accuracy / cost comparison harness.

#pragma once

#include <algorithm>
#include <ctime>
#include <functional>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "cfcal/core.hpp"

namespace cfcal {

using ObjectiveFn = std::function<double(const Vector&)>;
using GradientFn = std::function<Vector(const Vector&)>;

enum class FdScheme { Forward, Central };

struct GradEstimate {
    Vector gradient;
    std::string method;
    std::size_t evaluations{0};
    double seconds{0.0};
    bool reliable{true};
    std::vector<bool> flagged;  // components touched by a non-finite probe
    double value{kInf};         // objective at the base point
};

// Process CPU time in seconds.
inline double cpu_seconds() {
    timespec ts{};
    clock_gettime(CLOCK_PROCESS_CPUTIME_ID, &ts);
    return static_cast<double>(ts.tv_sec) + 1e-9 * static_cast<double>(ts.tv_nsec);
}

// Mean CPU time of `fn` over `reps` calls.
template <class Fn>
double time_cpu(Fn&& fn, int reps) {
    if (reps < 1) throw StructuralError("need at least one repetition");
    const double t0 = cpu_seconds();
    for (int r = 0; r < reps; ++r) fn();
    return (cpu_seconds() - t0) / reps;
}

inline double fd_step_size(double step, double x) { return step * std::max(std::abs(x), 1.0); }

// Default relative steps: 1e-6 forward, 1e-5 central.
inline GradEstimate fd_gradient(const ObjectiveFn& f, const Vector& p, FdScheme scheme, double step = 0.0) {
    if (step <= 0.0) step = scheme == FdScheme::Forward ? 1e-6 : 1e-5;
    const double t0 = cpu_seconds();
    const auto m = p.size();
    GradEstimate out;
    out.method = scheme == FdScheme::Forward ? "forward-FD" : "central-FD";
    out.gradient = Vector::Zero(m);
    out.flagged.assign(static_cast<std::size_t>(m), false);
    double f0 = 0.0;
    if (scheme == FdScheme::Forward) {
        f0 = f(p);
        out.value = f0;
        ++out.evaluations;
        if (!std::isfinite(f0)) out.reliable = false;
    }
    Vector q = p;
    for (Eigen::Index j = 0; j < m; ++j) {
        const double h = fd_step_size(step, p[j]);
        double g;
        if (scheme == FdScheme::Forward) {
            q[j] = p[j] + h;
            const double f1 = f(q);
            ++out.evaluations;
            g = (f1 - f0) / ((p[j] + h) - p[j]);
        } else {
            q[j] = p[j] + h;
            const double fp = f(q);
            q[j] = p[j] - h;
            const double fm = f(q);
            out.evaluations += 2;
            g = (fp - fm) / (2.0 * h);
        }
        q[j] = p[j];
        if (!std::isfinite(g)) {
            out.flagged[static_cast<std::size_t>(j)] = true;
            out.reliable = false;
        }
        out.gradient[j] = g;
    }
    if (scheme == FdScheme::Central) {
        // The base point is evaluated too so the cost is 2m+1 and the
        // estimate can be flagged when F(p) itself is not finite.
        out.value = f(p);
        if (!std::isfinite(out.value)) out.reliable = false;
        ++out.evaluations;
    }
    out.seconds = cpu_seconds() - t0;
    return out;
}

// Average of k two-sided estimates along Rademacher directions Δ:
// g_j = (F(p + hΔ) - F(p - hΔ)) / (2 h_j Δ_j), h_j = step·max(|p_j|, 1).
inline GradEstimate spsa_gradient(const ObjectiveFn& f, const Vector& p, int k, double step = 1e-4,
                                  std::uint64_t seed = 0) {
    if (k < 1) throw StructuralError("SPSA needs k >= 1");
    const double t0 = cpu_seconds();
    const auto m = p.size();
    GradEstimate out;
    out.method = "SPSA-" + std::to_string(k);
    out.gradient = Vector::Zero(m);
    out.flagged.assign(static_cast<std::size_t>(m), false);
    std::mt19937_64 rng(seed);
    std::bernoulli_distribution coin(0.5);
    out.value = f(p);
    if (!std::isfinite(out.value)) out.reliable = false;
    out.evaluations = 1;
    Vector h(m), delta(m);
    for (Eigen::Index j = 0; j < m; ++j) h[j] = fd_step_size(step, p[j]);
    for (int r = 0; r < k; ++r) {
        for (Eigen::Index j = 0; j < m; ++j) delta[j] = coin(rng) ? 1.0 : -1.0;
        const double fp = f(p + h.cwiseProduct(delta));
        const double fm = f(p - h.cwiseProduct(delta));
        out.evaluations += 2;
        const double diff = fp - fm;
        for (Eigen::Index j = 0; j < m; ++j) out.gradient[j] += diff / (2.0 * h[j] * delta[j]);
    }
    out.gradient /= static_cast<double>(k);
    for (Eigen::Index j = 0; j < m; ++j)
        if (!std::isfinite(out.gradient[j])) {
            out.flagged[static_cast<std::size_t>(j)] = true;
            out.reliable = false;
        }
    out.seconds = cpu_seconds() - t0;
    return out;
}

// ‖g_ref - g‖ / ‖g_ref‖.
inline double relative_error(const Vector& g_ref, const Vector& g) {
    if (g_ref.size() != g.size()) throw StructuralError("gradient sizes differ");
    const double n = g_ref.norm();
    if (!(n > 0.0)) throw StructuralError("reference gradient has zero norm");
    return (g_ref - g).norm() / n;
}

struct AccuracyRow {
    int index{0};
    double t{0.0};  // position on the segment, 0 = start, 1 = optimum
    double fd_norm{0.0};
    double rel_err_adjoint{0.0};
    double rel_err_spsa{0.0};
};

// Evenly spaced points from p_start to p_opt (both included). Forward
// differences are the reference gradient.
inline std::vector<AccuracyRow> accuracy_sweep(const ObjectiveFn& f, const GradientFn& adjoint, const Vector& p_start,
                                               const Vector& p_opt, int samples, int spsa_k = 1,
                                               std::uint64_t seed = 0, double fd_step = 1e-6) {
    if (samples < 2) throw StructuralError("sweep needs at least two samples");
    if ((p_start - p_opt).norm() == 0.0) throw StructuralError("degenerate sweep segment");
    std::vector<AccuracyRow> rows;
    for (int i = 0; i < samples; ++i) {
        const double t = static_cast<double>(i) / (samples - 1);
        const Vector p = (1.0 - t) * p_start + t * p_opt;
        const auto ref = fd_gradient(f, p, FdScheme::Forward, fd_step);
        AccuracyRow r;
        r.index = i;
        r.t = t;
        r.fd_norm = ref.gradient.norm();
        const auto g = adjoint(p);
        const auto s = spsa_gradient(f, p, spsa_k, 1e-4, seed + static_cast<std::uint64_t>(i));
        if (r.fd_norm > 0.0) {
            r.rel_err_adjoint = relative_error(ref.gradient, g);
            r.rel_err_spsa = relative_error(ref.gradient, s.gradient);
        } else {
            r.rel_err_adjoint = r.rel_err_spsa = kInf;
        }
        rows.push_back(r);
    }
    return rows;
}

inline void write_accuracy_csv(std::ostream& out, const std::vector<AccuracyRow>& rows) {
    out << "index,t,fd_norm,rel_err_adjoint,rel_err_spsa\n";
    auto old = out.precision(12);
    for (const auto& r : rows)
        out << r.index << ',' << r.t << ',' << r.fd_norm << ',' << r.rel_err_adjoint << ',' << r.rel_err_spsa << '\n';
    out.precision(old);
}

// One problem size for the cost comparison: the objective and, per method,
// the combined objective-and-gradient computation.
struct SpeedCase {
    int m{0};
    std::function<void()> objective;
    std::vector<std::pair<std::string, std::function<void()>>> gradients;
};

struct SpeedRow {
    int m{0};
    std::string method;
    double objective_time{0.0};
    double gradient_time{0.0};
    double ratio{0.0};
};

// Each round times the objective and then every gradient method, each as a
// mean over `reps` calls. Rows report the per-method median over `rounds`
// so one disturbed round does not skew the ratio.
inline std::vector<SpeedRow> speed_sweep(const std::vector<SpeedCase>& cases, int reps = 10, int rounds = 5) {
    if (reps < 10) reps = 10;
    if (rounds < 1) rounds = 1;
    auto median = [](std::vector<double> v) {
        std::sort(v.begin(), v.end());
        const auto n = v.size();
        return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
    };
    std::vector<SpeedRow> rows;
    for (const auto& c : cases) {
        const auto k = c.gradients.size();
        std::vector<double> to;
        std::vector<std::vector<double>> tg(k), ratio(k);
        for (int r = 0; r < rounds; ++r) {
            const double t_obj = time_cpu(c.objective, reps);
            to.push_back(t_obj);
            for (std::size_t i = 0; i < k; ++i) {
                const double t = time_cpu(c.gradients[i].second, reps);
                tg[i].push_back(t);
                ratio[i].push_back(t / t_obj);
            }
        }
        for (std::size_t i = 0; i < k; ++i) {
            SpeedRow row;
            row.m = c.m;
            row.method = c.gradients[i].first;
            row.objective_time = median(to);
            row.gradient_time = median(tg[i]);
            row.ratio = median(ratio[i]);
            rows.push_back(row);
        }
    }
    return rows;
}

inline void write_speed_csv(std::ostream& out, const std::vector<SpeedRow>& rows) {
    out << "m,method,mean_time_s,ratio\n";
    auto old = out.precision(12);
    for (const auto& r : rows) out << r.m << ',' << r.method << ',' << r.gradient_time << ',' << r.ratio << '\n';
    out.precision(old);
}

// Least-squares slope of y on x.
inline double ls_slope(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2) throw StructuralError("slope needs two or more points");
    const double n = static_cast<double>(x.size());
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0, sxx = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
    }
    if (sxx == 0.0) throw StructuralError("slope undefined for constant x");
    return sxy / sxx;
}

}  // namespace cfcal
