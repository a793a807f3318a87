// Problem definition, instrumented evaluation, run records and optimizer
// configuration shared by every algorithm.

#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "cfcal/gradcheck.hpp"

namespace cfcal::opt {

struct Problem {
    ObjectiveFn objective;
    // Returns F and writes ∇F into the second argument.
    std::function<double(const Vector&, Vector&)> objective_gradient;
    // Returns F, writes ∇F and ∇²F.
    std::function<double(const Vector&, Vector&, Matrix&)> objective_hessian;
    Vector lower;
    Vector upper;
    // Maps F to RMSE for reporting and multi-start thresholds; sqrt(F) when unset.
    std::function<double(double)> rmse;
    // Cost of one gradient / Hessian in objective-evaluation equivalents.
    double grad_cost{1.0};
    double hess_cost{1.0};

    [[nodiscard]] Eigen::Index dim() const noexcept { return lower.size(); }
    [[nodiscard]] double rmse_of(double F) const {
        if (!std::isfinite(F)) return kInf;
        return rmse ? rmse(F) : std::sqrt(std::max(F, 0.0));
    }
    void check() const {
        if (lower.size() != upper.size()) throw StructuralError("bound vectors differ in length");
        for (Eigen::Index j = 0; j < lower.size(); ++j)
            if (!(lower[j] < upper[j])) throw StructuralError("lower bound must be below upper bound");
    }
};

inline Vector project(const Vector& x, const Problem& p) { return x.cwiseMax(p.lower).cwiseMin(p.upper); }

inline bool feasible(const Vector& x, const Problem& p) {
    return (x.array() >= p.lower.array()).all() && (x.array() <= p.upper.array()).all();
}

// ‖P(x - g) - x‖∞
inline double projected_gradient_norm(const Vector& x, const Vector& g, const Problem& p) {
    return (project(x - g, p) - x).lpNorm<Eigen::Infinity>();
}

struct Counts {
    std::size_t objective{0};
    std::size_t gradient{0};
    std::size_t hessian{0};

    [[nodiscard]] double equivalent(double grad_cost, double hess_cost) const {
        return static_cast<double>(objective) + grad_cost * static_cast<double>(gradient) +
               hess_cost * static_cast<double>(hessian);
    }
};

// Counts every call into the problem callables. A combined objective and
// gradient call counts once for each.
class Evaluator {
public:
    explicit Evaluator(const Problem& p) : p_(p) {}

    double f(const Vector& x) {
        ++c_.objective;
        if (!p_.objective) throw StructuralError("problem has no objective callable");
        return sanitize(p_.objective(x));
    }
    double fg(const Vector& x, Vector& g) {
        if (!p_.objective_gradient) throw StructuralError("problem has no gradient callable");
        ++c_.objective;
        ++c_.gradient;
        g.resize(x.size());
        const double v = sanitize(p_.objective_gradient(x, g));
        if (!std::isfinite(v) || !g.allFinite()) return kInf;
        return v;
    }
    double fgh(const Vector& x, Vector& g, Matrix& H) {
        if (!p_.objective_hessian) throw StructuralError("Hessian unavailable for this problem");
        ++c_.objective;
        ++c_.gradient;
        ++c_.hessian;
        const double v = sanitize(p_.objective_hessian(x, g, H));
        if (!std::isfinite(v) || !g.allFinite() || !H.allFinite()) return kInf;
        return v;
    }
    [[nodiscard]] const Counts& counts() const noexcept { return c_; }
    [[nodiscard]] const Problem& problem() const noexcept { return p_; }

private:
    static double sanitize(double v) { return std::isnan(v) ? kInf : v; }
    const Problem& p_;
    Counts c_;
};

struct RunRecord {
    std::string algorithm;
    int guesses_used{1};
    std::vector<Vector> initial_guesses;
    Vector best;      // feasible answer
    Vector best_raw;  // before clamping (penalty methods)
    double best_F{kInf};
    double rmse{kInf};
    Counts counts;
    int iterations{0};
    double seconds{0.0};
    std::string termination;
    std::vector<double> trace;  // objective at each accepted iterate

    [[nodiscard]] double equivalent_evals(double grad_cost = 1.0, double hess_cost = 1.0) const {
        return counts.equivalent(grad_cost, hess_cost);
    }
};

inline nlohmann::ordered_json to_json(const RunRecord& r) {
    auto vec = [](const Vector& v) {
        std::vector<double> out(v.data(), v.data() + v.size());
        return out;
    };
    nlohmann::ordered_json j;
    j["algorithm"] = r.algorithm;
    j["guesses_used"] = r.guesses_used;
    j["best"] = vec(r.best);
    j["best_raw"] = vec(r.best_raw);
    j["best_F"] = r.best_F;
    j["rmse"] = r.rmse;
    j["objective_evals"] = r.counts.objective;
    j["gradient_evals"] = r.counts.gradient;
    j["hessian_evals"] = r.counts.hessian;
    j["iterations"] = r.iterations;
    j["seconds"] = r.seconds;
    j["termination"] = r.termination;
    j["trace"] = r.trace;
    return j;
}

// Knobs for all algorithms; each algorithm reads the fields it uses.
struct Config {
    int max_iter{1000};
    int max_evals{5000};        // cap on objective evaluations
    double pgtol{1e-10};        // projected-gradient ∞-norm
    double ftol{1e-15};         // relative objective change between accepted iterates
    double fstop{-kInf};        // stop once F falls to this value
    int memory{10};             // quasi-Newton pairs
    int nonmonotone{10};        // reference window for nonmonotone backtracking
    double armijo{1e-4};
    double wolfe{0.9};
    int max_cg{50};
    double hv_step{1e-8};
    double xtol{0.0};           // TNC: scaled step ∞-norm
    bool scale{true};           // TNC: work in box-normalized coordinates
    double regularization{1e-6};
    double spsa_a{0.1};
    double spsa_c{1e-2};
    double spsa_A{10.0};
    double spsa_alpha{0.602};
    double spsa_gamma{0.101};
    double penalty{1e9};
    double simplex{0.05};
    double xatol{1e-8};
    double fatol{1e-12};
    double popsize{15.0};
    double mutation_lo{0.5};
    double mutation_hi{1.0};
    double crossover{0.7};
    double de_tol{0.01};
    double de_atol{0.0};
    int max_generations{1000};
    std::uint64_t seed{0};
};

// Reads a JSON object into a Config; unknown keys are rejected.
inline Config config_from_json(const nlohmann::json& j, Config c = {}) {
    if (!j.is_object()) throw StructuralError("optimizer config must be an object");
    for (const auto& [k, v] : j.items()) {
        auto num = [&]() {
            if (!v.is_number()) throw StructuralError("config key '" + k + "' must be a number");
            return v.get<double>();
        };
        auto integer = [&]() {
            if (!v.is_number_integer()) throw StructuralError("config key '" + k + "' must be an integer");
            return v.get<long long>();
        };
        if (k == "max_iter") c.max_iter = static_cast<int>(integer());
        else if (k == "max_evals") c.max_evals = static_cast<int>(integer());
        else if (k == "pgtol") c.pgtol = num();
        else if (k == "ftol") c.ftol = num();
        else if (k == "fstop") c.fstop = num();
        else if (k == "memory") c.memory = static_cast<int>(integer());
        else if (k == "nonmonotone") c.nonmonotone = static_cast<int>(integer());
        else if (k == "armijo") c.armijo = num();
        else if (k == "wolfe") c.wolfe = num();
        else if (k == "max_cg") c.max_cg = static_cast<int>(integer());
        else if (k == "hv_step") c.hv_step = num();
        else if (k == "xtol") c.xtol = num();
        else if (k == "scale") {
            if (!v.is_boolean()) throw StructuralError("config key 'scale' must be a boolean");
            c.scale = v.get<bool>();
        } else if (k == "regularization") c.regularization = num();
        else if (k == "spsa_a") c.spsa_a = num();
        else if (k == "spsa_c") c.spsa_c = num();
        else if (k == "spsa_A") c.spsa_A = num();
        else if (k == "spsa_alpha") c.spsa_alpha = num();
        else if (k == "spsa_gamma") c.spsa_gamma = num();
        else if (k == "penalty") c.penalty = num();
        else if (k == "simplex") c.simplex = num();
        else if (k == "xatol") c.xatol = num();
        else if (k == "fatol") c.fatol = num();
        else if (k == "popsize") c.popsize = num();
        else if (k == "mutation_lo") c.mutation_lo = num();
        else if (k == "mutation_hi") c.mutation_hi = num();
        else if (k == "crossover") c.crossover = num();
        else if (k == "de_tol") c.de_tol = num();
        else if (k == "de_atol") c.de_atol = num();
        else if (k == "max_generations") c.max_generations = static_cast<int>(integer());
        else if (k == "seed") c.seed = static_cast<std::uint64_t>(integer());
        else throw StructuralError("unknown optimizer config key '" + k + "'");
    }
    return c;
}

namespace detail {

inline void check_start(const Problem& p, const Vector& x0) {
    p.check();
    if (x0.size() != p.dim()) throw StructuralError("initial guess has the wrong dimension");
    if (!feasible(x0, p)) throw ParameterError("initial guess outside bounds");
}

// Tracks the best accepted iterate and the common stopping tests.
struct Tracker {
    RunRecord rec;
    double t0{cpu_seconds()};

    void accept(const Vector& x, double f) {
        rec.trace.push_back(f);
        if (f < rec.best_F) {
            rec.best_F = f;
            rec.best = x;
            rec.best_raw = x;
        }
    }
    RunRecord finish(const Evaluator& ev, std::string why) {
        rec.counts = ev.counts();
        rec.termination = std::move(why);
        rec.seconds = cpu_seconds() - t0;
        rec.rmse = ev.problem().rmse_of(rec.best_F);
        return std::move(rec);
    }
};

inline bool small_change(double f_old, double f_new, double ftol) {
    return std::abs(f_old - f_new) <= ftol * std::max({std::abs(f_old), std::abs(f_new), 1.0});
}

}  // namespace detail

}  // namespace cfcal::opt
