// Optimizer suite entry points and the multi-start wrapper.

#pragma once

#include <functional>
#include <string>
#include <vector>

#include "cfcal/optimize/derivative_free.hpp"
#include "cfcal/optimize/gradient_methods.hpp"

namespace cfcal::opt {

using Optimizer = std::function<RunRecord(const Problem&, const Vector&, const Config&)>;

inline const std::vector<std::string>& algorithm_names() {
    static const std::vector<std::string> names{"gd", "lbfgsb", "tnc", "sqp", "spsa", "nm", "ga"};
    return names;
}

inline bool uses_gradient(const std::string& name) {
    return name == "gd" || name == "lbfgsb" || name == "tnc" || name == "sqp";
}

inline Optimizer optimizer(const std::string& name) {
    if (name == "gd") return gd_spectral;
    if (name == "lbfgsb") return lbfgsb_like;
    if (name == "tnc") return tnc;
    if (name == "sqp") return sqp_explicit;
    if (name == "spsa") return spsa_descent;
    if (name == "nm") return nelder_mead_penalty;
    if (name == "ga") return [](const Problem& p, const Vector&, const Config& c) { return genetic(p, c); };
    throw StructuralError("unknown algorithm '" + name + "'");
}

// Runs `inner` from each guess in order until a run reaches RMSE ≤ threshold.
// A threshold ≤ 0 always consumes every guess, even after an exact fit.
// The returned record holds the best run, with counts and time summed over
// all runs and guesses_used set to the number consumed.
inline RunRecord multistart(const Optimizer& inner, const Problem& prob, const std::vector<Vector>& guesses,
                            double threshold, const Config& cfg = {}) {
    if (guesses.empty()) throw StructuralError("multistart needs at least one guess");
    RunRecord best;
    Counts total;
    double seconds = 0.0;
    int used = 0;
    int iterations = 0;
    std::vector<double> trace;
    for (const auto& g : guesses) {
        auto r = inner(prob, g, cfg);
        ++used;
        total.objective += r.counts.objective;
        total.gradient += r.counts.gradient;
        total.hessian += r.counts.hessian;
        seconds += r.seconds;
        iterations += r.iterations;
        trace.insert(trace.end(), r.trace.begin(), r.trace.end());
        const bool better = used == 1 || r.best_F < best.best_F;
        const double achieved = r.rmse;
        if (better) best = std::move(r);
        if (threshold > 0.0 && achieved <= threshold) break;
    }
    best.guesses_used = used;
    best.initial_guesses = std::vector<Vector>(guesses.begin(), guesses.begin() + used);
    best.counts = total;
    best.seconds = seconds;
    best.iterations = iterations;
    best.trace = std::move(trace);
    return best;
}

}  // namespace cfcal::opt
