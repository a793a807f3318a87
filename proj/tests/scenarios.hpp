// Synthetic scenarios shared by the unit and acceptance tests.

#pragma once

#include <random>

#include "cfcal/calibration.hpp"
#include "cfcal/synthesize.hpp"

namespace scen {

using namespace cfcal;

inline Vector ovm_guess(int i) {
    switch (i) {
        case 0: return (Vector(5) << 33.0, 0.026, 1.545, 2.0, 0.175).finished();
        case 1: return (Vector(5) << 40.0, 0.02, 1.2, 1.5, 0.3).finished();
        default: return (Vector(5) << 28.0, 0.035, 1.8, 2.5, 0.1).finished();
    }
}

// OVM parameters drawn within ±20% of the default block.
inline Vector ovm_truth(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.8, 1.2);
    Vector p = ModelInstance::ovm().params;
    for (Eigen::Index j = 0; j < p.size(); ++j) p[j] *= u(rng);
    return p;
}

// One OVM follower behind an oscillating lead, starting 10 ft closer than
// equilibrium; 60 s at dt = 0.1 (600 steps).
inline TrajectorySet ovm_single(const Vector& truth, std::uint64_t seed, double noise = 0.0, double horizon = 60.0) {
    SynthOptions o;
    o.initial_offset = 10.0;
    o.noise_std = noise;
    return synthesize_scenario(ModelInstance::ovm(), truth, LeadProfile::sinusoid(35.0, 10.0, 20.0), 1, 0.1, horizon,
                               seed, o);
}

inline TrajectorySet ovm_chain(int n, std::uint64_t seed, double horizon = 60.0) {
    SynthOptions o;
    o.initial_offset = 10.0;
    return synthesize_scenario(ModelInstance::ovm(), ModelInstance::ovm().params,
                               LeadProfile::sinusoid(35.0, 10.0, 20.0), n, 0.1, horizon, seed, o);
}

inline std::vector<int> follower_ids(int n, int first = 2) {
    std::vector<int> ids;
    for (int i = 0; i < n; ++i) ids.push_back(first + i);
    return ids;
}

// Uniform point in [lo, hi] mapped from a fraction of the truth.
inline Vector perturb(const Vector& p, double frac, std::mt19937_64& rng, const Vector& lower, const Vector& upper) {
    std::uniform_real_distribution<double> u(1.0 - frac, 1.0 + frac);
    Vector q = p;
    for (Eigen::Index j = 0; j < q.size(); ++j) q[j] = std::clamp(p[j] * u(rng), lower[j], upper[j]);
    return q;
}

inline std::span<const double> span(const Vector& v) { return {v.data(), static_cast<std::size_t>(v.size())}; }

}  // namespace scen
