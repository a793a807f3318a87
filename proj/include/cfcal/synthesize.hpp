// Synthetic platoon data: a prescribed lead vehicle followed by a chain of
// vehicles simulated with known parameters.

#pragma once

#include <cmath>
#include <random>
#include <utility>
#include <vector>

#include "cfcal/simulate.hpp"

namespace cfcal {

struct LeadProfile {
    enum class Kind { Constant, Piecewise, Sinusoid };
    Kind kind{Kind::Constant};
    double speed{30.0};
    std::vector<std::pair<double, double>> pieces;  // (start time, speed), sorted by time
    double amplitude{0.0};
    double period{20.0};

    static LeadProfile constant(double v) { return {Kind::Constant, v, {}, 0.0, 20.0}; }
    static LeadProfile piecewise(double v0, std::vector<std::pair<double, double>> changes) {
        return {Kind::Piecewise, v0, std::move(changes), 0.0, 20.0};
    }
    static LeadProfile sinusoid(double mean, double amplitude, double period) {
        return {Kind::Sinusoid, mean, {}, amplitude, period};
    }

    [[nodiscard]] double at(double t) const {
        switch (kind) {
            case Kind::Constant: return speed;
            case Kind::Piecewise: {
                double v = speed;
                for (const auto& [t0, vv] : pieces)
                    if (t >= t0) v = vv;
                return v;
            }
            case Kind::Sinusoid: return speed + amplitude * std::sin(2.0 * std::acos(-1.0) * t / period);
        }
        return speed;
    }
};

// Headway s = x_L - x - l_L at which the model is in equilibrium at speed v.
inline double equilibrium_headway(const ModelInstance& m, std::span<const double> p, double v) {
    switch (m.kind) {
        case ModelKind::OVM: {
            const double arg = v / p[0] + std::tanh(-p[2]);
            if (!(arg > -1.0 && arg < 1.0))
                throw ParameterError("speed " + std::to_string(v) + " is outside the OVM equilibrium range");
            return (std::atanh(arg) + p[2] + p[4]) / p[1];
        }
        case ModelKind::NewellDE:
            if (v > p[0]) throw ParameterError("speed exceeds the free-flow speed");
            return v * p[1] + p[2];
        case ModelKind::IDM: {
            const double ratio = v / p[0];
            const double rest = 1.0 - ratio * ratio * ratio * ratio;
            if (!(rest > 0.0)) throw ParameterError("speed exceeds the IDM desired speed");
            return (p[2] + v * p[1]) / std::sqrt(rest);
        }
        case ModelKind::NewellTT: return v * p[0] + p[1];
    }
    throw ModelError("unknown model kind");
}

struct SynthOptions {
    double vehicle_length{15.0};
    double noise_std{0.0};          // Gaussian noise added to followers' positions
    double initial_offset{0.0};     // followers start this much closer than equilibrium
    int first_id{1};                // lead vehicle id; followers take the next ids
    UnitSystem units{UnitSystem::FeetSeconds};
};

// Vehicle `first_id` drives the lead profile; vehicles first_id+1..first_id+n
// each follow the previous one. `true_params` holds one parameter block shared
// by all followers or n blocks concatenated.
inline TrajectorySet synthesize_scenario(const ModelInstance& model, std::span<const double> true_params,
                                         const LeadProfile& lead, int n, double dt, double horizon,
                                         std::uint64_t seed, const SynthOptions& opt = {}) {
    if (n < 1) throw StructuralError("need at least one follower");
    if (!(dt > 0.0) || !(horizon > dt)) throw StructuralError("invalid grid");
    if (!model.is_ode()) throw ModelError("synthesis needs a rate-form model");
    const auto bs = model.size();
    if (true_params.size() != bs && true_params.size() != bs * static_cast<std::size_t>(n))
        throw StructuralError("parameter vector must hold one block or one per follower");
    for (int j = 0; j < n; ++j) {
        const auto block = true_params.size() == bs ? true_params : true_params.subspan(bs * j, bs);
        if (!model.within_bounds(block)) throw ParameterError("true parameters outside bounds");
    }
    std::vector<double> params;
    for (int j = 0; j < n; ++j) {
        const auto block = true_params.size() == bs ? true_params : true_params.subspan(bs * j, bs);
        params.insert(params.end(), block.begin(), block.end());
    }

    // One extra frame is simulated and dropped so the final stored speed is
    // the model's own.
    const auto frames = static_cast<std::size_t>(std::llround(horizon / dt)) + 1;
    const auto sim_frames = frames + 1;

    TrajectorySet work(dt, opt.units);
    Trajectory lt;
    lt.vehicle_id = opt.first_id;
    lt.first_frame = 0;
    lt.dt = dt;
    lt.length = opt.vehicle_length;
    lt.positions.resize(sim_frames);
    lt.speeds.resize(sim_frames);
    lt.leaders.assign(sim_frames, 0);
    lt.lanes.assign(sim_frames, 1);
    double x = 0.0;
    for (std::size_t k = 0; k < sim_frames; ++k) {
        lt.positions[k] = x;
        lt.speeds[k] = lead.at(static_cast<double>(k) * dt);
        x += dt * lt.speeds[k];
    }
    const double v0 = lt.speeds[0];
    work.add(lt);

    // Followers start at equilibrium behind their leader and cruise at v0
    // over the history window.
    double front = 0.0;
    std::vector<int> ids;
    for (int j = 0; j < n; ++j) {
        const auto block = std::span<const double>(params).subspan(bs * j, bs);
        const double s = equilibrium_headway(model, block, v0) - (j == 0 ? opt.initial_offset : 0.0);
        front -= s + opt.vehicle_length;
        Trajectory t;
        t.vehicle_id = opt.first_id + 1 + j;
        t.first_frame = 0;
        t.dt = dt;
        t.length = opt.vehicle_length;
        t.positions.resize(sim_frames);
        t.speeds.assign(sim_frames, v0);
        t.leaders.assign(sim_frames, t.vehicle_id - 1);
        t.lanes.assign(sim_frames, 1);
        for (std::size_t k = 0; k < sim_frames; ++k) t.positions[k] = front + v0 * dt * static_cast<double>(k);
        work.add(std::move(t));
        ids.push_back(opt.first_id + 1 + j);
    }

    const auto platoon = build_platoon(work, ids);
    const auto sim = simulate_dde(platoon, std::span<const ModelInstance>(&model, 1), params, work);
    if (sim.diverged)
        throw ModelError("synthesis diverged at t=" + std::to_string(static_cast<double>(sim.diverged_frame) * dt));

    // Collision check before trimming.
    for (std::size_t k = 0; k < sim_frames; ++k) {
        double lead_pos = work.at(opt.first_id).positions[k];
        for (const auto& v : sim.vehicles) {
            const double gap = lead_pos - v.states[k].pos - opt.vehicle_length;
            if (gap < 0.0)
                throw DataError("collision of vehicle " + std::to_string(v.id) + " at t=" +
                                std::to_string(static_cast<double>(k) * dt));
            lead_pos = v.states[k].pos;
        }
    }

    TrajectorySet out(dt, opt.units);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, opt.noise_std > 0.0 ? opt.noise_std : 1.0);
    Trajectory l = work.at(opt.first_id);
    auto trim = [&](Trajectory& t) {
        t.positions.resize(frames);
        t.speeds.resize(frames);
        t.leaders.resize(frames);
        t.lanes.resize(frames);
    };
    trim(l);
    out.add(std::move(l));
    for (const auto& v : sim.vehicles) {
        Trajectory t = work.at(v.id);
        for (std::size_t k = 0; k < sim_frames; ++k) {
            t.positions[k] = v.states[k].pos;
            t.speeds[k] = v.states[k].speed;
        }
        trim(t);
        if (opt.noise_std > 0.0)
            for (auto& p : t.positions) p += noise(rng);
        out.add(std::move(t));
    }
    return out;
}

inline TrajectorySet synthesize_scenario(const ModelInstance& model, const Vector& true_params,
                                         const LeadProfile& lead, int n, double dt, double horizon,
                                         std::uint64_t seed, const SynthOptions& opt = {}) {
    return synthesize_scenario(model, std::span<const double>(true_params.data(), true_params.size()), lead, n, dt,
                               horizon, seed, opt);
}

}  // namespace cfcal
