// Squared-position calibration loss, its discrete objective and RMSE.

#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "cfcal/simulate.hpp"

namespace cfcal {

struct LossSpec {
    enum class Kind { SquaredPosition };
    Kind kind{Kind::SquaredPosition};
    // Placeholder for a speed term; not implemented.
    double speed_weight{0.0};

    void check() const {
        if (speed_weight != 0.0) throw StructuralError("speed loss is not implemented");
    }
};

namespace detail {

inline void check_grid(const SimResult& sim, const TrajectorySet& data) {
    if (std::abs(sim.dt - data.dt()) > 1e-12 * std::max(1.0, data.dt()))
        throw StructuralError("simulation and data grids differ");
    for (const auto& v : sim.vehicles) {
        const auto* t = data.find(v.id);
        if (t == nullptr) throw StructuralError("vehicle " + std::to_string(v.id) + " missing from data");
        if (t->first_frame != v.first || t->last_frame() != v.last)
            throw StructuralError("grid mismatch for vehicle " + std::to_string(v.id));
    }
}

}  // namespace detail

// Loss of each vehicle over its model window [t_i (+τ_i), T_{i-1}).
inline std::vector<double> vehicle_losses(const SimResult& sim, const TrajectorySet& data, const LossSpec& loss = {}) {
    loss.check();
    detail::check_grid(sim, data);
    std::vector<double> out(sim.vehicles.size(), kInf);
    if (sim.diverged) return out;
    for (std::size_t s = 0; s < sim.vehicles.size(); ++s) {
        const auto& v = sim.vehicles[s];
        const auto& t = data.at(v.id);
        double f = 0.0;
        for (Frame k = v.model_start; k < v.model_end; ++k) {
            const double e = v.at(k).pos - t.position_at(k);
            f += e * e;
        }
        out[s] = f;
    }
    return out;
}

inline double objective_value(const SimResult& sim, const TrajectorySet& data, const LossSpec& loss = {}) {
    const auto per = vehicle_losses(sim, data, loss);
    if (sim.diverged) return kInf;
    double f = 0.0;
    for (double x : per) f += x;
    return f;
}

// ∂f/∂x_i at frame f; zero outside the loss window.
inline Eigen::Vector2d loss_state_partial(const SimResult& sim, const TrajectorySet& data, Frame f, int vehicle) {
    const auto& v = sim.vehicle(vehicle);
    if (f < v.model_start || f >= v.model_end) return Eigen::Vector2d::Zero();
    return {2.0 * (v.at(f).pos - data.at(vehicle).position_at(f)), 0.0};
}

inline Frame loss_steps(const SimResult& sim) {
    Frame n = 0;
    for (const auto& v : sim.vehicles) n += v.loss_steps();
    return n;
}

inline double rmse(double F, Frame steps) {
    if (steps <= 0) throw StructuralError("RMSE needs at least one loss step");
    return std::sqrt(F / static_cast<double>(steps));
}

inline double rmse(double F, const SimResult& sim) { return rmse(F, loss_steps(sim)); }

// Losses and step counts pooled over several calibration units.
struct LossTally {
    double F{0.0};
    Frame steps{0};
};

inline double pooled_rmse(std::span<const LossTally> parts) {
    LossTally t;
    for (const auto& p : parts) {
        t.F += p.F;
        t.steps += p.steps;
    }
    return rmse(t.F, t.steps);
}

inline double average_rmse(std::span<const LossTally> parts) {
    if (parts.empty()) throw StructuralError("no RMSE values to average");
    double s = 0.0;
    for (const auto& p : parts) s += rmse(p.F, p.steps);
    return s / static_cast<double>(parts.size());
}

// Trajectory-translation loss evaluated on both grids: the data grid (the
// translated lead interpolated at t - alpha) and the shifted grid t_j + alpha
// (follower measurement interpolated there). The sum is halved. Frames before
// `from` or after `to` are excluded on both grids.
inline double tt_objective(const Trajectory& follower, const Trajectory& lead, double alpha, double s_jam, Frame from,
                           Frame to) {
    if (alpha < 0.0) throw ParameterError("alpha must be nonnegative");
    const double dt = follower.dt;
    auto interp = [](const Trajectory& t, double x_frames) -> std::pair<bool, double> {
        const double lo = std::floor(x_frames);
        const auto f0 = static_cast<Frame>(lo);
        const double w = x_frames - lo;
        if (!t.covers(f0)) return {false, 0.0};
        if (w == 0.0) return {true, t.position_at(f0)};
        if (!t.covers(f0 + 1)) return {false, 0.0};
        return {true, (1.0 - w) * t.position_at(f0) + w * t.position_at(f0 + 1)};
    };
    const auto [q, w] = detail::split_delay(alpha, dt);
    const double shift = static_cast<double>(q) + w;
    double a = 0.0;
    for (Frame k = from; k < to; ++k) {
        const auto [ok, xl] = interp(lead, static_cast<double>(k) - shift);
        if (!ok) continue;
        const double e = xl - s_jam - follower.position_at(k);
        a += e * e;
    }
    double b = 0.0;
    for (Frame j = lead.first_frame; j <= lead.last_frame(); ++j) {
        const double at = static_cast<double>(j) + shift;
        if (at < static_cast<double>(from) || at >= static_cast<double>(to)) continue;
        const auto [ok, xf] = interp(follower, at);
        if (!ok) continue;
        const double e = lead.position_at(j) - s_jam - xf;
        b += e * e;
    }
    return 0.5 * (a + b);
}

}  // namespace cfcal
