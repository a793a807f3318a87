// Forward-Euler platoon simulation with downstream boundary conditions,
// regime memory, and constant reaction-time delays.

#pragma once

#include <algorithm>
#include <cstdint>
#include <ostream>
#include <span>
#include <vector>

#include "cfcal/cfmodels.hpp"
#include "cfcal/trajstore.hpp"

namespace cfcal {

enum class Phase : std::uint8_t { History = 0, Model = 1, Boundary = 2 };

inline const char* to_string(Phase p) {
    switch (p) {
        case Phase::History: return "history";
        case Phase::Model: return "model";
        case Phase::Boundary: return "boundary";
    }
    return "?";
}

// Per-vehicle simulated series over [first, last]. Phase, regime and leader
// describe the step leaving each frame.
struct VehicleSim {
    int id{0};
    Frame first{0};
    Frame last{0};
    Frame model_start{0};  // t_i (+ τ_i for delayed models)
    Frame model_end{0};    // T_{i-1} (T*_{i-1} for delayed models)
    double tau{0.0};
    Frame delay_steps{0};
    double delay_weight{0.0};
    std::vector<State> states;
    std::vector<std::uint8_t> regime;  // 0 outside the model phase
    std::vector<Phase> phase;
    std::vector<int> leader;  // leader id used by the step, 0 outside the model phase

    [[nodiscard]] std::size_t index(Frame f) const noexcept { return static_cast<std::size_t>(f - first); }
    [[nodiscard]] bool covers(Frame f) const noexcept { return f >= first && f <= last; }
    [[nodiscard]] const State& at(Frame f) const { return states[index(f)]; }
    [[nodiscard]] Frame loss_steps() const noexcept { return model_end - model_start; }
};

struct SimResult {
    double dt{0.1};
    std::vector<VehicleSim> vehicles;  // platoon slot order
    std::vector<Frame> events;         // θ_j plus regime switches encountered
    std::vector<std::size_t> offsets;  // parameter block offset per slot
    std::size_t num_params{0};
    bool delayed{false};
    bool diverged{false};
    int diverged_vehicle{0};
    Frame diverged_frame{0};

    [[nodiscard]] const VehicleSim& vehicle(int id) const {
        for (const auto& v : vehicles)
            if (v.id == id) return v;
        throw StructuralError("vehicle " + std::to_string(id) + " not simulated");
    }
};

// Model and parameter block for each platoon slot. `models` holds either one
// model shared by every vehicle or one per vehicle.
struct ParamLayout {
    std::vector<const ModelInstance*> model;
    std::vector<std::size_t> offset;
    std::size_t total{0};

    [[nodiscard]] std::span<const double> block(std::span<const double> p, std::size_t slot) const {
        return p.subspan(offset[slot], model[slot]->size());
    }
};

inline ParamLayout param_layout(std::size_t vehicles, std::span<const ModelInstance> models) {
    if (models.size() != 1 && models.size() != vehicles)
        throw StructuralError("need one model or one per vehicle, got " + std::to_string(models.size()));
    ParamLayout l;
    for (std::size_t s = 0; s < vehicles; ++s) {
        l.model.push_back(models.size() == 1 ? &models[0] : &models[s]);
        l.offset.push_back(l.total);
        l.total += l.model.back()->size();
    }
    return l;
}

namespace detail {

// Where a delayed lookup reads: frames f0 (weight 1-w) and f0-1 (weight w).
struct Lookup {
    Frame f0{0};
    double w{0.0};
};

struct LeadSource {
    int id{0};
    int slot{-1};
    const Trajectory* data{nullptr};
    double length{0.0};
};

struct StepInputs {
    Frame kd{0};
    State self_d;
    State lead_d;
    LeadSource src;
    Lookup look;
};

inline State lerp(const State& a, const State& b, double w) {
    return {(1.0 - w) * a.pos + w * b.pos, (1.0 - w) * a.speed + w * b.speed};
}

inline State boundary_step(const State& cur, double measured_speed_now, double measured_speed_next, double dt) {
    return {cur.pos + dt * measured_speed_now, measured_speed_next};
}

inline State model_step(int order, const State& cur, double r, double dt) {
    if (order == 2) return {cur.pos + dt * cur.speed, cur.speed + dt * r};
    return {cur.pos + dt * r, r};
}

struct Engine {
    const Platoon& platoon;
    const ParamLayout& layout;
    std::span<const double> params;
    const TrajectorySet& data;
    const TrajectorySet& leaders;

    [[nodiscard]] LeadSource lead_source(const PlatoonMember& m, Frame f) const {
        LeadSource s;
        const auto i = m.index(f);
        s.id = m.leader[i];
        s.slot = m.leader_slot[i];
        if (s.slot < 0) {
            s.data = leaders.find(s.id);
            if (s.data == nullptr) s.data = &data.at(s.id);
            s.length = s.data->length;
        } else {
            s.length = data.at(s.id).length;
        }
        return s;
    }

    // Clamps the fractional weight when the source lacks frame f0-1.
    [[nodiscard]] static Lookup lead_lookup(const LeadSource& src, const std::vector<VehicleSim>& sims, Frame f0,
                                            double w) {
        if (w == 0.0) return {f0, 0.0};
        const bool has_prev = src.slot >= 0 ? sims[static_cast<std::size_t>(src.slot)].covers(f0 - 1)
                                            : src.data->covers(f0 - 1);
        return {f0, has_prev ? w : 0.0};
    }

    [[nodiscard]] static State read(const LeadSource& src, const std::vector<VehicleSim>& sims, Frame f) {
        return src.slot >= 0 ? sims[static_cast<std::size_t>(src.slot)].at(f) : src.data->state_at(f);
    }

    [[nodiscard]] static State read_delayed(const LeadSource& src, const std::vector<VehicleSim>& sims,
                                            const Lookup& l) {
        const State a = read(src, sims, l.f0);
        if (l.w == 0.0) return a;
        return lerp(a, read(src, sims, l.f0 - 1), l.w);
    }

    // Delayed inputs of the model step leaving frame k for platoon slot s.
    [[nodiscard]] StepInputs step_inputs(std::size_t s, Frame k, const std::vector<VehicleSim>& sims) const {
        const auto& v = sims[s];
        StepInputs in;
        in.kd = k - v.delay_steps;
        in.self_d = v.delay_weight == 0.0 ? v.states[v.index(in.kd)]
                                          : lerp(v.states[v.index(in.kd)], v.states[v.index(in.kd - 1)], v.delay_weight);
        in.src = lead_source(platoon.member(s), in.kd);
        in.look = lead_lookup(in.src, sims, in.kd, v.delay_weight);
        in.lead_d = read_delayed(in.src, sims, in.look);
        return in;
    }

    SimResult run(bool allow_delay) const {
        SimResult res;
        res.dt = data.dt();
        res.events = platoon.event_frames();
        res.offsets = layout.offset;
        res.num_params = layout.total;
        if (params.size() != layout.total)
            throw StructuralError("expected " + std::to_string(layout.total) + " parameters, got " +
                                  std::to_string(params.size()));
        const double dt = data.dt();
        const auto n = platoon.size();
        res.vehicles.resize(n);
        for (std::size_t s = 0; s < n; ++s) {
            const auto& m = platoon.member(s);
            const auto& model = *layout.model[s];
            if (!model.is_ode())
                throw ModelError("trajectory translation is not simulated as an ODE; use newell_tt_translate");
            const auto block = layout.block(params, s);
            const double tau = model.tau(block);
            if (model.delayed() && !allow_delay)
                throw StructuralError("delayed model passed to the ODE simulator; use simulate_dde");
            if (tau < 0.0 || tau > model.tau_max)
                throw ParameterError("reaction time " + std::to_string(tau) + " outside [0, " +
                                     std::to_string(model.tau_max) + "]");
            const auto [q, w] = split_delay(tau, dt);
            res.delayed = res.delayed || model.delayed();

            auto& v = res.vehicles[s];
            v.id = m.id;
            v.first = m.first;
            v.last = m.last;
            v.tau = tau;
            v.delay_steps = q;
            v.delay_weight = w;
            v.model_start = std::min(m.first + q + (w > 0.0 ? 1 : 0), m.last);
            v.model_end = std::max(v.model_start, std::min(m.model_end + q, m.last));
            const auto len = static_cast<std::size_t>(m.last - m.first + 1);
            v.states.assign(len, State{});
            v.regime.assign(len, 0);
            v.leader.assign(len, 0);
            v.phase.assign(len, Phase::Boundary);
            const auto& traj = data.at(m.id);
            for (Frame f = m.first; f <= v.model_start; ++f) v.states[v.index(f)] = traj.state_at(f);
            for (Frame f = m.first; f < v.model_start; ++f) v.phase[v.index(f)] = Phase::History;
            for (Frame f = v.model_start; f < v.model_end; ++f) v.phase[v.index(f)] = Phase::Model;
        }

        for (Frame k = platoon.first_frame(); k < platoon.last_frame(); ++k) {
            for (std::size_t s = 0; s < n; ++s) {
                auto& v = res.vehicles[s];
                if (k < v.model_start || k >= v.last) continue;
                const auto& traj = data.at(v.id);
                const auto i = v.index(k);
                State next;
                if (k < v.model_end) {
                    const auto& model = *layout.model[s];
                    const auto in = step_inputs(s, k, res.vehicles);
                    const auto r = rate(model, params.data() + layout.offset[s], in.self_d, in.lead_d, in.src.length);
                    next = model_step(model.order(), v.states[i], r.value, dt);
                    if (k + 1 == v.model_end) next.speed = traj.speed_at(k + 1);
                    v.regime[i] = static_cast<std::uint8_t>(r.regime);
                    v.leader[i] = in.src.id;
                    if (i > 0 && v.regime[i - 1] != 0 && v.regime[i - 1] != v.regime[i]) res.events.push_back(k);
                } else {
                    next = boundary_step(v.states[i], traj.speed_at(k), traj.speed_at(k + 1), dt);
                }
                if (!is_finite(next)) {
                    res.diverged = true;
                    res.diverged_vehicle = v.id;
                    res.diverged_frame = k + 1;
                    return res;
                }
                v.states[i + 1] = next;
            }
        }
        std::sort(res.events.begin(), res.events.end());
        res.events.erase(std::unique(res.events.begin(), res.events.end()), res.events.end());
        return res;
    }
};

}  // namespace detail

// ODE platoon simulation. Out-of-platoon leaders are read from `leader_data`
// when given (e.g. previously calibrated simulated trajectories), else from
// `data`.
inline SimResult simulate_platoon(const Platoon& platoon, std::span<const ModelInstance> models,
                                  std::span<const double> params, const TrajectorySet& data,
                                  const TrajectorySet* leader_data = nullptr) {
    const auto layout = param_layout(platoon.size(), models);
    detail::Engine e{platoon, layout, params, data, leader_data ? *leader_data : data};
    return e.run(false);
}

// DDE platoon simulation: each delayed model reads its own and its leader's
// state at t - τ_i by linear interpolation on the grid.
inline SimResult simulate_dde(const Platoon& platoon, std::span<const ModelInstance> models,
                              std::span<const double> params, const TrajectorySet& data,
                              const TrajectorySet* leader_data = nullptr) {
    const auto layout = param_layout(platoon.size(), models);
    detail::Engine e{platoon, layout, params, data, leader_data ? *leader_data : data};
    return e.run(true);
}

inline SimResult simulate_platoon(const Platoon& platoon, const ModelInstance& model, const Vector& params,
                                  const TrajectorySet& data, const TrajectorySet* leader_data = nullptr) {
    return simulate_platoon(platoon, std::span<const ModelInstance>(&model, 1),
                            std::span<const double>(params.data(), static_cast<std::size_t>(params.size())), data,
                            leader_data);
}

inline SimResult simulate_dde(const Platoon& platoon, const ModelInstance& model, const Vector& params,
                              const TrajectorySet& data, const TrajectorySet* leader_data = nullptr) {
    return simulate_dde(platoon, std::span<const ModelInstance>(&model, 1),
                        std::span<const double>(params.data(), static_cast<std::size_t>(params.size())), data,
                        leader_data);
}

// Downstream boundary rule on [T_{i-1}, T_i]: speed follows the measurement,
// position integrates it from the simulated position at T_{i-1}.
// `measured_speeds` covers the window, one value per frame.
inline std::vector<State> apply_boundary(double start_position, std::span<const double> measured_speeds, double dt) {
    if (measured_speeds.empty()) throw StructuralError("boundary window needs at least one frame");
    std::vector<State> out;
    out.reserve(measured_speeds.size());
    out.push_back({start_position, measured_speeds[0]});
    for (std::size_t k = 0; k + 1 < measured_speeds.size(); ++k)
        out.push_back(detail::boundary_step(out.back(), measured_speeds[k], measured_speeds[k + 1], dt));
    return out;
}

// Copy of `data` with the platoon's measured positions and speeds replaced by
// the simulated ones.
inline TrajectorySet with_simulated(const TrajectorySet& data, const SimResult& sim) {
    if (sim.diverged) throw StructuralError("cannot export a diverged simulation");
    TrajectorySet out = data;
    for (const auto& v : sim.vehicles) {
        Trajectory t = data.at(v.id);
        for (std::size_t k = 0; k < v.states.size(); ++k) {
            t.positions[k] = v.states[k].pos;
            t.speeds[k] = v.states[k].speed;
        }
        out.replace(std::move(t));
    }
    return out;
}

// Trace dump for plotting.
inline void write_trace(std::ostream& out, const SimResult& sim) {
    out << "vehicle_id,time,position,speed,regime,phase\n";
    auto old = out.precision(std::numeric_limits<double>::max_digits10);
    for (const auto& v : sim.vehicles)
        for (Frame f = v.first; f <= v.last; ++f) {
            const auto i = v.index(f);
            out << v.id << ',' << static_cast<double>(f) * sim.dt << ',' << v.states[i].pos << ','
                << v.states[i].speed << ',' << static_cast<int>(v.regime[i]) << ',' << to_string(v.phase[i])
                << '\n';
        }
    out.precision(old);
}

}  // namespace cfcal
