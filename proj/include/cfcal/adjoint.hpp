// Discrete adjoint of the Euler simulator: exact gradients of the discrete
// objective, forward sensitivities, and the Hessian assembled from both.

#pragma once

#include <string>
#include <vector>

#include "json.hpp"

#include "cfcal/objective.hpp"

namespace cfcal {

// λ_i per frame on [t_i, T_i]. The discrete multiplier of the Euler update
// for frame k+1 is -λ_i(k+1); λ = -∂F/∂x along the simulated path.
struct AdjointState {
    std::vector<int> ids;
    std::vector<Frame> first;
    std::vector<std::vector<Eigen::Vector2d>> lambda;

    [[nodiscard]] const Eigen::Vector2d& at(std::size_t slot, Frame f) const {
        return lambda[slot][static_cast<std::size_t>(f - first[slot])];
    }
};

// ∂x_i/∂p per frame, stored as a (2·frames) x m matrix per vehicle; rows 2k
// and 2k+1 hold the position and speed sensitivities at frame first+k.
struct SensitivityState {
    std::vector<int> ids;
    std::vector<Frame> first;
    std::vector<Matrix> rows;

    [[nodiscard]] Matrix at(std::size_t slot, Frame f) const {
        return rows[slot].middleRows(2 * static_cast<Eigen::Index>(f - first[slot]), 2);
    }
};

struct GradientResult {
    double F{0.0};
    Vector gradient;
    AdjointState adjoint;
    std::size_t derivative_evals{0};  // model derivative evaluations used
};

struct HessianResult {
    double F{0.0};
    Vector gradient;
    Matrix hessian;          // symmetrized
    double asymmetry{0.0};   // ‖H - Hᵀ‖_F / ‖H‖_F before symmetrizing
    std::size_t derivative_evals{0};
};

struct AdjointOptions {
    bool coupling{true};       // follower-to-leader adjoint coupling (disable only as a control)
    bool keep_adjoint{false};  // fill GradientResult::adjoint
};

namespace detail {

struct Reverse {
    double F{0.0};
    Vector grad;
    std::vector<std::vector<Eigen::Vector2d>> mu;  // ∂F/∂x per vehicle and frame
    std::vector<std::vector<double>> ga;           // ∂F/∂r per model step
    std::size_t evals{0};
};

inline void check_sim(const SimResult& sim, const TrajectorySet& data, const ParamLayout& layout,
                      std::span<const double> params) {
    if (sim.diverged) throw StructuralError("cannot differentiate a diverged simulation");
    check_grid(sim, data);
    if (params.size() != layout.total || sim.num_params != layout.total)
        throw StructuralError("parameter vector does not match the simulation");
    for (const auto& v : sim.vehicles)
        if (v.regime.size() != v.states.size() || v.phase.size() != v.states.size() ||
            v.leader.size() != v.states.size())
            throw StructuralError("missing regime memory for vehicle " + std::to_string(v.id));
}

// Δ of a state series across one grid step backwards: (x(f-1) - x(f)) / dt,
// the derivative of a delayed read with respect to the delay.
template <class Read>
inline Eigen::Vector2d delay_slope(Read read, bool has_prev, Frame f, double dt) {
    if (!has_prev) return Eigen::Vector2d::Zero();
    const State a = read(f);
    const State b = read(f - 1);
    return {(b.pos - a.pos) / dt, (b.speed - a.speed) / dt};
}

struct StepDerivative {
    Eigen::Vector2d self;
    Eigen::Vector2d lead;
    double dtau{0.0};  // ∂r/∂τ through the delayed reads
};

inline StepDerivative step_derivative(const Engine& eng, const SimResult& sim, std::size_t s, const StepInputs& in,
                                      const LocalGradient& gr) {
    const auto& v = sim.vehicles[s];
    StepDerivative d;
    d.self = {gr[kSelfPos], gr[kSelfSpeed]};
    d.lead = {gr[kLeadPos], gr[kLeadSpeed]};
    if (!eng.layout.model[s]->delayed()) return d;
    const double dt = sim.dt;
    const auto self_read = [&](Frame f) { return v.at(f); };
    const Eigen::Vector2d dy = delay_slope(self_read, v.covers(in.kd - 1), in.kd, dt);
    const bool lead_prev = in.look.w > 0.0 || (v.delay_weight == 0.0 && (in.src.slot >= 0
                                                                             ? sim.vehicles[static_cast<std::size_t>(in.src.slot)].covers(in.kd - 1)
                                                                             : in.src.data->covers(in.kd - 1)));
    const auto lead_read = [&](Frame f) { return Engine::read(in.src, sim.vehicles, f); };
    const Eigen::Vector2d dz = delay_slope(lead_read, lead_prev, in.kd, dt);
    d.dtau = d.self.dot(dy) + d.lead.dot(dz);
    return d;
}

inline Reverse reverse_pass(const Engine& eng, const SimResult& sim, const LossSpec& loss, const AdjointOptions& opt,
                            bool keep_ga) {
    loss.check();
    check_sim(sim, eng.data, eng.layout, eng.params);
    const double dt = sim.dt;
    const auto n = sim.vehicles.size();
    Reverse out;
    out.grad = Vector::Zero(static_cast<Eigen::Index>(eng.layout.total));
    out.mu.resize(n);
    if (keep_ga) out.ga.resize(n);
    Frame lo = sim.vehicles[0].first;
    Frame hi = sim.vehicles[0].last;
    for (std::size_t s = 0; s < n; ++s) {
        const auto& v = sim.vehicles[s];
        lo = std::min(lo, v.first);
        hi = std::max(hi, v.last);
        out.mu[s].assign(v.states.size(), Eigen::Vector2d::Zero());
        if (keep_ga) out.ga[s].assign(v.states.size(), 0.0);
        const auto& t = eng.data.at(v.id);
        for (Frame k = v.model_start; k < v.model_end; ++k) {
            const double e = v.at(k).pos - t.position_at(k);
            out.F += e * e;
            out.mu[s][v.index(k)].x() = 2.0 * e;
        }
    }

    LocalGradient gr;
    for (Frame k = hi - 1; k >= lo; --k) {
        for (std::size_t s = 0; s < n; ++s) {
            const auto& v = sim.vehicles[s];
            if (k < v.model_start || k >= v.last) continue;
            const auto i = v.index(k);
            Eigen::Vector2d g = out.mu[s][i + 1];
            auto& mu = out.mu[s];
            if (k >= v.model_end) {
                mu[i].x() += g.x();
                continue;
            }
            if (v.regime[i] == 0)
                throw StructuralError("missing regime memory for vehicle " + std::to_string(v.id));
            const auto& model = *eng.layout.model[s];
            if (k + 1 == v.model_end) g.y() = 0.0;
            double ga;
            mu[i].x() += g.x();
            if (model.order() == 2) {
                mu[i].y() += dt * g.x() + g.y();
                ga = dt * g.y();
            } else {
                ga = dt * g.x() + g.y();
            }
            if (keep_ga) out.ga[s][i] = ga;

            const auto in = eng.step_inputs(s, k, sim.vehicles);
            const auto off = eng.layout.offset[s];
            rate_gradient(model, eng.params.data() + off, in.self_d, in.lead_d, in.src.length, v.regime[i], gr);
            ++out.evals;
            const auto d = step_derivative(eng, sim, s, in, gr);
            const double w = v.delay_weight;
            mu[v.index(in.kd)] += ((1.0 - w) * ga) * d.self;
            if (w > 0.0) mu[v.index(in.kd - 1)] += (w * ga) * d.self;
            if (in.src.slot >= 0 && opt.coupling) {
                const auto ls = static_cast<std::size_t>(in.src.slot);
                const auto& L = sim.vehicles[ls];
                out.mu[ls][L.index(in.look.f0)] += ((1.0 - in.look.w) * ga) * d.lead;
                if (in.look.w > 0.0) out.mu[ls][L.index(in.look.f0 - 1)] += (in.look.w * ga) * d.lead;
            }
            for (std::size_t j = 0; j < model.core_size(); ++j)
                out.grad[static_cast<Eigen::Index>(off + j)] += ga * gr[kParam0 + static_cast<int>(j)];
            if (model.delayed()) out.grad[static_cast<Eigen::Index>(off + *model.delay_index)] += ga * d.dtau;
        }
    }
    return out;
}

inline AdjointState to_adjoint_state(const SimResult& sim, const Reverse& r) {
    AdjointState a;
    for (std::size_t s = 0; s < sim.vehicles.size(); ++s) {
        a.ids.push_back(sim.vehicles[s].id);
        a.first.push_back(sim.vehicles[s].first);
        auto lam = r.mu[s];
        for (auto& x : lam) x = -x;
        a.lambda.push_back(std::move(lam));
    }
    return a;
}

inline GradientResult gradient_impl(const SimResult& sim, const Platoon& platoon, std::span<const ModelInstance> models,
                                    std::span<const double> params, const TrajectorySet& data,
                                    const TrajectorySet* leader_data, const LossSpec& loss,
                                    const AdjointOptions& opt) {
    const auto layout = param_layout(platoon.size(), models);
    const Engine eng{platoon, layout, params, data, leader_data ? *leader_data : data};
    auto r = reverse_pass(eng, sim, loss, opt, false);
    GradientResult g;
    g.F = r.F;
    g.gradient = std::move(r.grad);
    g.derivative_evals = r.evals;
    if (opt.keep_adjoint) g.adjoint = to_adjoint_state(sim, r);
    return g;
}

}  // namespace detail

// dF/dp for an ODE platoon simulated with the same parameters.
inline GradientResult adjoint_gradient(const SimResult& sim, const Platoon& platoon,
                                       std::span<const ModelInstance> models, std::span<const double> params,
                                       const TrajectorySet& data, const LossSpec& loss = {},
                                       const TrajectorySet* leader_data = nullptr, const AdjointOptions& opt = {}) {
    for (const auto& m : models)
        if (m.delayed()) throw StructuralError("delayed model passed to the ODE adjoint; use adjoint_gradient_dde");
    return detail::gradient_impl(sim, platoon, models, params, data, leader_data, loss, opt);
}

// dF/dp for a delayed platoon, including the reaction-time components.
inline GradientResult adjoint_gradient_dde(const SimResult& sim, const Platoon& platoon,
                                           std::span<const ModelInstance> models, std::span<const double> params,
                                           const TrajectorySet& data, const LossSpec& loss = {},
                                           const TrajectorySet* leader_data = nullptr,
                                           const AdjointOptions& opt = {}) {
    return detail::gradient_impl(sim, platoon, models, params, data, leader_data, loss, opt);
}

namespace detail {

// Forward sensitivity recursion. When `ga` is given, also accumulates the
// model-curvature part of the Hessian into *H.
inline SensitivityState variational_impl(const Engine& eng, const SimResult& sim,
                                         const std::vector<std::vector<double>>* ga, Matrix* H, std::size_t* evals) {
    const double dt = sim.dt;
    const auto n = sim.vehicles.size();
    const auto M = static_cast<Eigen::Index>(eng.layout.total);
    SensitivityState S;
    Frame lo = sim.vehicles[0].first;
    Frame hi = sim.vehicles[0].last;
    for (const auto& v : sim.vehicles) {
        S.ids.push_back(v.id);
        S.first.push_back(v.first);
        S.rows.push_back(Matrix::Zero(2 * static_cast<Eigen::Index>(v.states.size()), M));
        lo = std::min(lo, v.first);
        hi = std::max(hi, v.last);
    }
    LocalGradient gr;
    LocalHessian hr;
    Eigen::Matrix<double, kLocalDim, Eigen::Dynamic> Jz(kLocalDim, M);
    Eigen::RowVectorXd dr(M);
    Eigen::Matrix<double, 2, Eigen::Dynamic> Js(2, M), Jl(2, M);
    for (Frame k = lo; k < hi; ++k) {
        for (std::size_t s = 0; s < n; ++s) {
            const auto& v = sim.vehicles[s];
            if (k < v.model_start || k >= v.last) continue;
            const auto i = static_cast<Eigen::Index>(v.index(k));
            auto& R = S.rows[s];
            if (k >= v.model_end) {
                R.row(2 * i + 2) = R.row(2 * i);
                R.row(2 * i + 3).setZero();
                continue;
            }
            const auto& model = *eng.layout.model[s];
            const auto off = eng.layout.offset[s];
            const auto in = eng.step_inputs(s, k, sim.vehicles);
            const int regime = v.regime[static_cast<std::size_t>(i)];
            if (regime == 0) throw StructuralError("missing regime memory for vehicle " + std::to_string(v.id));
            if (H != nullptr)
                rate_hessian(model, eng.params.data() + off, in.self_d, in.lead_d, in.src.length, regime, gr, hr);
            else
                rate_gradient(model, eng.params.data() + off, in.self_d, in.lead_d, in.src.length, regime, gr);
            if (evals) ++*evals;
            const auto d = step_derivative(eng, sim, s, in, gr);

            const double w = v.delay_weight;
            const auto kd = static_cast<Eigen::Index>(v.index(in.kd));
            Js = (1.0 - w) * R.middleRows(2 * kd, 2);
            if (w > 0.0) Js += w * R.middleRows(2 * kd - 2, 2);
            Jl.setZero();
            if (in.src.slot >= 0) {
                const auto ls = static_cast<std::size_t>(in.src.slot);
                const auto& L = sim.vehicles[ls];
                const auto lf = static_cast<Eigen::Index>(L.index(in.look.f0));
                Jl = (1.0 - in.look.w) * S.rows[ls].middleRows(2 * lf, 2);
                if (in.look.w > 0.0) Jl += in.look.w * S.rows[ls].middleRows(2 * lf - 2, 2);
            }
            dr = d.self.transpose() * Js + d.lead.transpose() * Jl;
            for (std::size_t j = 0; j < model.core_size(); ++j)
                dr[static_cast<Eigen::Index>(off + j)] += gr[kParam0 + static_cast<int>(j)];
            if (model.delayed()) dr[static_cast<Eigen::Index>(off + *model.delay_index)] += d.dtau;

            if (model.order() == 2) {
                R.row(2 * i + 2) = R.row(2 * i) + dt * R.row(2 * i + 1);
                R.row(2 * i + 3) = R.row(2 * i + 1) + dt * dr;
            } else {
                R.row(2 * i + 2) = R.row(2 * i) + dt * dr;
                R.row(2 * i + 3) = dr;
            }
            if (k + 1 == v.model_end) R.row(2 * i + 3).setZero();

            if (H != nullptr) {
                const double g = (*ga)[s][static_cast<std::size_t>(i)];
                if (g == 0.0) continue;
                Jz.setZero();
                Jz.middleRows(kSelfPos, 2) = Js;
                Jz.middleRows(kLeadPos, 2) = Jl;
                for (std::size_t j = 0; j < model.core_size(); ++j)
                    Jz(kParam0 + static_cast<int>(j), static_cast<Eigen::Index>(off + j)) = 1.0;
                const Matrix t = hr * Jz;
                H->noalias() += g * (Jz.transpose() * t);
            }
        }
    }
    return S;
}

}  // namespace detail

// ∂x/∂p along the simulated path; zero on the history window and frozen in
// position over the boundary window.
inline SensitivityState variational_sensitivities(const SimResult& sim, const Platoon& platoon,
                                                  std::span<const ModelInstance> models,
                                                  std::span<const double> params, const TrajectorySet& data,
                                                  const TrajectorySet* leader_data = nullptr) {
    const auto layout = param_layout(platoon.size(), models);
    detail::check_sim(sim, data, layout, params);
    const detail::Engine eng{platoon, layout, params, data, leader_data ? *leader_data : data};
    return detail::variational_impl(eng, sim, nullptr, nullptr, nullptr);
}

// F, dF/dp and d²F/dp² for Hessian-capable, undelayed models.
inline HessianResult adjoint_hessian(const SimResult& sim, const Platoon& platoon,
                                     std::span<const ModelInstance> models, std::span<const double> params,
                                     const TrajectorySet& data, const LossSpec& loss = {},
                                     const TrajectorySet* leader_data = nullptr) {
    for (const auto& m : models) {
        if (!m.hessian_capable()) throw ModelError("Hessian unsupported for model kind " + to_string(m.kind));
        if (m.delayed()) throw ModelError("Hessian unsupported for delayed models");
    }
    const auto layout = param_layout(platoon.size(), models);
    const detail::Engine eng{platoon, layout, params, data, leader_data ? *leader_data : data};
    auto r = detail::reverse_pass(eng, sim, loss, {}, true);
    const auto M = static_cast<Eigen::Index>(layout.total);
    HessianResult out;
    out.F = r.F;
    out.gradient = r.grad;
    out.derivative_evals = r.evals;
    Matrix H = Matrix::Zero(M, M);
    const auto S = detail::variational_impl(eng, sim, &r.ga, &H, &out.derivative_evals);
    for (std::size_t s = 0; s < sim.vehicles.size(); ++s) {
        const auto& v = sim.vehicles[s];
        for (Frame k = v.model_start; k < v.model_end; ++k) {
            const auto row = S.rows[s].row(2 * static_cast<Eigen::Index>(v.index(k)));
            H.noalias() += 2.0 * row.transpose() * row;
        }
    }
    const double norm = H.norm();
    out.asymmetry = norm > 0.0 ? (H - H.transpose()).norm() / norm : 0.0;
    out.hessian = 0.5 * (H + H.transpose());
    return out;
}

// Labels "<vehicle id>.<parameter>" in parameter-vector order.
inline std::vector<std::string> param_labels(const Platoon& platoon, std::span<const ModelInstance> models) {
    const auto layout = param_layout(platoon.size(), models);
    std::vector<std::string> out;
    for (std::size_t s = 0; s < platoon.size(); ++s)
        for (const auto& l : layout.model[s]->labels) out.push_back(std::to_string(platoon.member(s).id) + "." + l);
    return out;
}

inline nlohmann::ordered_json gradient_dump(const Vector& gradient, const std::vector<std::string>& labels) {
    if (static_cast<std::size_t>(gradient.size()) != labels.size())
        throw StructuralError("gradient and labels differ in length");
    nlohmann::ordered_json j = nlohmann::ordered_json::object();
    for (std::size_t k = 0; k < labels.size(); ++k) j[labels[k]] = gradient[static_cast<Eigen::Index>(k)];
    return j;
}

}  // namespace cfcal
