// A platoon calibration problem: simulation, objective, adjoint or
// finite-difference gradients, and the optimizer-facing Problem.

#pragma once

#include <memory>
#include <optional>

#include "cfcal/adjoint.hpp"
#include "cfcal/gradcheck.hpp"
#include "cfcal/optimize.hpp"

namespace cfcal {

enum class GradientMode { Adjoint, ForwardFD, CentralFD };

inline std::string to_string(GradientMode g) {
    switch (g) {
        case GradientMode::Adjoint: return "adjoint";
        case GradientMode::ForwardFD: return "forward-fd";
        case GradientMode::CentralFD: return "central-fd";
    }
    return "?";
}

inline GradientMode parse_gradient_mode(const std::string& s) {
    if (s == "adjoint" || s == "adj") return GradientMode::Adjoint;
    if (s == "forward-fd" || s == "fd" || s == "fin") return GradientMode::ForwardFD;
    if (s == "central-fd") return GradientMode::CentralFD;
    throw StructuralError("unknown gradient mode '" + s + "'");
}

class Calibration {
public:
    Calibration(TrajectorySet data, std::vector<int> ids, std::vector<ModelInstance> models,
                std::optional<TrajectorySet> leader_data = std::nullopt)
        : ctx_(std::make_shared<Context>(std::move(data), std::move(ids), std::move(models), std::move(leader_data))) {}

    [[nodiscard]] const Platoon& platoon() const { return ctx_->platoon; }
    [[nodiscard]] const TrajectorySet& data() const { return ctx_->data; }
    [[nodiscard]] std::span<const ModelInstance> models() const { return ctx_->models; }
    [[nodiscard]] std::size_t dim() const { return ctx_->layout.total; }
    [[nodiscard]] bool delayed() const { return ctx_->delayed; }
    [[nodiscard]] const TrajectorySet* leader_data() const {
        return ctx_->leader_data ? &*ctx_->leader_data : nullptr;
    }

    [[nodiscard]] Vector lower() const { return ctx_->stack([](const ModelInstance& m) { return m.lower; }); }
    [[nodiscard]] Vector upper() const { return ctx_->stack([](const ModelInstance& m) { return m.upper; }); }
    [[nodiscard]] Vector defaults() const { return ctx_->stack([](const ModelInstance& m) { return m.params; }); }
    // One parameter block repeated for every vehicle.
    [[nodiscard]] Vector tile(const Vector& block) const {
        if (ctx_->models.size() != 1 && ctx_->platoon.size() != 1)
            throw StructuralError("tiling needs one shared model");
        const auto n = static_cast<Eigen::Index>(ctx_->platoon.size());
        Vector out(n * block.size());
        for (Eigen::Index s = 0; s < n; ++s) out.segment(s * block.size(), block.size()) = block;
        return out;
    }

    [[nodiscard]] SimResult simulate(const Vector& p) const { return ctx_->simulate(p); }

    // +∞ when the simulation diverges or parameters leave the model domain.
    [[nodiscard]] double objective(const Vector& p) const { return ctx_->objective(p); }
    [[nodiscard]] double objective_gradient(const Vector& p, Vector& g, GradientMode mode = GradientMode::Adjoint) const {
        return ctx_->objective_gradient(p, g, mode);
    }
    [[nodiscard]] double objective_hessian(const Vector& p, Vector& g, Matrix& H) const {
        return ctx_->objective_hessian(p, g, H);
    }
    [[nodiscard]] double rmse_at(const Vector& p) const {
        const auto sim = simulate(p);
        return rmse(objective_value(sim, ctx_->data), sim);
    }
    [[nodiscard]] LossTally tally(const Vector& p) const {
        const auto sim = simulate(p);
        return {objective_value(sim, ctx_->data), loss_steps(sim)};
    }

    // Optimizer-facing problem. The callables share ownership of the
    // calibration data, so the Problem may outlive this object.
    [[nodiscard]] opt::Problem problem(GradientMode mode = GradientMode::Adjoint) const {
        opt::Problem p;
        auto ctx = ctx_;
        p.objective = [ctx](const Vector& x) { return ctx->objective(x); };
        p.objective_gradient = [ctx, mode](const Vector& x, Vector& g) { return ctx->objective_gradient(x, g, mode); };
        bool hess = !ctx->delayed;
        for (const auto& m : ctx->models) hess = hess && m.hessian_capable();
        if (hess)
            p.objective_hessian = [ctx](const Vector& x, Vector& g, Matrix& H) {
                return ctx->objective_hessian(x, g, H);
            };
        p.lower = lower();
        p.upper = upper();
        const Frame steps = ctx->nominal_steps;
        p.rmse = [steps](double F) { return rmse(F, steps); };
        const double m = static_cast<double>(dim());
        p.grad_cost = mode == GradientMode::Adjoint ? 1.0 : mode == GradientMode::ForwardFD ? m : 2.0 * m;
        p.hess_cost = 1.0;
        return p;
    }

private:
    struct Context {
        TrajectorySet data;
        Platoon platoon;
        std::vector<ModelInstance> models;
        std::optional<TrajectorySet> leader_data;
        ParamLayout layout;
        bool delayed{false};
        Frame nominal_steps{0};

        Context(TrajectorySet d, std::vector<int> ids, std::vector<ModelInstance> ms, std::optional<TrajectorySet> ld)
            : data(std::move(d)), platoon(build_platoon(data, ids)), models(std::move(ms)), leader_data(std::move(ld)) {
            layout = param_layout(platoon.size(), models);
            for (const auto& m : models) delayed = delayed || m.delayed();
            const auto sim = simulate(stack([](const ModelInstance& m) { return m.params; }));
            nominal_steps = loss_steps(sim);
        }

        template <class Get>
        Vector stack(Get get) const {
            Vector out(static_cast<Eigen::Index>(layout.total));
            for (std::size_t s = 0; s < platoon.size(); ++s) {
                const Vector b = get(*layout.model[s]);
                out.segment(static_cast<Eigen::Index>(layout.offset[s]), b.size()) = b;
            }
            return out;
        }

        [[nodiscard]] std::span<const double> span(const Vector& p) const {
            return {p.data(), static_cast<std::size_t>(p.size())};
        }
        [[nodiscard]] const TrajectorySet* leaders() const { return leader_data ? &*leader_data : nullptr; }

        [[nodiscard]] SimResult simulate(const Vector& p) const {
            return delayed ? simulate_dde(platoon, models, span(p), data, leaders())
                           : simulate_platoon(platoon, models, span(p), data, leaders());
        }

        [[nodiscard]] double objective(const Vector& p) const {
            try {
                return objective_value(simulate(p), data);
            } catch (const ParameterError&) {
                return kInf;
            } catch (const ModelError&) {
                return kInf;
            }
        }

        double objective_gradient(const Vector& p, Vector& g, GradientMode mode) const {
            if (mode != GradientMode::Adjoint) {
                const auto est = fd_gradient([this](const Vector& x) { return objective(x); }, p,
                                             mode == GradientMode::ForwardFD ? FdScheme::Forward : FdScheme::Central);
                g = est.gradient;
                return est.value;
            }
            SimResult sim;
            try {
                sim = simulate(p);
            } catch (const ParameterError&) {
                g = Vector::Zero(p.size());
                return kInf;
            }
            if (sim.diverged) {
                g = Vector::Zero(p.size());
                return kInf;
            }
            auto r = delayed ? adjoint_gradient_dde(sim, platoon, models, span(p), data, {}, leaders())
                             : adjoint_gradient(sim, platoon, models, span(p), data, {}, leaders());
            g = std::move(r.gradient);
            return r.F;
        }

        double objective_hessian(const Vector& p, Vector& g, Matrix& H) const {
            const auto sim = simulate(p);
            if (sim.diverged) {
                g = Vector::Zero(p.size());
                H = Matrix::Zero(p.size(), p.size());
                return kInf;
            }
            auto r = adjoint_hessian(sim, platoon, models, span(p), data, {}, leaders());
            g = std::move(r.gradient);
            H = std::move(r.hessian);
            return r.F;
        }
    };

    std::shared_ptr<const Context> ctx_;
};

}  // namespace cfcal
