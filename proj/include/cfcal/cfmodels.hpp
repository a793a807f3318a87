// Car-following models h_i(x_i, x_L, p_i) with regime bookkeeping and
// analytic first and second partial derivatives.
//
// Every model is written through one scalar "rate" r(self, lead, p):
//   second-order models (OVM, IDM):  h = (v, r)      r is the acceleration
//   first-order models (Newell DE):  h = (r, 0)      r is the speed
// The local variable vector for derivatives is z = (x*, v, x*_L, v_L, p...).

#pragma once

#include <array>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cfcal/core.hpp"

namespace cfcal {

enum class ModelKind { OVM, NewellDE, NewellTT, IDM };

inline std::string to_string(ModelKind k) {
    switch (k) {
        case ModelKind::OVM: return "ovm";
        case ModelKind::NewellDE: return "newell_de";
        case ModelKind::NewellTT: return "newell_tt";
        case ModelKind::IDM: return "idm";
    }
    return "unknown";
}

inline ModelKind parse_model_kind(const std::string& s) {
    if (s == "ovm" || s == "OVM") return ModelKind::OVM;
    if (s == "newell_de" || s == "newell" || s == "NewellDE") return ModelKind::NewellDE;
    if (s == "newell_tt" || s == "NewellTT") return ModelKind::NewellTT;
    if (s == "idm" || s == "IDM") return ModelKind::IDM;
    throw ModelError("unknown model kind '" + s + "'");
}

inline constexpr std::size_t kMaxCoreParams = 5;
inline constexpr std::size_t kLocalDim = 4 + kMaxCoreParams;

// Offsets into the local variable vector z.
inline constexpr int kSelfPos = 0;
inline constexpr int kSelfSpeed = 1;
inline constexpr int kLeadPos = 2;
inline constexpr int kLeadSpeed = 3;
inline constexpr int kParam0 = 4;

using LocalGradient = Eigen::Matrix<double, kLocalDim, 1>;
using LocalHessian = Eigen::Matrix<double, kLocalDim, kLocalDim>;

struct ModelInstance {
    ModelKind kind{ModelKind::OVM};
    std::vector<std::string> labels;
    Vector lower;
    Vector upper;
    Vector params;  // default / nominal values
    std::optional<std::size_t> delay_index;
    int regimes{1};
    double tau_max{5.0};

    // Parameters per vehicle block, including τ for delayed models.
    [[nodiscard]] std::size_t size() const noexcept { return labels.size(); }
    // Parameters entering the rate function (τ excluded).
    [[nodiscard]] std::size_t core_size() const noexcept { return delay_index ? labels.size() - 1 : labels.size(); }
    [[nodiscard]] int order() const noexcept { return kind == ModelKind::NewellDE ? 1 : 2; }
    [[nodiscard]] bool delayed() const noexcept { return delay_index.has_value(); }
    [[nodiscard]] bool hessian_capable() const noexcept {
        return kind == ModelKind::OVM || kind == ModelKind::NewellDE;
    }
    [[nodiscard]] bool is_ode() const noexcept { return kind != ModelKind::NewellTT; }
    [[nodiscard]] double tau(std::span<const double> block) const {
        return delay_index ? block[*delay_index] : 0.0;
    }
    [[nodiscard]] bool within_bounds(std::span<const double> block) const {
        for (std::size_t j = 0; j < size(); ++j)
            if (block[j] < lower[static_cast<Eigen::Index>(j)] || block[j] > upper[static_cast<Eigen::Index>(j)])
                return false;
        return true;
    }

    // Appends a reaction-time parameter τ ∈ [0, tau_max].
    [[nodiscard]] ModelInstance with_delay(double tau_default = 0.0, double tmax = 1.0) const {
        ModelInstance m = *this;
        if (m.delay_index) return m;
        if (!is_ode()) throw ModelError("the trajectory-translation model has no delay form");
        m.delay_index = m.labels.size();
        m.labels.push_back("tau");
        auto grow = [](Vector& v, double x) {
            v.conservativeResize(v.size() + 1);
            v[v.size() - 1] = x;
        };
        grow(m.lower, 0.0);
        grow(m.upper, tmax);
        grow(m.params, tau_default);
        m.tau_max = tmax;
        return m;
    }

    // Optimal velocity model, parameters (c1, c2, c3, c4, c5), feet units.
    static ModelInstance ovm() {
        ModelInstance m;
        m.kind = ModelKind::OVM;
        m.labels = {"c1", "c2", "c3", "c4", "c5"};
        m.lower = (Vector(5) << 20.0, 0.001, 0.1, 0.1, 0.0).finished();
        m.upper = (Vector(5) << 120.0, 0.1, 2.0, 5.0, 3.0).finished();
        m.params = (Vector(5) << 33.0, 0.026, 1.545, 2.0, 0.175).finished();
        return m;
    }
    // Newell car-following ODE, parameters (v_f, alpha, s_jam).
    static ModelInstance newell_de() {
        ModelInstance m;
        m.kind = ModelKind::NewellDE;
        m.labels = {"v_f", "alpha", "s_jam"};
        m.lower = (Vector(3) << 20.0, 0.1, 5.0).finished();
        m.upper = (Vector(3) << 120.0, 5.0, 60.0).finished();
        m.params = (Vector(3) << 60.0, 1.0, 25.0).finished();
        m.regimes = 2;
        return m;
    }
    // Newell trajectory translation, parameters (alpha, s_jam).
    static ModelInstance newell_tt() {
        ModelInstance m;
        m.kind = ModelKind::NewellTT;
        m.labels = {"alpha", "s_jam"};
        m.lower = (Vector(2) << 0.0, 5.0).finished();
        m.upper = (Vector(2) << 5.0, 60.0).finished();
        m.params = (Vector(2) << 1.0, 25.0).finished();
        return m;
    }
    // Intelligent driver model, parameters (v0, T, s0, a, b), δ = 4.
    static ModelInstance idm() {
        ModelInstance m;
        m.kind = ModelKind::IDM;
        m.labels = {"v0", "T", "s0", "a", "b"};
        m.lower = (Vector(5) << 20.0, 0.1, 1.0, 0.5, 0.5).finished();
        m.upper = (Vector(5) << 120.0, 5.0, 30.0, 20.0, 20.0).finished();
        m.params = (Vector(5) << 60.0, 1.5, 6.0, 4.0, 6.0).finished();
        return m;
    }

    static ModelInstance make(ModelKind k) {
        switch (k) {
            case ModelKind::OVM: return ovm();
            case ModelKind::NewellDE: return newell_de();
            case ModelKind::NewellTT: return newell_tt();
            case ModelKind::IDM: return idm();
        }
        throw ModelError("unknown model kind");
    }
};

// ---------------------------------------------------------------------------
// Scalar rate and its derivatives

struct Rate {
    double value{0.0};
    int regime{1};
};

namespace detail {

inline double ovm_headway(State self, State lead, double lead_length) {
    return lead.pos - self.pos - lead_length;
}

inline Rate ovm_rate(const double* p, State self, State lead, double ll) {
    const double s = ovm_headway(self, lead, ll);
    const double v_opt = p[0] * (std::tanh(p[1] * s - p[2] - p[4]) - std::tanh(-p[2]));
    return {p[3] * (v_opt - self.speed), 1};
}

inline Rate newell_rate(const double* p, State self, State lead) {
    const double congested = (lead.pos - self.pos - p[2]) / p[1];
    const double free_flow = p[0];
    // g = h1 - h2 >= 0 selects the free-flow regime.
    if (congested - free_flow >= 0.0) return {free_flow, 2};
    return {congested, 1};
}

inline Rate idm_rate(const double* p, State self, State lead, double ll) {
    const double s = lead.pos - self.pos - ll;
    const double v = self.speed;
    const double sstar = p[2] + v * p[1] + v * (v - lead.speed) / (2.0 * std::sqrt(p[3] * p[4]));
    const double ratio = v / p[0];
    const double r2 = ratio * ratio;
    const double q = sstar / s;
    return {p[3] * (1.0 - r2 * r2 - q * q), 1};
}

inline void ovm_derivatives(const double* p, State self, State lead, double ll, LocalGradient& g,
                            LocalHessian* H) {
    const double c1 = p[0], c2 = p[1], c3 = p[2], c4 = p[3], c5 = p[4];
    const double s = ovm_headway(self, lead, ll);
    const double u = c2 * s - c3 - c5;
    const double T = std::tanh(u);
    const double S2 = 1.0 - T * T;
    const double th3 = std::tanh(c3);
    const double sh3 = 1.0 - th3 * th3;
    const double P = c4 * c1;

    LocalGradient du = LocalGradient::Zero();
    du[kSelfPos] = -c2;
    du[kLeadPos] = c2;
    du[kParam0 + 1] = s;
    du[kParam0 + 2] = -1.0;
    du[kParam0 + 4] = -1.0;
    LocalGradient dP = LocalGradient::Zero();
    dP[kParam0 + 0] = c4;
    dP[kParam0 + 3] = c1;

    g = T * dP + P * S2 * du;
    g[kParam0 + 0] += c4 * th3;
    g[kParam0 + 3] += c1 * th3;
    g[kParam0 + 2] += P * sh3;
    g[kSelfSpeed] += -c4;
    g[kParam0 + 3] += -self.speed;

    if (H == nullptr) return;
    LocalHessian& h = *H;
    h = S2 * (dP * du.transpose() + du * dP.transpose()) + (P * (-2.0 * T * S2)) * (du * du.transpose());
    auto sym = [&](int a, int b, double v) {
        h(a, b) += v;
        if (a != b) h(b, a) += v;
    };
    // T * d2P
    sym(kParam0 + 0, kParam0 + 3, T);
    // P * S2 * d2u
    sym(kSelfPos, kParam0 + 1, -P * S2);
    sym(kLeadPos, kParam0 + 1, P * S2);
    // c4 c1 tanh(c3)
    sym(kParam0 + 0, kParam0 + 3, th3);
    sym(kParam0 + 0, kParam0 + 2, c4 * sh3);
    sym(kParam0 + 3, kParam0 + 2, c1 * sh3);
    sym(kParam0 + 2, kParam0 + 2, P * (-2.0 * th3 * sh3));
    // -c4 v
    sym(kSelfSpeed, kParam0 + 3, -1.0);
}

inline void newell_derivatives(const double* p, State self, State lead, int regime, LocalGradient& g,
                               LocalHessian* H) {
    g.setZero();
    if (H) H->setZero();
    if (regime == 2) {
        g[kParam0 + 0] = 1.0;
        return;
    }
    const double alpha = p[1];
    const double gap = lead.pos - self.pos - p[2];
    g[kSelfPos] = -1.0 / alpha;
    g[kLeadPos] = 1.0 / alpha;
    g[kParam0 + 1] = -gap / (alpha * alpha);
    g[kParam0 + 2] = -1.0 / alpha;
    if (!H) return;
    auto& h = *H;
    const double a2 = alpha * alpha;
    h(kParam0 + 1, kParam0 + 1) = 2.0 * gap / (a2 * alpha);
    h(kSelfPos, kParam0 + 1) = h(kParam0 + 1, kSelfPos) = 1.0 / a2;
    h(kLeadPos, kParam0 + 1) = h(kParam0 + 1, kLeadPos) = -1.0 / a2;
    h(kParam0 + 2, kParam0 + 1) = h(kParam0 + 1, kParam0 + 2) = 1.0 / a2;
}

inline void idm_derivatives(const double* p, State self, State lead, double ll, LocalGradient& g) {
    const double v0 = p[0], Th = p[1], a = p[3], b = p[4];
    const double s = lead.pos - self.pos - ll;
    const double v = self.speed;
    const double sqrt_ab = std::sqrt(a * b);
    const double q = v * (v - lead.speed) / (2.0 * sqrt_ab);
    const double sstar = p[2] + v * Th + q;
    const double ratio = v / v0;
    const double r4 = ratio * ratio * ratio * ratio;
    const double s2 = s * s;
    const double d_sstar = -2.0 * a * sstar / s2;  // ∂r/∂s*
    g.setZero();
    g[kSelfPos] = -2.0 * a * sstar * sstar / (s2 * s);
    g[kLeadPos] = -g[kSelfPos];
    g[kSelfSpeed] = -4.0 * a * ratio * ratio * ratio / v0 + d_sstar * (Th + (2.0 * v - lead.speed) / (2.0 * sqrt_ab));
    g[kLeadSpeed] = d_sstar * (-v / (2.0 * sqrt_ab));
    g[kParam0 + 0] = 4.0 * a * r4 / v0;
    g[kParam0 + 1] = d_sstar * v;
    g[kParam0 + 2] = d_sstar;
    g[kParam0 + 3] = (1.0 - r4 - (sstar / s) * (sstar / s)) + d_sstar * (-q / (2.0 * a));
    g[kParam0 + 4] = d_sstar * (-q / (2.0 * b));
}

}  // namespace detail

// r(self, lead, p) with the active regime. p points at the core parameters.
inline Rate rate(const ModelInstance& m, const double* p, State self, State lead, double lead_length) {
    switch (m.kind) {
        case ModelKind::OVM: return detail::ovm_rate(p, self, lead, lead_length);
        case ModelKind::NewellDE: return detail::newell_rate(p, self, lead);
        case ModelKind::IDM: return detail::idm_rate(p, self, lead, lead_length);
        case ModelKind::NewellTT: break;
    }
    throw ModelError("the trajectory-translation model has no rate form");
}

// ∇_z r for the given regime (regime memory from the forward pass).
inline void rate_gradient(const ModelInstance& m, const double* p, State self, State lead, double lead_length,
                          int regime, LocalGradient& g) {
    switch (m.kind) {
        case ModelKind::OVM: detail::ovm_derivatives(p, self, lead, lead_length, g, nullptr); return;
        case ModelKind::NewellDE: detail::newell_derivatives(p, self, lead, regime, g, nullptr); return;
        case ModelKind::IDM: detail::idm_derivatives(p, self, lead, lead_length, g); return;
        case ModelKind::NewellTT: break;
    }
    throw ModelError("the trajectory-translation model has no rate form");
}

// ∇_z r and ∇²_z r for Hessian-capable models.
inline void rate_hessian(const ModelInstance& m, const double* p, State self, State lead, double lead_length,
                         int regime, LocalGradient& g, LocalHessian& H) {
    switch (m.kind) {
        case ModelKind::OVM: detail::ovm_derivatives(p, self, lead, lead_length, g, &H); return;
        case ModelKind::NewellDE: detail::newell_derivatives(p, self, lead, regime, g, &H); return;
        default: break;
    }
    throw ModelError("Hessian unsupported for model kind " + to_string(m.kind));
}

// ---------------------------------------------------------------------------
// Vector-form API: h = dx/dt as a 2-vector.

struct RegimeEval {
    std::array<double, 2> derivative{};
    int regime{1};
};

struct Jacobians {
    Eigen::Matrix2d d_self;
    Eigen::Matrix2d d_lead;
    Matrix d_param;  // 2 x core_size
    int regime{1};
};

// Second partials of h for the active regime. Only one component of h is
// nonlinear (the rate); `component` names it and `rate` holds ∇²r over z.
struct SecondDerivatives {
    int component{1};
    std::size_t params{0};
    LocalHessian rate;

    [[nodiscard]] Matrix block(int r0, int nr, int c0, int nc) const {
        return rate.block(r0, c0, nr, nc);
    }
    // ∂²r/∂x_i², ∂²r/∂x_i∂p (2 x m), ∂²r/∂p∂x_i (m x 2), ...
    [[nodiscard]] Matrix self_self() const { return block(kSelfPos, 2, kSelfPos, 2); }
    [[nodiscard]] Matrix self_param() const { return block(kSelfPos, 2, kParam0, static_cast<int>(params)); }
    [[nodiscard]] Matrix param_self() const { return block(kParam0, static_cast<int>(params), kSelfPos, 2); }
    [[nodiscard]] Matrix param_param() const {
        return block(kParam0, static_cast<int>(params), kParam0, static_cast<int>(params));
    }
    [[nodiscard]] Matrix lead_self() const { return block(kLeadPos, 2, kSelfPos, 2); }
    [[nodiscard]] Matrix self_lead() const { return block(kSelfPos, 2, kLeadPos, 2); }
    [[nodiscard]] Matrix lead_param() const { return block(kLeadPos, 2, kParam0, static_cast<int>(params)); }
    [[nodiscard]] Matrix param_lead() const { return block(kParam0, static_cast<int>(params), kLeadPos, 2); }
    [[nodiscard]] Matrix lead_lead() const { return block(kLeadPos, 2, kLeadPos, 2); }
};

namespace detail {

inline void check_params(const ModelInstance& m, std::span<const double> p) {
    if (p.size() < m.core_size())
        throw StructuralError("model " + to_string(m.kind) + " needs " + std::to_string(m.core_size()) +
                              " parameters, got " + std::to_string(p.size()));
}

inline std::string describe(State self, State lead, double ll) {
    return "self=(" + std::to_string(self.pos) + "," + std::to_string(self.speed) + ") lead=(" +
           std::to_string(lead.pos) + "," + std::to_string(lead.speed) + ") lead_length=" + std::to_string(ll);
}

}  // namespace detail

inline RegimeEval eval(const ModelInstance& m, std::span<const double> p, State self, State lead,
                       double lead_length) {
    detail::check_params(m, p);
    const Rate r = rate(m, p.data(), self, lead, lead_length);
    if (!std::isfinite(r.value))
        throw ModelError("non-finite model output for " + to_string(m.kind) + ": " +
                         detail::describe(self, lead, lead_length));
    RegimeEval out;
    out.regime = r.regime;
    if (m.order() == 2)
        out.derivative = {self.speed, r.value};
    else
        out.derivative = {r.value, 0.0};
    return out;
}

inline RegimeEval eval(const ModelInstance& m, State self, State lead, double lead_length) {
    return eval(m, std::span<const double>(m.params.data(), static_cast<std::size_t>(m.params.size())), self,
                lead, lead_length);
}

inline Jacobians jacobians(const ModelInstance& m, std::span<const double> p, State self, State lead,
                           double lead_length) {
    const auto e = eval(m, p, self, lead, lead_length);
    LocalGradient g;
    rate_gradient(m, p.data(), self, lead, lead_length, e.regime, g);
    if (!g.allFinite())
        throw ModelError("non-finite model derivative: " + detail::describe(self, lead, lead_length));
    const auto np = static_cast<int>(m.core_size());
    Jacobians j;
    j.regime = e.regime;
    j.d_param = Matrix::Zero(2, np);
    const int row = m.order() == 2 ? 1 : 0;
    j.d_self.setZero();
    j.d_lead.setZero();
    if (m.order() == 2) j.d_self(0, 1) = 1.0;
    j.d_self(row, 0) = g[kSelfPos];
    j.d_self(row, 1) += g[kSelfSpeed];
    j.d_lead(row, 0) = g[kLeadPos];
    j.d_lead(row, 1) = g[kLeadSpeed];
    for (int k = 0; k < np; ++k) j.d_param(row, k) = g[kParam0 + k];
    return j;
}

inline SecondDerivatives second_derivatives(const ModelInstance& m, std::span<const double> p, State self,
                                            State lead, double lead_length) {
    if (!m.hessian_capable()) throw ModelError("Hessian unsupported for model kind " + to_string(m.kind));
    const auto e = eval(m, p, self, lead, lead_length);
    SecondDerivatives out;
    out.component = m.order() == 2 ? 1 : 0;
    out.params = m.core_size();
    LocalGradient g;
    out.rate.setZero();
    rate_hessian(m, p.data(), self, lead, lead_length, e.regime, g, out.rate);
    return out;
}

// ---------------------------------------------------------------------------
// Newell trajectory translation: x(t) = x_lead(t - alpha) - s_jam.

namespace detail {

// Splits delay/dt into whole steps and a fractional weight, snapping values
// within 1e-9 of an integer.
inline std::pair<Frame, double> split_delay(double delay, double dt) {
    const double steps = delay / dt;
    const double nearest = std::round(steps);
    if (std::abs(steps - nearest) < 1e-9) return {static_cast<Frame>(nearest), 0.0};
    const double fl = std::floor(steps);
    return {static_cast<Frame>(fl), steps - fl};
}

}  // namespace detail

// `lead` and `measured` share frames; frames whose delayed time falls before
// the lead series keep the measured value.
inline std::vector<double> newell_tt_translate(std::span<const double> lead, std::span<const double> measured,
                                               double alpha, double s_jam, double dt) {
    if (alpha < 0.0) throw ParameterError("alpha must be nonnegative");
    if (!(dt > 0.0)) throw ParameterError("dt must be positive");
    if (measured.size() != lead.size()) throw StructuralError("lead and measured series must align");
    const auto [q, w] = detail::split_delay(alpha, dt);
    const auto n = static_cast<Frame>(lead.size());
    const Frame first_covered = q + (w > 0.0 ? 1 : 0);
    if (first_covered >= n) throw ParameterError("alpha exceeds the available lead history");
    std::vector<double> out(lead.size());
    for (Frame k = 0; k < n; ++k) {
        const auto i = static_cast<std::size_t>(k);
        if (k < first_covered) {
            out[i] = measured[i];
            continue;
        }
        const auto j = static_cast<std::size_t>(k - q);
        const double delayed = w > 0.0 ? (1.0 - w) * lead[j] + w * lead[j - 1] : lead[j];
        out[i] = delayed - s_jam;
    }
    return out;
}

}  // namespace cfcal
