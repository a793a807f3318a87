// Experiment configuration read from JSON. Unknown keys are rejected at
// every level.

#pragma once

#include <cstdlib>
#include <fstream>
#include <set>

#include "json.hpp"

#include "cfcal/bench.hpp"
#include "cfcal/synthesize.hpp"

namespace cfcal {

struct SyntheticSource {
    std::string model{"ovm"};
    std::vector<double> params;  // empty: model defaults
    int n{5};
    double dt{0.1};
    double horizon{60.0};
    std::string lead{"sinusoid"};  // constant | sinusoid
    double lead_speed{40.0};
    double amplitude{10.0};
    double period{30.0};
    double noise_std{0.0};
    double initial_offset{0.0};
};

struct GradcheckConfig {
    int samples{50};
    int spsa_k{1};
    std::vector<double> start;    // empty: model defaults
    std::vector<double> optimum;  // empty: calibrate first
};

struct SpeedConfig {
    std::vector<int> sizes{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
    int reps{10};
};

struct RunConfig {
    std::string data;  // CSV path, or empty when `synthetic` is set
    std::optional<SyntheticSource> synthetic;
    std::string units{"feet"};
    std::string model{"ovm"};
    bool delay{false};
    double tau{0.0};
    double tau_max{1.0};
    std::vector<double> lower;  // empty: model defaults
    std::vector<double> upper;
    std::vector<bench::Variant> variants;
    std::vector<std::vector<double>> guesses;
    std::vector<int> platoon_sizes{1};
    std::vector<int> vehicles;  // empty: every follower in the data
    double tolerance{1.0 / 12.0};
    std::vector<double> tolerances;
    std::string cost_axis{"time"};
    std::uint64_t seed{0};
    std::string output{"out"};
    GradcheckConfig gradcheck;
    SpeedConfig speed;
};

namespace detail {

inline void allow_keys(const nlohmann::json& j, const std::set<std::string>& keys, const std::string& where) {
    if (!j.is_object()) throw StructuralError(where + " must be an object");
    for (const auto& [k, v] : j.items())
        if (!keys.count(k)) throw StructuralError("unknown key '" + k + "' in " + where);
}

template <class T>
T get(const nlohmann::json& j, const std::string& key, const std::string& where) {
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw StructuralError("bad value for '" + key + "' in " + where);
    }
}

inline std::string threshold_label(double t) {
    if (std::isinf(t)) return "-inf";
    std::ostringstream s;
    s << t;
    return "-" + s.str();
}

}  // namespace detail

// Variant display name, e.g. "adjoint tnc-7.5". The threshold suffix is
// added only when the configuration lists thresholds.
inline std::string variant_name(const std::string& algorithm, GradientMode g, double threshold, bool label = true) {
    const std::string base = opt::uses_gradient(algorithm) ? to_string(g) + " " + algorithm : algorithm;
    return label ? base + detail::threshold_label(threshold) : base;
}

inline RunConfig parse_run_config(const nlohmann::json& j) {
    using detail::allow_keys;
    using detail::get;
    allow_keys(j,
               {"data", "synthetic", "units", "model", "algorithms", "guesses", "platoon_sizes", "vehicles",
                "tolerance", "tolerances", "cost_axis", "seed", "output", "gradcheck", "speed"},
               "config");
    RunConfig c;
    if (j.contains("data")) c.data = get<std::string>(j, "data", "config");
    if (j.contains("synthetic")) {
        const auto& s = j["synthetic"];
        allow_keys(s,
                   {"model", "params", "n", "dt", "horizon", "lead", "lead_speed", "amplitude", "period", "noise_std",
                    "initial_offset"},
                   "synthetic");
        SyntheticSource src;
        if (s.contains("model")) src.model = get<std::string>(s, "model", "synthetic");
        if (s.contains("params")) src.params = get<std::vector<double>>(s, "params", "synthetic");
        if (s.contains("n")) src.n = get<int>(s, "n", "synthetic");
        if (s.contains("dt")) src.dt = get<double>(s, "dt", "synthetic");
        if (s.contains("horizon")) src.horizon = get<double>(s, "horizon", "synthetic");
        if (s.contains("lead")) src.lead = get<std::string>(s, "lead", "synthetic");
        if (s.contains("lead_speed")) src.lead_speed = get<double>(s, "lead_speed", "synthetic");
        if (s.contains("amplitude")) src.amplitude = get<double>(s, "amplitude", "synthetic");
        if (s.contains("period")) src.period = get<double>(s, "period", "synthetic");
        if (s.contains("noise_std")) src.noise_std = get<double>(s, "noise_std", "synthetic");
        if (s.contains("initial_offset")) src.initial_offset = get<double>(s, "initial_offset", "synthetic");
        if (src.lead != "constant" && src.lead != "sinusoid")
            throw StructuralError("synthetic lead must be 'constant' or 'sinusoid'");
        c.synthetic = src;
    }
    if (c.data.empty() == !c.synthetic.has_value())
        throw StructuralError("config needs exactly one of 'data' and 'synthetic'");
    if (j.contains("units")) c.units = get<std::string>(j, "units", "config");
    if (j.contains("model")) {
        const auto& m = j["model"];
        allow_keys(m, {"kind", "delay", "tau", "tau_max", "lower", "upper"}, "model");
        if (m.contains("kind")) c.model = get<std::string>(m, "kind", "model");
        if (m.contains("delay")) c.delay = get<bool>(m, "delay", "model");
        if (m.contains("tau")) c.tau = get<double>(m, "tau", "model");
        if (m.contains("tau_max")) c.tau_max = get<double>(m, "tau_max", "model");
        if (m.contains("lower")) c.lower = get<std::vector<double>>(m, "lower", "model");
        if (m.contains("upper")) c.upper = get<std::vector<double>>(m, "upper", "model");
    }
    if (j.contains("algorithms")) {
        for (const auto& a : j["algorithms"]) {
            allow_keys(a, {"algorithm", "gradient", "thresholds", "config", "name"}, "algorithm entry");
            const auto alg = get<std::string>(a, "algorithm", "algorithm entry");
            (void)opt::optimizer(alg);
            const auto grad = a.contains("gradient") ? parse_gradient_mode(get<std::string>(a, "gradient", "algorithm entry"))
                                                     : GradientMode::Adjoint;
            const auto cfg = a.contains("config") ? opt::config_from_json(a["config"]) : opt::Config{};
            std::vector<double> thresholds{kInf};
            if (a.contains("thresholds")) {
                thresholds.clear();
                for (const auto& t : a["thresholds"]) {
                    if (t.is_string() && t.get<std::string>() == "inf")
                        thresholds.push_back(kInf);
                    else if (t.is_number())
                        thresholds.push_back(t.get<double>());
                    else
                        throw StructuralError("thresholds must be numbers or \"inf\"");
                }
            }
            for (double t : thresholds) {
                bench::Variant v;
                v.algorithm = alg;
                v.gradient = grad;
                v.threshold = t;
                v.config = cfg;
                v.name = a.contains("name") && thresholds.size() == 1 ? get<std::string>(a, "name", "algorithm entry")
                                                                      : variant_name(alg, grad, t, a.contains("thresholds"));
                c.variants.push_back(v);
            }
        }
    }
    if (j.contains("guesses")) c.guesses = get<std::vector<std::vector<double>>>(j, "guesses", "config");
    if (j.contains("platoon_sizes")) c.platoon_sizes = get<std::vector<int>>(j, "platoon_sizes", "config");
    if (j.contains("vehicles")) c.vehicles = get<std::vector<int>>(j, "vehicles", "config");
    if (j.contains("tolerance")) c.tolerance = get<double>(j, "tolerance", "config");
    if (j.contains("tolerances")) c.tolerances = get<std::vector<double>>(j, "tolerances", "config");
    if (j.contains("cost_axis")) c.cost_axis = get<std::string>(j, "cost_axis", "config");
    if (c.cost_axis != "time" && c.cost_axis != "evaluations")
        throw StructuralError("cost_axis must be 'time' or 'evaluations'");
    if (j.contains("seed")) c.seed = get<std::uint64_t>(j, "seed", "config");
    if (j.contains("output")) c.output = get<std::string>(j, "output", "config");
    if (j.contains("gradcheck")) {
        const auto& g = j["gradcheck"];
        allow_keys(g, {"samples", "spsa_k", "start", "optimum"}, "gradcheck");
        if (g.contains("samples")) c.gradcheck.samples = get<int>(g, "samples", "gradcheck");
        if (g.contains("spsa_k")) c.gradcheck.spsa_k = get<int>(g, "spsa_k", "gradcheck");
        if (g.contains("start")) c.gradcheck.start = get<std::vector<double>>(g, "start", "gradcheck");
        if (g.contains("optimum")) c.gradcheck.optimum = get<std::vector<double>>(g, "optimum", "gradcheck");
    }
    if (j.contains("speed")) {
        const auto& s = j["speed"];
        allow_keys(s, {"sizes", "reps"}, "speed");
        if (s.contains("sizes")) c.speed.sizes = get<std::vector<int>>(s, "sizes", "speed");
        if (s.contains("reps")) c.speed.reps = get<int>(s, "reps", "speed");
    }
    for (double t : c.tolerances)
        if (t < 0.0) throw StructuralError("tolerances must be non-negative");
    if (c.tolerance < 0.0) throw StructuralError("tolerance must be non-negative");
    return c;
}

inline RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open config '" + path + "'");
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw StructuralError(std::string("config is not valid JSON: ") + e.what());
    }
    return parse_run_config(j);
}

// CFCAL_OUTPUT_DIR overrides the configured output directory.
inline std::string output_dir(const RunConfig& c) {
    if (const char* env = std::getenv("CFCAL_OUTPUT_DIR"); env && *env) return env;
    return c.output;
}

inline ModelInstance configured_model(const RunConfig& c) {
    auto m = ModelInstance::make(parse_model_kind(c.model));
    auto override_bounds = [&](Vector& dst, const std::vector<double>& src, const char* what) {
        if (src.empty()) return;
        if (src.size() != static_cast<std::size_t>(dst.size()))
            throw StructuralError(std::string("model ") + what + " bounds have the wrong length");
        for (std::size_t i = 0; i < src.size(); ++i) dst[static_cast<Eigen::Index>(i)] = src[i];
    };
    override_bounds(m.lower, c.lower, "lower");
    override_bounds(m.upper, c.upper, "upper");
    if (c.delay) m = m.with_delay(c.tau, c.tau_max);
    return m;
}

inline TrajectorySet configured_data(const RunConfig& c) {
    const auto units = parse_units(c.units);
    if (!c.data.empty()) {
        std::ifstream in(c.data);
        if (!in) throw DataError("cannot open data '" + c.data + "'");
        return load_trajectories(in, CsvSchema{}, units);
    }
    const auto& s = *c.synthetic;
    const auto m = ModelInstance::make(parse_model_kind(s.model));
    Vector p = m.params;
    if (!s.params.empty()) p = Eigen::Map<const Vector>(s.params.data(), static_cast<Eigen::Index>(s.params.size()));
    const auto lead = s.lead == "constant" ? LeadProfile::constant(s.lead_speed)
                                           : LeadProfile::sinusoid(s.lead_speed, s.amplitude, s.period);
    SynthOptions o;
    o.noise_std = s.noise_std;
    o.initial_offset = s.initial_offset;
    o.units = units;
    return synthesize_scenario(m, p, lead, s.n, s.dt, s.horizon, c.seed, o);
}

// Followers with at least one nonzero leader, in id order.
inline std::vector<int> configured_vehicles(const RunConfig& c, const TrajectorySet& data) {
    if (!c.vehicles.empty()) return c.vehicles;
    std::vector<int> out;
    for (int id : data.ids()) {
        const auto& t = data.at(id);
        for (int l : t.leaders)
            if (l != 0 && data.contains(l)) {
                out.push_back(id);
                break;
            }
    }
    return out;
}

inline std::vector<Vector> configured_guesses(const RunConfig& c, const ModelInstance& m) {
    std::vector<Vector> out;
    for (const auto& g : c.guesses) {
        if (g.size() != m.size()) throw StructuralError("guess has the wrong length for the model");
        out.emplace_back(Eigen::Map<const Vector>(g.data(), static_cast<Eigen::Index>(g.size())));
    }
    if (out.empty()) out.push_back(m.params);
    return out;
}

}  // namespace cfcal
