// Benchmark harness: single-vehicle campaigns with pooled global optima,
// Pareto fronts, tolerance sweeps, platoon-size campaigns, and reports.

#pragma once

#include <algorithm>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "json.hpp"

#include "cfcal/calibration.hpp"

namespace cfcal::bench {

// One optimizer configuration under test ("Adj TNC-7.5" style).
struct Variant {
    std::string name;
    std::string algorithm{"tnc"};
    GradientMode gradient{GradientMode::Adjoint};
    double threshold{kInf};
    opt::Config config;
};

struct VehicleRun {
    int vehicle{0};
    std::string variant;
    opt::RunRecord record;
    double equivalent{-1.0};  // objective-equivalent evaluations; < 0: derive from counts
};

struct VariantSummary {
    std::string name;
    double pct_global{0.0};
    double avg_rmse{0.0};
    double avg_time{0.0};
    double avg_over_opt{0.0};      // mean RMSE above the pooled best
    double avg_over_opt_pct{0.0};  // same, as % of the pooled best
    double avg_guesses{0.0};
    double avg_obj_evals{0.0};
    double avg_grad_evals{0.0};
    double avg_hess_evals{0.0};
    double avg_equiv_evals{0.0};
    bool pareto{false};
};

enum class CostAxis { Time, Evaluations };

struct BenchmarkReport {
    double tolerance{1.0 / 12.0};
    std::uint64_t seed{0};
    std::string cost_axis{"time"};
    std::vector<VariantSummary> variants;
};

// a dominates b: no worse in cost, average RMSE and % global optima, and
// strictly better in at least one.
inline bool dominates(const VariantSummary& a, const VariantSummary& b, CostAxis axis = CostAxis::Time) {
    const double ca = axis == CostAxis::Time ? a.avg_time : a.avg_equiv_evals;
    const double cb = axis == CostAxis::Time ? b.avg_time : b.avg_equiv_evals;
    const bool no_worse = ca <= cb && a.avg_rmse <= b.avg_rmse && a.pct_global >= b.pct_global;
    const bool better = ca < cb || a.avg_rmse < b.avg_rmse || a.pct_global > b.pct_global;
    return no_worse && better;
}

// Marks non-dominated variants; returns their indices.
inline std::vector<std::size_t> pareto_front(std::vector<VariantSummary>& v, CostAxis axis = CostAxis::Time) {
    std::vector<std::size_t> front;
    for (std::size_t i = 0; i < v.size(); ++i) {
        bool dominated = false;
        for (std::size_t j = 0; j < v.size() && !dominated; ++j)
            if (j != i && dominates(v[j], v[i], axis)) dominated = true;
        v[i].pareto = !dominated;
        if (!dominated) front.push_back(i);
    }
    return front;
}

// Aggregates runs per variant. The global optimum of each vehicle is the best
// RMSE found by any variant; a run finds it when within `tolerance`.
inline BenchmarkReport summarize(const std::vector<VehicleRun>& runs, double tolerance, std::uint64_t seed = 0,
                                 CostAxis axis = CostAxis::Time, double grad_cost = 1.0, double hess_cost = 1.0) {
    BenchmarkReport rep;
    rep.tolerance = tolerance;
    rep.seed = seed;
    rep.cost_axis = axis == CostAxis::Time ? "time" : "evaluations";
    std::map<int, double> best;
    std::vector<std::string> order;
    for (const auto& r : runs) {
        auto it = best.find(r.vehicle);
        if (it == best.end() || r.record.rmse < it->second) best[r.vehicle] = r.record.rmse;
        if (std::find(order.begin(), order.end(), r.variant) == order.end()) order.push_back(r.variant);
    }
    std::sort(order.begin(), order.end());
    for (const auto& name : order) {
        VariantSummary s;
        s.name = name;
        int count = 0, found = 0;
        for (const auto& r : runs) {
            if (r.variant != name) continue;
            ++count;
            const double g = best[r.vehicle];
            const double over = r.record.rmse - g;
            if (over <= tolerance) ++found;
            s.avg_rmse += r.record.rmse;
            s.avg_time += r.record.seconds;
            s.avg_over_opt += over;
            s.avg_over_opt_pct += g > 0.0 ? 100.0 * over / g : 0.0;
            s.avg_guesses += r.record.guesses_used;
            s.avg_obj_evals += static_cast<double>(r.record.counts.objective);
            s.avg_grad_evals += static_cast<double>(r.record.counts.gradient);
            s.avg_hess_evals += static_cast<double>(r.record.counts.hessian);
            s.avg_equiv_evals += r.equivalent >= 0.0 ? r.equivalent : r.record.equivalent_evals(grad_cost, hess_cost);
        }
        const double c = static_cast<double>(count);
        s.pct_global = 100.0 * found / c;
        s.avg_rmse /= c;
        s.avg_time /= c;
        s.avg_over_opt /= c;
        s.avg_over_opt_pct /= c;
        s.avg_guesses /= c;
        s.avg_obj_evals /= c;
        s.avg_grad_evals /= c;
        s.avg_hess_evals /= c;
        s.avg_equiv_evals /= c;
        rep.variants.push_back(s);
    }
    pareto_front(rep.variants, axis);
    return rep;
}

inline std::vector<BenchmarkReport> tolerance_sweep(const std::vector<VehicleRun>& runs,
                                                    const std::vector<double>& tolerances, std::uint64_t seed = 0,
                                                    CostAxis axis = CostAxis::Time) {
    std::vector<BenchmarkReport> out;
    for (double t : tolerances) out.push_back(summarize(runs, t, seed, axis));
    return out;
}

inline opt::RunRecord run_variant(const Calibration& cal, const Variant& v, const std::vector<Vector>& guesses) {
    const auto prob = cal.problem(v.gradient);
    if (v.algorithm == "ga") {
        auto r = opt::genetic(prob, v.config);
        r.guesses_used = 0;
        return r;
    }
    return opt::multistart(opt::optimizer(v.algorithm), prob, guesses, v.threshold, v.config);
}

// Calibrates every listed vehicle alone against its measured leader with
// every variant. `guesses` are single-vehicle parameter blocks.
inline std::vector<VehicleRun> campaign_single_vehicle(const TrajectorySet& data, const std::vector<int>& vehicles,
                                                       const ModelInstance& model, const std::vector<Variant>& variants,
                                                       const std::vector<Vector>& guesses) {
    if (vehicles.empty()) throw StructuralError("campaign has no vehicles");
    std::vector<VehicleRun> runs;
    for (int id : vehicles) {
        const Calibration cal(data, {id}, {model});
        for (const auto& v : variants) {
            const auto prob = cal.problem(v.gradient);
            auto rec = run_variant(cal, v, guesses);
            const double eq = rec.equivalent_evals(prob.grad_cost, prob.hess_cost);
            runs.push_back({id, v.name, std::move(rec), eq});
        }
    }
    return runs;
}

// ---------------------------------------------------------------------------
// Platoon-size campaign

struct PlatoonRow {
    int n{0};
    std::size_t platoons{0};
    double overall_rmse{0.0};
    double mean_change_pct{0.0};  // per-platoon RMSE change vs n = 1
    double std_change_pct{0.0};
    opt::Counts evals;
    double seconds{0.0};
};

// Consecutive chunks of n; the last chunk holds the remainder.
inline std::vector<std::vector<int>> split_platoons(const std::vector<int>& order, int n) {
    if (n < 1) throw StructuralError("platoon size must be positive");
    std::vector<std::vector<int>> out;
    for (std::size_t i = 0; i < order.size(); i += static_cast<std::size_t>(n))
        out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                         order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), i + static_cast<std::size_t>(n))));
    return out;
}

// Every in-set leader of a vehicle must come earlier in `order`; leaders
// outside the set must be measured.
inline void check_chain(const TrajectorySet& data, const std::vector<int>& order) {
    std::map<int, std::size_t> pos;
    for (std::size_t i = 0; i < order.size(); ++i) {
        if (!data.contains(order[i])) throw StructuralError("vehicle " + std::to_string(order[i]) + " not in data");
        pos[order[i]] = i;
    }
    for (std::size_t i = 0; i < order.size(); ++i) {
        for (int l : data.at(order[i]).leaders) {
            if (l == 0) continue;
            auto it = pos.find(l);
            const bool ok = it != pos.end() ? it->second < i : data.contains(l);
            if (!ok)
                throw StructuralError("chain break at vehicle " + std::to_string(order[i]) + " (leader " +
                                      std::to_string(l) + ")");
        }
    }
}

using CalibrateFn = std::function<opt::RunRecord(const Calibration&)>;

struct PlatoonCampaignResult {
    std::vector<PlatoonRow> rows;
    // Per size: per vehicle (F, steps) at the calibrated parameters.
    std::map<int, std::map<int, LossTally>> tallies;
};

// Sequential calibration upstream to downstream; vehicles read their leaders
// from the previously calibrated simulated trajectories.
inline PlatoonCampaignResult campaign_platoon(const TrajectorySet& data, const std::vector<int>& order,
                                              const std::vector<int>& sizes, const ModelInstance& model,
                                              const CalibrateFn& calibrate) {
    check_chain(data, order);
    PlatoonCampaignResult res;
    std::vector<int> all_sizes = sizes;
    if (std::find(all_sizes.begin(), all_sizes.end(), 1) == all_sizes.end()) all_sizes.insert(all_sizes.begin(), 1);
    std::sort(all_sizes.begin(), all_sizes.end());
    for (int n : all_sizes) {
        TrajectorySet leaders = data;
        PlatoonRow row;
        row.n = n;
        const auto chunks = split_platoons(order, n);
        row.platoons = chunks.size();
        for (const auto& chunk : chunks) {
            const Calibration cal(data, chunk, {model}, leaders);
            const auto rec = calibrate(cal);
            row.evals.objective += rec.counts.objective;
            row.evals.gradient += rec.counts.gradient;
            row.evals.hessian += rec.counts.hessian;
            row.seconds += rec.seconds;
            const auto sim = cal.simulate(rec.best);
            if (sim.diverged) throw ModelError("calibrated platoon diverged");
            const auto per = vehicle_losses(sim, data);
            for (std::size_t s = 0; s < sim.vehicles.size(); ++s)
                res.tallies[n][sim.vehicles[s].id] = {per[s], sim.vehicles[s].loss_steps()};
            leaders = with_simulated(leaders, sim);
        }
        std::vector<LossTally> parts;
        for (const auto& [id, t] : res.tallies[n]) parts.push_back(t);
        row.overall_rmse = pooled_rmse(parts);
        if (n != 1) {
            std::vector<double> changes;
            for (const auto& chunk : chunks) {
                std::vector<LossTally> now, base;
                for (int id : chunk) {
                    now.push_back(res.tallies[n][id]);
                    base.push_back(res.tallies[1][id]);
                }
                const double b = pooled_rmse(base);
                if (b > 0.0) changes.push_back(100.0 * (pooled_rmse(now) - b) / b);
            }
            if (!changes.empty()) {
                double m = 0.0;
                for (double c : changes) m += c;
                m /= static_cast<double>(changes.size());
                double v = 0.0;
                for (double c : changes) v += (c - m) * (c - m);
                row.mean_change_pct = m;
                row.std_change_pct = std::sqrt(v / static_cast<double>(changes.size()));
            }
        }
        res.rows.push_back(row);
    }
    // Keep only the requested sizes in the table.
    std::vector<PlatoonRow> kept;
    for (const auto& r : res.rows)
        if (std::find(sizes.begin(), sizes.end(), r.n) != sizes.end()) kept.push_back(r);
    res.rows = std::move(kept);
    return res;
}

// ---------------------------------------------------------------------------
// Reports

inline const std::vector<std::string>& report_columns() {
    static const std::vector<std::string> cols{
        "variant",        "pct_global",     "avg_rmse",      "avg_time",       "avg_over_opt",
        "avg_over_opt_pct", "avg_guesses",  "avg_obj_evals", "avg_grad_evals", "avg_hess_evals",
        "avg_equiv_evals", "pareto",        "tolerance",     "seed"};
    return cols;
}

inline nlohmann::ordered_json report_to_json(const BenchmarkReport& r) {
    nlohmann::ordered_json j;
    j["tolerance"] = r.tolerance;
    j["seed"] = r.seed;
    j["cost_axis"] = r.cost_axis;
    j["variants"] = nlohmann::ordered_json::array();
    for (const auto& v : r.variants) {
        nlohmann::ordered_json e;
        e["variant"] = v.name;
        e["pct_global"] = v.pct_global;
        e["avg_rmse"] = v.avg_rmse;
        e["avg_time"] = v.avg_time;
        e["avg_over_opt"] = v.avg_over_opt;
        e["avg_over_opt_pct"] = v.avg_over_opt_pct;
        e["avg_guesses"] = v.avg_guesses;
        e["avg_obj_evals"] = v.avg_obj_evals;
        e["avg_grad_evals"] = v.avg_grad_evals;
        e["avg_hess_evals"] = v.avg_hess_evals;
        e["avg_equiv_evals"] = v.avg_equiv_evals;
        e["pareto"] = v.pareto;
        j["variants"].push_back(e);
    }
    return j;
}

inline BenchmarkReport report_from_json(const nlohmann::json& j) {
    BenchmarkReport r;
    r.tolerance = j.at("tolerance").get<double>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.cost_axis = j.value("cost_axis", std::string("time"));
    for (const auto& e : j.at("variants")) {
        VariantSummary v;
        v.name = e.at("variant").get<std::string>();
        v.pct_global = e.at("pct_global").get<double>();
        v.avg_rmse = e.at("avg_rmse").get<double>();
        v.avg_time = e.at("avg_time").get<double>();
        v.avg_over_opt = e.at("avg_over_opt").get<double>();
        v.avg_over_opt_pct = e.at("avg_over_opt_pct").get<double>();
        v.avg_guesses = e.at("avg_guesses").get<double>();
        v.avg_obj_evals = e.at("avg_obj_evals").get<double>();
        v.avg_grad_evals = e.at("avg_grad_evals").get<double>();
        v.avg_hess_evals = e.at("avg_hess_evals").get<double>();
        v.avg_equiv_evals = e.at("avg_equiv_evals").get<double>();
        v.pareto = e.at("pareto").get<bool>();
        r.variants.push_back(v);
    }
    return r;
}

// One row per variant; tolerance and seed repeated on each row. An empty
// report writes the header only.
inline void report_to_csv(std::ostream& out, const BenchmarkReport& r) {
    const auto& cols = report_columns();
    for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cols[i];
    out << '\n';
    auto old = out.precision(17);
    for (const auto& v : r.variants) {
        out << v.name << ',' << v.pct_global << ',' << v.avg_rmse << ',' << v.avg_time << ',' << v.avg_over_opt << ','
            << v.avg_over_opt_pct << ',' << v.avg_guesses << ',' << v.avg_obj_evals << ',' << v.avg_grad_evals << ','
            << v.avg_hess_evals << ',' << v.avg_equiv_evals << ',' << (v.pareto ? 1 : 0) << ',' << r.tolerance
            << ',' << r.seed << '\n';
    }
    out.precision(old);
}

inline BenchmarkReport report_from_csv(std::istream& in, double tolerance_if_empty = 1.0 / 12.0) {
    BenchmarkReport r;
    r.tolerance = tolerance_if_empty;
    std::string line;
    if (!std::getline(in, line)) throw DataError("empty report");
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> f;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) f.push_back(cell);
        if (f.size() != report_columns().size()) throw DataError("malformed report row");
        VariantSummary v;
        v.name = f[0];
        v.pct_global = std::stod(f[1]);
        v.avg_rmse = std::stod(f[2]);
        v.avg_time = std::stod(f[3]);
        v.avg_over_opt = std::stod(f[4]);
        v.avg_over_opt_pct = std::stod(f[5]);
        v.avg_guesses = std::stod(f[6]);
        v.avg_obj_evals = std::stod(f[7]);
        v.avg_grad_evals = std::stod(f[8]);
        v.avg_hess_evals = std::stod(f[9]);
        v.avg_equiv_evals = std::stod(f[10]);
        v.pareto = f[11] == "1";
        r.tolerance = std::stod(f[12]);
        r.seed = std::stoull(f[13]);
        r.variants.push_back(v);
    }
    return r;
}

inline void write_platoon_csv(std::ostream& out, const std::vector<PlatoonRow>& rows) {
    out << "n,platoons,overall_rmse,mean_change_pct,std_change_pct,objective_evals,gradient_evals,seconds\n";
    auto old = out.precision(12);
    for (const auto& r : rows)
        out << r.n << ',' << r.platoons << ',' << r.overall_rmse << ',' << r.mean_change_pct << ','
            << r.std_change_pct << ',' << r.evals.objective << ',' << r.evals.gradient << ',' << r.seconds << '\n';
    out.precision(old);
}

// Writes `report` to `path` as json or csv.
inline void emit_report(const BenchmarkReport& report, const std::string& path, const std::string& format) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write '" + path + "'");
    if (format == "json")
        out << report_to_json(report).dump(2) << '\n';
    else if (format == "csv")
        report_to_csv(out, report);
    else
        throw StructuralError("unknown report format '" + format + "'");
    if (!out) throw DataError("write failed for '" + path + "'");
}

}  // namespace cfcal::bench
