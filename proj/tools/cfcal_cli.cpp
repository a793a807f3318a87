// cfcal command line: data ingest, synthesis, calibration and the benchmark
// studies. Exit status 0 on success, 1 on a domain error, 2 on bad usage.

#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "json.hpp"

#include "cfcal/runconfig.hpp"

namespace fs = std::filesystem;
using namespace cfcal;

namespace {

struct Common {
    std::string config;
    std::optional<std::uint64_t> seed;
};

RunConfig load(const Common& c) {
    auto rc = load_run_config(c.config);
    if (c.seed) rc.seed = *c.seed;
    return rc;
}

std::string out_path(const RunConfig& rc, const std::string& name) {
    const fs::path dir = output_dir(rc);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw DataError("cannot create output directory '" + dir.string() + "'");
    return (dir / name).string();
}

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write '" + path + "'");
    return out;
}

std::vector<bench::Variant> variants_of(const RunConfig& rc) {
    auto vs = rc.variants;
    if (vs.empty()) {
        bench::Variant v;
        v.algorithm = "tnc";
        v.name = variant_name("tnc", GradientMode::Adjoint, kInf, false);
        vs.push_back(v);
    }
    for (auto& v : vs) v.config.seed = rc.seed;
    return vs;
}

Vector to_vector(const std::vector<double>& v) {
    return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

int cmd_ingest(const std::string& input, const std::string& units, const std::string& output) {
    std::ifstream in(input);
    if (!in) throw DataError("cannot open '" + input + "'");
    const auto set = load_trajectories(in, CsvSchema{}, parse_units(units));
    nlohmann::ordered_json j;
    j["vehicles"] = set.ids().size();
    j["dt"] = set.dt();
    j["units"] = to_string(set.units());
    std::cout << j.dump(2) << '\n';
    if (!output.empty()) {
        auto out = open_out(output);
        write_trajectories(out, set);
    }
    return 0;
}

struct SynthArgs {
    std::string model{"ovm"};
    int n{5};
    std::uint64_t seed{0};
    double dt{0.1};
    double horizon{60.0};
    double noise{0.0};
    std::string lead{"sinusoid"};
    std::string output{"synthetic.csv"};
};

int cmd_synth(const SynthArgs& a) {
    const auto m = ModelInstance::make(parse_model_kind(a.model));
    const auto lead = a.lead == "constant" ? LeadProfile::constant(35.0) : LeadProfile::sinusoid(35.0, 10.0, 20.0);
    SynthOptions o;
    o.noise_std = a.noise;
    const auto set = synthesize_scenario(m, m.params, lead, a.n, a.dt, a.horizon, a.seed, o);
    auto out = open_out(a.output);
    write_trajectories(out, set);
    return 0;
}

opt::RunRecord calibrate_one(const RunConfig& rc, const TrajectorySet& data, int vehicle, const bench::Variant& v) {
    const auto m = configured_model(rc);
    const Calibration cal(data, {vehicle}, {m});
    return bench::run_variant(cal, v, configured_guesses(rc, m));
}

int cmd_calibrate(const Common& c, int vehicle, const std::string& algorithm, const std::string& output) {
    const auto rc = load(c);
    const auto data = configured_data(rc);
    auto vs = variants_of(rc);
    bench::Variant v = vs.front();
    if (!algorithm.empty()) {
        const auto it = std::find_if(vs.begin(), vs.end(), [&](const auto& x) { return x.name == algorithm || x.algorithm == algorithm; });
        if (it == vs.end()) throw StructuralError("algorithm '" + algorithm + "' not in config");
        v = *it;
    }
    if (vehicle == 0) vehicle = configured_vehicles(rc, data).at(0);
    auto rec = calibrate_one(rc, data, vehicle, v);
    auto j = opt::to_json(rec);
    j["vehicle"] = vehicle;
    j["variant"] = v.name;
    j["seed"] = rc.seed;
    const auto path = output.empty() ? out_path(rc, "run_" + std::to_string(vehicle) + ".json") : output;
    open_out(path) << j.dump(2) << '\n';
    std::cout << path << '\n';
    return 0;
}

// Accuracy sweep on the first configured vehicle.
std::vector<AccuracyRow> accuracy_rows(const RunConfig& rc) {
    const auto data = configured_data(rc);
    const auto m = configured_model(rc);
    const int vehicle = configured_vehicles(rc, data).at(0);
    const Calibration cal(data, {vehicle}, {m});
    const Vector start = rc.gradcheck.start.empty() ? m.params : to_vector(rc.gradcheck.start);
    Vector optimum;
    if (!rc.gradcheck.optimum.empty()) {
        optimum = to_vector(rc.gradcheck.optimum);
    } else {
        opt::Config cfg;
        cfg.pgtol = 1e-12;
        optimum = opt::lbfgsb_like(cal.problem(), start, cfg).best;
    }
    return accuracy_sweep([&](const Vector& x) { return cal.objective(x); },
                          [&](const Vector& x) {
                              Vector g;
                              (void)cal.objective_gradient(x, g);
                              return g;
                          },
                          start, optimum, rc.gradcheck.samples, rc.gradcheck.spsa_k, rc.seed);
}

int cmd_gradcheck(const Common& c) {
    const auto rc = load(c);
    const auto path = out_path(rc, "accuracy.csv");
    auto out = open_out(path);
    write_accuracy_csv(out, accuracy_rows(rc));
    std::cout << path << '\n';
    return 0;
}

int cmd_bench_accuracy(const Common& c) {
    const auto rc = load(c);
    const auto rows = accuracy_rows(rc);
    const auto csv = out_path(rc, "accuracy.csv");
    {
        auto out = open_out(csv);
        write_accuracy_csv(out, rows);
    }
    std::vector<double> lx, ly;
    for (const auto& r : rows)
        if (r.fd_norm > 0.0 && r.rel_err_adjoint > 0.0 && std::isfinite(r.rel_err_adjoint)) {
            lx.push_back(std::log(r.fd_norm));
            ly.push_back(std::log(r.rel_err_adjoint));
        }
    nlohmann::ordered_json j;
    j["samples"] = rows.size();
    j["loglog_slope"] = lx.size() >= 2 ? ls_slope(lx, ly) : std::nan("");
    j["seed"] = rc.seed;
    const auto path = out_path(rc, "accuracy_summary.json");
    open_out(path) << j.dump(2) << '\n';
    std::cout << csv << '\n' << path << '\n';
    return 0;
}

int cmd_bench_speed(const Common& c) {
    const auto rc = load(c);
    const auto data = configured_data(rc);
    const auto m = configured_model(rc);
    const auto order = configured_vehicles(rc, data);
    std::vector<std::unique_ptr<Calibration>> cals;
    std::vector<Vector> points;
    for (int n : rc.speed.sizes) {
        if (n < 1 || static_cast<std::size_t>(n) > order.size())
            throw StructuralError("speed size " + std::to_string(n) + " exceeds the vehicle list");
        cals.push_back(std::make_unique<Calibration>(
            data, std::vector<int>(order.begin(), order.begin() + n), std::vector<ModelInstance>{m}));
        points.push_back(cals.back()->defaults());
    }
    std::vector<SpeedCase> cases;
    for (std::size_t i = 0; i < cals.size(); ++i) {
        const auto* cal = cals[i].get();
        const Vector* p = &points[i];
        SpeedCase sc;
        sc.m = static_cast<int>(cal->dim());
        sc.objective = [cal, p]() { (void)cal->objective(*p); };
        sc.gradients.emplace_back("adjoint", [cal, p]() {
            Vector g;
            (void)cal->objective_gradient(*p, g, GradientMode::Adjoint);
        });
        sc.gradients.emplace_back("forward-fd", [cal, p]() {
            Vector g;
            (void)cal->objective_gradient(*p, g, GradientMode::ForwardFD);
        });
        const auto seed = rc.seed;
        sc.gradients.emplace_back("spsa-1", [cal, p, seed]() {
            (void)spsa_gradient([cal](const Vector& x) { return cal->objective(x); }, *p, 1, 1e-4, seed);
        });
        cases.push_back(std::move(sc));
    }
    const auto rows = speed_sweep(cases, rc.speed.reps);
    const auto path = out_path(rc, "speed.csv");
    auto out = open_out(path);
    write_speed_csv(out, rows);
    std::cout << path << '\n';
    return 0;
}

int cmd_bench_campaign(const Common& c) {
    const auto rc = load(c);
    const auto data = configured_data(rc);
    const auto m = configured_model(rc);
    const auto vehicles = configured_vehicles(rc, data);
    const auto runs = bench::campaign_single_vehicle(data, vehicles, m, variants_of(rc), configured_guesses(rc, m));
    const auto axis = rc.cost_axis == "time" ? bench::CostAxis::Time : bench::CostAxis::Evaluations;
    const auto report = bench::summarize(runs, rc.tolerance, rc.seed, axis);
    bench::emit_report(report, out_path(rc, "report.json"), "json");
    bench::emit_report(report, out_path(rc, "report.csv"), "csv");
    if (!rc.tolerances.empty()) {
        const auto sweep = bench::tolerance_sweep(runs, rc.tolerances, rc.seed, axis);
        auto out = open_out(out_path(rc, "tolerance_sweep.csv"));
        out << "tolerance,variant,pct_global,pareto\n";
        for (const auto& r : sweep)
            for (const auto& v : r.variants)
                out << r.tolerance << ',' << v.name << ',' << v.pct_global << ',' << (v.pareto ? 1 : 0) << '\n';
    }
    nlohmann::ordered_json all = nlohmann::ordered_json::array();
    for (const auto& r : runs) {
        auto j = opt::to_json(r.record);
        j["vehicle"] = r.vehicle;
        j["variant"] = r.variant;
        all.push_back(j);
    }
    open_out(out_path(rc, "runs.json")) << all.dump(2) << '\n';
    std::cout << out_path(rc, "report.json") << '\n';
    return 0;
}

int cmd_bench_platoon(const Common& c) {
    const auto rc = load(c);
    const auto data = configured_data(rc);
    const auto m = configured_model(rc);
    const auto order = configured_vehicles(rc, data);
    const auto v = variants_of(rc).front();
    const auto guesses = configured_guesses(rc, m);
    const auto res = bench::campaign_platoon(data, order, rc.platoon_sizes, m, [&](const Calibration& cal) {
        std::vector<Vector> tiled;
        for (const auto& g : guesses) tiled.push_back(cal.tile(g));
        if (v.algorithm == "ga") return opt::genetic(cal.problem(v.gradient), v.config);
        return opt::multistart(opt::optimizer(v.algorithm), cal.problem(v.gradient), tiled, v.threshold, v.config);
    });
    const auto path = out_path(rc, "platoon.csv");
    auto out = open_out(path);
    bench::write_platoon_csv(out, res.rows);
    std::cout << path << '\n';
    return 0;
}

int cmd_report(const std::string& input, const std::string& format, const std::string& output) {
    std::ifstream in(input);
    if (!in) throw DataError("cannot open '" + input + "'");
    bench::BenchmarkReport r;
    if (input.size() >= 5 && input.substr(input.size() - 5) == ".json") {
        try {
            r = bench::report_from_json(nlohmann::json::parse(in));
        } catch (const nlohmann::json::exception& e) {
            throw DataError(std::string("malformed report: ") + e.what());
        }
    } else {
        r = bench::report_from_csv(in);
    }
    bench::emit_report(r, output, format);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"cfcal: car-following calibration with adjoint gradients"};
    app.require_subcommand(1);
    Common common;
    auto add_common = [&](CLI::App* sub, bool need_config) {
        auto* opt = sub->add_option("--config", common.config, "JSON run configuration")->check(CLI::ExistingFile);
        if (need_config) opt->required();
        sub->add_option("--seed", common.seed, "overrides the configured seed");
    };

    std::string input, units{"feet"}, output, format{"csv"}, algorithm;
    int vehicle = 0;
    SynthArgs sa;

    auto* ingest = app.add_subcommand("ingest", "validate a trajectory CSV and optionally rewrite it");
    ingest->add_option("--input", input)->required();
    ingest->add_option("--units", units);
    ingest->add_option("--output", output);

    auto* synth = app.add_subcommand("synth", "write a synthetic platoon CSV");
    synth->add_option("--model", sa.model);
    synth->add_option("--n", sa.n);
    synth->add_option("--seed", sa.seed);
    synth->add_option("--dt", sa.dt);
    synth->add_option("--horizon", sa.horizon);
    synth->add_option("--noise", sa.noise);
    synth->add_option("--lead", sa.lead)->check(CLI::IsMember({"constant", "sinusoid"}));
    synth->add_option("--output", sa.output);

    auto* calibrate = app.add_subcommand("calibrate", "calibrate one vehicle and write its run record");
    add_common(calibrate, true);
    calibrate->add_option("--vehicle", vehicle);
    calibrate->add_option("--algorithm", algorithm, "variant name or algorithm from the config");
    calibrate->add_option("--output", output);

    auto* gradcheck = app.add_subcommand("gradcheck", "gradient accuracy sweep CSV");
    add_common(gradcheck, true);
    auto* speed = app.add_subcommand("bench-speed", "gradient cost versus platoon size");
    add_common(speed, true);
    auto* accuracy = app.add_subcommand("bench-accuracy", "accuracy sweep with log-log slope summary");
    add_common(accuracy, true);
    auto* campaign = app.add_subcommand("bench-campaign", "single-vehicle algorithm campaign");
    add_common(campaign, true);
    auto* platoon = app.add_subcommand("bench-platoon", "platoon-size campaign");
    add_common(platoon, true);

    auto* report = app.add_subcommand("report", "convert a benchmark report between json and csv");
    report->add_option("--input", input)->required();
    report->add_option("--format", format)->check(CLI::IsMember({"json", "csv"}));
    report->add_option("--output", output)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n\n" << app.help();
        return 2;
    }

    try {
        if (*ingest) return cmd_ingest(input, units, output);
        if (*synth) return cmd_synth(sa);
        if (*calibrate) return cmd_calibrate(common, vehicle, algorithm, output);
        if (*gradcheck) return cmd_gradcheck(common);
        if (*speed) return cmd_bench_speed(common);
        if (*accuracy) return cmd_bench_accuracy(common);
        if (*campaign) return cmd_bench_campaign(common);
        if (*platoon) return cmd_bench_platoon(common);
        if (*report) return cmd_report(input, format, output);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::out_of_range& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 2;
}
