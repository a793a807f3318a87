#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>

#include "cfcal/bench.hpp"
#include "scenarios.hpp"

using namespace cfcal;
using namespace cfcal::bench;

namespace {

VehicleRun run(int vehicle, const std::string& variant, double rmse, double seconds, std::size_t evals = 10) {
    VehicleRun r;
    r.vehicle = vehicle;
    r.variant = variant;
    r.record.rmse = rmse;
    r.record.seconds = seconds;
    r.record.counts.objective = evals;
    r.record.counts.gradient = evals;
    return r;
}

bool on_front(const BenchmarkReport& r, const std::string& name) {
    for (const auto& v : r.variants)
        if (v.name == name) return v.pareto;
    throw std::runtime_error("no variant " + name);
}

// Brute-force front: a variant is kept unless another is no worse in all
// three metrics and strictly better in one.
std::vector<bool> brute_front(const std::vector<VariantSummary>& v) {
    std::vector<bool> out;
    for (const auto& a : v) {
        bool dominated = false;
        for (const auto& b : v) {
            const bool le = b.avg_time <= a.avg_time && b.avg_rmse <= a.avg_rmse && b.pct_global >= a.pct_global;
            const bool lt = b.avg_time < a.avg_time || b.avg_rmse < a.avg_rmse || b.pct_global > a.pct_global;
            dominated = dominated || (le && lt);
        }
        out.push_back(!dominated);
    }
    return out;
}

}  // namespace

TEST(Pareto, TiesAreAllMembers) {
    const auto rep = summarize({run(1, "a", 2.0, 1.0), run(1, "b", 2.0, 1.0)}, 1.0 / 12.0);
    ASSERT_EQ(rep.variants.size(), 2u);
    for (const auto& v : rep.variants) {
        EXPECT_EQ(v.pct_global, 100.0);
        EXPECT_TRUE(v.pareto);
    }
}

TEST(Pareto, DominatedVariantIsExcluded) {
    const auto rep = summarize({run(1, "a", 2.0, 1.0), run(1, "b", 3.0, 2.0)}, 1.0 / 12.0);
    EXPECT_TRUE(on_front(rep, "a"));
    EXPECT_FALSE(on_front(rep, "b"));
}

TEST(Pareto, MatchesBruteForceOnRandomSummaries) {
    std::mt19937_64 rng(3);
    std::uniform_int_distribution<int> small(0, 3);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<VariantSummary> v(6);
        for (auto& s : v) {
            s.avg_time = small(rng);
            s.avg_rmse = small(rng);
            s.pct_global = 25.0 * small(rng);
        }
        const auto expect = brute_front(v);
        pareto_front(v);
        for (std::size_t i = 0; i < v.size(); ++i) EXPECT_EQ(v[i].pareto, expect[i]) << trial;
    }
}

TEST(Summarize, PercentagesAndAverages) {
    // Vehicle 1 best 1.0 (by "a"); vehicle 2 best 2.0 (by "b").
    const auto rep = summarize({run(1, "a", 1.0, 1.0), run(2, "a", 2.5, 3.0), run(1, "b", 1.05, 2.0),
                                run(2, "b", 2.0, 2.0)},
                               0.1, 17);
    EXPECT_EQ(rep.seed, 17u);
    EXPECT_EQ(rep.tolerance, 0.1);
    const auto& a = rep.variants[0];
    const auto& b = rep.variants[1];
    EXPECT_EQ(a.name, "a");
    EXPECT_DOUBLE_EQ(a.pct_global, 50.0);
    EXPECT_DOUBLE_EQ(b.pct_global, 100.0);
    EXPECT_DOUBLE_EQ(a.avg_rmse, 1.75);
    EXPECT_DOUBLE_EQ(a.avg_time, 2.0);
    EXPECT_DOUBLE_EQ(a.avg_over_opt, 0.25);
    EXPECT_DOUBLE_EQ(a.avg_over_opt_pct, 12.5);
    EXPECT_NEAR(b.avg_over_opt, 0.025, 1e-15);
}

TEST(Summarize, EquivalentEvaluationsPerRun) {
    auto r = run(1, "fd", 1.0, 1.0, 4);
    r.equivalent = 4 + 5 * 4;  // forward differences over 5 parameters
    const auto rep = summarize({r, run(1, "adj", 1.0, 1.0, 4)}, 0.1);
    EXPECT_DOUBLE_EQ(rep.variants[0].avg_equiv_evals, 8.0);
    EXPECT_DOUBLE_EQ(rep.variants[1].avg_equiv_evals, 24.0);
}

TEST(ToleranceSweep, MembershipChangesMonotonically) {
    // "best" sets both optima at 1.0 but is slow. "p" is exact on vehicle 1
    // and 0.2 over on vehicle 2; "q" is 0.05 over on both. p and q cost the
    // same. Small tolerances credit only p's exact fit, so p (better %) and
    // q (better RMSE) are both non-dominated. From 0.05 on q matches or
    // beats p's % and p leaves the front for good.
    const std::vector<VehicleRun> runs{run(1, "best", 1.0, 10.0), run(2, "best", 1.0, 10.0),
                                       run(1, "p", 1.0, 1.0),     run(2, "p", 1.2, 1.0),
                                       run(1, "q", 1.05, 1.0),    run(2, "q", 1.05, 1.0)};
    const std::vector<double> tols{0.0, 1.0 / 24.0, 1.0 / 12.0, 0.25, 0.5};
    const auto reps = tolerance_sweep(runs, tols, 1);
    const std::vector<bool> p_expected{true, true, false, false, false};
    for (std::size_t i = 0; i < tols.size(); ++i) {
        EXPECT_EQ(on_front(reps[i], "p"), p_expected[i]) << tols[i];
        EXPECT_TRUE(on_front(reps[i], "q")) << tols[i];
        EXPECT_TRUE(on_front(reps[i], "best")) << tols[i];
        EXPECT_EQ(reps[i].tolerance, tols[i]);
        for (const auto& v : reps[i].variants) {
            EXPECT_GE(v.pct_global, 0.0);
            EXPECT_LE(v.pct_global, 100.0);
            if (i > 0)
                for (const auto& w : reps[i - 1].variants)
                    if (w.name == v.name) EXPECT_GE(v.pct_global, w.pct_global);
        }
    }
}

TEST(Report, JsonCsvJsonRoundTrip) {
    BenchmarkReport r;
    r.tolerance = 1.0 / 12.0;
    r.seed = 123456789012345ull;
    VariantSummary v;
    v.name = "adjoint tnc-7.5";
    v.pct_global = 100.0 * 2.0 / 3.0;
    v.avg_rmse = 3.141592653589793;
    v.avg_time = 1.0 / 7.0;
    v.avg_over_opt = 1e-17;
    v.avg_over_opt_pct = 12.345678901234567;
    v.avg_guesses = 5.0 / 3.0;
    v.avg_obj_evals = 412.25;
    v.avg_grad_evals = 400.125;
    v.avg_hess_evals = 0.0;
    v.avg_equiv_evals = 812.375;
    v.pareto = true;
    r.variants = {v, v};
    r.variants[1].name = "ga";
    r.variants[1].pareto = false;

    const auto j1 = report_from_json(nlohmann::json::parse(report_to_json(r).dump()));
    std::stringstream csv;
    report_to_csv(csv, j1);
    const auto c = report_from_csv(csv);
    const auto j2 = report_from_json(nlohmann::json::parse(report_to_json(c).dump()));

    auto close = [](double a, double b) { return a == b || std::abs(a - b) <= 1e-12 * std::max(std::abs(a), std::abs(b)); };
    EXPECT_TRUE(close(j2.tolerance, r.tolerance));
    EXPECT_EQ(j2.seed, r.seed);
    ASSERT_EQ(j2.variants.size(), 2u);
    for (std::size_t i = 0; i < 2; ++i) {
        const auto &a = r.variants[i], &b = j2.variants[i];
        EXPECT_EQ(a.name, b.name);
        EXPECT_EQ(a.pareto, b.pareto);
        for (auto [x, y] : {std::pair{a.pct_global, b.pct_global}, {a.avg_rmse, b.avg_rmse},
                            {a.avg_time, b.avg_time}, {a.avg_over_opt, b.avg_over_opt},
                            {a.avg_over_opt_pct, b.avg_over_opt_pct}, {a.avg_guesses, b.avg_guesses},
                            {a.avg_obj_evals, b.avg_obj_evals}, {a.avg_grad_evals, b.avg_grad_evals},
                            {a.avg_hess_evals, b.avg_hess_evals}, {a.avg_equiv_evals, b.avg_equiv_evals}})
            EXPECT_TRUE(close(x, y)) << x << " vs " << y;
    }
}

TEST(Report, EmptyCampaignWritesHeaderOnly) {
    BenchmarkReport r;
    std::stringstream csv;
    report_to_csv(csv, r);
    std::string header, extra;
    std::getline(csv, header);
    EXPECT_FALSE(std::getline(csv, extra));
    EXPECT_NE(header.find("tolerance"), std::string::npos);
    EXPECT_NE(header.find("seed"), std::string::npos);
    const auto j = report_to_json(r);
    EXPECT_TRUE(j.contains("tolerance"));
    EXPECT_TRUE(j.contains("seed"));
    EXPECT_TRUE(j["variants"].empty());
}

TEST(Report, EmitWritesFilesAndRejectsBadPaths) {
    const auto dir = std::filesystem::temp_directory_path() / "cfcal_bench_test";
    std::filesystem::create_directories(dir);
    BenchmarkReport r;
    r.variants.push_back({});
    r.variants[0].name = "x";
    emit_report(r, (dir / "r.json").string(), "json");
    emit_report(r, (dir / "r.csv").string(), "csv");
    std::ifstream in(dir / "r.csv");
    EXPECT_EQ(report_from_csv(in).variants.size(), 1u);
    EXPECT_THROW(emit_report(r, (dir / "missing" / "r.json").string(), "json"), DataError);
    EXPECT_THROW(emit_report(r, (dir / "r.xml").string(), "xml"), StructuralError);
    std::filesystem::remove_all(dir);
}

TEST(Platoons, SplitWithRemainder) {
    std::vector<int> order(100);
    std::iota(order.begin(), order.end(), 1);
    const auto three = split_platoons(order, 3);
    ASSERT_EQ(three.size(), 34u);
    EXPECT_EQ(three.back().size(), 1u);
    EXPECT_EQ(three.back().front(), 100);
    EXPECT_EQ(split_platoons(order, 4).size(), 25u);
    EXPECT_THROW((void)split_platoons(order, 0), StructuralError);
}

TEST(Platoons, ChainBreakNamesTheVehicle) {
    const auto data = scen::ovm_chain(3, 1, 10.0);  // 1 <- 2 <- 3 <- 4
    EXPECT_NO_THROW(check_chain(data, {2, 3, 4}));
    try {
        check_chain(data, {2, 4, 3});
        FAIL() << "expected an error";
    } catch (const StructuralError& e) {
        EXPECT_NE(std::string(e.what()).find("vehicle 4"), std::string::npos) << e.what();
    }
}

TEST(Platoons, ExactFitCampaignHasZeroRmse) {
    const auto data = scen::ovm_chain(4, 1, 20.0);
    const auto res = campaign_platoon(data, {2, 3, 4, 5}, {1, 2, 3}, ModelInstance::ovm(),
                                      [](const Calibration& cal) {
                                          opt::RunRecord r;
                                          r.best = cal.defaults();
                                          return r;
                                      });
    ASSERT_EQ(res.rows.size(), 3u);
    EXPECT_EQ(res.rows[0].platoons, 4u);
    EXPECT_EQ(res.rows[1].platoons, 2u);
    EXPECT_EQ(res.rows[2].platoons, 2u);
    for (const auto& row : res.rows) EXPECT_NEAR(row.overall_rmse, 0.0, 1e-9);
}

TEST(Campaign, SingleVehicleRunsEveryVariant) {
    const auto data = scen::ovm_chain(2, 5, 20.0);
    Variant a{"adjoint lbfgsb", "lbfgsb", GradientMode::Adjoint, kInf, {}};
    Variant f{"forward-fd lbfgsb", "lbfgsb", GradientMode::ForwardFD, kInf, {}};
    a.config.max_evals = f.config.max_evals = 60;
    const std::vector<Vector> guesses{scen::ovm_guess(1)};
    const auto runs = campaign_single_vehicle(data, {2, 3}, ModelInstance::ovm(), {a, f}, guesses);
    ASSERT_EQ(runs.size(), 4u);
    for (const auto& r : runs) {
        const double grad_cost = r.variant == "adjoint lbfgsb" ? 1.0 : 5.0;
        EXPECT_DOUBLE_EQ(r.equivalent, static_cast<double>(r.record.counts.objective) +
                                           grad_cost * static_cast<double>(r.record.counts.gradient));
    }
    const auto rep = summarize(runs, 1.0 / 12.0);
    EXPECT_EQ(rep.variants.size(), 2u);
    EXPECT_THROW((void)campaign_single_vehicle(data, {}, ModelInstance::ovm(), {a}, guesses), StructuralError);
}
