#include <gtest/gtest.h>

#include <cstdlib>

#include "cfcal/runconfig.hpp"

using namespace cfcal;

namespace {

nlohmann::json minimal() {
    return nlohmann::json::parse(R"({"synthetic": {"n": 2, "horizon": 10}, "seed": 3})");
}

}  // namespace

TEST(RunConfigTest, Defaults) {
    const auto c = parse_run_config(minimal());
    EXPECT_EQ(c.model, "ovm");
    EXPECT_EQ(c.seed, 3u);
    EXPECT_DOUBLE_EQ(c.tolerance, 1.0 / 12.0);
    ASSERT_TRUE(c.synthetic.has_value());
    EXPECT_EQ(c.synthetic->n, 2);
    EXPECT_TRUE(c.variants.empty());
}

TEST(RunConfigTest, UnknownKeysAreRejectedAtEveryLevel) {
    for (const char* bad : {R"({"synthetic": {}, "tolerence": 0.1})", R"({"synthetic": {"noise": 1}})",
                            R"({"synthetic": {}, "model": {"kind": "ovm", "tau0": 1}})",
                            R"({"synthetic": {}, "algorithms": [{"algorithm": "tnc", "grad": "adjoint"}]})",
                            R"({"synthetic": {}, "algorithms": [{"algorithm": "tnc", "config": {"maxiter": 3}}]})",
                            R"({"synthetic": {}, "speed": {"size": [1]}})",
                            R"({"synthetic": {}, "gradcheck": {"sample": 3}})"})
        EXPECT_THROW((void)parse_run_config(nlohmann::json::parse(bad)), StructuralError) << bad;
}

TEST(RunConfigTest, NeedsExactlyOneDataSource) {
    EXPECT_THROW((void)parse_run_config(nlohmann::json::object()), StructuralError);
    EXPECT_THROW((void)parse_run_config(nlohmann::json::parse(R"({"data": "x.csv", "synthetic": {}})")),
                 StructuralError);
}

TEST(RunConfigTest, ThresholdsExpandIntoVariants) {
    auto j = minimal();
    j["algorithms"] = nlohmann::json::parse(R"([
        {"algorithm": "tnc", "gradient": "adjoint", "thresholds": [0, 7.5, "inf"]},
        {"algorithm": "lbfgsb", "gradient": "forward-fd"},
        {"algorithm": "ga", "config": {"max_evals": 100}}
    ])");
    const auto c = parse_run_config(j);
    ASSERT_EQ(c.variants.size(), 5u);
    EXPECT_EQ(c.variants[0].name, "adjoint tnc-0");
    EXPECT_EQ(c.variants[1].name, "adjoint tnc-7.5");
    EXPECT_EQ(c.variants[2].name, "adjoint tnc-inf");
    EXPECT_EQ(c.variants[2].threshold, kInf);
    EXPECT_EQ(c.variants[3].name, "forward-fd lbfgsb");
    EXPECT_EQ(c.variants[3].gradient, GradientMode::ForwardFD);
    EXPECT_EQ(c.variants[4].name, "ga");
    EXPECT_EQ(c.variants[4].config.max_evals, 100);
}

TEST(RunConfigTest, BadValues) {
    auto j = minimal();
    j["algorithms"] = nlohmann::json::parse(R"([{"algorithm": "bfgs"}])");
    EXPECT_THROW((void)parse_run_config(j), StructuralError);
    j = minimal();
    j["algorithms"] = nlohmann::json::parse(R"([{"algorithm": "tnc", "thresholds": ["large"]}])");
    EXPECT_THROW((void)parse_run_config(j), StructuralError);
    j = minimal();
    j["tolerance"] = "tight";
    EXPECT_THROW((void)parse_run_config(j), StructuralError);
    j = minimal();
    j["tolerance"] = -1.0;
    EXPECT_THROW((void)parse_run_config(j), StructuralError);
}

TEST(RunConfigTest, SyntheticDataAndVehicles) {
    const auto c = parse_run_config(minimal());
    const auto d = configured_data(c);
    EXPECT_EQ(d.size(), 3u);
    EXPECT_EQ(configured_vehicles(c, d), (std::vector<int>{2, 3}));
    EXPECT_TRUE(configured_data(c) == d);
    const auto g = configured_guesses(c, configured_model(c));
    ASSERT_EQ(g.size(), 1u);
    EXPECT_EQ(g[0], ModelInstance::ovm().params);
}

TEST(RunConfigTest, ModelOverrides) {
    auto j = minimal();
    j["model"] = nlohmann::json::parse(R"({"kind": "ovm", "delay": true, "tau": 0.2, "tau_max": 0.8,
                                          "upper": [100, 0.1, 2, 5, 3]})");
    const auto m = configured_model(parse_run_config(j));
    EXPECT_TRUE(m.delayed());
    EXPECT_DOUBLE_EQ(m.upper[0], 100.0);
    EXPECT_DOUBLE_EQ(m.upper[5], 0.8);
    j["model"]["lower"] = {1, 2};
    EXPECT_THROW((void)configured_model(parse_run_config(j)), StructuralError);
    j = minimal();
    j["guesses"] = {{1, 2, 3}};
    EXPECT_THROW((void)configured_guesses(parse_run_config(j), ModelInstance::ovm()), StructuralError);
}

TEST(RunConfigTest, OutputDirectoryOverride) {
    auto c = parse_run_config(minimal());
    c.output = "results";
    ::unsetenv("CFCAL_OUTPUT_DIR");
    EXPECT_EQ(output_dir(c), "results");
    ::setenv("CFCAL_OUTPUT_DIR", "/tmp/elsewhere", 1);
    EXPECT_EQ(output_dir(c), "/tmp/elsewhere");
    ::unsetenv("CFCAL_OUTPUT_DIR");
}
