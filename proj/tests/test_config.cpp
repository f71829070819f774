#include <algorithm>
#include <string>

#include <gtest/gtest.h>

#include "eqctl/config.hpp"
#include "eqctl/pipelines.hpp"
#include "eqctl/registry.hpp"

namespace eqctl {
namespace {

TEST(Config, ParsesNestedKeys) {
    const ExperimentConfig c = parse_config(
        "pipeline: solve-merton\n"
        "market: {r: 0.02, sigma: 0.3}\n"
        "mc: {n_paths: 500, seed: 9}\n"
        "policy: {nx_cells: 12, constant: [0.1, 0.2]}\n");
    EXPECT_EQ(c.pipeline, "solve-merton");
    EXPECT_EQ(*c.r, 0.02);
    EXPECT_EQ(*c.sigma, 0.3);
    EXPECT_FALSE(c.mean_return.has_value());
    EXPECT_EQ(c.n_paths, 500);
    EXPECT_EQ(*c.seed, 9u);
    EXPECT_EQ(c.nx_nodes, 12);
    EXPECT_EQ(c.constant_policy, (std::vector<double>{0.1, 0.2}));
    EXPECT_EQ(c.degree, 2);
}

TEST(Config, UnknownKeyReportsLine) {
    try {
        parse_config("pipeline: verify\nmc: {seed: 1}\nsolver:\n  dampng: 0.3\n", "x.yaml");
        FAIL() << "expected ConfigError";
    } catch (const ConfigError& e) {
        EXPECT_EQ(e.line, 4);
        EXPECT_NE(std::string(e.what()).find("solver.dampng"), std::string::npos);
    }
}

TEST(Config, MissingSeedIsAnError) {
    EXPECT_THROW(parse_config("pipeline: simulate\nmc: {n_paths: 10}\n"), ConfigError);
    EXPECT_THROW(parse_config("pipeline: nonsense\nseed: 1\n"), ConfigError);
    EXPECT_THROW(parse_config("mc: {seed: 1}\n"), ConfigError);
}

TEST(Config, DescribeEchoesFields) {
    const std::string d = describe(parse_config("pipeline: verify\nseed: 5\n"));
    EXPECT_NE(d.find("# pipeline = verify"), std::string::npos);
    EXPECT_NE(d.find("# seed = 5"), std::string::npos);
}

TEST(Config, OverridesReachMertonSetup) {
    const ExperimentConfig c = parse_config(
        "pipeline: solve-merton\nspec: merton-crra-hyperbolic\nseed: 1\n"
        "discount: {family: exponential, delta: 0.3}\nmarket: {sigma: 0.25}\n");
    const merton::Setup st = setup_from_config(c);
    EXPECT_EQ(st.market.sigma, 0.25);
    EXPECT_EQ(st.market.r, 0.03);
    EXPECT_NEAR(st.discount(1.0, 0.0), std::exp(-0.3), 1e-15);
}

TEST(Registry, SpecsSortedAndResolvable) {
    const auto names = list_specs();
    EXPECT_TRUE(std::is_sorted(names.begin(), names.end()));
    for (const auto& n : names) EXPECT_EQ(spec_by_name(n).name.empty(), false) << n;
    EXPECT_THROW(spec_by_name("nope"), std::invalid_argument);
    EXPECT_EQ(linear_oracle_cases().size(), 6u);
}

}  // namespace
}  // namespace eqctl
