#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "djqe.hpp"

using namespace djqe;

TEST(Interval, HalfOpenBoundaryExcludesRightEnd) {
    const Interval iv = Interval::make(0, 5, 10);
    EXPECT_FALSE(interval_contains(iv, 0.5));
    EXPECT_TRUE(interval_contains(iv, 0.0));
    EXPECT_TRUE(interval_contains(iv, 0.4999));
}

TEST(Interval, FinalIntervalIsClosed) {
    EXPECT_TRUE(interval_contains(Interval::make(5, 10, 10), 1.0));
    EXPECT_TRUE(interval_contains(Interval::make(5, 10, 10), 0.5));
}

TEST(Interval, InteriorPoint) { EXPECT_TRUE(interval_contains(Interval::make(7, 13, 20), 0.4)); }

TEST(Interval, GridPointsNeverFallBetweenNeighbours) {
    // 0.35 * 20 and friends are inexact in binary; locate must still be exact.
    for (int m : {3, 7, 20, 30, 97}) {
        for (int j = 0; j <= m; ++j) {
            const double a = static_cast<double>(j) / m;
            const Partition p = Partition::from_changepoints(std::vector<int>{}, m);
            EXPECT_NO_THROW(static_cast<void>(p.locate(a)));
            if (j > 0 && j < m) {
                EXPECT_TRUE(Interval::make(j, m, m).contains(a)) << j << "/" << m;
                EXPECT_FALSE(Interval::make(0, j, m).contains(a)) << j << "/" << m;
            }
        }
    }
}

TEST(Interval, RejectsInvalid) {
    EXPECT_THROW(Interval::make(3, 3, 10), ValidationError);
    EXPECT_THROW(Interval::make(-1, 3, 10), ValidationError);
    EXPECT_THROW(Interval::make(0, 11, 10), ValidationError);
    EXPECT_THROW(Interval::make(0, 1, 0), ValidationError);
}

TEST(Partition, FromChangepointsExamples) {
    const auto none = partition_from_changepoints(std::vector<int>{}, 10);
    ASSERT_EQ(none.size(), 1u);
    EXPECT_EQ(none[0], Interval::make(0, 10, 10));

    const auto half = partition_from_changepoints(std::vector<int>{5}, 10);
    ASSERT_EQ(half.size(), 2u);
    EXPECT_DOUBLE_EQ(half[0].right(), 0.5);
    EXPECT_DOUBLE_EQ(half[1].left(), 0.5);

    const auto s1 = partition_from_changepoints(std::vector<int>{7, 13}, 20);
    ASSERT_EQ(s1.size(), 3u);
    EXPECT_DOUBLE_EQ(s1[0].right(), 0.35);
    EXPECT_DOUBLE_EQ(s1[1].right(), 0.65);
    EXPECT_EQ(s1[2].hi, 20);
}

TEST(Partition, RejectsBadChangepoints) {
    EXPECT_THROW(partition_from_changepoints(std::vector<int>{5, 5}, 10), ValidationError);
    EXPECT_THROW(partition_from_changepoints(std::vector<int>{6, 3}, 10), ValidationError);
    EXPECT_THROW(partition_from_changepoints(std::vector<int>{0}, 10), ValidationError);
    EXPECT_THROW(partition_from_changepoints(std::vector<int>{10}, 10), ValidationError);
}

TEST(Partition, RejectsGapsAndMixedGrids) {
    EXPECT_THROW(Partition({Interval{0, 3, 10}, Interval{4, 10, 10}}), ValidationError);
    EXPECT_THROW(Partition({Interval{0, 3, 10}, Interval{3, 9, 10}}), ValidationError);
    EXPECT_THROW(Partition({Interval{0, 1, 2}, Interval{1, 4, 4}}), ValidationError);
    EXPECT_THROW(Partition(std::vector<Interval>{}), ValidationError);
}

TEST(PartitionProperty, EveryActionInExactlyOneInterval) {
    std::mt19937_64 rng(3);
    std::uniform_int_distribution<int> grid(2, 40);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (int trial = 0; trial < 200; ++trial) {
        const int m = grid(rng);
        std::vector<int> cps;
        for (int j = 1; j < m; ++j) {
            if (unif(rng) < 0.3) cps.push_back(j);
        }
        const auto p = partition_from_changepoints(cps, m);
        EXPECT_EQ(p.changepoints(), cps);
        std::vector<double> probes{0.0, 1.0};
        for (int j = 0; j <= m; ++j) probes.push_back(static_cast<double>(j) / m);
        for (int k = 0; k < 50; ++k) probes.push_back(unif(rng));
        for (double a : probes) {
            int hits = 0;
            for (const auto& iv : p.intervals()) hits += iv.contains(a) ? 1 : 0;
            EXPECT_EQ(hits, 1) << "a=" << a << " m=" << m;
        }
        if (!cps.empty()) EXPECT_EQ(changepoint_hausdorff(p, p), 0.0);
    }
}

TEST(Hausdorff, Examples) {
    const std::vector<double> truth{0.35, 0.65};
    EXPECT_DOUBLE_EQ(changepoint_hausdorff(std::vector<double>{0.35, 0.65}, truth), 0.0);
    EXPECT_NEAR(changepoint_hausdorff(std::vector<double>{0.3, 0.7}, truth), 0.05, 1e-12);
    EXPECT_TRUE(std::isinf(changepoint_hausdorff(std::vector<double>{}, std::vector<double>{0.5})));
    EXPECT_THROW(changepoint_hausdorff(std::vector<double>{0.5}, std::vector<double>{}), ValidationError);
}

TEST(Dataset, RejectsMismatchedAndEmpty) {
    EXPECT_THROW(Dataset(Matrix(0, 1), {}, {}), ValidationError);
    EXPECT_THROW(Dataset(Matrix(2, 1), {0.1}, {1.0, 2.0}), ValidationError);
    EXPECT_THROW(Dataset(Matrix(1, 1, std::numeric_limits<double>::quiet_NaN()), {0.1}, {1.0}),
                 ValidationError);
}

TEST(Dataset, AutomaticNormalizationOnlyWhenOutsideUnitInterval) {
    const Dataset inside(Matrix(2, 1), {0.2, 0.6}, {1.0, 2.0}, ActionNormalization::automatic);
    EXPECT_DOUBLE_EQ(inside.actions()[0], 0.2);

    const Dataset doses(Matrix(3, 1), {10.0, 30.0, 50.0}, {1.0, 2.0, 3.0}, ActionNormalization::automatic);
    EXPECT_DOUBLE_EQ(doses.actions()[0], 0.0);
    EXPECT_DOUBLE_EQ(doses.actions()[1], 0.5);
    EXPECT_DOUBLE_EQ(doses.actions()[2], 1.0);
    EXPECT_DOUBLE_EQ(doses.action_scale().offset, 10.0);
    EXPECT_DOUBLE_EQ(doses.action_scale().scale, 40.0);
    EXPECT_DOUBLE_EQ(doses.action_scale().to_normalized(30.0), 0.5);

    EXPECT_THROW(Dataset(Matrix(2, 1), {2.0, 3.0}, {1.0, 2.0}, ActionNormalization::never), ValidationError);
}

TEST(DatasetCsv, RoundTripIsExact) {
    const Dataset d = gen_data(Scenario(ScenarioId::s1, 3, 1.0), 25, 17);
    std::stringstream s;
    write_dataset_csv(s, d);
    const Dataset back = parse_dataset_csv(s);
    ASSERT_EQ(back.size(), d.size());
    ASSERT_EQ(back.dim(), d.dim());
    for (std::size_t i = 0; i < d.size(); ++i) {
        EXPECT_EQ(back.actions()[i], d.actions()[i]);
        EXPECT_EQ(back.rewards()[i], d.rewards()[i]);
        for (std::size_t j = 0; j < d.dim(); ++j) EXPECT_EQ(back.x(i)[j], d.x(i)[j]);
    }
}

TEST(DatasetCsv, MalformedRowIsNamed) {
    std::stringstream s("x_1,a,y\n0.1,0.2,0.3\n0.1,oops,0.3\n");
    try {
        parse_dataset_csv(s);
        FAIL() << "expected a validation error";
    } catch (const ValidationError& e) {
        EXPECT_NE(std::string(e.what()).find("row 3"), std::string::npos) << e.what();
    }
}

TEST(DatasetCsv, MissingFileIsIoError) {
    EXPECT_THROW(read_dataset_csv("/nonexistent/djqe.csv"), IoError);
}

TEST(Policy, TabulatedRejectsOutOfRange) {
    EXPECT_THROW(Policy::tabulated("p", {0.1, 1.5}), ValidationError);
    const Dataset d(Matrix(2, 1), {0.1, 0.2}, {0.0, 0.0});
    const Policy p = Policy::tabulated("p", {0.3, 0.9});
    EXPECT_DOUBLE_EQ(p.action(d, 1), 0.9);
    const Dataset longer(Matrix(3, 1), {0.1, 0.2, 0.3}, {0.0, 0.0, 0.0});
    EXPECT_THROW(static_cast<void>(p.action(longer, 0)), ValidationError);
}

TEST(Policy, FunctionOutputIsClamped) {
    const Policy p("wild", [](std::span<const double> x) { return 3.0 * x[0]; });
    const std::vector<double> x{2.0};
    EXPECT_DOUBLE_EQ(p.at(x), 1.0);
    const std::vector<double> y{-2.0};
    EXPECT_DOUBLE_EQ(p.at(y), 0.0);
}

TEST(EvalConfig, DefaultsAndValidation) {
    EvalConfig c;
    EXPECT_EQ(c.resolve_m(300), 30);
    EXPECT_EQ(c.resolve_m(5), 2);
    EXPECT_EQ(c.folds, 2);
    EXPECT_DOUBLE_EQ(c.clip_eps, 0.05);
    EXPECT_EQ(c.variant, EstimatorVariant::standard_dr);
    const auto grid = c.resolve_gamma_grid(200);
    ASSERT_EQ(grid.size(), 5u);
    EXPECT_NEAR(grid[0], 0.1 * std::pow(200.0, -0.4), 1e-15);
    EXPECT_NEAR(grid[4], 0.5 * std::pow(200.0, -0.4), 1e-15);

    c.m = 1;
    EXPECT_THROW(c.validate(), ValidationError);
    c.m = 10;
    c.folds = 1;
    EXPECT_THROW(c.validate(), ValidationError);
    c.folds = 2;
    c.gamma_grid = {-1.0};
    EXPECT_THROW(c.validate(), ValidationError);
    c.gamma_grid = {0.1};
    c.clip_eps = 0.5;
    EXPECT_THROW(c.validate(), ValidationError);
}

TEST(MlpSpec, Validation) {
    MlpSpec s;
    EXPECT_NO_THROW(s.validate());
    s.hidden_layers = 0;
    EXPECT_THROW(s.validate(), ValidationError);
    s = {};
    s.hidden_width = 0;
    EXPECT_THROW(s.validate(), ValidationError);
    s = {};
    s.output_clamp = 0.0;
    EXPECT_THROW(s.validate(), ValidationError);
}

TEST(Enums, ParseRoundTrip) {
    for (auto v : {EstimatorVariant::standard_dr, EstimatorVariant::paper_literal}) {
        EXPECT_EQ(parse_variant(to_string(v)), v);
    }
    for (auto k : {PartitionerKind::pelt, PartitionerKind::exact_dp}) EXPECT_EQ(parse_partitioner(to_string(k)), k);
    EXPECT_THROW(parse_variant("nope"), ValidationError);
    EXPECT_THROW(parse_partitioner("nope"), ValidationError);
}

TEST(Seeds, DeriveSeedIsDeterministicAndSpreads) {
    EXPECT_EQ(derive_seed(1, 2, 3), derive_seed(1, 2, 3));
    EXPECT_NE(derive_seed(1, 2, 3), derive_seed(1, 3, 2));
    EXPECT_NE(derive_seed(1, 2, 3), derive_seed(2, 2, 3));
}
