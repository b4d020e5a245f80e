#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "djqe.hpp"

using namespace djqe;

namespace {

std::vector<std::size_t> all_rows(std::size_t n) {
    std::vector<std::size_t> r(n);
    std::iota(r.begin(), r.end(), std::size_t{0});
    return r;
}

FittedFold hand_fold(std::vector<int> cps, int m, std::vector<double> q, double b,
                     std::vector<std::size_t> train = {}) {
    FittedFold f;
    f.partition = partition_from_changepoints(cps, m);
    for (double v : q) {
        f.outcome.push_back(FittedModel::constant(v, 1e9));
        f.propensity.push_back(FittedModel::constant(b, 1.0));
    }
    f.train_rows = std::move(train);
    return f;
}

EvalConfig quick_config(double gamma, int m) {
    EvalConfig c;
    c.gamma_grid = {gamma};
    c.m = m;
    c.mlp.epochs = 150;
    return c;
}

}  // namespace

TEST(SplitFolds, EvenAndUnevenSizes) {
    const auto even = split_folds(10, 2, 1);
    ASSERT_EQ(even.size(), 2u);
    EXPECT_EQ(even.folds[0].size(), 5u);
    EXPECT_EQ(even.folds[1].size(), 5u);

    const auto odd = split_folds(7, 2, 1);
    EXPECT_EQ(odd.folds[0].size(), 4u);
    EXPECT_EQ(odd.folds[1].size(), 3u);

    std::vector<std::size_t> seen;
    for (const auto& f : odd.folds) seen.insert(seen.end(), f.begin(), f.end());
    std::sort(seen.begin(), seen.end());
    EXPECT_EQ(seen, all_rows(7));
}

TEST(SplitFolds, DeterministicAndSeedDependent) {
    EXPECT_EQ(split_folds(50, 3, 8).folds, split_folds(50, 3, 8).folds);
    EXPECT_NE(split_folds(50, 3, 8).folds, split_folds(50, 3, 9).folds);
}

TEST(SplitFolds, RejectsTooFewSamples) {
    EXPECT_THROW(split_folds(1, 2, 0), ValidationError);
    EXPECT_THROW(split_folds(10, 1, 0), ValidationError);
}

TEST(SplitFolds, ComplementIsTheRest) {
    const auto plan = split_folds(9, 3, 4);
    const auto rest = plan.complement(1);
    EXPECT_EQ(rest.size(), 6u);
    for (std::size_t r : plan.folds[1]) EXPECT_FALSE(std::binary_search(rest.begin(), rest.end(), r));
}

TEST(FitFold, NoiselessScenarioOneWithExactDp) {
    const Dataset d = gen_data(Scenario(ScenarioId::s1, 2, 0.0), 400, 12);
    EvalConfig c = quick_config(0.01, 20);
    c.mlp.epochs = 300;
    c.partitioner = PartitionerKind::exact_dp;
    const auto f = fit_fold(d, all_rows(400), c, 0.01);
    EXPECT_EQ(f.partition.changepoints(), (std::vector<int>{7, 13}));
    EXPECT_EQ(f.outcome.size(), 3u);
    EXPECT_EQ(f.propensity.size(), 3u);
    EXPECT_EQ(f.bell.size(), 21u);
}

TEST(FitFold, ZeroRewardsGiveOneInterval) {
    const Dataset s = gen_data(Scenario(ScenarioId::s1, 2, 0.0), 120, 2);
    const Dataset d(Matrix(s.features()), std::vector<double>(s.actions().begin(), s.actions().end()),
                    std::vector<double>(120, 0.0));
    const auto f = fit_fold(d, all_rows(120), quick_config(0.01, 12), 0.01);
    EXPECT_EQ(f.partition.size(), 1u);
    EXPECT_EQ(f.interval_counts, std::vector<std::size_t>{120});
}

TEST(FitFold, PropensityOfHalfIntervalIsNearHalf) {
    const Dataset s = gen_data(Scenario(ScenarioId::s1, 2, 0.0), 1000, 3);
    std::vector<double> y(1000);
    for (std::size_t i = 0; i < 1000; ++i) y[i] = s.actions()[i] >= 0.5 ? 5.0 : 0.0;
    const Dataset d(Matrix(s.features()), std::vector<double>(s.actions().begin(), s.actions().end()), y);
    const auto f = fit_fold(d, all_rows(1000), quick_config(0.01, 10), 0.01);
    ASSERT_EQ(f.partition.changepoints(), std::vector<int>{5});
    for (double x1 : {-0.8, 0.0, 0.7}) {
        const std::vector<double> x{x1, -x1};
        EXPECT_NEAR(f.propensity_at(0, x), 0.5, 0.1);
    }
}

TEST(DrSummand, PureInverseWeightingSumsRewards) {
    const Dataset d(Matrix(4, 1, 0.0), {0.1, 0.4, 0.6, 0.9}, {1.0, -2.0, 3.5, 0.25});
    const auto fold = hand_fold({}, 10, {0.0}, 1.0);
    const auto pol = Policy::constant(0.5);
    EXPECT_DOUBLE_EQ(dr_partial_sum(d, all_rows(4), fold, pol, EstimatorVariant::standard_dr), 2.75);
}

TEST(DrSummand, ExactOutcomeModelCancelsAugmentation) {
    const Dataset d(Matrix(3, 1, 0.0), {0.1, 0.5, 0.9}, {2.0, 2.0, 2.0});
    const auto fold = hand_fold({}, 10, {2.0}, 0.3);
    for (std::size_t i = 0; i < 3; ++i) {
        EXPECT_DOUBLE_EQ(dr_summand(d, i, fold, Policy::constant(0.2), EstimatorVariant::standard_dr), 2.0);
    }
}

TEST(DrSummand, TwoIntervalExample) {
    const Dataset d(Matrix(2, 1, 0.0), {0.2, 0.2}, {3.0, 3.0});
    const auto fold = hand_fold({5}, 10, {1.0, 3.0}, 0.5);
    const auto pi = Policy::tabulated("t", {0.3, 0.8});
    EXPECT_DOUBLE_EQ(dr_summand(d, 0, fold, pi, EstimatorVariant::standard_dr), 5.0);
    EXPECT_DOUBLE_EQ(dr_summand(d, 0, fold, pi, EstimatorVariant::paper_literal), 5.0);
    EXPECT_DOUBLE_EQ(dr_summand(d, 1, fold, pi, EstimatorVariant::standard_dr), 3.0);
    EXPECT_DOUBLE_EQ(dr_summand(d, 1, fold, pi, EstimatorVariant::paper_literal), 1.0);
}

TEST(DrSummand, PropensityIsClipped) {
    auto fold = hand_fold({}, 4, {0.0}, 0.0);
    const std::vector<double> x{0.0};
    EXPECT_DOUBLE_EQ(fold.propensity_at(0, x), 0.05);
    fold.clip_eps = 0.1;
    EXPECT_DOUBLE_EQ(fold.propensity_at(0, x), 0.1);
    fold.propensity[0] = FittedModel::constant(1.0, 1.0);
    EXPECT_DOUBLE_EQ(fold.propensity_at(0, x), 1.0);

    const Dataset d(Matrix(1, 1, 0.0), {0.5}, {1.0});
    fold.propensity[0] = FittedModel::constant(0.0, 1.0);
    EXPECT_DOUBLE_EQ(dr_summand(d, 0, fold, Policy::constant(0.5), EstimatorVariant::standard_dr), 10.0);
}

TEST(DrPartialSum, RejectsTrainingRows) {
    const Dataset d(Matrix(4, 1, 0.0), {0.1, 0.4, 0.6, 0.9}, {1.0, 1.0, 1.0, 1.0});
    const auto fold = hand_fold({}, 10, {0.0}, 1.0, {0, 2});
    const std::vector<std::size_t> clean{1, 3};
    const std::vector<std::size_t> dirty{1, 2};
    EXPECT_NO_THROW(dr_partial_sum(d, clean, fold, Policy::constant(0.5), EstimatorVariant::standard_dr));
    EXPECT_THROW(dr_partial_sum(d, dirty, fold, Policy::constant(0.5), EstimatorVariant::standard_dr),
                 ValidationError);
}

TEST(CrossFit, FoldsAreTrainedOnTheComplement) {
    const Dataset d = gen_data(Scenario(ScenarioId::s4, 3, 1.0), 90, 4);
    const auto cf = djqe_fit(d, quick_config(0.05, 6));
    ASSERT_EQ(cf.folds.size(), 2u);
    for (std::size_t l = 0; l < 2; ++l) {
        EXPECT_EQ(cf.folds[l].train_rows, cf.plan.complement(l));
        EXPECT_EQ(cf.folds[l].train_rows.size() + cf.plan.folds[l].size(), 90u);
    }
}

TEST(Evaluate, ConstantRewardsGiveThatConstant) {
    const Dataset s = gen_data(Scenario(ScenarioId::s1, 2, 0.0), 150, 5);
    const Dataset d(Matrix(s.features()), std::vector<double>(s.actions().begin(), s.actions().end()),
                    std::vector<double>(150, 1.75));
    const auto rep = djqe_evaluate(d, Policy::constant(0.3), quick_config(0.01, 10));
    EXPECT_NEAR(rep.value, 1.75, 1e-4);
    EXPECT_EQ(rep.n, 150u);
    EXPECT_EQ(rep.folds.size(), 2u);
}

TEST(Evaluate, NoiselessConstantPolicyNearTruth) {
    const Dataset d = gen_data(Scenario(ScenarioId::s1, 2, 0.0), 800, 6);
    EvalConfig c = quick_config(0.01, 20);
    c.mlp.epochs = 300;
    const auto pol = Policy::constant(0.5);
    const double truth = policy_value_mc(ScenarioId::s1, pol, 200000, 1).mean;
    const auto rep = djqe_evaluate(d, pol, c);
    EXPECT_NEAR(rep.value, truth, 0.05);
    EXPECT_GE(rep.clip_rate, 0.0);
    EXPECT_LE(rep.clip_rate, 1.0);
}

TEST(Evaluate, VariantIsPlumbedThrough) {
    const Dataset d = gen_data(Scenario(ScenarioId::s1, 2, 1.0), 120, 7);
    EvalConfig c = quick_config(0.02, 10);
    c.variant = EstimatorVariant::paper_literal;
    const auto pol = optimal_policy_for(ScenarioId::s1);
    const auto lit = djqe_evaluate(d, pol, c);
    EXPECT_EQ(lit.variant, EstimatorVariant::paper_literal);
    c.variant = EstimatorVariant::standard_dr;
    const auto std_rep = djqe_evaluate(d, pol, c);
    EXPECT_EQ(std_rep.variant, EstimatorVariant::standard_dr);
    EXPECT_NE(lit.value, std_rep.value);
}

TEST(SelectGamma, SingleEntryIsReturnedWithoutSearch) {
    const Dataset d = gen_data(Scenario(ScenarioId::s1, 2, 1.0), 40, 1);
    const auto sel = select_gamma(d, quick_config(0.3, 4));
    EXPECT_DOUBLE_EQ(sel.gamma, 0.3);
    EXPECT_TRUE(sel.mean_losses.empty());
}

TEST(SelectGamma, TiesGoToTheLargerPenalty) {
    const Dataset s = gen_data(Scenario(ScenarioId::s1, 2, 0.0), 60, 2);
    const Dataset d(Matrix(s.features()), std::vector<double>(s.actions().begin(), s.actions().end()),
                    std::vector<double>(60, 0.0));
    EvalConfig c = quick_config(0.0, 6);
    c.gamma_grid = {0.2, 0.01, 0.05};
    const auto sel = select_gamma(d, c);
    EXPECT_DOUBLE_EQ(sel.gamma, 0.2);
    ASSERT_EQ(sel.mean_losses.size(), 3u);
}

TEST(SelectGamma, HugePenaltyLosesOnStructuredData) {
    const Dataset d = gen_data(Scenario(ScenarioId::s1, 2, 0.0), 200, 3);
    EvalConfig c = quick_config(0.0, 20);
    c.gamma_grid = {1e-3, 100.0};
    const auto sel = select_gamma(d, c);
    EXPECT_DOUBLE_EQ(sel.gamma, 1e-3);
    EXPECT_LT(sel.mean_losses[0], sel.mean_losses[1]);
}

TEST(ToyDecomposition, PartsSumToTheEstimate) {
    const Dataset d = gen_data(Scenario(ScenarioId::toy, 1, 1.0), 100, 8);
    const EvalConfig c = quick_config(0.05, 10);
    const auto cf = djqe_fit(d, c);
    const auto pol = toy_policy();
    const auto split = toy_decomposition(d, pol, cf, c.variant);
    const auto rep = evaluate_cross_fit(d, cf, pol, c.variant);
    EXPECT_NEAR(split.v1 + split.v2, rep.value, 1e-12);

    const auto low = toy_decomposition(d, Policy::constant(0.3), cf, c.variant);
    EXPECT_EQ(low.v2, 0.0);
}
