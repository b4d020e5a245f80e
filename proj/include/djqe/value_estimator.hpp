#pragma once

// Deep jump Q-evaluation: fold splitting, per-fold discretization and
// interval models, cross-fitted doubly robust value, and penalty selection.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iterator>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "djqe/core.hpp"
#include "djqe/interval_costs.hpp"
#include "djqe/partitioner.hpp"
#include "djqe/regressor.hpp"

namespace djqe {

// Stream tags for derive_seed.
namespace seed_stream {
inline constexpr std::uint64_t folds = 0x01;
inline constexpr std::uint64_t cv_folds = 0x02;
inline constexpr std::uint64_t fold_costs = 0x03;
inline constexpr std::uint64_t cv_costs = 0x04;
inline constexpr std::uint64_t propensity = 0x05;
}  // namespace seed_stream

// ============================================================================
// Fold plans
// ============================================================================

struct FoldPlan {
    std::size_t n = 0;
    std::uint64_t seed = 0;
    std::vector<std::vector<std::size_t>> folds;  // each sorted ascending

    [[nodiscard]] std::size_t size() const noexcept { return folds.size(); }

    /// Every row not in fold l, ascending.
    [[nodiscard]] std::vector<std::size_t> complement(std::size_t l) const {
        std::vector<std::uint8_t> in(n, 0);
        for (std::size_t r : folds.at(l)) in[r] = 1;
        std::vector<std::size_t> out;
        out.reserve(n - folds[l].size());
        for (std::size_t r = 0; r < n; ++r) {
            if (!in[r]) out.push_back(r);
        }
        return out;
    }
};

/// Seeded uniform random split of {0..n-1} into L folds whose sizes differ by
/// at most one.
inline FoldPlan split_folds(std::size_t n, int L, std::uint64_t seed) {
    if (L < 2) throw ValidationError("fold count must be >= 2");
    if (n < static_cast<std::size_t>(L)) {
        throw ValidationError("cannot split " + std::to_string(n) + " samples into " +
                              std::to_string(L) + " folds");
    }
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::mt19937_64 rng(seed);
    std::shuffle(perm.begin(), perm.end(), rng);
    FoldPlan plan{n, seed, std::vector<std::vector<std::size_t>>(static_cast<std::size_t>(L))};
    for (std::size_t k = 0; k < n; ++k) plan.folds[k % L].push_back(perm[k]);
    for (auto& f : plan.folds) std::sort(f.begin(), f.end());
    return plan;
}

// ============================================================================
// Fitted folds
// ============================================================================

/// Discretization and interval models learned on one training fold.
struct FittedFold {
    int fold_id = 0;
    double gamma = 0.0;
    double objective = 0.0;
    Partition partition;
    std::vector<FittedModel> outcome;      // q_I, one per interval
    std::vector<FittedModel> propensity;   // b_I, one per interval
    std::vector<std::size_t> train_rows;   // ascending
    std::vector<std::size_t> interval_counts;
    double clip_eps = 0.05;
    std::size_t evaluations = 0;
    std::size_t fits = 0;
    std::vector<double> bell;   // Bellman values of the partitioner run, if any
    std::vector<int> tau;

    /// Clipped generalized propensity estimate for interval k.
    [[nodiscard]] double propensity_at(std::size_t k, std::span<const double> x) const {
        return std::clamp(propensity[k].predict(x), clip_eps, 1.0);
    }
};

/// Interval models for a partition already chosen on `cache`.
inline FittedFold assemble_fold(CostCache& cache, const PartitionResult& part,
                                const EvalConfig& config, double gamma, int fold_id) {
    const Dataset& data = cache.dataset();
    FittedFold fold;
    fold.fold_id = fold_id;
    fold.gamma = gamma;
    fold.objective = part.objective;
    fold.partition = part.partition;
    fold.train_rows = cache.fold_rows();
    fold.clip_eps = config.clip_eps;
    fold.evaluations = part.evaluations;
    fold.bell = part.bell;
    fold.tau = part.tau;

    MlpSpec prop_spec = config.mlp;
    prop_spec.output_clamp = 1.0;
    std::vector<std::uint8_t> mask(data.size(), 0);
    for (std::size_t r : fold.train_rows) mask[r] = 1;
    std::vector<double> indicator(data.size(), 0.0);

    for (const auto& iv : fold.partition.intervals()) {
        const auto& e = cache.entry(iv);
        fold.outcome.push_back(e.model);
        fold.interval_counts.push_back(e.n_samples);
        for (std::size_t r : fold.train_rows) indicator[r] = iv.contains(data.actions()[r]) ? 1.0 : 0.0;
        fold.propensity.push_back(fit(data.features(), indicator, mask, prop_spec,
                                      derive_seed(config.seed, seed_stream::propensity,
                                                  derive_seed(static_cast<std::uint64_t>(fold_id),
                                                              static_cast<std::uint64_t>(iv.lo),
                                                              static_cast<std::uint64_t>(iv.hi)))));
    }
    fold.fits = cache.computed();
    return fold;
}

/// Learns the discretization, outcome models and propensities on train_rows.
inline FittedFold fit_fold(const Dataset& data, std::vector<std::size_t> train_rows,
                           const EvalConfig& config, double gamma, int fold_id = 0) {
    config.validate();
    if (train_rows.empty()) throw ValidationError("fit_fold: empty training fold");
    std::sort(train_rows.begin(), train_rows.end());
    const int m = config.resolve_m(data.size());
    CostCache cache(data, std::move(train_rows), m, config.mlp,
                    derive_seed(config.seed, seed_stream::fold_costs, static_cast<std::uint64_t>(fold_id)),
                    config.threads);
    const auto part = run_partitioner(config.partitioner, cache, m, gamma);
    return assemble_fold(cache, part, config, gamma, fold_id);
}

// ============================================================================
// Doubly robust sums
// ============================================================================

struct PartialSum {
    double sum = 0.0;
    std::size_t rows = 0;
    std::size_t propensity_evals = 0;
    std::size_t clipped = 0;
};

/// Contribution of row i under a fitted fold.
///
/// standard_dr:   q_{I(pi)}(x) + 1{A in I(pi)} (Y - q_{I(pi)}(x)) / b_{I(pi)}(x)
/// paper_literal: q_{I(A)}(x)  + 1{pi in I(A)} (Y - q_{I(A)}(x))  / b_{I(A)}(x)
inline double dr_summand(const Dataset& data, std::size_t i, const FittedFold& fold,
                         const Policy& policy, EstimatorVariant variant, PartialSum* stats = nullptr) {
    const auto x = data.x(i);
    const double a = data.actions()[i];
    const double y = data.rewards()[i];
    const std::size_t k_pi = fold.partition.locate(policy.action(data, i));
    const std::size_t k_a = fold.partition.locate(a);
    const std::size_t k = variant == EstimatorVariant::standard_dr ? k_pi : k_a;
    const double q = fold.outcome[k].predict(x);
    if (k_pi != k_a) return q;
    const double raw = fold.propensity[k].predict(x);
    const double b = std::clamp(raw, fold.clip_eps, 1.0);
    if (stats) {
        ++stats->propensity_evals;
        if (b != raw) ++stats->clipped;
    }
    return q + (y - q) / b;
}

inline PartialSum dr_partial_sum_detailed(const Dataset& data, std::span<const std::size_t> test_rows,
                                          const FittedFold& fold, const Policy& policy,
                                          EstimatorVariant variant) {
    // Cross-fitting separation: no scored row may have been used for training.
    std::vector<std::size_t> sorted(test_rows.begin(), test_rows.end());
    std::sort(sorted.begin(), sorted.end());
    std::vector<std::size_t> overlap;
    std::set_intersection(sorted.begin(), sorted.end(), fold.train_rows.begin(), fold.train_rows.end(),
                          std::back_inserter(overlap));
    if (!overlap.empty()) {
        throw ValidationError("test row " + std::to_string(overlap.front()) +
                              " was used to fit the fold that scores it");
    }
    PartialSum out;
    for (std::size_t i : test_rows) {
        out.sum += dr_summand(data, i, fold, policy, variant, &out);
        ++out.rows;
    }
    return out;
}

inline double dr_partial_sum(const Dataset& data, std::span<const std::size_t> test_rows,
                             const FittedFold& fold, const Policy& policy, EstimatorVariant variant) {
    return dr_partial_sum_detailed(data, test_rows, fold, policy, variant).sum;
}

// ============================================================================
// Penalty selection
// ============================================================================

struct GammaSelection {
    double gamma = 0.0;
    std::vector<double> grid;
    std::vector<double> mean_losses;   // empty when the grid has one entry
};

/// Held-out piecewise squared loss for each candidate penalty under
/// cv_folds-fold cross-validation; the minimizer is returned, ties to the
/// larger penalty.
inline GammaSelection select_gamma(const Dataset& data, const EvalConfig& config) {
    config.validate();
    GammaSelection sel;
    sel.grid = config.resolve_gamma_grid(data.size());
    if (sel.grid.empty()) throw ValidationError("gamma grid is empty");
    if (sel.grid.size() == 1) {
        sel.gamma = sel.grid.front();
        return sel;
    }
    const int m = config.resolve_m(data.size());
    const auto plan = split_folds(data.size(), config.cv_folds,
                                  derive_seed(config.seed, seed_stream::cv_folds));
    sel.mean_losses.assign(sel.grid.size(), 0.0);
    for (std::size_t k = 0; k < plan.size(); ++k) {
        CostCache cache(data, plan.complement(k), m, config.mlp,
                        derive_seed(config.seed, seed_stream::cv_costs, k), config.threads);
        const auto& test = plan.folds[k];
        for (std::size_t g = 0; g < sel.grid.size(); ++g) {
            const auto part = run_partitioner(config.partitioner, cache, m, sel.grid[g]);
            double loss = 0.0;
            for (std::size_t i : test) {
                const auto& iv = part.partition[part.partition.locate(data.actions()[i])];
                const double r = data.rewards()[i] - cache.model_for(iv).predict(data.x(i));
                loss += r * r;
            }
            sel.mean_losses[g] += loss / static_cast<double>(test.size()) / static_cast<double>(plan.size());
        }
    }
    std::vector<std::size_t> order(sel.grid.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](auto l, auto r) { return sel.grid[l] < sel.grid[r]; });
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t g : order) {
        const double loss = sel.mean_losses[g];
        if (loss <= best + 1e-12 * (1.0 + std::abs(best))) {
            best = std::min(best, loss);
            sel.gamma = sel.grid[g];
        }
    }
    return sel;
}

// ============================================================================
// Cross-fitted evaluation
// ============================================================================

struct CrossFit {
    FoldPlan plan;
    GammaSelection selection;
    std::vector<FittedFold> folds;   // folds[l] trained on the complement of plan.folds[l]
    int m = 0;
};

inline CrossFit djqe_fit(const Dataset& data, const EvalConfig& config) {
    config.validate();
    CrossFit cf;
    cf.m = config.resolve_m(data.size());
    cf.selection = select_gamma(data, config);
    cf.plan = split_folds(data.size(), config.folds, derive_seed(config.seed, seed_stream::folds));
    for (std::size_t l = 0; l < cf.plan.size(); ++l) {
        cf.folds.push_back(fit_fold(data, cf.plan.complement(l), config, cf.selection.gamma,
                                    static_cast<int>(l)));
    }
    return cf;
}

struct FoldSummary {
    int fold_id = 0;
    std::vector<int> changepoints;
    std::vector<double> changepoint_locations;
    double objective = 0.0;
    double partial_sum = 0.0;
    std::size_t train_size = 0;
    std::size_t test_size = 0;
    std::vector<std::size_t> interval_counts;
    std::size_t evaluations = 0;
    std::size_t fits = 0;
};

struct EvalReport {
    double value = 0.0;
    std::size_t n = 0;
    int m = 0;
    double gamma = 0.0;
    std::vector<double> gamma_grid;
    std::vector<double> gamma_cv_losses;
    EstimatorVariant variant = EstimatorVariant::standard_dr;
    PartitionerKind partitioner = PartitionerKind::pelt;
    std::string policy;
    std::vector<FoldSummary> folds;
    double clip_rate = 0.0;
    std::size_t propensity_evals = 0;
};

/// (1/n) sum over folds of the DR partial sums on each held-out fold.
inline EvalReport evaluate_cross_fit(const Dataset& data, const CrossFit& cf, const Policy& policy,
                                     EstimatorVariant variant) {
    if (cf.folds.size() != cf.plan.size()) throw ValidationError("cross-fit has mismatched folds");
    EvalReport rep;
    rep.n = data.size();
    rep.m = cf.m;
    rep.gamma = cf.selection.gamma;
    rep.gamma_grid = cf.selection.grid;
    rep.gamma_cv_losses = cf.selection.mean_losses;
    rep.variant = variant;
    rep.policy = policy.name();
    double total = 0.0;
    std::size_t clipped = 0;
    for (std::size_t l = 0; l < cf.plan.size(); ++l) {
        const auto& fold = cf.folds[l];
        const auto ps = dr_partial_sum_detailed(data, cf.plan.folds[l], fold, policy, variant);
        total += ps.sum;
        clipped += ps.clipped;
        rep.propensity_evals += ps.propensity_evals;
        FoldSummary s;
        s.fold_id = fold.fold_id;
        s.changepoints = fold.partition.changepoints();
        s.changepoint_locations = fold.partition.changepoint_locations();
        s.objective = fold.objective;
        s.partial_sum = ps.sum;
        s.train_size = fold.train_rows.size();
        s.test_size = cf.plan.folds[l].size();
        s.interval_counts = fold.interval_counts;
        s.evaluations = fold.evaluations;
        s.fits = fold.fits;
        rep.folds.push_back(std::move(s));
    }
    rep.value = total / static_cast<double>(data.size());
    rep.clip_rate = rep.propensity_evals == 0
                        ? 0.0 : static_cast<double>(clipped) / static_cast<double>(rep.propensity_evals);
    if (!std::isfinite(rep.value)) throw NumericalError("value estimate is not finite");
    return rep;
}

inline EvalReport djqe_evaluate(const Dataset& data, const Policy& policy, const EvalConfig& config) {
    const auto cf = djqe_fit(data, config);
    auto rep = evaluate_cross_fit(data, cf, policy, config.variant);
    rep.partitioner = config.partitioner;
    return rep;
}

// ============================================================================
// Value decomposition
// ============================================================================

struct ValueSplit {
    double v1 = 0.0;   // rows with pi(X) <= threshold
    double v2 = 0.0;   // rows with pi(X) >  threshold
};

/// Splits the cross-fitted estimate by whether the target action falls at or
/// below `threshold`. v1 + v2 equals the full estimate.
inline ValueSplit toy_decomposition(const Dataset& data, const Policy& policy, const CrossFit& cf,
                                    EstimatorVariant variant, double threshold = 0.5) {
    ValueSplit out;
    for (std::size_t l = 0; l < cf.plan.size(); ++l) {
        for (std::size_t i : cf.plan.folds[l]) {
            const double s = dr_summand(data, i, cf.folds[l], policy, variant);
            (policy.action(data, i) <= threshold ? out.v1 : out.v2) += s;
        }
    }
    out.v1 /= static_cast<double>(data.size());
    out.v2 /= static_cast<double>(data.size());
    return out;
}

}  // namespace djqe
