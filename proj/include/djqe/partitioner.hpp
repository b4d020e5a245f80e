#pragma once

// Penalized optimal partitioning of the action grid.
//
// Bell(0) = -gamma and Bell(v*) = min_v { Bell(v) + C([v/m, v*/m)) + gamma },
// so Bell(m) + gamma = sum of interval costs + gamma * |D|.
//
//   pelt        - recursion restricted to the pruned candidate set R
//   exact_dp    - recursion over every v < v*
//   brute_force - enumeration of all 2^(m-1) partitions (m <= 16)

#include <concepts>
#include <limits>
#include <ostream>
#include <span>
#include <vector>

#include "djqe/core.hpp"
#include "djqe/dataset_io.hpp"

namespace djqe {

template <typename S>
concept CostSource = requires(S& s, const Interval& iv) {
    { s.cost(iv) } -> std::convertible_to<double>;
};

template <typename S>
concept PrefetchingCostSource = CostSource<S> && requires(S& s, std::span<const Interval> ivs) {
    s.prefetch(ivs);
};

struct PartitionResult {
    Partition partition;
    double objective = 0.0;         // sum of costs + gamma * |D|
    std::vector<double> bell;       // Bell(0..m); empty for brute_force
    std::vector<int> tau;           // backpointers; tau[0] unused
    std::size_t evaluations = 0;    // candidate (v, v*) pairs scored

    void write_bellman_csv(std::ostream& out) const {
        out << "v,bell,tau\n";
        for (std::size_t v = 0; v < bell.size(); ++v) {
            out << v << ',' << detail::format_double(bell[v]) << ',' << (v == 0 ? -1 : tau[v]) << '\n';
        }
    }
};

namespace detail {

inline Partition backtrack(std::span<const int> tau, int m) {
    std::vector<int> cps;
    for (int r = m; r > 0;) {
        const int l = tau[r];
        if (l > 0) cps.push_back(l);
        r = l;
    }
    std::vector<int> sorted(cps.rbegin(), cps.rend());
    return Partition::from_changepoints(sorted, m);
}

template <CostSource S>
void prefetch_candidates(S& src, std::span<const int> cands, int vstar, int m) {
    if constexpr (PrefetchingCostSource<S>) {
        std::vector<Interval> ivs;
        ivs.reserve(cands.size());
        for (int v : cands) ivs.push_back({v, vstar, m});
        src.prefetch(ivs);
    }
}

inline void check_args(int m, double gamma) {
    if (m < 1) throw ValidationError("grid resolution must be positive");
    if (!(gamma >= 0.0)) throw ValidationError("gamma must be >= 0");
}

}  // namespace detail

/// Pruned recursion. The candidate set update keeps v*-1 and every previous
/// candidate v with Bell(v) + C([v, v*-1)) <= Bell(v*-1). Ties in the argmin go
/// to the smallest v.
template <CostSource S>
PartitionResult pelt(S& src, int m, double gamma) {
    detail::check_args(m, gamma);
    PartitionResult res;
    res.bell.assign(m + 1, 0.0);
    res.tau.assign(m + 1, 0);
    res.bell[0] = -gamma;

    std::vector<int> cands{0};
    for (int vstar = 1; vstar <= m; ++vstar) {
        if (vstar >= 2) {
            std::vector<int> kept;
            const int prev = vstar - 1;
            for (int v : cands) {
                if (res.bell[v] + src.cost(Interval{v, prev, m}) <= res.bell[prev]) kept.push_back(v);
            }
            kept.push_back(prev);  // empty interval [v*-1, v*-1) has cost 0
            cands.swap(kept);
        }
        detail::prefetch_candidates(src, cands, vstar, m);
        double best = std::numeric_limits<double>::infinity();
        int arg = cands.front();
        for (int v : cands) {
            const double val = res.bell[v] + src.cost(Interval{v, vstar, m}) + gamma;
            ++res.evaluations;
            if (val < best) {
                best = val;
                arg = v;
            }
        }
        res.bell[vstar] = best;
        res.tau[vstar] = arg;
    }
    res.partition = detail::backtrack(res.tau, m);
    res.objective = res.bell[m] + gamma;
    return res;
}

/// Unpruned O(m^2) recursion; globally optimal.
template <CostSource S>
PartitionResult exact_dp(S& src, int m, double gamma) {
    detail::check_args(m, gamma);
    PartitionResult res;
    res.bell.assign(m + 1, 0.0);
    res.tau.assign(m + 1, 0);
    res.bell[0] = -gamma;

    std::vector<int> cands;
    for (int vstar = 1; vstar <= m; ++vstar) {
        cands.push_back(vstar - 1);
        detail::prefetch_candidates(src, cands, vstar, m);
        double best = std::numeric_limits<double>::infinity();
        int arg = 0;
        for (int v = 0; v < vstar; ++v) {
            const double val = res.bell[v] + src.cost(Interval{v, vstar, m}) + gamma;
            ++res.evaluations;
            if (val < best) {
                best = val;
                arg = v;
            }
        }
        res.bell[vstar] = best;
        res.tau[vstar] = arg;
    }
    res.partition = detail::backtrack(res.tau, m);
    res.objective = res.bell[m] + gamma;
    return res;
}

inline constexpr int kBruteForceMaxGrid = 16;

/// Exhaustive search. Ties go to fewer intervals, then to the lexicographically
/// smallest change-point list.
template <CostSource S>
PartitionResult brute_force(S& src, int m, double gamma) {
    detail::check_args(m, gamma);
    if (m > kBruteForceMaxGrid) {
        throw ValidationError("brute_force refuses m > " + std::to_string(kBruteForceMaxGrid));
    }
    PartitionResult res;
    double best = std::numeric_limits<double>::infinity();
    std::vector<int> best_cps;
    bool have = false;
    const unsigned total = 1u << (m - 1);
    for (unsigned mask = 0; mask < total; ++mask) {
        std::vector<int> cps;
        for (int j = 1; j < m; ++j) {
            if (mask & (1u << (j - 1))) cps.push_back(j);
        }
        double obj = 0.0;
        int prev = 0;
        for (int c : cps) {
            obj += src.cost(Interval{prev, c, m});
            prev = c;
        }
        obj += src.cost(Interval{prev, m, m});
        obj += gamma * static_cast<double>(cps.size() + 1);
        ++res.evaluations;

        bool better = !have || obj < best;
        if (have && obj == best) {
            better = cps.size() < best_cps.size() || (cps.size() == best_cps.size() && cps < best_cps);
        }
        if (better) {
            best = obj;
            best_cps = std::move(cps);
            have = true;
        }
    }
    res.partition = Partition::from_changepoints(best_cps, m);
    res.objective = best;
    return res;
}

template <CostSource S>
PartitionResult run_partitioner(PartitionerKind kind, S& src, int m, double gamma) {
    return kind == PartitionerKind::pelt ? pelt(src, m, gamma) : exact_dp(src, m, gamma);
}

/// Objective of an arbitrary partition under a cost source.
template <CostSource S>
double partition_objective(S& src, const Partition& p, double gamma) {
    double obj = 0.0;
    for (const auto& iv : p.intervals()) obj += src.cost(iv);
    return obj + gamma * static_cast<double>(p.size());
}

}  // namespace djqe
