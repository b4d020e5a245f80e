#pragma once

// Lazily computed, memoized per-interval fits and costs for one training fold.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <memory>
#include <ostream>
#include <span>
#include <thread>
#include <vector>

#include "djqe/core.hpp"
#include "djqe/dataset_io.hpp"
#include "djqe/regressor.hpp"

namespace djqe {

struct CostEntry {
    double cost = 0.0;          // n_I / |fold| * masked MSE
    std::size_t n_samples = 0;
    FittedModel model;
};

/// Upper-triangular map (lo, hi) -> CostEntry on grid m.
///
/// Entries are computed on first request and never change afterwards. Distinct
/// keys may be computed concurrently; racing requests for the same key keep the
/// first stored entry (all racers compute identical values). Lookups of stored
/// entries are a single atomic load.
class CostCache {
public:
    CostCache(const Dataset& data, std::vector<std::size_t> fold_rows, int m, MlpSpec spec,
              std::uint64_t seed, int threads = 1)
        : data_(&data), rows_(std::move(fold_rows)), m_(m), spec_(std::move(spec)),
          seed_(seed), threads_(std::max(1, threads)) {
        if (m_ < 1) throw ValidationError("cost cache grid must be positive");
        if (rows_.empty()) throw ValidationError("cost cache needs a non-empty training fold");
        const std::size_t slots = static_cast<std::size_t>(m_) * (m_ + 1) / 2;
        slots_ = std::make_unique<std::atomic<const CostEntry*>[]>(slots);
        for (std::size_t k = 0; k < slots; ++k) slots_[k].store(nullptr, std::memory_order_relaxed);

        double max_abs = 0.0;
        for (std::size_t r : rows_) {
            if (r >= data.size()) throw ValidationError("fold row out of range");
            max_abs = std::max(max_abs, std::abs(data.rewards()[r]));
        }
        if (!spec_.output_clamp) spec_.output_clamp = std::max(2.0 * max_abs, 1e-12);
    }

    CostCache(const CostCache&) = delete;
    CostCache& operator=(const CostCache&) = delete;

    ~CostCache() {
        const std::size_t slots = static_cast<std::size_t>(m_) * (m_ + 1) / 2;
        for (std::size_t k = 0; k < slots; ++k) delete slots_[k].load();
    }

    [[nodiscard]] int m() const noexcept { return m_; }
    [[nodiscard]] const std::vector<std::size_t>& fold_rows() const noexcept { return rows_; }
    [[nodiscard]] const Dataset& dataset() const noexcept { return *data_; }
    [[nodiscard]] std::size_t computed() const noexcept { return computed_.load(); }

    const CostEntry& entry(const Interval& iv) {
        auto& slot = slots_[index(iv)];
        if (const CostEntry* e = slot.load(std::memory_order_acquire)) return *e;
        auto fresh = std::make_unique<CostEntry>(compute(iv));
        const CostEntry* expected = nullptr;
        if (slot.compare_exchange_strong(expected, fresh.get(), std::memory_order_acq_rel)) {
            computed_.fetch_add(1);
            return *fresh.release();
        }
        return *expected;
    }

    double cost(const Interval& iv) { return entry(iv).cost; }
    const FittedModel& model_for(const Interval& iv) { return entry(iv).model; }

    [[nodiscard]] const CostEntry* find(const Interval& iv) const {
        return slots_[index(iv)].load(std::memory_order_acquire);
    }

    /// Computes any missing entries among ivs, using up to `threads` workers.
    void prefetch(std::span<const Interval> ivs) {
        std::vector<Interval> todo;
        for (const auto& iv : ivs) {
            if (!find(iv)) todo.push_back(iv);
        }
        const int workers = std::min<int>(threads_, static_cast<int>(todo.size()));
        if (workers <= 1) {
            for (const auto& iv : todo) entry(iv);
            return;
        }
        std::atomic<std::size_t> next{0};
        std::exception_ptr failure;
        std::atomic<bool> failed{false};
        auto work = [&] {
            try {
                for (std::size_t k; (k = next.fetch_add(1)) < todo.size();) entry(todo[k]);
            } catch (...) {
                if (!failed.exchange(true)) failure = std::current_exception();
            }
        };
        std::vector<std::thread> pool;
        for (int t = 0; t < workers; ++t) pool.emplace_back(work);
        for (auto& t : pool) t.join();
        if (failure) std::rethrow_exception(failure);
    }

    /// Computes every interval on the grid.
    void fill_all() {
        std::vector<Interval> all;
        for (int hi = 1; hi <= m_; ++hi)
            for (int lo = 0; lo < hi; ++lo) all.push_back({lo, hi, m_});
        prefetch(all);
    }

    /// CSV dump of computed entries: lo,hi,cost,n_samples.
    void write_csv(std::ostream& out) const {
        out << "lo,hi,cost,n_samples\n";
        for (int hi = 1; hi <= m_; ++hi) {
            for (int lo = 0; lo < hi; ++lo) {
                if (const CostEntry* e = find({lo, hi, m_})) {
                    out << lo << ',' << hi << ',' << detail::format_double(e->cost) << ',' << e->n_samples << '\n';
                }
            }
        }
    }

private:
    [[nodiscard]] std::size_t index(const Interval& iv) const {
        if (iv.m != m_ || iv.lo < 0 || iv.hi > m_ || iv.lo >= iv.hi) {
            throw ValidationError("interval is not on the cache grid");
        }
        return static_cast<std::size_t>(iv.hi) * (iv.hi - 1) / 2 + iv.lo;
    }

    [[nodiscard]] CostEntry compute(const Interval& iv) const {
        const auto& actions = data_->actions();
        std::vector<std::uint8_t> mask(data_->size(), 0);
        std::size_t count = 0;
        for (std::size_t r : rows_) {
            if (iv.contains(actions[r])) {
                mask[r] = 1;
                ++count;
            }
        }
        CostEntry e;
        e.n_samples = count;
        if (count == 0) {
            e.model = FittedModel::constant(0.0, *spec_.output_clamp, static_cast<int>(data_->dim()));
            return e;
        }
        e.model = fit(data_->features(), data_->rewards(), mask, spec_,
                      derive_seed(seed_, static_cast<std::uint64_t>(iv.lo), static_cast<std::uint64_t>(iv.hi)));
        const double mse = masked_mse(e.model, data_->features(), data_->rewards(), mask);
        e.cost = static_cast<double>(count) / static_cast<double>(rows_.size()) * mse;
        return e;
    }

    const Dataset* data_;
    std::vector<std::size_t> rows_;
    int m_;
    MlpSpec spec_;
    std::uint64_t seed_;
    int threads_;
    std::unique_ptr<std::atomic<const CostEntry*>[]> slots_;
    std::atomic<std::size_t> computed_{0};
};

}  // namespace djqe
