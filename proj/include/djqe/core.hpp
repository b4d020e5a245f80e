#pragma once

// Shared domain types: datasets, grid intervals, partitions, policies and
// run configuration.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace djqe {

// ============================================================================
// Errors
// ============================================================================

class ValidationError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Raised when a fit is requested on a mask that selects no rows.
class EmptyIntervalError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// ============================================================================
// Seeds
// ============================================================================

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

// Deterministic child seed; independent of call order.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0) {
    return splitmix64(splitmix64(splitmix64(base) ^ a) ^ (b * 0xD1B54A32D192ED03ULL + 1));
}

// ============================================================================
// Matrix / Dataset
// ============================================================================

/// Dense row-major matrix of doubles.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
        : rows_(rows), cols_(cols), data_(std::move(data)) {
        if (data_.size() != rows_ * cols_) {
            throw ValidationError("matrix data size does not match its shape");
        }
    }

    [[nodiscard]] std::size_t rows() const noexcept { return rows_; }
    [[nodiscard]] std::size_t cols() const noexcept { return cols_; }

    [[nodiscard]] std::span<const double> row(std::size_t i) const {
        return {data_.data() + i * cols_, cols_};
    }
    [[nodiscard]] std::span<double> row(std::size_t i) {
        return {data_.data() + i * cols_, cols_};
    }
    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

    [[nodiscard]] const std::vector<double>& data() const noexcept { return data_; }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

/// Affine map from normalized actions in [0,1] back to the original units:
/// original = offset + scale * normalized.
struct ActionScale {
    double offset = 0.0;
    double scale = 1.0;

    [[nodiscard]] double to_original(double a) const { return offset + scale * a; }
    [[nodiscard]] double to_normalized(double a) const { return (a - offset) / scale; }
};

enum class ActionNormalization { automatic, always, never };

/// n feature/action/reward triples with actions on [0,1].
class Dataset {
public:
    Dataset(Matrix features, std::vector<double> actions, std::vector<double> rewards,
            ActionNormalization normalization = ActionNormalization::never)
        : features_(std::move(features)), actions_(std::move(actions)),
          rewards_(std::move(rewards)) {
        const std::size_t n = actions_.size();
        if (n == 0) {
            throw ValidationError("dataset must contain at least one sample");
        }
        if (features_.rows() != n || rewards_.size() != n) {
            throw ValidationError("features, actions and rewards must have the same length");
        }
        for (double v : features_.data()) {
            if (!std::isfinite(v)) throw ValidationError("features contain non-finite values");
        }
        for (std::size_t i = 0; i < n; ++i) {
            if (!std::isfinite(actions_[i]) || !std::isfinite(rewards_[i])) {
                throw ValidationError("non-finite action or reward at sample " + std::to_string(i + 1));
            }
        }
        normalize(normalization);
    }

    [[nodiscard]] std::size_t size() const noexcept { return actions_.size(); }
    [[nodiscard]] std::size_t dim() const noexcept { return features_.cols(); }
    [[nodiscard]] const Matrix& features() const noexcept { return features_; }
    [[nodiscard]] std::span<const double> x(std::size_t i) const { return features_.row(i); }
    [[nodiscard]] const std::vector<double>& actions() const noexcept { return actions_; }
    [[nodiscard]] const std::vector<double>& rewards() const noexcept { return rewards_; }
    [[nodiscard]] const ActionScale& action_scale() const noexcept { return scale_; }

private:
    void normalize(ActionNormalization mode) {
        auto [lo_it, hi_it] = std::minmax_element(actions_.begin(), actions_.end());
        const double lo = *lo_it;
        const double hi = *hi_it;
        const bool inside = lo >= 0.0 && hi <= 1.0;
        if (mode == ActionNormalization::never || (mode == ActionNormalization::automatic && inside)) {
            if (!inside) throw ValidationError("actions must lie in [0,1]");
            return;
        }
        if (!(hi > lo)) {
            throw ValidationError("cannot min-max normalize constant actions");
        }
        scale_ = {lo, hi - lo};
        for (double& a : actions_) a = std::clamp((a - lo) / (hi - lo), 0.0, 1.0);
    }

    Matrix features_;
    std::vector<double> actions_;
    std::vector<double> rewards_;
    ActionScale scale_;
};

// ============================================================================
// Interval / Partition
// ============================================================================

/// Grid-aligned action interval [lo/m, hi/m), closed on the right when hi == m.
struct Interval {
    int lo = 0;
    int hi = 1;
    int m = 1;

    static Interval make(int lo, int hi, int m) {
        if (m < 1 || lo < 0 || hi > m || lo >= hi) {
            throw ValidationError("invalid interval [" + std::to_string(lo) + "," +
                                  std::to_string(hi) + ") on grid " + std::to_string(m));
        }
        return {lo, hi, m};
    }

    [[nodiscard]] double left() const { return static_cast<double>(lo) / m; }
    [[nodiscard]] double right() const { return static_cast<double>(hi) / m; }
    [[nodiscard]] double length() const { return static_cast<double>(hi - lo) / m; }

    [[nodiscard]] bool contains(double a) const {
        // Exact at grid points j/m.
        if (a < static_cast<double>(lo) / m) return false;
        return hi == m ? a <= 1.0 : a < static_cast<double>(hi) / m;
    }

    friend bool operator==(const Interval&, const Interval&) = default;
};

inline bool interval_contains(const Interval& iv, double a) { return iv.contains(a); }

/// Disjoint contiguous cover of [0,1] by grid intervals.
class Partition {
public:
    Partition() = default;

    explicit Partition(std::vector<Interval> intervals) : intervals_(std::move(intervals)) {
        if (intervals_.empty()) throw ValidationError("partition must contain an interval");
        const int m = intervals_.front().m;
        if (intervals_.front().lo != 0 || intervals_.back().hi != m) {
            throw ValidationError("partition must cover [0,1]");
        }
        for (std::size_t k = 0; k < intervals_.size(); ++k) {
            const auto& iv = intervals_[k];
            Interval::make(iv.lo, iv.hi, iv.m);
            if (iv.m != m) throw ValidationError("partition intervals must share one grid");
            if (k > 0 && intervals_[k - 1].hi != iv.lo) {
                throw ValidationError("partition intervals must be contiguous");
            }
        }
    }

    static Partition from_changepoints(std::span<const int> taus, int m) {
        if (m < 1) throw ValidationError("grid resolution must be positive");
        std::vector<Interval> out;
        out.reserve(taus.size() + 1);
        int prev = 0;
        for (int t : taus) {
            if (t <= 0 || t >= m) {
                throw ValidationError("change point " + std::to_string(t) + " outside (0," +
                                      std::to_string(m) + ")");
            }
            if (t <= prev) throw ValidationError("change points must be strictly increasing");
            out.push_back({prev, t, m});
            prev = t;
        }
        out.push_back({prev, m, m});
        return Partition(std::move(out));
    }

    static Partition single(int m) { return Partition({Interval::make(0, m, m)}); }

    [[nodiscard]] int m() const { return intervals_.empty() ? 0 : intervals_.front().m; }
    [[nodiscard]] std::size_t size() const noexcept { return intervals_.size(); }
    [[nodiscard]] const std::vector<Interval>& intervals() const noexcept { return intervals_; }
    [[nodiscard]] const Interval& operator[](std::size_t k) const { return intervals_[k]; }

    /// Interior endpoints as grid indices.
    [[nodiscard]] std::vector<int> changepoints() const {
        std::vector<int> out;
        for (std::size_t k = 1; k < intervals_.size(); ++k) out.push_back(intervals_[k].lo);
        return out;
    }

    /// Interior endpoints on [0,1].
    [[nodiscard]] std::vector<double> changepoint_locations() const {
        std::vector<double> out;
        for (std::size_t k = 1; k < intervals_.size(); ++k) out.push_back(intervals_[k].left());
        return out;
    }

    /// Index of the unique interval containing a.
    [[nodiscard]] std::size_t locate(double a) const {
        for (std::size_t k = 0; k < intervals_.size(); ++k) {
            if (intervals_[k].contains(a)) return k;
        }
        throw ValidationError("action outside [0,1]");
    }

    friend bool operator==(const Partition&, const Partition&) = default;

private:
    std::vector<Interval> intervals_;
};

inline Partition partition_from_changepoints(std::span<const int> taus, int m) {
    return Partition::from_changepoints(taus, m);
}

/// max over true change points of the distance to the nearest estimated one;
/// +inf when the estimate has no change points.
inline double changepoint_hausdorff(std::span<const double> estimated, std::span<const double> truth) {
    if (truth.empty()) throw ValidationError("truth must contain at least one change point");
    if (estimated.empty()) return std::numeric_limits<double>::infinity();
    double worst = 0.0;
    for (double t : truth) {
        double best = std::numeric_limits<double>::infinity();
        for (double e : estimated) best = std::min(best, std::abs(e - t));
        worst = std::max(worst, best);
    }
    return worst;
}

inline double changepoint_hausdorff(const Partition& estimated, const Partition& truth) {
    const auto e = estimated.changepoint_locations();
    const auto t = truth.changepoint_locations();
    return changepoint_hausdorff(std::span<const double>(e), std::span<const double>(t));
}

// ============================================================================
// Policy
// ============================================================================

/// Deterministic target policy. Either a function of the feature vector or a
/// tabulated action column aligned with a dataset's rows.
class Policy {
public:
    using Function = std::function<double(std::span<const double>)>;

    Policy(std::string name, Function fn) : name_(std::move(name)), fn_(std::move(fn)) {}

    static Policy tabulated(std::string name, std::vector<double> actions) {
        for (std::size_t i = 0; i < actions.size(); ++i) {
            if (!(actions[i] >= 0.0 && actions[i] <= 1.0)) {
                throw ValidationError("policy action at row " + std::to_string(i + 1) +
                                      " lies outside [0,1]");
            }
        }
        Policy p(std::move(name), nullptr);
        p.table_ = std::move(actions);
        return p;
    }

    static Policy constant(double a) {
        if (!(a >= 0.0 && a <= 1.0)) throw ValidationError("constant policy action outside [0,1]");
        return Policy("constant:" + std::to_string(a), [a](std::span<const double>) { return a; });
    }

    [[nodiscard]] const std::string& name() const noexcept { return name_; }
    [[nodiscard]] bool is_tabulated() const noexcept { return table_.has_value(); }

    /// Action for row i of the dataset the policy is evaluated on.
    [[nodiscard]] double action(const Dataset& data, std::size_t i) const {
        if (table_) {
            if (table_->size() != data.size()) {
                throw ValidationError("tabulated policy length does not match dataset");
            }
            return (*table_)[i];
        }
        return at(data.x(i));
    }

    /// Action for an arbitrary feature vector (function policies only).
    [[nodiscard]] double at(std::span<const double> x) const {
        if (!fn_) throw ValidationError("tabulated policy cannot be evaluated off its dataset");
        return std::clamp(fn_(x), 0.0, 1.0);
    }

private:
    std::string name_;
    Function fn_;
    std::optional<std::vector<double>> table_;
};

// ============================================================================
// Configuration
// ============================================================================

enum class Optimizer { gd, adam };

inline std::string to_string(Optimizer o) { return o == Optimizer::gd ? "gd" : "adam"; }

inline Optimizer parse_optimizer(const std::string& s) {
    if (s == "gd") return Optimizer::gd;
    if (s == "adam") return Optimizer::adam;
    throw ValidationError("unknown optimizer '" + s + "' (gd, adam)");
}

/// Regressor hyperparameters. hidden_layers is the network depth; it is
/// unrelated to the cross-fitting fold count.
struct MlpSpec {
    int hidden_layers = 1;
    int hidden_width = 10;
    int epochs = 300;
    double learning_rate = 0.05;
    int batch_size = 0;                   // 0 = full batch
    Optimizer optimizer = Optimizer::gd;
    double weight_decay = 0.0;            // L2 penalty on weights, standardized scale
    std::optional<double> output_clamp;   // default: 2 * max|target|

    void validate() const {
        if (hidden_layers < 1) throw ValidationError("mlp hidden_layers must be >= 1");
        if (hidden_width < 1) throw ValidationError("mlp hidden_width must be >= 1");
        if (epochs < 0) throw ValidationError("mlp epochs must be >= 0");
        if (!(learning_rate > 0.0)) throw ValidationError("mlp learning_rate must be positive");
        if (batch_size < 0) throw ValidationError("mlp batch_size must be >= 0");
        if (!(weight_decay >= 0.0)) throw ValidationError("mlp weight_decay must be >= 0");
        if (output_clamp && !(*output_clamp > 0.0)) {
            throw ValidationError("mlp output_clamp must be positive");
        }
    }
};

enum class EstimatorVariant { standard_dr, paper_literal };
enum class PartitionerKind { pelt, exact_dp };

inline std::string to_string(EstimatorVariant v) {
    return v == EstimatorVariant::standard_dr ? "standard-dr" : "paper-literal";
}
inline std::string to_string(PartitionerKind p) {
    return p == PartitionerKind::pelt ? "pelt" : "exact-dp";
}

inline EstimatorVariant parse_variant(const std::string& s) {
    if (s == "standard-dr" || s == "standard_dr") return EstimatorVariant::standard_dr;
    if (s == "paper-literal" || s == "paper_literal") return EstimatorVariant::paper_literal;
    throw ValidationError("unknown estimator variant '" + s + "' (standard-dr, paper-literal)");
}
inline PartitionerKind parse_partitioner(const std::string& s) {
    if (s == "pelt") return PartitionerKind::pelt;
    if (s == "exact-dp" || s == "exact_dp") return PartitionerKind::exact_dp;
    throw ValidationError("unknown partitioner '" + s + "' (pelt, exact-dp)");
}

/// Penalty multipliers of the default gamma grid.
inline constexpr double kGammaMultipliers[] = {0.1, 0.2, 0.3, 0.4, 0.5};

/// Default gamma grid on the per-sample-normalized cost scale:
/// {0.1,...,0.5} * n^-0.4.
inline std::vector<double> default_gamma_grid(std::size_t n) {
    std::vector<double> out;
    const double scale = std::pow(static_cast<double>(n), -0.4);
    for (double c : kGammaMultipliers) out.push_back(c * scale);
    return out;
}

inline int default_grid_resolution(std::size_t n) {
    return std::max(2, static_cast<int>((n + 9) / 10));
}

struct EvalConfig {
    std::optional<int> m;             // default ceil(n/10)
    std::vector<double> gamma_grid;   // empty = default grid; one entry = fixed gamma
    int folds = 2;
    int cv_folds = 5;
    MlpSpec mlp;
    std::uint64_t seed = 0;
    double clip_eps = 0.05;
    EstimatorVariant variant = EstimatorVariant::standard_dr;
    PartitionerKind partitioner = PartitionerKind::pelt;
    int threads = 1;

    [[nodiscard]] int resolve_m(std::size_t n) const { return m.value_or(default_grid_resolution(n)); }
    [[nodiscard]] std::vector<double> resolve_gamma_grid(std::size_t n) const {
        return gamma_grid.empty() ? default_gamma_grid(n) : gamma_grid;
    }

    void validate() const {
        if (m && *m < 2) throw ValidationError("grid resolution m must be >= 2");
        if (folds < 2) throw ValidationError("fold count must be >= 2");
        if (cv_folds < 2) throw ValidationError("cross-validation fold count must be >= 2");
        for (double g : gamma_grid) {
            if (!(g >= 0.0) || !std::isfinite(g)) throw ValidationError("gamma values must be finite and >= 0");
        }
        if (!(clip_eps > 0.0 && clip_eps < 0.5)) throw ValidationError("clip_eps must lie in (0, 0.5)");
        if (threads < 1) throw ValidationError("threads must be >= 1");
        mlp.validate();
    }
};

}  // namespace djqe
