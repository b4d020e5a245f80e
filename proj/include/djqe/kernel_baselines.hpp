#pragma once

// Kernel-smoothed doubly robust value estimator and its bandwidth schedule.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "djqe/core.hpp"
#include "djqe/regressor.hpp"

namespace djqe {

enum class KernelKind { gaussian, epanechnikov, boxcar };

inline std::string to_string(KernelKind k) {
    switch (k) {
        case KernelKind::gaussian: return "gaussian";
        case KernelKind::epanechnikov: return "epanechnikov";
        case KernelKind::boxcar: return "boxcar";
    }
    return "?";
}

inline KernelKind parse_kernel(const std::string& s) {
    if (s == "gaussian") return KernelKind::gaussian;
    if (s == "epanechnikov") return KernelKind::epanechnikov;
    if (s == "boxcar") return KernelKind::boxcar;
    throw ValidationError("unknown kernel '" + s + "' (gaussian, epanechnikov, boxcar)");
}

struct KernelSpec {
    KernelKind kind = KernelKind::gaussian;
    double bandwidth = 0.1;
};

/// Unit-mass kernel density at u.
inline double kernel_density(KernelKind kind, double u) {
    switch (kind) {
        case KernelKind::gaussian:
            return std::exp(-0.5 * u * u) / std::sqrt(2.0 * std::numbers::pi);
        case KernelKind::epanechnikov:
            return std::abs(u) <= 1.0 ? 0.75 * (1.0 - u * u) : 0.0;
        case KernelKind::boxcar:
            return std::abs(u) <= 1.0 ? 0.5 : 0.0;
    }
    return 0.0;
}

/// Outcome model over the joint (x, a) input.
using JointOutcome = std::function<double(std::span<const double> x, double a)>;
/// Behavior density b(a | x).
using BehaviorDensity = std::function<double(std::span<const double> x, double a)>;

/// Wraps a FittedModel trained on [x, a] rows.
struct JointModel {
    FittedModel model;

    double operator()(std::span<const double> x, double a) const {
        std::vector<double> z(x.begin(), x.end());
        z.push_back(a);
        return model.predict(z);
    }
};

/// Feature matrix with the action appended as the last column.
inline Matrix joint_design(const Dataset& data) {
    const std::size_t p = data.dim();
    Matrix z(data.size(), p + 1);
    for (std::size_t i = 0; i < data.size(); ++i) {
        auto x = data.x(i);
        auto row = z.row(i);
        std::copy(x.begin(), x.end(), row.begin());
        row[p] = data.actions()[i];
    }
    return z;
}

/// One MLP regression of Y on (X, A) over all rows.
inline JointModel fit_joint_outcome(const Dataset& data, const MlpSpec& spec, std::uint64_t seed) {
    const Matrix z = joint_design(data);
    std::vector<std::uint8_t> mask(data.size(), 1);
    return {fit(z, data.rewards(), mask, spec, seed)};
}

/// (1/n) sum_i [ q(X_i, pi(X_i)) + K((A_i - pi(X_i))/h) / (h b(A_i|X_i)) (Y_i - q(X_i, A_i)) ]
inline double kernel_dr_value(const Dataset& data, const Policy& policy, const JointOutcome& qhat,
                              const BehaviorDensity& bhat, const KernelSpec& spec) {
    if (!(spec.bandwidth > 0.0)) throw ValidationError("bandwidth must be positive");
    double total = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        const auto x = data.x(i);
        const double a = data.actions()[i];
        const double target = policy.action(data, i);
        const double density = bhat(x, a);
        if (!(density > 0.0)) {
            throw ValidationError("behavior density must be positive (row " + std::to_string(i + 1) + ")");
        }
        const double w = kernel_density(spec.kind, (a - target) / spec.bandwidth) / (spec.bandwidth * density);
        total += qhat(x, target);
        if (w != 0.0) total += w * (data.rewards()[i] - qhat(x, a));
    }
    return total / static_cast<double>(data.size());
}

inline constexpr double kBandwidthMultipliers[] = {0.5, 0.75, 1.0, 1.5};

inline double sample_sd(std::span<const double> v) {
    if (v.size() < 2) return 0.0;
    double mean = 0.0;
    for (double a : v) mean += a;
    mean /= static_cast<double>(v.size());
    double ss = 0.0;
    for (double a : v) ss += (a - mean) * (a - mean);
    return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

/// c * sd(A) * n^-0.2 for each multiplier c (default {0.5, 0.75, 1.0, 1.5}).
inline std::vector<double> bandwidth_grid(const Dataset& data,
                                          std::span<const double> multipliers = kBandwidthMultipliers) {
    if (data.size() < 2) throw ValidationError("bandwidth grid needs at least two samples");
    const auto [lo, hi] = std::minmax_element(data.actions().begin(), data.actions().end());
    if (*lo == *hi) throw ValidationError("bandwidth grid undefined for constant actions");
    const double sd = sample_sd(data.actions());
    const double base = sd * std::pow(static_cast<double>(data.size()), -0.2);
    std::vector<double> out;
    for (double c : multipliers) {
        if (!(c > 0.0)) throw ValidationError("bandwidth multipliers must be positive");
        out.push_back(c * base);
    }
    return out;
}

/// Transfers a bandwidth tuned at sample size n0 to sample size n.
inline double bandwidth_rescale(double h_star, double n0, double n) {
    if (!(h_star > 0.0 && n0 > 0.0 && n > 0.0)) {
        throw ValidationError("bandwidth_rescale arguments must be positive");
    }
    return h_star * std::pow(n0 / n, 0.2);
}

}  // namespace djqe
