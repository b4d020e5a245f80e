#pragma once

// Ground-truth scenarios, oracle values, calibration simulator and the
// replication harness.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <iomanip>
#include <iterator>
#include <limits>
#include <mutex>
#include <numbers>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "djqe/core.hpp"
#include "djqe/dataset_io.hpp"
#include "djqe/kernel_baselines.hpp"
#include "djqe/regressor.hpp"
#include "djqe/value_estimator.hpp"

namespace djqe {

// ============================================================================
// Scenarios
// ============================================================================

enum class ScenarioId { s1, s2, s3, s4, toy };

inline std::string to_string(ScenarioId id) {
    switch (id) {
        case ScenarioId::s1: return "s1";
        case ScenarioId::s2: return "s2";
        case ScenarioId::s3: return "s3";
        case ScenarioId::s4: return "s4";
        case ScenarioId::toy: return "toy";
    }
    return "?";
}

inline ScenarioId parse_scenario(const std::string& s) {
    if (s == "s1" || s == "S1") return ScenarioId::s1;
    if (s == "s2" || s == "S2") return ScenarioId::s2;
    if (s == "s3" || s == "S3") return ScenarioId::s3;
    if (s == "s4" || s == "S4") return ScenarioId::s4;
    if (s == "toy" || s == "TOY") return ScenarioId::toy;
    throw ValidationError("unknown scenario '" + s + "' (s1, s2, s3, s4, toy)");
}

/// Features the scenario's Q-function reads.
inline int required_features(ScenarioId id) {
    switch (id) {
        case ScenarioId::s1: return 2;
        case ScenarioId::s4: return 3;
        default: return 1;
    }
}

struct Scenario {
    ScenarioId id = ScenarioId::s1;
    int p = 2;
    double noise_sd = 1.0;

    Scenario() = default;
    Scenario(ScenarioId sid, int dim, double sd = 1.0) : id(sid), p(dim), noise_sd(sd) {
        if (p < required_features(id)) {
            throw ValidationError("scenario " + to_string(id) + " needs p >= " +
                                  std::to_string(required_features(id)));
        }
        if (!(noise_sd >= 0.0)) throw ValidationError("noise sd must be >= 0");
    }

    /// TOY draws features from Unif[0,1]; the others from Unif[-1,1].
    [[nodiscard]] double feature_low() const { return id == ScenarioId::toy ? 0.0 : -1.0; }
};

/// Q(x, a). S2 reads the pieces as a sum of four indicator-gated terms.
inline double q_true(ScenarioId id, std::span<const double> x, double a) {
    switch (id) {
        case ScenarioId::s1: {
            const double x1 = x[0], x2 = x[1];
            if (a < 0.35) return 1.0 + x1;
            if (a < 0.65) return x1 - x2;
            return 1.0 - x2;
        }
        case ScenarioId::s2: {
            const double x1 = x[0];
            if (a < 0.25) return 1.0;
            if (a < 0.5) return std::sin(2.0 * std::numbers::pi * x1);
            if (a < 0.75) return 0.5 - 8.0 * (x1 - 0.75) * (x1 - 0.75);
            return 0.5;
        }
        case ScenarioId::s3:
        case ScenarioId::toy:
            return 10.0 * std::max(a * a - 0.25, 0.0) * std::log(x[0] + 2.0);
        case ScenarioId::s4: {
            const double x1 = x[0], x2 = x[1], x3 = x[2];
            const double d = 1.0 + 0.5 * x1 + 0.5 * x2 - 2.0 * a;
            return 0.2 * (8.0 + 4.0 * x1 - 2.0 * x2 - 2.0 * x3) - 2.0 * d * d;
        }
    }
    return 0.0;
}

inline Dataset gen_data(const Scenario& sc, std::size_t n, std::uint64_t seed) {
    if (n == 0) throw ValidationError("dataset must contain at least one sample");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> feat(sc.feature_low(), 1.0);
    std::uniform_real_distribution<double> act(0.0, 1.0);
    std::normal_distribution<double> noise(0.0, 1.0);
    Matrix x(n, static_cast<std::size_t>(sc.p));
    std::vector<double> a(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (int j = 0; j < sc.p; ++j) x(i, j) = feat(rng);
        a[i] = act(rng);
        y[i] = q_true(sc.id, x.row(i), a[i]) + sc.noise_sd * noise(rng);
    }
    return Dataset(std::move(x), std::move(a), std::move(y));
}

/// argmax_a Q(x, a), with fixed representatives where the maximizer is a set.
inline double optimal_policy(ScenarioId id, std::span<const double> x) {
    switch (id) {
        case ScenarioId::s1: {
            // Pieces: [0,0.35) -> 1+x1, [0.35,0.65) -> x1-x2, [0.65,1] -> 1-x2.
            const double v1 = 1.0 + x[0], v2 = x[0] - x[1], v3 = 1.0 - x[1];
            if (v1 >= v2 && v1 >= v3) return 0.1;
            if (v2 >= v3) return 0.5;
            return 0.9;
        }
        case ScenarioId::s2:
            return 0.1;
        case ScenarioId::s3:
        case ScenarioId::toy:
            return 1.0;
        case ScenarioId::s4:
            return std::clamp((1.0 + 0.5 * x[0] + 0.5 * x[1]) / 2.0, 0.0, 1.0);
    }
    return 0.0;
}

inline Policy optimal_policy_for(ScenarioId id) {
    return Policy(to_string(id) + "-optimal", [id](std::span<const double> x) { return optimal_policy(id, x); });
}

/// pi(x) = x_1, the policy of the toy example.
inline Policy toy_policy() {
    return Policy("toy", [](std::span<const double> x) { return std::clamp(x[0], 0.0, 1.0); });
}

/// Policy evaluated by default for a scenario: TOY uses pi(x) = x_1, the
/// others their optimal policy.
inline Policy benchmark_policy(ScenarioId id) {
    return id == ScenarioId::toy ? toy_policy() : optimal_policy_for(id);
}

/// Built-in policy by name: "<scenario>-optimal", "toy", or "constant:<a>".
inline Policy builtin_policy(const std::string& name) {
    if (name == "toy") return toy_policy();
    if (name.rfind("constant:", 0) == 0) {
        double a = 0.0;
        if (!detail::parse_double(name.substr(9), a)) throw ValidationError("bad constant policy '" + name + "'");
        return Policy::constant(a);
    }
    const auto dash = name.find("-optimal");
    if (dash != std::string::npos && dash + 8 == name.size()) {
        return optimal_policy_for(parse_scenario(name.substr(0, dash)));
    }
    throw ValidationError("unknown policy '" + name + "'");
}

// ============================================================================
// Oracle values
// ============================================================================

namespace detail {

// Composite Simpson rule on [lo, hi] with 2k panels.
template <typename F>
double simpson(F&& f, double lo, double hi, int k = 20000) {
    const int n = 2 * k;
    const double h = (hi - lo) / n;
    double s = f(lo) + f(hi);
    for (int i = 1; i < n; ++i) s += f(lo + i * h) * (i % 2 ? 4.0 : 2.0);
    return s * h / 3.0;
}

}  // namespace detail

/// Value of benchmark_policy(id) in closed form (TOY by quadrature).
///   S1: 1 + E max(X1, -X2) = 4/3
///   S2: 1
///   S3: 7.5 E log(X1 + 2), X1 ~ Unif[-1,1]
///   S4: E 0.2 (8 + 4X1 - 2X2 - 2X3) = 1.6
///   TOY (pi(x) = x): int_{0.5}^{1} 10 (x^2 - 0.25) log(x + 2) dx
inline double closed_form_value(ScenarioId id) {
    switch (id) {
        case ScenarioId::s1: return 4.0 / 3.0;
        case ScenarioId::s2: return 1.0;
        case ScenarioId::s3: return 7.5 * (3.0 * std::log(3.0) - 2.0) / 2.0;
        case ScenarioId::s4: return 1.6;
        case ScenarioId::toy:
            return detail::simpson([](double x) { return 10.0 * (x * x - 0.25) * std::log(x + 2.0); }, 0.5, 1.0);
    }
    return 0.0;
}

struct MonteCarloValue {
    double mean = 0.0;
    double std_error = 0.0;
};

/// Monte Carlo estimate of E Q(X, pi(X)) under the scenario's feature law.
inline MonteCarloValue policy_value_mc(ScenarioId id, const Policy& policy, std::size_t samples,
                                       std::uint64_t seed, int p = 0) {
    const Scenario sc(id, std::max(p, required_features(id)), 0.0);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> feat(sc.feature_low(), 1.0);
    std::vector<double> x(static_cast<std::size_t>(sc.p));
    double mean = 0.0, m2 = 0.0;
    for (std::size_t k = 0; k < samples; ++k) {
        for (double& v : x) v = feat(rng);
        const double q = q_true(id, x, policy.at(x));
        const double d = q - mean;
        mean += d / static_cast<double>(k + 1);
        m2 += d * (q - mean);
    }
    const double var = samples > 1 ? m2 / static_cast<double>(samples - 1) : 0.0;
    return {mean, std::sqrt(var / static_cast<double>(samples))};
}

/// Monte Carlo estimate of E max_a Q(X, a).
inline MonteCarloValue oracle_value(ScenarioId id, std::size_t mc_samples, std::uint64_t seed) {
    if (mc_samples < 10000) throw ValidationError("oracle_value needs at least 1e4 samples");
    return policy_value_mc(id, optimal_policy_for(id), mc_samples, seed);
}

// ============================================================================
// Calibration
// ============================================================================

inline constexpr int kArgmaxGrid = 1000;

/// Reward simulator fitted to an observed dataset.
struct Calibration {
    JointModel qhat;
    double sigma_hat = 0.0;
    const Dataset* source = nullptr;

    [[nodiscard]] double mean_reward(std::span<const double> x, double a) const { return qhat(x, a); }

    template <typename Rng>
    double draw_reward(std::span<const double> x, double a, Rng& rng) const {
        std::normal_distribution<double> z(0.0, 1.0);
        return qhat(x, a) + sigma_hat * z(rng);
    }

    /// argmax over a in {j/G : j = 0..G} of qhat(x, a); first maximizer wins.
    [[nodiscard]] double optimal_action(std::span<const double> x, int grid = kArgmaxGrid) const {
        double best = -std::numeric_limits<double>::infinity();
        double arg = 0.0;
        for (int j = 0; j <= grid; ++j) {
            const double a = static_cast<double>(j) / grid;
            const double v = qhat(x, a);
            if (v > best) {
                best = v;
                arg = a;
            }
        }
        return arg;
    }

    /// n rows resampled from the source's (x, a) pairs with simulated rewards.
    [[nodiscard]] Dataset simulate(std::size_t n, std::uint64_t seed) const {
        if (n == 0) throw ValidationError("dataset must contain at least one sample");
        std::mt19937_64 rng(seed);
        std::uniform_int_distribution<std::size_t> pick(0, source->size() - 1);
        Matrix x(n, source->dim());
        std::vector<double> a(n), y(n);
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t r = pick(rng);
            std::copy(source->x(r).begin(), source->x(r).end(), x.row(i).begin());
            a[i] = source->actions()[r];
            y[i] = draw_reward(x.row(i), a[i], rng);
        }
        return Dataset(std::move(x), std::move(a), std::move(y));
    }
};

/// Fits Q(x, a) on the whole dataset; sigma_hat is the sd of the residuals.
/// The returned object refers to `data`, which must outlive it.
inline Calibration calibrate(const Dataset& data, const MlpSpec& spec, std::uint64_t seed) {
    Calibration cal;
    cal.source = &data;
    cal.qhat = fit_joint_outcome(data, spec, seed);
    std::vector<double> resid(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        resid[i] = data.rewards()[i] - cal.qhat(data.x(i), data.actions()[i]);
    }
    cal.sigma_hat = sample_sd(resid);
    return cal;
}

// ============================================================================
// Benchmark harness
// ============================================================================

enum class Method { djqe, kernel_dr, oracle };

inline std::string to_string(Method m) {
    switch (m) {
        case Method::djqe: return "djqe";
        case Method::kernel_dr: return "kernel-dr";
        case Method::oracle: return "oracle";
    }
    return "?";
}

inline Method parse_method(const std::string& s) {
    if (s == "djqe") return Method::djqe;
    if (s == "kernel-dr") return Method::kernel_dr;
    if (s == "oracle") return Method::oracle;
    throw ValidationError("unknown method '" + s + "' (valid: djqe, kernel-dr)");
}

struct BenchmarkOptions {
    KernelKind kernel = KernelKind::gaussian;
    std::optional<double> bandwidth;   // fixed h; default: best of the grid
    std::vector<double> bandwidth_multipliers{std::begin(kBandwidthMultipliers), std::end(kBandwidthMultipliers)};
    int jobs = 1;
    double noise_sd = 1.0;
};

struct MethodStats {
    Method method = Method::djqe;
    double bias = 0.0;
    double sd = 0.0;
    double mse = 0.0;
    std::vector<double> estimates;
    std::optional<double> bandwidth_multiplier;   // kernel-dr: chosen grid entry
};

struct BenchmarkResult {
    ScenarioId scenario = ScenarioId::s1;
    std::size_t n = 0;
    int p = 0;
    int reps = 0;
    std::uint64_t seed = 0;
    double oracle = 0.0;
    std::vector<MethodStats> methods;
};

inline MethodStats summarize(Method method, std::vector<double> estimates, double truth) {
    MethodStats s;
    s.method = method;
    const double k = static_cast<double>(estimates.size());
    double mean = 0.0, mse = 0.0;
    for (double e : estimates) {
        mean += e / k;
        mse += (e - truth) * (e - truth) / k;
    }
    s.bias = mean - truth;
    s.sd = sample_sd(estimates);
    s.mse = mse;
    s.estimates = std::move(estimates);
    return s;
}

/// Replications use seed + rep; the result does not depend on `jobs`.
inline BenchmarkResult run_benchmark(ScenarioId id, std::size_t n, int p, int reps,
                                     const std::vector<Method>& methods, const EvalConfig& config,
                                     const BenchmarkOptions& opts = {}) {
    if (reps < 1) throw ValidationError("reps must be >= 1");
    const Scenario sc(id, p, opts.noise_sd);
    config.validate();

    BenchmarkResult res;
    res.scenario = id;
    res.n = n;
    res.p = p;
    res.reps = reps;
    res.seed = config.seed;
    res.oracle = closed_form_value(id);
    const Policy policy = benchmark_policy(id);

    if (!opts.bandwidth && opts.bandwidth_multipliers.empty()) {
        throw ValidationError("bandwidth grid must not be empty");
    }
    // per rep: djqe estimate, kernel estimates per grid entry (or fixed h)
    std::vector<double> djqe(static_cast<std::size_t>(reps), 0.0);
    std::vector<std::vector<double>> kernel(static_cast<std::size_t>(reps));
    const bool want_djqe = std::find(methods.begin(), methods.end(), Method::djqe) != methods.end();
    const bool want_kernel = std::find(methods.begin(), methods.end(), Method::kernel_dr) != methods.end();

    auto run_rep = [&](int r) {
        const std::uint64_t seed = config.seed + static_cast<std::uint64_t>(r);
        const Dataset data = gen_data(sc, n, seed);
        if (want_djqe) {
            EvalConfig c = config;
            c.seed = seed;
            djqe[r] = djqe_evaluate(data, policy, c).value;
        }
        if (want_kernel) {
            const JointModel q = fit_joint_outcome(data, config.mlp, derive_seed(seed, 0x4B));
            const BehaviorDensity uniform = [](std::span<const double>, double) { return 1.0; };
            std::vector<double> hs = opts.bandwidth ? std::vector<double>{*opts.bandwidth}
                                                     : bandwidth_grid(data, opts.bandwidth_multipliers);
            for (double h : hs) kernel[r].push_back(kernel_dr_value(data, policy, q, uniform, {opts.kernel, h}));
        }
    };

    const int jobs = std::max(1, std::min(opts.jobs, reps));
    if (jobs == 1) {
        for (int r = 0; r < reps; ++r) run_rep(r);
    } else {
        std::atomic<int> next{0};
        std::exception_ptr failure;
        std::mutex failure_mutex;
        std::vector<std::thread> pool;
        for (int t = 0; t < jobs; ++t) {
            pool.emplace_back([&] {
                for (int r; (r = next.fetch_add(1)) < reps;) {
                    try {
                        run_rep(r);
                    } catch (...) {
                        std::lock_guard lock(failure_mutex);
                        if (!failure) failure = std::current_exception();
                    }
                }
            });
        }
        for (auto& t : pool) t.join();
        if (failure) std::rethrow_exception(failure);
    }

    for (Method m : methods) {
        if (m == Method::djqe) {
            res.methods.push_back(summarize(m, djqe, res.oracle));
        } else if (m == Method::oracle) {
            res.methods.push_back(summarize(m, std::vector<double>(reps, res.oracle), res.oracle));
        } else {
            const std::size_t width = opts.bandwidth ? 1 : opts.bandwidth_multipliers.size();
            std::optional<MethodStats> best;
            for (std::size_t g = 0; g < width; ++g) {
                std::vector<double> est;
                for (const auto& k : kernel) est.push_back(k[g]);
                auto s = summarize(m, std::move(est), res.oracle);
                if (!opts.bandwidth) s.bandwidth_multiplier = opts.bandwidth_multipliers[g];
                if (!best || s.mse < best->mse) best = std::move(s);
            }
            res.methods.push_back(std::move(*best));
        }
    }
    return res;
}

inline void write_benchmark_csv_header(std::ostream& out) {
    out << "scenario,n,method,bias,sd,mse,reps,seed\n";
}

inline void write_benchmark_csv_rows(std::ostream& out, const BenchmarkResult& r) {
    for (const auto& m : r.methods) {
        out << to_string(r.scenario) << ',' << r.n << ',' << to_string(m.method) << ','
            << detail::format_double(m.bias) << ',' << detail::format_double(m.sd) << ','
            << detail::format_double(m.mse) << ',' << r.reps << ',' << r.seed << '\n';
    }
}

/// Table with one row per method and "bias(sd)" cells per sample size.
inline void write_benchmark_table(std::ostream& out, const std::vector<BenchmarkResult>& results) {
    if (results.empty()) return;
    out << "scenario " << to_string(results.front().scenario) << "  V = " << std::fixed
        << std::setprecision(2) << results.front().oracle << '\n';
    out << std::left << std::setw(12) << "method";
    for (const auto& r : results) out << std::setw(18) << ("n=" + std::to_string(r.n));
    out << '\n';
    for (std::size_t k = 0; k < results.front().methods.size(); ++k) {
        out << std::setw(12) << to_string(results.front().methods[k].method);
        for (const auto& r : results) {
            std::ostringstream cell;
            cell << std::fixed << std::setprecision(3) << std::abs(r.methods[k].bias) << '('
                 << r.methods[k].sd << ')';
            out << std::setw(18) << cell.str();
        }
        out << '\n';
    }
    out << std::defaultfloat << std::right;
}

}  // namespace djqe
