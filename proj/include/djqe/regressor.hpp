#pragma once

// Feature-only regressors: a small tanh MLP trained by full-batch gradient
// descent (or Adam) on masked squared loss, and the constant-mean model it
// falls back to.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <vector>

#include "djqe/core.hpp"

namespace djqe {

enum class ModelKind { mlp, constant_mean };

/// Hidden-layer activation, tanh(z) written via exp.
inline double activation(double z) { return 1.0 - 2.0 / (std::exp(2.0 * z) + 1.0); }

/// Fully connected layer, weights stored row-major as (out x in).
struct DenseLayer {
    int in = 0;
    int out = 0;
    std::vector<double> weights;
    std::vector<double> bias;

    DenseLayer() = default;
    DenseLayer(int in_dim, int out_dim)
        : in(in_dim), out(out_dim),
          weights(static_cast<std::size_t>(in_dim) * out_dim, 0.0),
          bias(static_cast<std::size_t>(out_dim), 0.0) {}

    double& w(int o, int i) { return weights[static_cast<std::size_t>(o) * in + i]; }
    [[nodiscard]] double w(int o, int i) const { return weights[static_cast<std::size_t>(o) * in + i]; }

    friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

class FittedModel {
public:
    /// input_dim < 0 accepts feature vectors of any length.
    static FittedModel constant(double value, double clamp, int input_dim = -1) {
        FittedModel f;
        f.kind_ = ModelKind::constant_mean;
        f.clamp_ = clamp;
        f.constant_ = std::clamp(value, -clamp, clamp);
        f.input_dim_ = input_dim;
        return f;
    }

    /// Hidden layers use tanh; the last layer must have one output and is linear.
    static FittedModel network(std::vector<DenseLayer> layers, double clamp) {
        if (layers.empty() || layers.back().out != 1) {
            throw ValidationError("network must end in a single linear output");
        }
        for (std::size_t k = 1; k < layers.size(); ++k) {
            if (layers[k].in != layers[k - 1].out) throw ValidationError("layer shapes do not chain");
        }
        for (const auto& l : layers) {
            for (double v : l.weights) if (!std::isfinite(v)) throw NumericalError("non-finite weight");
            for (double v : l.bias) if (!std::isfinite(v)) throw NumericalError("non-finite bias");
        }
        FittedModel f;
        f.kind_ = ModelKind::mlp;
        f.clamp_ = clamp;
        f.input_dim_ = layers.front().in;
        f.layers_ = std::move(layers);
        return f;
    }

    [[nodiscard]] ModelKind kind() const noexcept { return kind_; }
    [[nodiscard]] double output_clamp() const noexcept { return clamp_; }
    [[nodiscard]] double constant_value() const noexcept { return constant_; }
    [[nodiscard]] int input_dim() const noexcept { return input_dim_; }
    [[nodiscard]] const std::vector<DenseLayer>& layers() const noexcept { return layers_; }

    [[nodiscard]] double predict(std::span<const double> x) const {
        if (input_dim_ >= 0 && static_cast<int>(x.size()) != input_dim_) {
            throw ValidationError("feature vector has length " + std::to_string(x.size()) +
                                  ", model expects " + std::to_string(input_dim_));
        }
        if (kind_ == ModelKind::constant_mean) return constant_;
        std::vector<double> cur(x.begin(), x.end());
        std::vector<double> next;
        for (std::size_t k = 0; k < layers_.size(); ++k) {
            const auto& l = layers_[k];
            next.assign(static_cast<std::size_t>(l.out), 0.0);
            for (int o = 0; o < l.out; ++o) {
                double z = l.bias[o];
                const double* wr = &l.weights[static_cast<std::size_t>(o) * l.in];
                for (int i = 0; i < l.in; ++i) z += wr[i] * cur[i];
                next[o] = (k + 1 < layers_.size()) ? activation(z) : z;
            }
            cur.swap(next);
        }
        const double y = cur[0];
        if (!std::isfinite(y)) return 0.0;
        return std::clamp(y, -clamp_, clamp_);
    }

    friend bool operator==(const FittedModel&, const FittedModel&) = default;

private:
    ModelKind kind_ = ModelKind::constant_mean;
    double clamp_ = 1.0;
    double constant_ = 0.0;
    int input_dim_ = -1;
    std::vector<DenseLayer> layers_;
};

inline double predict(const FittedModel& model, std::span<const double> x) { return model.predict(x); }

/// Mean squared residual over masked rows.
inline double masked_mse(const FittedModel& model, const Matrix& features,
                         std::span<const double> targets, std::span<const std::uint8_t> mask) {
    double sse = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < mask.size(); ++i) {
        if (!mask[i]) continue;
        const double r = model.predict(features.row(i)) - targets[i];
        sse += r * r;
        ++count;
    }
    if (count == 0) throw EmptyIntervalError("masked_mse: mask selects no rows");
    return sse / static_cast<double>(count);
}

namespace detail {

// Trains on standardized inputs/targets over the active rows. Returns false
// if the loss became non-finite.
class MlpTrainer {
public:
    MlpTrainer(const Matrix& features, std::span<const double> targets,
               std::span<const std::size_t> rows, const MlpSpec& spec, std::uint64_t seed)
        : features_(features), targets_(targets), rows_(rows), spec_(spec), rng_(seed) {
        p_ = static_cast<int>(features.cols());
        standardize();
        init_layers();
    }

    bool train(double learning_rate) {
        const std::size_t n = rows_.size();
        const std::size_t batch =
            (spec_.batch_size <= 0 || static_cast<std::size_t>(spec_.batch_size) >= n)
                ? n : static_cast<std::size_t>(spec_.batch_size);
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), std::size_t{0});

        allocate_adam();
        long step = 0;
        for (int epoch = 0; epoch < spec_.epochs; ++epoch) {
            if (batch < n) std::shuffle(order.begin(), order.end(), rng_);
            for (std::size_t start = 0; start < n; start += batch) {
                const std::size_t len = std::min(batch, n - start);
                const double loss = gradient(std::span<const std::size_t>(order).subspan(start, len));
                if (!std::isfinite(loss)) return false;
                if (spec_.optimizer == Optimizer::adam) {
                    adam_step(learning_rate, ++step);
                } else {
                    gd_step(learning_rate);
                }
            }
        }
        for (const auto& l : layers_) {
            for (double v : l.weights) if (!std::isfinite(v)) return false;
        }
        return true;
    }

    /// Network on the original feature/target scale.
    [[nodiscard]] std::vector<DenseLayer> export_layers() const {
        auto out = layers_;
        // z = W (x - mu)/s + b  ->  W' = W/s, b' = b - W' mu
        auto& first = out.front();
        for (int o = 0; o < first.out; ++o) {
            double shift = 0.0;
            for (int i = 0; i < first.in; ++i) {
                first.w(o, i) /= x_scale_[i];
                shift += first.w(o, i) * x_mean_[i];
            }
            first.bias[o] -= shift;
        }
        // y = mean + sd * (W h + b)
        auto& last = out.back();
        for (double& w : last.weights) w *= y_scale_;
        last.bias[0] = y_mean_ + y_scale_ * last.bias[0];
        return out;
    }

    void reset() { init_layers(); }

private:
    void standardize() {
        const double n = static_cast<double>(rows_.size());
        x_mean_.assign(p_, 0.0);
        x_scale_.assign(p_, 1.0);
        for (std::size_t r : rows_) {
            auto x = features_.row(r);
            for (int j = 0; j < p_; ++j) x_mean_[j] += x[j] / n;
        }
        std::vector<double> var(p_, 0.0);
        for (std::size_t r : rows_) {
            auto x = features_.row(r);
            for (int j = 0; j < p_; ++j) var[j] += (x[j] - x_mean_[j]) * (x[j] - x_mean_[j]) / n;
        }
        for (int j = 0; j < p_; ++j) x_scale_[j] = var[j] > 1e-24 ? std::sqrt(var[j]) : 1.0;

        y_mean_ = 0.0;
        for (std::size_t r : rows_) y_mean_ += targets_[r] / n;
        double yv = 0.0;
        for (std::size_t r : rows_) yv += (targets_[r] - y_mean_) * (targets_[r] - y_mean_) / n;
        y_scale_ = yv > 1e-24 ? std::sqrt(yv) : 1.0;

        xs_.resize(rows_.size() * static_cast<std::size_t>(p_));
        ys_.resize(rows_.size());
        for (std::size_t k = 0; k < rows_.size(); ++k) {
            auto x = features_.row(rows_[k]);
            for (int j = 0; j < p_; ++j) xs_[k * p_ + j] = (x[j] - x_mean_[j]) / x_scale_[j];
            ys_[k] = (targets_[rows_[k]] - y_mean_) / y_scale_;
        }
    }

    void init_layers() {
        layers_.clear();
        int in = p_;
        for (int h = 0; h < spec_.hidden_layers; ++h) {
            layers_.emplace_back(in, spec_.hidden_width);
            in = spec_.hidden_width;
        }
        layers_.emplace_back(in, 1);
        for (auto& l : layers_) {
            const double bound = 1.0 / std::sqrt(static_cast<double>(std::max(1, l.in)));
            std::uniform_real_distribution<double> unif(-bound, bound);
            for (double& w : l.weights) w = unif(rng_);
        }
    }

    void allocate_adam() {
        grads_.clear();
        m1_.clear();
        m2_.clear();
        for (const auto& l : layers_) {
            grads_.emplace_back(l.in, l.out);
            m1_.emplace_back(l.in, l.out);
            m2_.emplace_back(l.in, l.out);
        }
    }

    // Mean squared loss over the batch; fills grads_.
    double gradient(std::span<const std::size_t> batch) {
        const std::size_t nb = batch.size();
        const std::size_t depth = layers_.size();
        acts_.resize(depth + 1);
        acts_[0].resize(nb * static_cast<std::size_t>(p_));
        for (std::size_t k = 0; k < nb; ++k) {
            std::copy_n(&xs_[batch[k] * p_], p_, &acts_[0][k * p_]);
        }
        for (std::size_t d = 0; d < depth; ++d) {
            const auto& l = layers_[d];
            auto& outa = acts_[d + 1];
            outa.resize(nb * static_cast<std::size_t>(l.out));
            const auto& ina = acts_[d];
            const bool hidden = d + 1 < depth;
            for (std::size_t k = 0; k < nb; ++k) {
                const double* xin = &ina[k * l.in];
                double* xo = &outa[k * l.out];
                for (int o = 0; o < l.out; ++o) {
                    const double* wr = &l.weights[static_cast<std::size_t>(o) * l.in];
                    double z = l.bias[o];
                    for (int i = 0; i < l.in; ++i) z += wr[i] * xin[i];
                    xo[o] = hidden ? activation(z) : z;
                }
            }
        }

        double loss = 0.0;
        delta_.resize(nb);
        const double inv = 1.0 / static_cast<double>(nb);
        for (std::size_t k = 0; k < nb; ++k) {
            const double r = acts_[depth][k] - ys_[batch[k]];
            loss += r * r * inv;
            delta_[k] = 2.0 * r * inv;
        }

        for (std::size_t d = depth; d-- > 0;) {
            const auto& l = layers_[d];
            auto& g = grads_[d];
            std::fill(g.weights.begin(), g.weights.end(), 0.0);
            std::fill(g.bias.begin(), g.bias.end(), 0.0);
            const auto& ina = acts_[d];
            for (std::size_t k = 0; k < nb; ++k) {
                const double* xin = &ina[k * l.in];
                const double* dz = &delta_[k * l.out];
                for (int o = 0; o < l.out; ++o) {
                    g.bias[o] += dz[o];
                    double* gw = &g.weights[static_cast<std::size_t>(o) * l.in];
                    for (int i = 0; i < l.in; ++i) gw[i] += dz[o] * xin[i];
                }
            }
            if (spec_.weight_decay > 0.0) {
                for (std::size_t i = 0; i < l.weights.size(); ++i) g.weights[i] += 2.0 * spec_.weight_decay * l.weights[i];
            }
            if (d == 0) break;
            // Propagate through tanh of the previous layer.
            next_delta_.assign(nb * static_cast<std::size_t>(l.in), 0.0);
            for (std::size_t k = 0; k < nb; ++k) {
                const double* dz = &delta_[k * l.out];
                double* nd = &next_delta_[k * l.in];
                for (int o = 0; o < l.out; ++o) {
                    const double* wr = &l.weights[static_cast<std::size_t>(o) * l.in];
                    for (int i = 0; i < l.in; ++i) nd[i] += dz[o] * wr[i];
                }
                const double* h = &ina[k * l.in];
                for (int i = 0; i < l.in; ++i) nd[i] *= (1.0 - h[i] * h[i]);
            }
            delta_.swap(next_delta_);
        }
        return loss;
    }

    void gd_step(double lr) {
        for (std::size_t d = 0; d < layers_.size(); ++d) {
            auto& l = layers_[d];
            for (std::size_t i = 0; i < l.weights.size(); ++i) l.weights[i] -= lr * grads_[d].weights[i];
            for (std::size_t i = 0; i < l.bias.size(); ++i) l.bias[i] -= lr * grads_[d].bias[i];
        }
    }

    void adam_step(double lr, long step) {
        constexpr double beta1 = 0.9;
        constexpr double beta2 = 0.999;
        constexpr double eps = 1e-8;
        const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
        const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
        auto update = [&](std::vector<double>& param, const std::vector<double>& g,
                          std::vector<double>& m, std::vector<double>& v) {
            for (std::size_t i = 0; i < param.size(); ++i) {
                m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                param[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
            }
        };
        for (std::size_t d = 0; d < layers_.size(); ++d) {
            update(layers_[d].weights, grads_[d].weights, m1_[d].weights, m2_[d].weights);
            update(layers_[d].bias, grads_[d].bias, m1_[d].bias, m2_[d].bias);
        }
    }

    const Matrix& features_;
    std::span<const double> targets_;
    std::span<const std::size_t> rows_;
    const MlpSpec& spec_;
    std::mt19937_64 rng_;
    int p_ = 0;

    std::vector<double> x_mean_, x_scale_;
    double y_mean_ = 0.0;
    double y_scale_ = 1.0;
    std::vector<double> xs_, ys_;

    std::vector<DenseLayer> layers_, grads_, m1_, m2_;
    std::vector<std::vector<double>> acts_;
    std::vector<double> delta_, next_delta_;
};

}  // namespace detail

/// Fits a regressor to targets on the masked rows.
///
/// The MLP is returned only if its masked MSE does not exceed the constant-mean
/// fit's; otherwise the constant-mean model is returned. Deterministic in
/// (inputs, spec, seed).
inline FittedModel fit(const Matrix& features, std::span<const double> targets,
                       std::span<const std::uint8_t> mask, const MlpSpec& spec, std::uint64_t seed) {
    if (targets.size() != features.rows() || mask.size() != features.rows()) {
        throw ValidationError("fit: features, targets and mask lengths differ");
    }
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < mask.size(); ++i) {
        if (mask[i]) rows.push_back(i);
    }
    if (rows.empty()) throw EmptyIntervalError("fit: mask selects no rows");

    double mean = 0.0;
    double max_abs = 0.0;
    for (std::size_t r : rows) {
        if (!std::isfinite(targets[r])) throw ValidationError("fit: non-finite target");
        mean += targets[r];
        max_abs = std::max(max_abs, std::abs(targets[r]));
    }
    mean /= static_cast<double>(rows.size());
    const double clamp = spec.output_clamp.value_or(std::max(2.0 * max_abs, 1e-12));
    const int p = static_cast<int>(features.cols());

    auto constant = FittedModel::constant(mean, clamp, p);
    const double const_mse = masked_mse(constant, features, targets, mask);
    if (const_mse <= 1e-24 || rows.size() < 2 || spec.epochs == 0) return constant;

    detail::MlpTrainer trainer(features, targets, rows, spec, seed);
    bool ok = trainer.train(spec.learning_rate);
    if (!ok) {
        trainer.reset();
        ok = trainer.train(spec.learning_rate * 0.1);
        if (!ok) throw NumericalError("fit: MLP training diverged");
    }
    auto net = FittedModel::network(trainer.export_layers(), clamp);
    const double net_mse = masked_mse(net, features, targets, mask);
    if (!std::isfinite(net_mse) || net_mse > const_mse) return constant;
    return net;
}

}  // namespace djqe
