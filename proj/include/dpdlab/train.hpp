#pragma once

// Mini-batch backprop with Adam on the MSE loss, and gradual magnitude
// pruning with a cubic sparsity ramp.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "annet.hpp"
#include "error.hpp"

namespace dpdlab::train {

using annet::ArdenNetwork;

struct TrainConfig {
    int batch_size = 256;
    double learning_rate = 1e-3;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    long long total_steps = 50000;
    std::uint64_t seed = 0;
    bool prune_output_layer = true;

    void validate() const {
        if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
        if (total_steps < 1) throw std::invalid_argument("TrainConfig: total_steps must be >= 1");
        if (!(learning_rate > 0.0)) throw std::invalid_argument("TrainConfig: learning_rate must be positive");
    }
};

struct PruneSchedule {
    double eta_d = 0.5;
    long long delta_n = 500;
    long long total_steps = 50000;

    void validate() const {
        if (!(eta_d >= 0.0 && eta_d < 1.0)) throw std::invalid_argument("PruneSchedule: eta_d must lie in [0, 1)");
        if (delta_n < 1) throw std::invalid_argument("PruneSchedule: delta_n must be >= 1");
        if (total_steps < delta_n) throw std::invalid_argument("PruneSchedule: total_steps must be >= delta_n");
    }

    [[nodiscard]] long long num_events() const { return total_steps / delta_n; }
};

/// Windows as columns (D_1 x S) and matching I/Q targets (2 x S).
struct Dataset {
    Eigen::MatrixXd inputs;
    Eigen::MatrixXd targets;

    [[nodiscard]] Eigen::Index size() const { return inputs.cols(); }
};

/// Mean over the batch of squared I error plus squared Q error.
inline double mse_loss(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target) {
    if (pred.rows() != target.rows() || pred.cols() != target.cols())
        throw std::invalid_argument("mse_loss: shape mismatch");
    if (pred.cols() == 0) throw std::invalid_argument("mse_loss: empty batch");
    return (pred - target).squaredNorm() / static_cast<double>(pred.cols());
}

/// Same layout as the network's trainable parameters.
struct Gradients {
    std::vector<Eigen::MatrixXd> weights;
    std::vector<Eigen::VectorXd> biases;
    Eigen::Matrix2d shortcut = Eigen::Matrix2d::Zero();

    static Gradients zeros_like(const ArdenNetwork& net) {
        Gradients g;
        for (std::size_t i = 0; i < net.weights.size(); ++i) {
            g.weights.push_back(Eigen::MatrixXd::Zero(net.weights[i].rows(), net.weights[i].cols()));
            g.biases.push_back(Eigen::VectorXd::Zero(net.biases[i].size()));
        }
        return g;
    }
};

/// Loss and exact gradients w.r.t. every unmasked parameter. Masked weight
/// gradients are zero; the shortcut gradient is zero when it is disabled.
inline double compute_gradients(const ArdenNetwork& net, const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& targets,
                                Gradients& grad) {
    const auto layers = net.weights.size();
    const auto batch = inputs.cols();
    if (batch == 0) throw std::invalid_argument("compute_gradients: empty batch");

    std::vector<Eigen::MatrixXd> eff(layers);
    std::vector<Eigen::MatrixXd> acts(layers + 1);   // acts[i] feeds layer i
    std::vector<Eigen::MatrixXd> preact(layers);
    acts[0] = inputs;
    for (std::size_t i = 0; i < layers; ++i) {
        eff[i] = net.effective_weight(i);
        preact[i] = eff[i] * acts[i];
        preact[i].colwise() += net.biases[i];
        acts[i + 1] = (i + 1 < layers)
                          ? Eigen::MatrixXd(preact[i].unaryExpr([a = net.activation](double v) { return annet::activate(a, v); }))
                          : preact[i];
    }
    Eigen::MatrixXd out = acts[layers];
    if (net.shortcut_enabled) out.noalias() += net.shortcut * inputs.topRows(2);

    const Eigen::MatrixXd diff = out - targets;
    const double loss = diff.squaredNorm() / static_cast<double>(batch);

    grad = Gradients::zeros_like(net);
    Eigen::MatrixXd delta = (2.0 / static_cast<double>(batch)) * diff;  // dL/d(output)
    if (net.shortcut_enabled) grad.shortcut = delta * inputs.topRows(2).transpose();

    for (std::size_t ii = layers; ii-- > 0;) {
        if (ii + 1 < layers) {
            delta = delta.cwiseProduct(
                preact[ii].unaryExpr([a = net.activation](double v) { return annet::activate_derivative(a, v); }));
        }
        grad.weights[ii] = (delta * acts[ii].transpose()).cwiseProduct(net.masks[ii]);
        grad.biases[ii] = delta.rowwise().sum();
        if (ii > 0) delta = eff[ii].transpose() * delta;
    }
    return loss;
}

struct AdamState {
    long long step = 0;
    Gradients m;
    Gradients v;

    static AdamState for_network(const ArdenNetwork& net) {
        return AdamState{0, Gradients::zeros_like(net), Gradients::zeros_like(net)};
    }
};

namespace detail {

template <typename Param, typename Grad>
void adam_update(Param& p, const Grad& g, Param& m, Param& v, const TrainConfig& cfg, double c1, double c2) {
    m = cfg.adam_beta1 * m + (1.0 - cfg.adam_beta1) * g;
    v = cfg.adam_beta2 * v + (1.0 - cfg.adam_beta2) * g.cwiseProduct(g);
    p.array() -= cfg.learning_rate * (m.array() / c1) / ((v.array() / c2).sqrt() + cfg.adam_eps);
}

}  // namespace detail

/// One Adam step on a mini-batch; returns the loss before the update.
/// Weights under a zero mask stay exactly 0.0.
inline double backprop_step(ArdenNetwork& net, const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& targets,
                            const TrainConfig& cfg, AdamState& state) {
    Gradients g;
    const double loss = compute_gradients(net, inputs, targets, g);
    if (!std::isfinite(loss)) throw NumericalError("training diverged: non-finite loss");

    ++state.step;
    const double c1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(state.step));
    const double c2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < net.weights.size(); ++i) {
        detail::adam_update(net.weights[i], g.weights[i], state.m.weights[i], state.v.weights[i], cfg, c1, c2);
        net.weights[i] = net.weights[i].cwiseProduct(net.masks[i]);
        state.m.weights[i] = state.m.weights[i].cwiseProduct(net.masks[i]);
        state.v.weights[i] = state.v.weights[i].cwiseProduct(net.masks[i]);
        detail::adam_update(net.biases[i], g.biases[i], state.m.biases[i], state.v.biases[i], cfg, c1, c2);
    }
    if (net.shortcut_enabled)
        detail::adam_update(net.shortcut, g.shortcut, state.m.shortcut, state.v.shortcut, cfg, c1, c2);
    return loss;
}

/// Cubic ramp: eta_d - eta_d (1 - t)^3 with t = floor(n/dN) / floor(N/dN).
inline double sparsity_at(const PruneSchedule& sched, long long n) {
    sched.validate();
    if (n < 0 || n > sched.total_steps) throw std::invalid_argument("sparsity_at: step out of range");
    const double t = static_cast<double>(n / sched.delta_n) / static_cast<double>(sched.num_events());
    const double r = 1.0 - t;
    return sched.eta_d - sched.eta_d * r * r * r;
}

/// Number of zeroed weights required for sparsity eta over n_weights.
inline std::size_t prune_count(std::size_t n_weights, double eta) {
    const double exact = static_cast<double>(n_weights) * eta;
    return static_cast<std::size_t>(std::ceil(exact - 1e-9));
}

/// Zeroes the ceil(N_w * eta) smallest-magnitude weights of layer index
/// `layer` (0 -> W_2). Already-masked weights are ranked first; ties go to
/// the lowest row-major index.
inline void prune_layer(ArdenNetwork& net, std::size_t layer, double eta) {
    if (layer >= net.weights.size()) throw std::out_of_range("prune_layer: no such layer");
    if (!(eta >= 0.0 && eta <= 1.0)) throw std::invalid_argument("prune_layer: eta must lie in [0, 1]");
    auto& W = net.weights[layer];
    auto& M = net.masks[layer];
    const auto cols = W.cols();
    const auto total = static_cast<std::size_t>(W.size());
    const std::size_t target = prune_count(total, eta);
    const std::size_t current = net.zero_count(layer);
    if (target < current)
        throw std::invalid_argument("prune_layer: requested sparsity " + std::to_string(eta) +
                                    " is below the layer's current sparsity");

    std::vector<std::size_t> order(total);
    std::iota(order.begin(), order.end(), std::size_t{0});
    auto at = [&](std::size_t flat) { return std::pair{static_cast<Eigen::Index>(flat / cols), static_cast<Eigen::Index>(flat % cols)}; };
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const auto [ra, ca] = at(a);
        const auto [rb, cb] = at(b);
        const bool ma = M(ra, ca) == 0.0;
        const bool mb = M(rb, cb) == 0.0;
        if (ma != mb) return ma;
        return std::abs(W(ra, ca)) < std::abs(W(rb, cb));
    });
    for (std::size_t i = 0; i < target; ++i) {
        const auto [r, c] = at(order[i]);
        W(r, c) = 0.0;
        M(r, c) = 0.0;
    }
}

struct HistoryRow {
    long long step = 0;
    double loss = 0.0;
    double eta_current = 0.0;
    long long flops_current = 0;
};

struct TrainResult {
    std::vector<HistoryRow> history;
    double final_loss = 0.0;
};

/// Mini-batches drawn from seeded per-epoch permutations.
class BatchSampler {
public:
    BatchSampler(Eigen::Index size, int batch_size, std::uint64_t seed)
        : order_(static_cast<std::size_t>(size)), batch_(std::min<Eigen::Index>(batch_size, size)), rng_(seed) {
        std::iota(order_.begin(), order_.end(), Eigen::Index{0});
        std::shuffle(order_.begin(), order_.end(), rng_);
    }

    void next(const Dataset& data, Eigen::MatrixXd& in, Eigen::MatrixXd& tgt) {
        in.resize(data.inputs.rows(), batch_);
        tgt.resize(data.targets.rows(), batch_);
        for (Eigen::Index b = 0; b < batch_; ++b) {
            if (pos_ == order_.size()) {
                std::shuffle(order_.begin(), order_.end(), rng_);
                pos_ = 0;
            }
            const auto idx = order_[pos_++];
            in.col(b) = data.inputs.col(idx);
            tgt.col(b) = data.targets.col(idx);
        }
    }

private:
    std::vector<Eigen::Index> order_;
    Eigen::Index batch_;
    std::size_t pos_ = 0;
    std::mt19937_64 rng_;
};

/// Called after every step with the step index and the current network.
using StepObserver = std::function<void(long long, const ArdenNetwork&)>;

/// Training loop with optional gradual pruning. Step n prunes every weight
/// layer to sparsity_at(n) when dN divides n, and takes an Adam step
/// otherwise. The shortcut is never pruned.
inline TrainResult train_with_pruning(ArdenNetwork& net, const Dataset& data, const TrainConfig& cfg,
                                      const std::optional<PruneSchedule>& sched, AdamState* resume = nullptr,
                                      const StepObserver& observe = {}) {
    cfg.validate();
    net.validate();
    if (data.size() == 0) throw std::invalid_argument("train_with_pruning: empty dataset");
    if (data.inputs.rows() != net.spec.dims.front() || data.targets.rows() != 2 || data.targets.cols() != data.size())
        throw std::invalid_argument("train_with_pruning: dataset shape does not match the network");
    if (sched) {
        sched->validate();
        if (sched->total_steps != cfg.total_steps)
            throw std::invalid_argument("train_with_pruning: schedule and config disagree on total steps");
    }

    AdamState local = AdamState::for_network(net);
    AdamState& state = resume ? *resume : local;
    if (state.m.weights.size() != net.weights.size()) state = AdamState::for_network(net);

    BatchSampler sampler(data.size(), cfg.batch_size, cfg.seed);
    Eigen::MatrixXd in;
    Eigen::MatrixXd tgt;
    TrainResult result;
    result.history.reserve(static_cast<std::size_t>(cfg.total_steps));
    double eta = net.sparsity();
    double last_loss = std::numeric_limits<double>::quiet_NaN();
    const std::size_t prunable = cfg.prune_output_layer ? net.weights.size() : net.weights.size() - 1;

    for (long long n = 1; n <= cfg.total_steps; ++n) {
        if (sched && n % sched->delta_n == 0) {
            eta = sparsity_at(*sched, n);
            for (std::size_t i = 0; i < prunable; ++i) prune_layer(net, i, eta);
        } else {
            sampler.next(data, in, tgt);
            last_loss = backprop_step(net, in, tgt, cfg, state);
        }
        result.history.push_back({n, last_loss, eta, annet::deployed_flops(net)});
        if (observe) observe(n, net);
    }
    result.final_loss = last_loss;
    return result;
}

}  // namespace dpdlab::train
