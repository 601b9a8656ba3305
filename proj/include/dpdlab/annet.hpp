#pragma once

// Real-valued time-delay MLP with binary connection masks and a trainable
// 2x2 shortcut from the current I/Q input to the I/Q output.
//
// Layer k (k = 2..K) maps s_k in R^{D_{k-1}} to sigma((M_k .* W_k) s_k + b_k);
// the last layer is linear. With the shortcut enabled the output becomes
//   W_a [I(n), Q(n)]^T + W_K s_K + b_K.
// Without it the network is a plain RVTDNN.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "signals.hpp"

namespace dpdlab::annet {

enum class Activation { relu, softsign };

inline std::string to_string(Activation a) { return a == Activation::relu ? "relu" : "softsign"; }

inline Activation activation_from_string(const std::string& s) {
    if (s == "relu") return Activation::relu;
    if (s == "softsign") return Activation::softsign;
    throw std::invalid_argument("unknown activation '" + s + "'");
}

struct LayerSpec {
    std::vector<int> dims;  // D_1 .. D_K
    int memory = 0;         // M

    void validate() const {
        if (memory < 0) throw std::invalid_argument("LayerSpec: memory must be non-negative");
        if (dims.size() < 2) throw std::invalid_argument("LayerSpec: need at least an input and an output layer");
        for (int d : dims)
            if (d <= 0) throw std::invalid_argument("LayerSpec: layer widths must be positive");
        if (dims.front() != 2 * (memory + 1))
            throw std::invalid_argument("LayerSpec: input width must equal 2(M+1)");
        if (dims.back() != 2) throw std::invalid_argument("LayerSpec: output width must be 2");
    }

    [[nodiscard]] std::size_t num_layers() const { return dims.size(); }  // K
};

/// Weight/bias/mask index i corresponds to layer k = i + 2.
struct ArdenNetwork {
    LayerSpec spec;
    Activation activation = Activation::relu;
    std::vector<Eigen::MatrixXd> weights;  // D_k x D_{k-1}
    std::vector<Eigen::VectorXd> biases;   // D_k
    std::vector<Eigen::MatrixXd> masks;    // entries exactly 0.0 or 1.0
    Eigen::Matrix2d shortcut = Eigen::Matrix2d::Identity();
    bool shortcut_enabled = true;

    [[nodiscard]] std::size_t num_weight_layers() const { return weights.size(); }

    [[nodiscard]] Eigen::MatrixXd effective_weight(std::size_t i) const { return masks[i].cwiseProduct(weights[i]); }

    [[nodiscard]] std::size_t zero_count(std::size_t i) const {
        return static_cast<std::size_t>((masks[i].array() == 0.0).count());
    }

    [[nodiscard]] double layer_sparsity(std::size_t i) const {
        return static_cast<double>(zero_count(i)) / static_cast<double>(masks[i].size());
    }

    /// Fraction of masked weights over all layers.
    [[nodiscard]] double sparsity() const {
        std::size_t zeros = 0;
        std::size_t total = 0;
        for (std::size_t i = 0; i < masks.size(); ++i) {
            zeros += zero_count(i);
            total += static_cast<std::size_t>(masks[i].size());
        }
        return total ? static_cast<double>(zeros) / static_cast<double>(total) : 0.0;
    }

    void validate() const {
        spec.validate();
        const auto layers = spec.dims.size() - 1;
        if (weights.size() != layers || biases.size() != layers || masks.size() != layers)
            throw std::invalid_argument("ArdenNetwork: parameter count does not match spec");
        for (std::size_t i = 0; i < layers; ++i) {
            const auto rows = spec.dims[i + 1];
            const auto cols = spec.dims[i];
            if (weights[i].rows() != rows || weights[i].cols() != cols || masks[i].rows() != rows ||
                masks[i].cols() != cols || biases[i].size() != rows)
                throw std::invalid_argument("ArdenNetwork: layer " + std::to_string(i + 2) + " has wrong shape");
        }
    }
};

/// He-uniform weights, zero biases, all-ones masks, identity shortcut.
inline ArdenNetwork build_network(int memory, const std::vector<int>& hidden_dims, Activation activation,
                                  bool shortcut_enabled, std::uint64_t seed) {
    ArdenNetwork net;
    net.spec.memory = memory;
    net.spec.dims.push_back(2 * (memory + 1));
    net.spec.dims.insert(net.spec.dims.end(), hidden_dims.begin(), hidden_dims.end());
    net.spec.dims.push_back(2);
    net.spec.validate();
    net.activation = activation;
    net.shortcut_enabled = shortcut_enabled;

    std::mt19937_64 rng(seed);
    for (std::size_t i = 0; i + 1 < net.spec.dims.size(); ++i) {
        const int fan_in = net.spec.dims[i];
        const int fan_out = net.spec.dims[i + 1];
        const double limit = std::sqrt(6.0 / fan_in);
        std::uniform_real_distribution<double> uni(-limit, limit);
        Eigen::MatrixXd w(fan_out, fan_in);
        // row-major fill order keeps the init independent of Eigen storage
        for (int r = 0; r < fan_out; ++r)
            for (int c = 0; c < fan_in; ++c) w(r, c) = uni(rng);
        net.weights.push_back(std::move(w));
        net.biases.push_back(Eigen::VectorXd::Zero(fan_out));
        net.masks.push_back(Eigen::MatrixXd::Ones(fan_out, fan_in));
    }
    return net;
}

using InputWindow = Eigen::VectorXd;

/// One column per time index n in [M, len):
/// [I(n), Q(n), I(n-1), Q(n-1), ..., I(n-M), Q(n-M)].
inline Eigen::MatrixXd window_signal(const ComplexSignal& x, int memory) {
    if (memory < 0) throw std::invalid_argument("window_signal: memory must be non-negative");
    const auto m = static_cast<std::size_t>(memory);
    if (x.size() < m + 1) throw std::invalid_argument("window_signal: signal shorter than M+1");
    const auto count = static_cast<Eigen::Index>(x.size() - m);
    Eigen::MatrixXd out(2 * (memory + 1), count);
    for (Eigen::Index c = 0; c < count; ++c) {
        const auto n = static_cast<std::size_t>(c) + m;
        for (std::size_t lag = 0; lag <= m; ++lag) {
            out(static_cast<Eigen::Index>(2 * lag), c) = x.samples[n - lag].real();
            out(static_cast<Eigen::Index>(2 * lag + 1), c) = x.samples[n - lag].imag();
        }
    }
    return out;
}

inline double activate(Activation a, double v) {
    return a == Activation::relu ? (v > 0.0 ? v : 0.0) : v / (1.0 + std::abs(v));
}

inline double activate_derivative(Activation a, double v) {
    if (a == Activation::relu) return v > 0.0 ? 1.0 : 0.0;
    const double d = 1.0 + std::abs(v);
    return 1.0 / (d * d);
}

/// Batched forward pass; windows are columns, returns a 2 x B matrix.
inline Eigen::MatrixXd forward_batch(const ArdenNetwork& net, const Eigen::MatrixXd& windows) {
    Eigen::MatrixXd s = windows;
    const auto layers = net.weights.size();
    for (std::size_t i = 0; i < layers; ++i) {
        Eigen::MatrixXd z = net.effective_weight(i) * s;
        z.colwise() += net.biases[i];
        if (i + 1 < layers) z = z.unaryExpr([a = net.activation](double v) { return activate(a, v); });
        s = std::move(z);
    }
    if (net.shortcut_enabled) s.noalias() += net.shortcut * windows.topRows(2);
    return s;
}

inline Eigen::Vector2d forward(const ArdenNetwork& net, const InputWindow& w) {
    return forward_batch(net, w);
}

/// Running complexity: 2(1 - eta) sum D_k D_{k+1}, plus 8 for the shortcut.
inline long long flops(const std::vector<int>& dims, double eta_d, bool shortcut_enabled) {
    if (!(eta_d >= 0.0 && eta_d <= 1.0)) throw std::invalid_argument("flops: eta_d must lie in [0, 1]");
    long long dense = 0;
    for (std::size_t k = 0; k + 1 < dims.size(); ++k)
        dense += static_cast<long long>(dims[k]) * static_cast<long long>(dims[k + 1]);
    const auto sparse = static_cast<long long>(std::llround(2.0 * (1.0 - eta_d) * static_cast<double>(dense)));
    return sparse + (shortcut_enabled ? 8 : 0);
}

inline long long flops(const ArdenNetwork& net, double eta_d) {
    return flops(net.spec.dims, eta_d, net.shortcut_enabled);
}

/// FLOPs of the deployed network from its actual masks.
inline long long deployed_flops(const ArdenNetwork& net) {
    long long nnz = 0;
    for (const auto& m : net.masks) nnz += static_cast<long long>((m.array() != 0.0).count());
    return 2 * nnz + (net.shortcut_enabled ? 8 : 0);
}

struct FlopCounter {
    long long multiplies = 0;
    long long additions = 0;
    [[nodiscard]] long long total() const { return multiplies + additions; }
};

/// Scalar forward pass that tallies every real multiply and add over the
/// unmasked connections and the shortcut. Activations and bias
/// initialisation of the accumulator are free.
inline Eigen::Vector2d forward_counted(const ArdenNetwork& net, const InputWindow& w, FlopCounter& counter) {
    std::vector<double> s(w.data(), w.data() + w.size());
    const auto layers = net.weights.size();
    for (std::size_t i = 0; i < layers; ++i) {
        const auto& W = net.weights[i];
        const auto& M = net.masks[i];
        std::vector<double> next(static_cast<std::size_t>(W.rows()));
        for (Eigen::Index r = 0; r < W.rows(); ++r) {
            double acc = net.biases[i](r);
            for (Eigen::Index c = 0; c < W.cols(); ++c) {
                if (M(r, c) == 0.0) continue;
                acc += W(r, c) * s[static_cast<std::size_t>(c)];
                ++counter.multiplies;
                ++counter.additions;
            }
            next[static_cast<std::size_t>(r)] = (i + 1 < layers) ? activate(net.activation, acc) : acc;
        }
        s = std::move(next);
    }
    Eigen::Vector2d out(s[0], s[1]);
    if (net.shortcut_enabled) {
        for (int r = 0; r < 2; ++r) {
            const double a = net.shortcut(r, 0) * w(0);
            const double b = net.shortcut(r, 1) * w(1);
            counter.multiplies += 2;
            out(r) += a + b;
            counter.additions += 2;
        }
    }
    return out;
}

/// Runs the network as a predistorter. The first M samples have no full
/// history and are passed through unchanged.
inline ComplexSignal predistort(const ArdenNetwork& net, const ComplexSignal& u) {
    ComplexSignal out = u;
    const auto m = static_cast<std::size_t>(net.spec.memory);
    if (u.size() <= m) return out;
    const Eigen::MatrixXd windows = window_signal(u, net.spec.memory);
    // chunked to bound peak memory on long records
    constexpr Eigen::Index kChunk = 16384;
    for (Eigen::Index start = 0; start < windows.cols(); start += kChunk) {
        const Eigen::Index len = std::min(kChunk, windows.cols() - start);
        const Eigen::MatrixXd y = forward_batch(net, windows.middleCols(start, len));
        for (Eigen::Index c = 0; c < len; ++c)
            out.samples[static_cast<std::size_t>(start + c) + m] = {y(0, c), y(1, c)};
    }
    return out;
}

}  // namespace dpdlab::annet
