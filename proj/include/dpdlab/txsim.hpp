#pragma once

// Direct-conversion transmitter model:
//   x -> [Re/Im split] -> DAC -> LPF -> mixer (gain/phase imbalance) -> PA -> y
// The PA is a memory polynomial followed by a hard envelope clip and additive
// circular Gaussian measurement noise.

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

#include "signals.hpp"

namespace dpdlab::txsim {

struct DacModel {
    int num_bits = 12;
    double clip_level = 1.0;
    bool enabled = true;

    void validate() const {
        if (num_bits < 4 || num_bits > 52) throw std::invalid_argument("DacModel: num_bits must be in [4, 52]");
        if (!(clip_level > 0.0)) throw std::invalid_argument("DacModel: clip_level must be positive");
    }

    /// Two's-complement code spacing: codes -2^(b-1) .. 2^(b-1)-1.
    [[nodiscard]] double step() const { return clip_level / std::ldexp(1.0, num_bits - 1); }
};

struct IqImbalanceConfig {
    double gain_imbalance_db = 0.0;  // I-branch gain over Q-branch gain
    double phase_deg = 0.0;
    FirFilter fir_i{};
    FirFilter fir_q{};
    // Apply gain/phase digitally ahead of the DACs instead of at the mixer.
    bool imbalance_before_dac = false;

    void validate() const {
        if (fir_i.taps.empty() || fir_q.taps.empty())
            throw std::invalid_argument("IqImbalanceConfig: branch filters need at least one tap");
    }

    [[nodiscard]] double gain_i() const { return std::pow(10.0, gain_imbalance_db / 40.0); }
    [[nodiscard]] double gain_q() const { return std::pow(10.0, -gain_imbalance_db / 40.0); }
    [[nodiscard]] double phase_rad() const { return phase_deg * std::numbers::pi / 180.0; }
};

struct PaTerm {
    int order = 1;  // odd nonlinearity order p
    int delay = 0;  // memory tap m
    cplx coeff{1.0, 0.0};
};

struct PaSurrogate {
    std::vector<PaTerm> terms{PaTerm{}};
    double saturation_level = std::numeric_limits<double>::infinity();
    double noise_variance = 0.0;

    void validate() const {
        bool has_linear = false;
        for (const auto& t : terms) {
            if (t.order < 1 || t.order % 2 == 0) throw std::invalid_argument("PaSurrogate: orders must be odd and >= 1");
            if (t.delay < 0) throw std::invalid_argument("PaSurrogate: delays must be non-negative");
            if (t.order == 1 && t.delay == 0 && std::abs(t.coeff) > 0.0) has_linear = true;
        }
        if (!has_linear) throw std::invalid_argument("PaSurrogate: the (p=1, m=0) coefficient must be nonzero");
        if (!(saturation_level > 0.0)) throw std::invalid_argument("PaSurrogate: saturation_level must be positive");
        if (!(noise_variance >= 0.0)) throw std::invalid_argument("PaSurrogate: noise_variance must be >= 0");
    }

    [[nodiscard]] int max_delay() const {
        int m = 0;
        for (const auto& t : terms) m = std::max(m, t.delay);
        return m;
    }

    /// Small-signal gain: sum of the linear taps (response at DC).
    [[nodiscard]] cplx linear_gain() const {
        cplx g{0.0, 0.0};
        for (const auto& t : terms)
            if (t.order == 1) g += t.coeff;
        return g;
    }
};

struct TransmitterConfig {
    DacModel dac{};
    IqImbalanceConfig iq{};
    PaSurrogate pa{};
    std::uint64_t seed = 0;

    void validate() const {
        dac.validate();
        iq.validate();
        pa.validate();
    }
};

/// Clip to +-clip_level, then round to the nearest DAC code.
inline std::vector<double> dac_quantize(std::span<const double> branch, const DacModel& d) {
    d.validate();
    const double step = d.step();
    const double kmax = std::ldexp(1.0, d.num_bits - 1) - 1.0;
    const double kmin = -std::ldexp(1.0, d.num_bits - 1);
    std::vector<double> out(branch.size());
    for (std::size_t i = 0; i < branch.size(); ++i) {
        const double v = std::clamp(branch[i], -d.clip_level, d.clip_level);
        const double k = std::clamp(std::round(v / step), kmin, kmax);
        out[i] = k * step;
    }
    return out;
}

inline ComplexSignal iq_modulate(const ComplexSignal& x, const IqImbalanceConfig& cfg, const DacModel& dac) {
    cfg.validate();
    const std::size_t n = x.size();
    const double gi = cfg.gain_i();
    const double gq = cfg.gain_q();
    const cplx rot = std::polar(1.0, cfg.phase_rad());
    const cplx jrot = cplx{0.0, 1.0} * rot;

    std::vector<double> xi(n);
    std::vector<double> xq(n);
    for (std::size_t k = 0; k < n; ++k) {
        xi[k] = x.samples[k].real();
        xq[k] = x.samples[k].imag();
    }

    if (cfg.imbalance_before_dac) {
        // digital imbalance: (I, Q) -> (gI*I - sin(phi)*gQ*Q, cos(phi)*gQ*Q)
        const double s = std::sin(cfg.phase_rad());
        const double c = std::cos(cfg.phase_rad());
        for (std::size_t k = 0; k < n; ++k) {
            const double i0 = gi * xi[k];
            const double q0 = gq * xq[k];
            xi[k] = i0 - s * q0;
            xq[k] = c * q0;
        }
    }

    auto chain = [&](std::vector<double>& branch, const FirFilter& f) {
        if (dac.enabled) branch = dac_quantize(branch, dac);
        return fir_apply(std::span<const double>(branch), f);
    };
    const auto si = chain(xi, cfg.fir_i);
    const auto sq = chain(xq, cfg.fir_q);

    ComplexSignal z;
    z.sample_rate_hz = x.sample_rate_hz;
    z.samples.resize(n);
    if (cfg.imbalance_before_dac) {
        for (std::size_t k = 0; k < n; ++k) z.samples[k] = {si[k], sq[k]};
    } else {
        for (std::size_t k = 0; k < n; ++k) z.samples[k] = gi * si[k] + jrot * (gq * sq[k]);
    }
    return z;
}

/// Memory polynomial, envelope clip, then seeded AWGN. Samples before the
/// start of the record are taken as zero.
inline ComplexSignal pa_apply(const ComplexSignal& z, const PaSurrogate& pa, std::uint64_t seed) {
    pa.validate();
    const std::size_t n = z.size();
    ComplexSignal y;
    y.sample_rate_hz = z.sample_rate_hz;
    y.samples.assign(n, cplx{0.0, 0.0});
    for (std::size_t k = 0; k < n; ++k) {
        cplx acc{0.0, 0.0};
        for (const auto& t : pa.terms) {
            const auto m = static_cast<std::size_t>(t.delay);
            if (m > k) continue;
            const cplx v = z.samples[k - m];
            acc += t.coeff * std::pow(std::abs(v), t.order - 1) * v;
        }
        const double mag = std::abs(acc);
        if (mag > pa.saturation_level) acc *= pa.saturation_level / mag;
        y.samples[k] = acc;
    }
    if (pa.noise_variance > 0.0) {
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> gauss(0.0, std::sqrt(0.5 * pa.noise_variance));
        for (auto& v : y.samples) {
            const double re = gauss(rng);
            const double im = gauss(rng);
            v += cplx{re, im};
        }
    }
    return y;
}

inline ComplexSignal transmit(const ComplexSignal& x, const TransmitterConfig& cfg, std::uint64_t noise_seed) {
    cfg.validate();
    return pa_apply(iq_modulate(x, cfg.iq, cfg.dac), cfg.pa, noise_seed);
}

inline ComplexSignal transmit(const ComplexSignal& x, const TransmitterConfig& cfg) {
    return transmit(x, cfg, cfg.seed);
}

/// Transmitter with every impairment switched off and PA gain g.
inline TransmitterConfig ideal_transmitter(cplx g = {1.0, 0.0}) {
    TransmitterConfig cfg;
    cfg.dac.enabled = false;
    cfg.pa.terms = {PaTerm{1, 0, g}};
    return cfg;
}

/// Reference impairment set shipped as configs/reference_transmitter.json.
/// Baseband units: PA saturation 24.1 V maps to 1.0, the measured noise
/// variance 0.0032 V^2 scales by 1/24.1^2. The branch filters are
/// minimum-phase so the chain adds no bulk delay a causal DPD cannot undo.
inline TransmitterConfig reference_transmitter() {
    TransmitterConfig cfg;
    cfg.dac = DacModel{12, 1.5, true};
    cfg.iq.gain_imbalance_db = 1.0;
    cfg.iq.phase_deg = 8.0;
    cfg.iq.fir_i = FirFilter({0.8314782613, 0.1706214774, -0.0011164120, -0.0010126135, 0.0000292867, 0.0});
    cfg.iq.fir_q = FirFilter({0.8681547809, 0.1356113250, -0.0131049671, 0.0085629110, 0.0008774337, -0.0001014836});
    cfg.pa.terms = {
        PaTerm{1, 0, {1.0, 0.0}},       PaTerm{1, 1, {0.08, -0.05}},     PaTerm{1, 2, {-0.03, 0.02}},
        PaTerm{3, 0, {-0.63, 0.245}},   PaTerm{3, 1, {0.084, -0.056}},   PaTerm{3, 2, {-0.035, 0.021}},
        PaTerm{5, 0, {0.56, -0.21}},    PaTerm{5, 1, {-0.07, 0.035}},    PaTerm{5, 2, {0.021, -0.014}},
        PaTerm{7, 0, {-0.245, 0.084}},
    };
    cfg.pa.saturation_level = 1.0;
    cfg.pa.noise_variance = 0.0032 / (24.1 * 24.1);
    cfg.seed = 20210;
    return cfg;
}

/// Baseband drive level the reference transmitter is characterised at.
inline constexpr double kReferenceRms = 0.25;

}  // namespace dpdlab::txsim
