#pragma once

// Baseband signal container, FIR filtering, Welch spectral estimation and the
// two figures of merit used throughout the lab (NMSE and ACPR).

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

#include <unsupported/Eigen/FFT>

namespace dpdlab {

using cplx = std::complex<double>;

/// Uniformly sampled complex baseband sequence.
struct ComplexSignal {
    std::vector<cplx> samples;
    double sample_rate_hz = 1.0;

    ComplexSignal() = default;
    ComplexSignal(std::vector<cplx> s, double fs) : samples(std::move(s)), sample_rate_hz(fs) {
        if (!(fs > 0.0)) throw std::invalid_argument("ComplexSignal: sample rate must be positive");
    }

    [[nodiscard]] std::size_t size() const noexcept { return samples.size(); }
    [[nodiscard]] bool empty() const noexcept { return samples.empty(); }
    cplx& operator[](std::size_t i) { return samples[i]; }
    const cplx& operator[](std::size_t i) const { return samples[i]; }

    [[nodiscard]] double mean_power() const {
        if (samples.empty()) return 0.0;
        double acc = 0.0;
        for (const auto& v : samples) acc += std::norm(v);
        return acc / static_cast<double>(samples.size());
    }

    [[nodiscard]] double rms() const { return std::sqrt(mean_power()); }

    ComplexSignal& operator*=(cplx g) {
        for (auto& v : samples) v *= g;
        return *this;
    }
};

inline ComplexSignal operator*(cplx g, ComplexSignal s) {
    s *= g;
    return s;
}

/// Real-coefficient FIR filter.
struct FirFilter {
    std::vector<double> taps{1.0};

    FirFilter() = default;
    explicit FirFilter(std::vector<double> t) : taps(std::move(t)) {
        if (taps.empty()) throw std::invalid_argument("FirFilter: at least one tap required");
    }
};

enum class Window { rectangular, hann };

struct SpectrumConfig {
    std::size_t fft_size = 4096;
    double segment_overlap = 0.5;
    Window window = Window::hann;

    void validate() const {
        if (fft_size < 64 || (fft_size & (fft_size - 1)) != 0)
            throw std::invalid_argument("SpectrumConfig: fft_size must be a power of two >= 64");
        if (!(segment_overlap >= 0.0 && segment_overlap < 1.0))
            throw std::invalid_argument("SpectrumConfig: segment_overlap must be in [0, 1)");
    }
};

/// Clamp applied to -inf dB results so tables stay finite.
inline constexpr double kDbFloor = -200.0;

inline double clamp_db(double ratio, double floor_db = kDbFloor) {
    if (!(ratio > 0.0)) return floor_db;
    return std::max(10.0 * std::log10(ratio), floor_db);
}

struct MulticarrierOptions {
    double target_rms = 1.0;
    // Fraction of the channel bandwidth carrying subcarriers; the remainder is
    // split into guard bands at both edges (10 MHz LTE occupies 9 MHz).
    double occupied_fraction = 0.9;
};

/// Seeded Gaussian multicarrier signal: independent complex Gaussian symbols
/// on every DFT bin inside the occupied band, zero elsewhere, one inverse DFT
/// across the full length. The result is periodic and strictly band-limited.
inline ComplexSignal generate_multicarrier(long long num_samples, double bandwidth_hz, double sample_rate_hz,
                                           std::uint64_t seed, const MulticarrierOptions& opts = {}) {
    if (num_samples <= 0) throw std::invalid_argument("generate_multicarrier: num_samples must be positive");
    if (num_samples < 64) throw std::invalid_argument("generate_multicarrier: num_samples below one block (64)");
    if (!(sample_rate_hz > 0.0)) throw std::invalid_argument("generate_multicarrier: sample rate must be positive");
    if (!(bandwidth_hz > 0.0) || bandwidth_hz >= sample_rate_hz)
        throw std::invalid_argument("generate_multicarrier: need 0 < bandwidth < sample rate");
    if (!(opts.occupied_fraction > 0.0 && opts.occupied_fraction <= 1.0))
        throw std::invalid_argument("generate_multicarrier: occupied_fraction must be in (0, 1]");
    if (!(opts.target_rms > 0.0)) throw std::invalid_argument("generate_multicarrier: target_rms must be positive");

    const auto n = static_cast<std::size_t>(num_samples);
    const double half_occupied = 0.5 * bandwidth_hz * opts.occupied_fraction;
    const double df = sample_rate_hz / static_cast<double>(n);

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<cplx> spectrum(n, cplx{0.0, 0.0});
    std::size_t used = 0;
    for (std::size_t k = 0; k < n; ++k) {
        const double f = (k < (n + 1) / 2) ? static_cast<double>(k) * df
                                           : (static_cast<double>(k) - static_cast<double>(n)) * df;
        if (std::abs(f) < half_occupied) {
            const double re = gauss(rng);
            const double im = gauss(rng);
            spectrum[k] = {re, im};
            ++used;
        }
    }
    if (used == 0) throw std::invalid_argument("generate_multicarrier: bandwidth narrower than one DFT bin");

    std::vector<cplx> time(n);
    Eigen::FFT<double> fft;
    fft.inv(time, spectrum);

    ComplexSignal out(std::move(time), sample_rate_hz);
    const double scale = opts.target_rms / out.rms();
    out *= scale;
    return out;
}

/// Causal convolution, output truncated to the input length.
inline ComplexSignal fir_apply(const ComplexSignal& x, const FirFilter& f) {
    ComplexSignal y;
    y.sample_rate_hz = x.sample_rate_hz;
    y.samples.assign(x.size(), cplx{0.0, 0.0});
    const std::size_t taps = f.taps.size();
    for (std::size_t n = 0; n < x.size(); ++n) {
        cplx acc{0.0, 0.0};
        const std::size_t kmax = std::min(taps, n + 1);
        for (std::size_t k = 0; k < kmax; ++k) acc += f.taps[k] * x.samples[n - k];
        y.samples[n] = acc;
    }
    return y;
}

/// Real-valued variant used by the per-branch transmitter chains.
inline std::vector<double> fir_apply(std::span<const double> x, const FirFilter& f) {
    std::vector<double> y(x.size(), 0.0);
    const std::size_t taps = f.taps.size();
    for (std::size_t n = 0; n < x.size(); ++n) {
        double acc = 0.0;
        const std::size_t kmax = std::min(taps, n + 1);
        for (std::size_t k = 0; k < kmax; ++k) acc += f.taps[k] * x[n - k];
        y[n] = acc;
    }
    return y;
}

struct NmseOptions {
    bool align_gain = true;
    double floor_db = kDbFloor;
};

/// Complex LS scalar g minimising sum |g*y - u|^2.
inline cplx ls_gain(std::span<const cplx> y, std::span<const cplx> u) {
    cplx num{0.0, 0.0};
    double den = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        num += std::conj(y[i]) * u[i];
        den += std::norm(y[i]);
    }
    return den > 0.0 ? num / den : cplx{0.0, 0.0};
}

/// 10 log10(sum |y - u|^2 / sum |u|^2), with y optionally gain-aligned to u.
inline double nmse_db(const ComplexSignal& y, const ComplexSignal& u, const NmseOptions& opts = {}) {
    if (y.size() != u.size()) throw std::invalid_argument("nmse_db: length mismatch");
    if (u.empty()) throw std::invalid_argument("nmse_db: empty signals");
    const cplx g = opts.align_gain ? ls_gain(y.samples, u.samples) : cplx{1.0, 0.0};
    double err = 0.0;
    double ref = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        err += std::norm(g * y.samples[i] - u.samples[i]);
        ref += std::norm(u.samples[i]);
    }
    if (!(ref > 0.0)) throw std::invalid_argument("nmse_db: reference has zero power");
    return clamp_db(err / ref, opts.floor_db);
}

inline std::vector<double> make_window(Window w, std::size_t n) {
    std::vector<double> out(n, 1.0);
    if (w == Window::hann) {
        // periodic Hann, the usual choice for overlapped Welch segments
        for (std::size_t i = 0; i < n; ++i)
            out[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n));
    }
    return out;
}

/// Two-sided power spectral density in natural DFT order.
struct Psd {
    std::vector<double> density;  // power per Hz
    double sample_rate_hz = 1.0;

    [[nodiscard]] double bin_hz() const { return sample_rate_hz / static_cast<double>(density.size()); }

    [[nodiscard]] double frequency(std::size_t k) const {
        const auto n = density.size();
        const double kk = (k < n / 2) ? static_cast<double>(k) : static_cast<double>(k) - static_cast<double>(n);
        return kk * bin_hz();
    }

    /// Power integrated over bins whose centre lies in [lo, hi).
    [[nodiscard]] double band_power(double lo, double hi) const {
        double acc = 0.0;
        for (std::size_t k = 0; k < density.size(); ++k) {
            const double f = frequency(k);
            if (f >= lo && f < hi) acc += density[k];
        }
        return acc * bin_hz();
    }
};

/// Welch-averaged periodogram. Signals shorter than one segment are zero-padded.
inline Psd welch_psd(const ComplexSignal& y, const SpectrumConfig& cfg = {}) {
    cfg.validate();
    if (y.empty()) throw std::invalid_argument("welch_psd: empty signal");
    const std::size_t nfft = cfg.fft_size;
    const auto win = make_window(cfg.window, nfft);
    double win_power = 0.0;
    for (double w : win) win_power += w * w;

    const auto hop = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(
                                                  static_cast<double>(nfft) * (1.0 - cfg.segment_overlap))));
    Psd psd;
    psd.sample_rate_hz = y.sample_rate_hz;
    psd.density.assign(nfft, 0.0);

    Eigen::FFT<double> fft;
    std::vector<cplx> seg(nfft);
    std::vector<cplx> spec(nfft);
    std::size_t segments = 0;
    for (std::size_t start = 0; segments == 0 || start + nfft <= y.size(); start += hop) {
        for (std::size_t i = 0; i < nfft; ++i) {
            const std::size_t idx = start + i;
            seg[i] = idx < y.size() ? y.samples[idx] * win[i] : cplx{0.0, 0.0};
        }
        fft.fwd(spec, seg);
        for (std::size_t k = 0; k < nfft; ++k) psd.density[k] += std::norm(spec[k]);
        ++segments;
        if (start + nfft >= y.size()) break;
    }
    const double norm = 1.0 / (static_cast<double>(segments) * y.sample_rate_hz * win_power);
    for (auto& d : psd.density) d *= norm;
    return psd;
}

struct AcprBands {
    double main = 0.0;
    double lower = 0.0;
    double upper = 0.0;
};

inline AcprBands channel_powers(const ComplexSignal& y, double channel_bw_hz, const SpectrumConfig& cfg = {}) {
    if (!(channel_bw_hz > 0.0)) throw std::invalid_argument("acpr: channel bandwidth must be positive");
    if (3.0 * channel_bw_hz >= y.sample_rate_hz)
        throw std::invalid_argument("acpr: main and adjacent channels exceed the Nyquist span");
    const Psd psd = welch_psd(y, cfg);
    const double h = 0.5 * channel_bw_hz;
    return {psd.band_power(-h, h), psd.band_power(-3.0 * h, -h), psd.band_power(h, 3.0 * h)};
}

/// Worse of the two adjacent channels relative to the main channel, in dBc.
inline double acpr_dbc(const ComplexSignal& y, double channel_bw_hz, const SpectrumConfig& cfg = {},
                       double floor_db = kDbFloor) {
    const auto p = channel_powers(y, channel_bw_hz, cfg);
    if (!(p.main > 0.0)) throw std::invalid_argument("acpr: no power in the main channel");
    return clamp_db(std::max(p.lower, p.upper) / p.main, floor_db);
}

}  // namespace dpdlab
