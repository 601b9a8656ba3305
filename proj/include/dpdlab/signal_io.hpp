#pragma once

// CSIG binary container and a two-column CSV fallback.
//
// CSIG layout (little-endian):
//   char[4]  "CSIG"
//   u32      version (1)
//   f64      sample rate in Hz
//   u64      number of samples
//   f64[2n]  interleaved (re, im)

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "error.hpp"
#include "signals.hpp"

namespace dpdlab::io {

inline constexpr std::array<char, 4> kCsigMagic{'C', 'S', 'I', 'G'};
inline constexpr std::uint32_t kCsigVersion = 1;

namespace detail {

template <typename T>
void put_le(std::ostream& os, T value) {
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
    auto bits = std::bit_cast<U>(value);
    std::array<char, sizeof(U)> buf{};
    for (std::size_t i = 0; i < sizeof(U); ++i) buf[i] = static_cast<char>((bits >> (8 * i)) & 0xffU);
    os.write(buf.data(), buf.size());
}

template <typename T>
T get_le(std::istream& is) {
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
    std::array<unsigned char, sizeof(U)> buf{};
    is.read(reinterpret_cast<char*>(buf.data()), buf.size());
    if (!is) throw ConfigError("CSIG: truncated file");
    U bits = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) bits |= static_cast<U>(buf[i]) << (8 * i);
    return std::bit_cast<T>(bits);
}

}  // namespace detail

inline void write_csig(std::ostream& os, const ComplexSignal& s) {
    os.write(kCsigMagic.data(), kCsigMagic.size());
    detail::put_le<std::uint32_t>(os, kCsigVersion);
    detail::put_le<double>(os, s.sample_rate_hz);
    detail::put_le<std::uint64_t>(os, static_cast<std::uint64_t>(s.size()));
    for (const auto& v : s.samples) {
        detail::put_le<double>(os, v.real());
        detail::put_le<double>(os, v.imag());
    }
}

inline ComplexSignal read_csig(std::istream& is) {
    std::array<char, 4> magic{};
    is.read(magic.data(), magic.size());
    if (!is || magic != kCsigMagic) throw ConfigError("CSIG: bad magic");
    const auto version = detail::get_le<std::uint32_t>(is);
    if (version != kCsigVersion) throw ConfigError("CSIG: unsupported version " + std::to_string(version));
    const auto fs = detail::get_le<double>(is);
    const auto n = detail::get_le<std::uint64_t>(is);
    if (!(fs > 0.0)) throw ConfigError("CSIG: non-positive sample rate");
    std::vector<cplx> samples;
    samples.reserve(static_cast<std::size_t>(std::min<std::uint64_t>(n, 1u << 20)));  // header is untrusted
    for (std::uint64_t i = 0; i < n; ++i) {
        const auto re = detail::get_le<double>(is);
        const auto im = detail::get_le<double>(is);
        samples.emplace_back(re, im);
    }
    return {std::move(samples), fs};
}

inline void save_csig(const std::filesystem::path& path, const ComplexSignal& s) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw ConfigError("cannot open " + path.string() + " for writing");
    write_csig(os, s);
}

inline ComplexSignal load_csig(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ConfigError("cannot open " + path.string());
    return read_csig(is);
}

/// Reads "re,im" rows. A non-numeric first line is treated as a header.
inline ComplexSignal read_csv(std::istream& is, double sample_rate_hz) {
    std::vector<cplx> samples;
    std::string line;
    bool first = true;
    while (std::getline(is, line)) {
        if (line.empty() || line == "\r") continue;
        std::replace(line.begin(), line.end(), ',', ' ');
        std::istringstream row(line);
        double re = 0.0;
        double im = 0.0;
        if (!(row >> re >> im)) {
            if (first) {
                first = false;
                continue;
            }
            throw ConfigError("CSV: malformed row '" + line + "'");
        }
        first = false;
        samples.emplace_back(re, im);
    }
    return {std::move(samples), sample_rate_hz};
}

inline void write_csv(std::ostream& os, const ComplexSignal& s) {
    os << "re,im\n";
    os.precision(17);
    for (const auto& v : s.samples) os << v.real() << ',' << v.imag() << '\n';
}

inline ComplexSignal load_csv(const std::filesystem::path& path, double sample_rate_hz) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open " + path.string());
    return read_csv(is, sample_rate_hz);
}

}  // namespace dpdlab::io
