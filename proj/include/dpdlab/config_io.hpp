#pragma once

// JSON readers/writers for transmitter configs, network checkpoints and PH
// models. Every document carries a "format" tag with a version suffix.

#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "annet.hpp"
#include "error.hpp"
#include "txsim.hpp"
#include "volterra.hpp"

namespace dpdlab::config {

using json = nlohmann::json;

inline constexpr const char* kTransmitterFormat = "dpdlab.transmitter/1";
inline constexpr const char* kArdenFormat = "dpdlab.arden/1";
inline constexpr const char* kPhFormat = "dpdlab.ph/1";

inline json read_json_file(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open " + path.string());
    try {
        return json::parse(is, nullptr, true, /*ignore_comments=*/true);
    } catch (const json::exception& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

inline void write_json_file(const std::filesystem::path& path, const json& j) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream os(path);
    if (!os) throw ConfigError("cannot open " + path.string() + " for writing");
    os << j.dump(2) << '\n';
}

inline void check_format(const json& j, const char* expected) {
    if (!j.contains("format")) return;  // untagged documents are accepted as the current version
    const auto tag = j.at("format").get<std::string>();
    if (tag != expected) throw ConfigError("unexpected format tag '" + tag + "', wanted '" + expected + "'");
}

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
    return j.contains(key) ? j.at(key).get<T>() : fallback;
}

// ---- transmitter -----------------------------------------------------------

inline json to_json(const txsim::TransmitterConfig& cfg) {
    json coeffs = json::array();
    for (const auto& t : cfg.pa.terms) coeffs.push_back({t.order, t.delay, t.coeff.real(), t.coeff.imag()});
    json pa{{"coeffs", coeffs}, {"noise_variance", cfg.pa.noise_variance}};
    if (std::isfinite(cfg.pa.saturation_level)) pa["saturation_level"] = cfg.pa.saturation_level;
    return json{
        {"format", kTransmitterFormat},
        {"dac", {{"num_bits", cfg.dac.num_bits}, {"clip_level", cfg.dac.clip_level}, {"enabled", cfg.dac.enabled}}},
        {"iq",
         {{"gain_imbalance_db", cfg.iq.gain_imbalance_db},
          {"phase_deg", cfg.iq.phase_deg},
          {"fir_i", cfg.iq.fir_i.taps},
          {"fir_q", cfg.iq.fir_q.taps},
          {"imbalance_before_dac", cfg.iq.imbalance_before_dac}}},
        {"pa", pa},
        {"seed", cfg.seed},
    };
}

/// Noise may be given in baseband units (pa.noise_variance) or as a
/// physical variance with the voltage mapped to saturation_level
/// (pa.noise_variance_volts2 + pa.full_scale_volts).
inline txsim::TransmitterConfig transmitter_from_json(const json& j) {
    try {
        check_format(j, kTransmitterFormat);
        txsim::TransmitterConfig cfg;
        if (j.contains("dac")) {
            const auto& d = j.at("dac");
            cfg.dac.num_bits = get_or(d, "num_bits", cfg.dac.num_bits);
            cfg.dac.clip_level = get_or(d, "clip_level", cfg.dac.clip_level);
            cfg.dac.enabled = get_or(d, "enabled", cfg.dac.enabled);
        }
        if (j.contains("iq")) {
            const auto& q = j.at("iq");
            cfg.iq.gain_imbalance_db = get_or(q, "gain_imbalance_db", 0.0);
            cfg.iq.phase_deg = get_or(q, "phase_deg", 0.0);
            if (q.contains("fir_i")) cfg.iq.fir_i = FirFilter(q.at("fir_i").get<std::vector<double>>());
            if (q.contains("fir_q")) cfg.iq.fir_q = FirFilter(q.at("fir_q").get<std::vector<double>>());
            cfg.iq.imbalance_before_dac = get_or(q, "imbalance_before_dac", false);
        }
        if (j.contains("pa")) {
            const auto& p = j.at("pa");
            if (p.contains("coeffs")) {
                cfg.pa.terms.clear();
                for (const auto& row : p.at("coeffs")) {
                    if (!row.is_array() || row.size() != 4) throw ConfigError("pa.coeffs rows must be [p, m, re, im]");
                    cfg.pa.terms.push_back({row[0].get<int>(), row[1].get<int>(), {row[2].get<double>(), row[3].get<double>()}});
                }
            }
            cfg.pa.saturation_level = get_or(p, "saturation_level", cfg.pa.saturation_level);
            const bool has_plain = p.contains("noise_variance");
            const bool has_volts = p.contains("noise_variance_volts2") || p.contains("full_scale_volts");
            if (has_volts) {
                const double v2 = p.at("noise_variance_volts2").get<double>();
                const double fs = p.at("full_scale_volts").get<double>();
                const double full = std::isfinite(cfg.pa.saturation_level) ? cfg.pa.saturation_level : 1.0;
                const double derived = v2 * (full * full) / (fs * fs);
                if (has_plain) {
                    const double given = p.at("noise_variance").get<double>();
                    if (std::abs(given - derived) > 1e-9 * std::max(1.0, std::abs(derived)) + 1e-15)
                        throw ConfigError("pa.noise_variance disagrees with noise_variance_volts2 / full_scale_volts");
                }
                cfg.pa.noise_variance = derived;
            } else if (has_plain) {
                cfg.pa.noise_variance = p.at("noise_variance").get<double>();
            }
        }
        cfg.seed = get_or<std::uint64_t>(j, "seed", 0);
        cfg.validate();
        return cfg;
    } catch (const json::exception& e) {
        throw ConfigError(std::string("transmitter config: ") + e.what());
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("transmitter config: ") + e.what());
    }
}

inline txsim::TransmitterConfig load_transmitter(const std::filesystem::path& path) {
    return transmitter_from_json(read_json_file(path));
}

// ---- ARDEN checkpoints -----------------------------------------------------

inline json to_json(const annet::ArdenNetwork& net) {
    json weights = json::array();
    json biases = json::array();
    json masks = json::array();
    for (std::size_t i = 0; i < net.weights.size(); ++i) {
        const auto& W = net.weights[i];
        std::vector<double> flat;
        std::string bits;
        for (Eigen::Index r = 0; r < W.rows(); ++r)
            for (Eigen::Index c = 0; c < W.cols(); ++c) {
                flat.push_back(W(r, c));
                bits.push_back(net.masks[i](r, c) != 0.0 ? '1' : '0');
            }
        weights.push_back(flat);
        biases.push_back(std::vector<double>(net.biases[i].data(), net.biases[i].data() + net.biases[i].size()));
        masks.push_back(bits);
    }
    const auto& A = net.shortcut;
    return json{
        {"format", kArdenFormat},
        {"dims", net.spec.dims},
        {"memory", net.spec.memory},
        {"activation", annet::to_string(net.activation)},
        {"shortcut_enabled", net.shortcut_enabled},
        {"weights", weights},
        {"biases", biases},
        {"masks", masks},
        {"shortcut", {A(0, 0), A(0, 1), A(1, 0), A(1, 1)}},
    };
}

inline annet::ArdenNetwork network_from_json(const json& j) {
    try {
        check_format(j, kArdenFormat);
        annet::ArdenNetwork net;
        net.spec.dims = j.at("dims").get<std::vector<int>>();
        net.spec.memory = j.at("memory").get<int>();
        net.spec.validate();
        net.activation = annet::activation_from_string(j.at("activation").get<std::string>());
        net.shortcut_enabled = j.at("shortcut_enabled").get<bool>();
        const auto layers = net.spec.dims.size() - 1;
        const auto& jw = j.at("weights");
        const auto& jb = j.at("biases");
        const auto& jm = j.at("masks");
        if (jw.size() != layers || jb.size() != layers || jm.size() != layers)
            throw ConfigError("checkpoint: layer count does not match dims");
        for (std::size_t i = 0; i < layers; ++i) {
            const int rows = net.spec.dims[i + 1];
            const int cols = net.spec.dims[i];
            const auto flat = jw[i].get<std::vector<double>>();
            const auto bits = jm[i].get<std::string>();
            const auto bias = jb[i].get<std::vector<double>>();
            const auto count = static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols);
            if (flat.size() != count || bits.size() != count || bias.size() != static_cast<std::size_t>(rows))
                throw ConfigError("checkpoint: layer " + std::to_string(i + 2) + " has the wrong size");
            Eigen::MatrixXd W(rows, cols);
            Eigen::MatrixXd M(rows, cols);
            for (int r = 0; r < rows; ++r)
                for (int c = 0; c < cols; ++c) {
                    const auto k = static_cast<std::size_t>(r) * static_cast<std::size_t>(cols) + static_cast<std::size_t>(c);
                    if (bits[k] != '0' && bits[k] != '1') throw ConfigError("checkpoint: mask must be a bitstring");
                    M(r, c) = bits[k] == '1' ? 1.0 : 0.0;
                    W(r, c) = M(r, c) == 0.0 ? 0.0 : flat[k];
                }
            net.weights.push_back(std::move(W));
            net.masks.push_back(std::move(M));
            net.biases.push_back(Eigen::Map<const Eigen::VectorXd>(bias.data(), rows));
        }
        const auto a = j.at("shortcut").get<std::vector<double>>();
        if (a.size() != 4) throw ConfigError("checkpoint: shortcut must have 4 entries");
        net.shortcut << a[0], a[1], a[2], a[3];
        net.validate();
        return net;
    } catch (const json::exception& e) {
        throw ConfigError(std::string("network checkpoint: ") + e.what());
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("network checkpoint: ") + e.what());
    }
}

// ---- PH models -------------------------------------------------------------

inline json to_json(const volterra::PhModel& m) {
    std::vector<int> lp;
    std::vector<int> lq;
    for (const auto& [o, l] : m.shape.lengths_p) lp.push_back(l);
    for (const auto& [o, l] : m.shape.lengths_q) lq.push_back(l);
    json coeffs = json::array();
    for (Eigen::Index i = 0; i < m.coeffs.size(); ++i) coeffs.push_back({m.coeffs(i).real(), m.coeffs(i).imag()});
    return json{{"format", kPhFormat}, {"P", m.shape.P}, {"Q", m.shape.Q}, {"lengths_p", lp}, {"lengths_q", lq}, {"coeffs", coeffs}};
}

inline volterra::PhModel ph_from_json(const json& j) {
    try {
        check_format(j, kPhFormat);
        volterra::PhModel m;
        m.shape.P = j.at("P").get<int>();
        m.shape.Q = j.at("Q").get<int>();
        const auto lp = j.at("lengths_p").get<std::vector<int>>();
        const auto lq = j.at("lengths_q").get<std::vector<int>>();
        for (std::size_t i = 0; i < lp.size(); ++i) m.shape.lengths_p[static_cast<int>(2 * i + 1)] = lp[i];
        for (std::size_t i = 0; i < lq.size(); ++i) m.shape.lengths_q[static_cast<int>(2 * i + 1)] = lq[i];
        m.shape.validate();
        const auto& jc = j.at("coeffs");
        m.coeffs.resize(static_cast<Eigen::Index>(jc.size()));
        for (std::size_t i = 0; i < jc.size(); ++i) m.coeffs(static_cast<Eigen::Index>(i)) = {jc[i][0].get<double>(), jc[i][1].get<double>()};
        m.validate();
        return m;
    } catch (const json::exception& e) {
        throw ConfigError(std::string("PH model: ") + e.what());
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("PH model: ") + e.what());
    }
}

}  // namespace dpdlab::config
