#pragma once

// Experiment orchestration: ILA identification, DPD evaluation and
// FLOP-indexed sweeps over model shapes.

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <tuple>
#include <variant>
#include <vector>

#include "annet.hpp"
#include "config_io.hpp"
#include "error.hpp"
#include "signals.hpp"
#include "train.hpp"
#include "txsim.hpp"
#include "volterra.hpp"

namespace dpdlab {

enum class ModelKind { arden, rvtdnn, ph };

inline std::string to_string(ModelKind k) {
    switch (k) {
        case ModelKind::arden: return "arden";
        case ModelKind::rvtdnn: return "rvtdnn";
        case ModelKind::ph: return "ph";
    }
    return "?";
}

inline ModelKind model_kind_from_string(const std::string& s) {
    if (s == "arden") return ModelKind::arden;
    if (s == "rvtdnn") return ModelKind::rvtdnn;
    if (s == "ph") return ModelKind::ph;
    throw ConfigError("unknown model kind '" + s + "'");
}

struct ModelShape {
    ModelKind kind = ModelKind::arden;
    int memory = 3;
    std::vector<int> hidden{8, 8, 8};
    annet::Activation activation = annet::Activation::relu;
    volterra::PhShape ph = volterra::PhShape::uniform(7, 3, 2);

    [[nodiscard]] std::vector<int> dims() const {
        std::vector<int> d{2 * (memory + 1)};
        d.insert(d.end(), hidden.begin(), hidden.end());
        d.push_back(2);
        return d;
    }

    /// "8-8-8-8-2" for networks, "P7Q3L2" for PH.
    [[nodiscard]] std::string descriptor() const {
        if (kind == ModelKind::ph) return ph.descriptor();
        std::ostringstream os;
        const auto d = dims();
        for (std::size_t i = 0; i < d.size(); ++i) os << (i ? "-" : "") << d[i];
        return os.str();
    }

    [[nodiscard]] long long flops(double eta_d) const {
        if (kind == ModelKind::ph) return volterra::ph_flops(ph);
        return annet::flops(dims(), eta_d, kind == ModelKind::arden);
    }
};

struct SignalParams {
    long long num_samples = 100000;
    double bandwidth_hz = 10e6;
    double sample_rate_hz = 200e6;
    std::uint64_t seed = 1;
    std::uint64_t eval_seed = 1001;
    double rms = txsim::kReferenceRms;
    double occupied_fraction = 0.9;

    [[nodiscard]] ComplexSignal generate(std::uint64_t s) const {
        return generate_multicarrier(num_samples, bandwidth_hz, sample_rate_hz, s, MulticarrierOptions{rms, occupied_fraction});
    }
};

struct MetricsParams {
    SpectrumConfig spectrum{};
    double channel_bw_hz = 10e6;
};

struct ExperimentConfig {
    txsim::TransmitterConfig transmitter = txsim::reference_transmitter();
    ModelShape shape{};
    train::TrainConfig train{};
    std::optional<train::PruneSchedule> prune{};
    int ila_iterations = 2;
    SignalParams signal{};
    MetricsParams metrics{};
    std::string output_dir = "out";
    double probe_scale = 0.05;
    std::size_t ph_transient_skip = 16;

    [[nodiscard]] double eta_d() const { return prune ? prune->eta_d : 0.0; }

    void validate() const {
        transmitter.validate();
        train.validate();
        if (prune) {
            prune->validate();
            if (prune->total_steps != train.total_steps)
                throw ConfigError("prune.total_steps must equal train.total_steps");
            if (shape.kind == ModelKind::ph) throw ConfigError("pruning applies to network models only");
        }
        if (ila_iterations < 1) throw ConfigError("ila_iterations must be >= 1");
        if (shape.kind == ModelKind::ph) shape.ph.validate();
        else annet::LayerSpec{shape.dims(), shape.memory}.validate();
        if (!(probe_scale > 0.0 && probe_scale <= 1.0)) throw ConfigError("probe_scale must be in (0, 1]");
    }
};

using Model = std::variant<annet::ArdenNetwork, volterra::PhModel>;

inline ComplexSignal apply_model(const Model& m, const ComplexSignal& u) {
    return std::visit(
        [&](const auto& mm) -> ComplexSignal {
            if constexpr (std::is_same_v<std::decay_t<decltype(mm)>, annet::ArdenNetwork>) return annet::predistort(mm, u);
            else return volterra::ph_predict(u, mm);
        },
        m);
}

inline long long model_flops(const Model& m, double eta_d) {
    if (const auto* net = std::get_if<annet::ArdenNetwork>(&m)) return annet::flops(*net, eta_d);
    return volterra::ph_flops(std::get<volterra::PhModel>(m).shape);
}

/// Complex small-signal gain of the transmitter from a scaled-down copy of
/// the drive signal: G = <x, y> / <x, x>.
inline cplx estimate_gain(const txsim::TransmitterConfig& tx, const ComplexSignal& u, double probe_scale,
                          std::uint64_t noise_seed) {
    const ComplexSignal probe = cplx{probe_scale, 0.0} * u;
    const ComplexSignal y = txsim::transmit(probe, tx, noise_seed);
    cplx num{0.0, 0.0};
    double den = 0.0;
    for (std::size_t i = 0; i < probe.size(); ++i) {
        num += std::conj(probe.samples[i]) * y.samples[i];
        den += std::norm(probe.samples[i]);
    }
    if (!(den > 0.0) || std::abs(num) == 0.0) throw NumericalError("gain probe: transmitter output has no linear component");
    return num / den;
}

struct IlaResult {
    Model model;
    cplx gain{1.0, 0.0};
    std::vector<train::HistoryRow> history;
};

namespace detail {

inline std::uint64_t mix_seed(std::uint64_t base, std::uint64_t salt) {
    std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (salt + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline train::Dataset make_dataset(const ComplexSignal& input, const ComplexSignal& target, int memory) {
    train::Dataset d;
    d.inputs = annet::window_signal(input, memory);
    d.targets.resize(2, d.inputs.cols());
    const auto m = static_cast<std::size_t>(memory);
    for (Eigen::Index c = 0; c < d.inputs.cols(); ++c) {
        const auto& v = target.samples[static_cast<std::size_t>(c) + m];
        d.targets(0, c) = v.real();
        d.targets(1, c) = v.imag();
    }
    return d;
}

}  // namespace detail

/// Indirect learning: each iteration transmits the current predistorted
/// signal, normalises the output by the probe gain, and fits a
/// post-distorter from y/G back to x. The post-distorter is then copied in
/// front of the transmitter. Iteration 1 runs with x = u. The prune
/// schedule, if any, runs during the first iteration; later iterations
/// retrain the surviving weights.
inline IlaResult ila_identify(const ExperimentConfig& cfg) {
    cfg.validate();
    const auto& tx = cfg.transmitter;
    const ComplexSignal u = cfg.signal.generate(cfg.signal.seed);

    IlaResult result;
    result.gain = estimate_gain(tx, u, cfg.probe_scale, detail::mix_seed(tx.seed, 100));
    const cplx inv_gain = 1.0 / result.gain;

    std::optional<Model> model;
    if (cfg.shape.kind != ModelKind::ph) {
        model = annet::build_network(cfg.shape.memory, cfg.shape.hidden, cfg.shape.activation,
                                     cfg.shape.kind == ModelKind::arden, cfg.train.seed);
    }

    for (int it = 0; it < cfg.ila_iterations; ++it) {
        const ComplexSignal x = (it == 0 || !model) ? u : apply_model(*model, u);
        for (const auto& v : x.samples)
            if (!std::isfinite(v.real()) || !std::isfinite(v.imag()))
                throw NumericalError("ILA iteration " + std::to_string(it + 1) + ": predistorter produced non-finite output");
        const ComplexSignal y = inv_gain * txsim::transmit(x, tx, detail::mix_seed(tx.seed, 200 + static_cast<std::uint64_t>(it)));

        if (cfg.shape.kind == ModelKind::ph) {
            model = volterra::ph_identify(y, x, cfg.shape.ph, cfg.ph_transient_skip);
            continue;
        }
        auto& net = std::get<annet::ArdenNetwork>(*model);
        const train::Dataset data = detail::make_dataset(y, x, cfg.shape.memory);
        train::TrainConfig tc = cfg.train;
        tc.seed = detail::mix_seed(cfg.train.seed, 300 + static_cast<std::uint64_t>(it));
        const auto sched = (it == 0) ? cfg.prune : std::nullopt;
        auto res = train::train_with_pruning(net, data, tc, sched);
        for (auto& row : res.history) {
            row.step += static_cast<long long>(it) * cfg.train.total_steps;
            result.history.push_back(row);
        }
        if (!std::isfinite(res.final_loss))
            throw NumericalError("ILA iteration " + std::to_string(it + 1) + ": training loss is not finite");
    }
    result.model = std::move(*model);
    return result;
}

struct MetricsReport {
    std::string model = "none";
    std::string shape = "-";
    double eta_d = 0.0;
    std::uint64_t seed = 0;
    long long flops = 0;
    double nmse_db = 0.0;
    double acpr_dbc = 0.0;
    int ila_iters = 0;
};

/// Fresh evaluation record (eval_seed), optional predistortion, transmit,
/// then gain-aligned NMSE against u and ACPR of the transmitter output.
inline MetricsReport evaluate_dpd(const Model* model, const ExperimentConfig& cfg) {
    const ComplexSignal u = cfg.signal.generate(cfg.signal.eval_seed);
    const ComplexSignal x = model ? apply_model(*model, u) : u;
    const ComplexSignal y = txsim::transmit(x, cfg.transmitter, detail::mix_seed(cfg.transmitter.seed, 900));
    MetricsReport r;
    if (model) {
        r.model = to_string(cfg.shape.kind);
        r.shape = cfg.shape.descriptor();
        r.eta_d = cfg.eta_d();
        r.flops = model_flops(*model, cfg.eta_d());
        r.ila_iters = cfg.ila_iterations;
    }
    r.seed = cfg.train.seed;
    r.nmse_db = nmse_db(y, u);
    r.acpr_dbc = acpr_dbc(y, cfg.metrics.channel_bw_hz, cfg.metrics.spectrum);
    return r;
}

inline MetricsReport evaluate_dpd(const Model& model, const ExperimentConfig& cfg) { return evaluate_dpd(&model, cfg); }

inline MetricsReport evaluate_no_dpd(const ExperimentConfig& cfg) { return evaluate_dpd(nullptr, cfg); }

/// Reference row: the error left if only the PA measurement noise remained.
inline MetricsReport noise_floor_report(const ExperimentConfig& cfg) {
    const ComplexSignal u = cfg.signal.generate(cfg.signal.eval_seed);
    const cplx g = estimate_gain(cfg.transmitter, u, cfg.probe_scale, detail::mix_seed(cfg.transmitter.seed, 100));
    const double signal_power = std::norm(g) * u.mean_power();
    const double noise = cfg.transmitter.pa.noise_variance;
    MetricsReport r;
    r.model = "lower_bound";
    r.shape = "noise";
    r.nmse_db = clamp_db(noise / signal_power);
    const double adjacent_noise = noise * cfg.metrics.channel_bw_hz / cfg.signal.sample_rate_hz;
    r.acpr_dbc = clamp_db(adjacent_noise / signal_power);
    return r;
}

inline constexpr const char* kSweepCsvHeader = "model,shape,eta_d,seed,flops,nmse_db,acpr_dbc,ila_iters";

inline std::string csv_row(const MetricsReport& r) {
    std::ostringstream os;
    os << r.model << ',' << r.shape << ',' << std::setprecision(6) << r.eta_d << ',' << r.seed << ',' << r.flops << ','
       << std::fixed << std::setprecision(4) << r.nmse_db << ',' << r.acpr_dbc << ',' << r.ila_iters;
    return os.str();
}

inline std::string to_csv(const std::vector<MetricsReport>& rows) {
    std::string out = std::string(kSweepCsvHeader) + "\n";
    for (const auto& r : rows) out += csv_row(r) + "\n";
    return out;
}

/// Recomputes a row's FLOP count from its model and shape columns.
inline long long flops_from_columns(const std::string& model, const std::string& shape, double eta_d) {
    if (model == "lower_bound" || model == "none") return 0;
    if (model == "ph") {
        int P = 0, Q = 0, L = 0;
        if (std::sscanf(shape.c_str(), "P%dQ%dL%d", &P, &Q, &L) != 3) throw ConfigError("bad PH shape '" + shape + "'");
        return volterra::ph_flops(volterra::PhShape::uniform(P, Q, L));
    }
    std::vector<int> dims;
    std::istringstream is(shape);
    std::string tok;
    while (std::getline(is, tok, '-')) dims.push_back(std::stoi(tok));
    return annet::flops(dims, eta_d, model == "arden");
}

struct SweepSpec {
    std::vector<ModelShape> shapes;
    std::vector<double> etas{0.0};
    std::vector<std::uint64_t> seeds{0};
    bool include_lower_bound = true;
};

inline unsigned sweep_threads() {
    unsigned n = std::max(1u, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("DPDLAB_THREADS")) {
        const long v = std::strtol(env, nullptr, 10);
        if (v >= 1) n = std::min<unsigned>(n, static_cast<unsigned>(v));
    }
    return n;
}

struct SweepJob {
    ExperimentConfig cfg;
};

/// One row per (shape, eta, seed); PH shapes ignore eta and appear once per
/// seed. Jobs run on up to DPDLAB_THREADS workers; rows are returned sorted
/// by (flops, model, shape, eta, seed), followed by the noise-floor row.
inline std::vector<MetricsReport> sweep(const ExperimentConfig& tmpl, const SweepSpec& spec,
                                        const std::function<void(const MetricsReport&)>& on_row = {}) {
    std::vector<SweepJob> jobs;
    for (const auto& shape : spec.shapes) {
        const std::vector<double> etas = shape.kind == ModelKind::ph ? std::vector<double>{0.0} : spec.etas;
        for (double eta : etas)
            for (auto seed : spec.seeds) {
                ExperimentConfig c = tmpl;
                c.shape = shape;
                c.train.seed = seed;
                if (eta > 0.0) {
                    train::PruneSchedule s;
                    s.eta_d = eta;
                    s.total_steps = c.train.total_steps;
                    s.delta_n = tmpl.prune ? tmpl.prune->delta_n : std::max<long long>(1, c.train.total_steps / 100);
                    c.prune = s;
                } else {
                    c.prune.reset();
                }
                jobs.push_back({std::move(c)});
            }
    }

    std::vector<MetricsReport> rows(jobs.size());
    std::vector<std::exception_ptr> errors(jobs.size());
    std::atomic<std::size_t> next{0};
    std::mutex cb_mutex;
    auto worker = [&] {
        for (std::size_t i = next++; i < jobs.size(); i = next++) {
            try {
                const auto ila = ila_identify(jobs[i].cfg);
                rows[i] = evaluate_dpd(ila.model, jobs[i].cfg);
                if (on_row) {
                    std::lock_guard lock(cb_mutex);
                    on_row(rows[i]);
                }
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    const unsigned threads = std::min<unsigned>(sweep_threads(), static_cast<unsigned>(std::max<std::size_t>(1, jobs.size())));
    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    for (const auto& e : errors)
        if (e) std::rethrow_exception(e);

    std::stable_sort(rows.begin(), rows.end(), [](const MetricsReport& a, const MetricsReport& b) {
        return std::tie(a.flops, a.model, a.shape, a.eta_d, a.seed) < std::tie(b.flops, b.model, b.shape, b.eta_d, b.seed);
    });
    if (spec.include_lower_bound && !spec.shapes.empty()) rows.push_back(noise_floor_report(tmpl));
    return rows;
}

// ---- experiment config files ------------------------------------------------

inline ModelShape shape_from_json(const config::json& j) {
    ModelShape s;
    s.kind = model_kind_from_string(config::get_or<std::string>(j, "kind", "arden"));
    s.memory = config::get_or(j, "memory", s.memory);
    if (j.contains("hidden")) s.hidden = j.at("hidden").get<std::vector<int>>();
    if (j.contains("activation")) s.activation = annet::activation_from_string(j.at("activation").get<std::string>());
    if (s.kind == ModelKind::ph)
        s.ph = volterra::PhShape::uniform(config::get_or(j, "P", 7), config::get_or(j, "Q", 3), config::get_or(j, "L", 2));
    return s;
}

/// Relative "transmitter" paths resolve against `base_dir`.
inline ExperimentConfig experiment_from_json(const config::json& j, const std::filesystem::path& base_dir = {}) {
    try {
        ExperimentConfig c;
        if (j.contains("transmitter")) {
            const auto& t = j.at("transmitter");
            if (t.is_string()) {
                std::filesystem::path p = t.get<std::string>();
                if (p.is_relative()) p = base_dir / p;
                c.transmitter = config::load_transmitter(p);
            } else {
                c.transmitter = config::transmitter_from_json(t);
            }
        }
        if (j.contains("model")) c.shape = shape_from_json(j.at("model"));
        if (j.contains("train")) {
            const auto& t = j.at("train");
            c.train.batch_size = config::get_or(t, "batch_size", c.train.batch_size);
            c.train.learning_rate = config::get_or(t, "learning_rate", c.train.learning_rate);
            c.train.adam_beta1 = config::get_or(t, "adam_beta1", c.train.adam_beta1);
            c.train.adam_beta2 = config::get_or(t, "adam_beta2", c.train.adam_beta2);
            c.train.adam_eps = config::get_or(t, "adam_eps", c.train.adam_eps);
            c.train.total_steps = config::get_or(t, "total_steps", c.train.total_steps);
            c.train.seed = config::get_or<std::uint64_t>(t, "seed", c.train.seed);
            c.train.prune_output_layer = config::get_or(t, "prune_output_layer", c.train.prune_output_layer);
        }
        if (j.contains("prune") && !j.at("prune").is_null()) {
            const auto& p = j.at("prune");
            train::PruneSchedule s;
            s.eta_d = p.at("eta_d").get<double>();
            s.delta_n = config::get_or(p, "delta_n", s.delta_n);
            s.total_steps = c.train.total_steps;
            c.prune = s;
        }
        c.ila_iterations = config::get_or(j, "ila_iterations", c.ila_iterations);
        if (j.contains("signal")) {
            const auto& s = j.at("signal");
            c.signal.num_samples = config::get_or(s, "num_samples", c.signal.num_samples);
            c.signal.bandwidth_hz = config::get_or(s, "bandwidth_hz", c.signal.bandwidth_hz);
            c.signal.sample_rate_hz = config::get_or(s, "sample_rate_hz", c.signal.sample_rate_hz);
            c.signal.seed = config::get_or<std::uint64_t>(s, "seed", c.signal.seed);
            c.signal.eval_seed = config::get_or<std::uint64_t>(s, "eval_seed", c.signal.eval_seed);
            c.signal.rms = config::get_or(s, "rms", c.signal.rms);
            c.signal.occupied_fraction = config::get_or(s, "occupied_fraction", c.signal.occupied_fraction);
        }
        if (j.contains("metrics")) {
            const auto& m = j.at("metrics");
            c.metrics.channel_bw_hz = config::get_or(m, "channel_bw_hz", c.metrics.channel_bw_hz);
            c.metrics.spectrum.fft_size = config::get_or<std::size_t>(m, "fft_size", c.metrics.spectrum.fft_size);
            c.metrics.spectrum.segment_overlap = config::get_or(m, "segment_overlap", c.metrics.spectrum.segment_overlap);
            const auto w = config::get_or<std::string>(m, "window", "hann");
            if (w != "hann" && w != "rectangular") throw ConfigError("metrics.window must be hann or rectangular");
            c.metrics.spectrum.window = w == "hann" ? Window::hann : Window::rectangular;
            c.metrics.spectrum.validate();
        }
        c.output_dir = config::get_or<std::string>(j, "output_dir", c.output_dir);
        c.probe_scale = config::get_or(j, "probe_scale", c.probe_scale);
        c.validate();
        return c;
    } catch (const config::json::exception& e) {
        throw ConfigError(std::string("experiment config: ") + e.what());
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("experiment config: ") + e.what());
    }
}

inline ExperimentConfig load_experiment(const std::filesystem::path& path) {
    return experiment_from_json(config::read_json_file(path), path.parent_path());
}

inline SweepSpec sweep_from_json(const config::json& j) {
    try {
        SweepSpec s;
        if (!j.contains("sweep")) return s;
        const auto& sw = j.at("sweep");
        for (const auto& e : sw.at("shapes")) {
            ModelShape shape = j.contains("model") ? shape_from_json(j.at("model")) : ModelShape{};
            const ModelShape over = shape_from_json(e);
            // entries override the template model field by field
            if (e.contains("kind")) shape.kind = over.kind;
            if (e.contains("memory")) shape.memory = over.memory;
            if (e.contains("hidden")) shape.hidden = over.hidden;
            if (e.contains("activation")) shape.activation = over.activation;
            if (shape.kind == ModelKind::ph) shape.ph = over.ph;
            s.shapes.push_back(shape);
        }
        if (sw.contains("etas")) s.etas = sw.at("etas").get<std::vector<double>>();
        if (sw.contains("seeds")) s.seeds = sw.at("seeds").get<std::vector<std::uint64_t>>();
        s.include_lower_bound = config::get_or(sw, "include_lower_bound", true);
        for (double eta : s.etas)
            if (!(eta >= 0.0 && eta < 1.0)) throw ConfigError("sweep.etas must lie in [0, 1)");
        return s;
    } catch (const config::json::exception& e) {
        throw ConfigError(std::string("sweep spec: ") + e.what());
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("sweep spec: ") + e.what());
    }
}

inline std::string history_to_csv(const std::vector<train::HistoryRow>& rows) {
    std::ostringstream os;
    os << "step,loss,eta_current,flops_current\n";
    os << std::setprecision(10);
    for (const auto& r : rows) os << r.step << ',' << r.loss << ',' << r.eta_current << ',' << r.flops_current << '\n';
    return os.str();
}

}  // namespace dpdlab
