// dpdlab command line: simulate, identify, evaluate, sweep, flops.
// Exit codes: 0 ok, 2 bad arguments or configuration, 3 numerical failure.

#include <dpdlab/dpdlab.hpp>
#include <dpdlab/signal_io.hpp>

#include <CLI11.hpp>

#include <fstream>
#include <iostream>

namespace {

using namespace dpdlab;
namespace fs = std::filesystem;

constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;

ExperimentConfig load_or_default(const std::string& path) {
    return path.empty() ? ExperimentConfig{} : load_experiment(path);
}

std::vector<int> parse_dims(const std::string& s) {
    std::vector<int> out;
    std::istringstream is(s);
    std::string tok;
    while (std::getline(is, tok, ',')) {
        try {
            std::size_t used = 0;
            out.push_back(std::stoi(tok, &used));
            if (used != tok.size()) throw std::invalid_argument(tok);
        } catch (const std::exception&) {
            throw ConfigError("--dims: '" + tok + "' is not an integer");
        }
    }
    if (out.size() < 2) throw ConfigError("--dims needs at least an input and an output size");
    for (int d : out)
        if (d <= 0) throw ConfigError("--dims: layer sizes must be positive");
    if (out.front() % 2 != 0) throw ConfigError("--dims: input size must be 2(M+1)");
    if (out.back() != 2) throw ConfigError("--dims: output size must be 2");
    return out;
}

// Shape fields are taken from the checkpoint so that reports describe the
// model that was actually loaded.
Model load_model(const fs::path& path, ExperimentConfig& cfg) {
    const auto j = config::read_json_file(path);
    if (config::get_or<std::string>(j, "format", "") == config::kPhFormat) {
        auto m = config::ph_from_json(j);
        cfg.shape.kind = ModelKind::ph;
        cfg.shape.ph = m.shape;
        cfg.prune.reset();
        return m;
    }
    auto net = config::network_from_json(j);
    cfg.shape.kind = net.shortcut_enabled ? ModelKind::arden : ModelKind::rvtdnn;
    cfg.shape.memory = net.spec.memory;
    cfg.shape.hidden.assign(net.spec.dims.begin() + 1, net.spec.dims.end() - 1);
    cfg.shape.activation = net.activation;
    return net;
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream os(path);
    if (!os) throw ConfigError("cannot open " + path.string() + " for writing");
    os << text;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"dpdlab: transmitter simulation and DPD identification"};
    app.require_subcommand(1);

    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "experiment config (JSON)")->check(CLI::ExistingFile);
        sub->add_option("--seed", seed, "seed override");
        sub->add_option("--out", out, "output path");
    };

    auto* simulate = app.add_subcommand("simulate", "transmit a test signal and write the output as CSIG");
    add_common(simulate);
    std::string checkpoint;
    bool write_input = false;
    simulate->add_option("--checkpoint", checkpoint, "predistort with this model first")->check(CLI::ExistingFile);
    simulate->add_flag("--input", write_input, "write the (predistorted) transmitter input instead of its output");

    auto* identify = app.add_subcommand("identify", "run ILA and save the model checkpoint and training history");
    add_common(identify);

    auto* evaluate = app.add_subcommand("evaluate", "print one metrics row; without --checkpoint the no-DPD row");
    add_common(evaluate);
    evaluate->add_option("--checkpoint", checkpoint, "model checkpoint")->check(CLI::ExistingFile);
    bool lower_bound = false;
    evaluate->add_flag("--lower-bound", lower_bound, "also print the noise-floor row");

    auto* sweep_cmd = app.add_subcommand("sweep", "run the shapes x etas x seeds table from a manifest");
    add_common(sweep_cmd);

    auto* flops_cmd = app.add_subcommand("flops", "print the inference cost of a shape");
    std::string model_kind = "arden";
    std::string dims_arg;
    double eta = 0.0;
    std::vector<int> ph_pql;
    flops_cmd->add_option("--model", model_kind, "arden | rvtdnn | ph")->check(CLI::IsMember({"arden", "rvtdnn", "ph"}));
    flops_cmd->add_option("--dims", dims_arg, "layer sizes, e.g. 8,8,8,8,2");
    flops_cmd->add_option("--eta", eta, "target sparsity")->check(CLI::Range(0.0, 0.999999));
    flops_cmd->add_option("--ph", ph_pql, "P Q L for the PH model")->expected(3);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        std::cerr << app.help();
        return kExitConfig;
    }

    try {
        if (*flops_cmd) {
            if (model_kind == "ph") {
                if (ph_pql.size() != 3) throw ConfigError("flops --model ph needs --ph P Q L");
                std::cout << volterra::ph_flops(volterra::PhShape::uniform(ph_pql[0], ph_pql[1], ph_pql[2])) << '\n';
            } else {
                if (dims_arg.empty()) throw ConfigError("flops needs --dims");
                std::cout << annet::flops(parse_dims(dims_arg), eta, model_kind == "arden") << '\n';
            }
            return 0;
        }

        ExperimentConfig cfg = load_or_default(config_path);

        if (*simulate) {
            if (seed) cfg.signal.seed = *seed;
            if (out.empty()) throw ConfigError("simulate needs --out");
            ComplexSignal x = cfg.signal.generate(cfg.signal.seed);
            if (!checkpoint.empty()) x = apply_model(load_model(checkpoint, cfg), x);
            const ComplexSignal y = write_input ? x : txsim::transmit(x, cfg.transmitter);
            io::save_csig(out, y);
            std::cerr << "wrote " << y.size() << " samples to " << out << '\n';
            return 0;
        }

        if (*identify) {
            if (seed) cfg.train.seed = *seed;
            const fs::path dir = out.empty() ? fs::path(cfg.output_dir) : fs::path(out);
            const auto ila = ila_identify(cfg);
            const auto json = std::visit([](const auto& m) { return config::to_json(m); }, ila.model);
            config::write_json_file(dir / "model.json", json);
            if (!ila.history.empty()) write_text(dir / "history.csv", history_to_csv(ila.history));
            const auto report = evaluate_dpd(ila.model, cfg);
            std::cout << kSweepCsvHeader << '\n' << csv_row(report) << '\n';
            return 0;
        }

        if (*evaluate) {
            if (seed) cfg.train.seed = *seed;
            std::vector<MetricsReport> rows;
            if (checkpoint.empty()) {
                rows.push_back(evaluate_no_dpd(cfg));
            } else {
                const Model m = load_model(checkpoint, cfg);
                rows.push_back(evaluate_dpd(m, cfg));
            }
            if (lower_bound) rows.push_back(noise_floor_report(cfg));
            const auto csv = to_csv(rows);
            if (out.empty()) std::cout << csv;
            else write_text(out, csv);
            return 0;
        }

        if (*sweep_cmd) {
            if (config_path.empty()) throw ConfigError("sweep needs --config with a \"sweep\" section");
            auto spec = sweep_from_json(config::read_json_file(config_path));
            if (seed) spec.seeds = {*seed};
            const auto rows = sweep(cfg, spec, [](const MetricsReport& r) { std::cerr << csv_row(r) << '\n'; });
            const auto csv = to_csv(rows);
            if (out.empty()) std::cout << csv;
            else write_text(out, csv);
            return 0;
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << '\n';
        return kExitNumerical;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
