#include <gtest/gtest.h>

#include <dpdlab/dpdlab.hpp>

#include "checks.hpp"

#include <filesystem>

using namespace dpdlab;
namespace fs = std::filesystem;

namespace {

const fs::path kConfigs = fs::path(DPDLAB_SOURCE_DIR) / "configs";

void expect_same(const txsim::TransmitterConfig& a, const txsim::TransmitterConfig& b) {
    EXPECT_EQ(a.dac.num_bits, b.dac.num_bits);
    EXPECT_EQ(a.dac.clip_level, b.dac.clip_level);
    EXPECT_EQ(a.dac.enabled, b.dac.enabled);
    EXPECT_EQ(a.iq.gain_imbalance_db, b.iq.gain_imbalance_db);
    EXPECT_EQ(a.iq.phase_deg, b.iq.phase_deg);
    EXPECT_EQ(a.iq.fir_i.taps, b.iq.fir_i.taps);
    EXPECT_EQ(a.iq.fir_q.taps, b.iq.fir_q.taps);
    EXPECT_EQ(a.iq.imbalance_before_dac, b.iq.imbalance_before_dac);
    ASSERT_EQ(a.pa.terms.size(), b.pa.terms.size());
    for (std::size_t i = 0; i < a.pa.terms.size(); ++i) {
        EXPECT_EQ(a.pa.terms[i].order, b.pa.terms[i].order);
        EXPECT_EQ(a.pa.terms[i].delay, b.pa.terms[i].delay);
        EXPECT_EQ(a.pa.terms[i].coeff, b.pa.terms[i].coeff);
    }
    EXPECT_EQ(a.pa.saturation_level, b.pa.saturation_level);
    EXPECT_NEAR(a.pa.noise_variance, b.pa.noise_variance, 1e-15 * b.pa.noise_variance);
    EXPECT_EQ(a.seed, b.seed);
}

fs::path scratch_dir(const std::string& name) {
    const auto p = fs::temp_directory_path() / ("dpdlab_test_config_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

}  // namespace

TEST(TransmitterJson, RoundTrip) {
    const auto ref = txsim::reference_transmitter();
    expect_same(config::transmitter_from_json(config::to_json(ref)), ref);
    const auto ideal = txsim::ideal_transmitter({0.5, -0.2});
    expect_same(config::transmitter_from_json(config::to_json(ideal)), ideal);
}

TEST(TransmitterJson, ShippedReferenceFileMatchesCode) {
    expect_same(config::load_transmitter(kConfigs / "reference_transmitter.json"), txsim::reference_transmitter());
}

TEST(TransmitterJson, VoltsFormAndConsistencyCheck) {
    config::json j = config::to_json(txsim::reference_transmitter());
    j["pa"].erase("noise_variance");
    j["pa"]["noise_variance_volts2"] = 0.0032;
    j["pa"]["full_scale_volts"] = 24.1;
    EXPECT_NEAR(config::transmitter_from_json(j).pa.noise_variance, 0.0032 / (24.1 * 24.1), 1e-18);
    j["pa"]["noise_variance"] = 0.0032 / (24.1 * 24.1);
    EXPECT_NO_THROW(config::transmitter_from_json(j));
    j["pa"]["noise_variance"] = 1e-3;
    EXPECT_THROW(config::transmitter_from_json(j), ConfigError);
}

TEST(TransmitterJson, RejectsBadContent) {
    config::json j = config::to_json(txsim::reference_transmitter());
    j["format"] = "dpdlab.transmitter/99";
    EXPECT_THROW(config::transmitter_from_json(j), ConfigError);
    j = config::to_json(txsim::reference_transmitter());
    j["pa"]["coeffs"][0] = {1, 0, 1.0};
    EXPECT_THROW(config::transmitter_from_json(j), ConfigError);
    j = config::to_json(txsim::reference_transmitter());
    j["dac"]["num_bits"] = 0;
    EXPECT_THROW(config::transmitter_from_json(j), ConfigError);
    j = config::to_json(txsim::reference_transmitter());
    j["iq"]["phase_deg"] = "eight";
    EXPECT_THROW(config::transmitter_from_json(j), ConfigError);
    EXPECT_THROW(config::load_transmitter("/nonexistent/tx.json"), ConfigError);
}

TEST(NetworkCheckpoint, RoundTripIsExact) {
    auto net = annet::build_network(3, {8, 6, 4}, annet::Activation::softsign, true, 17);
    // leave some weights pruned
    net.masks[1](2, 3) = 0.0;
    net.weights[1](2, 3) = 0.0;
    net.masks[0](0, 0) = 0.0;
    net.weights[0](0, 0) = 0.0;
    net.shortcut << 1.1, -0.2, 0.3, 0.9;
    const auto dir = scratch_dir("net");
    config::write_json_file(dir / "ck.json", config::to_json(net));
    const auto back = config::network_from_json(config::read_json_file(dir / "ck.json"));
    EXPECT_EQ(back.spec.dims, net.spec.dims);
    EXPECT_EQ(back.spec.memory, net.spec.memory);
    EXPECT_EQ(back.activation, net.activation);
    EXPECT_EQ(back.shortcut_enabled, net.shortcut_enabled);
    for (std::size_t l = 0; l < net.weights.size(); ++l) {
        EXPECT_EQ(back.weights[l], net.weights[l]);
        EXPECT_EQ(back.biases[l], net.biases[l]);
        EXPECT_EQ(back.masks[l], net.masks[l]);
    }
    EXPECT_EQ(back.shortcut, net.shortcut);
    fs::remove_all(dir);
}

TEST(NetworkCheckpoint, MaskedWeightsLoadAsZero) {
    auto net = annet::build_network(1, {4}, annet::Activation::relu, false, 3);
    auto j = config::to_json(net);
    std::string bits = j["masks"][0];
    bits[0] = '0';
    j["masks"][0] = bits;
    const auto back = config::network_from_json(j);
    EXPECT_EQ(back.weights[0](0, 0), 0.0);
}

TEST(NetworkCheckpoint, RejectsBadContent) {
    const auto net = annet::build_network(1, {4}, annet::Activation::relu, true, 3);
    auto j = config::to_json(net);
    j["format"] = "dpdlab.ph/1";
    EXPECT_THROW(config::network_from_json(j), ConfigError);
    j = config::to_json(net);
    j["masks"][0] = "01x1";
    EXPECT_THROW(config::network_from_json(j), ConfigError);
    j = config::to_json(net);
    j["weights"][1] = std::vector<double>{1.0};
    EXPECT_THROW(config::network_from_json(j), ConfigError);
    j = config::to_json(net);
    j["dims"] = std::vector<int>{4, 3, 2};
    EXPECT_THROW(config::network_from_json(j), ConfigError);
    j = config::to_json(net);
    j["activation"] = "tanh";
    EXPECT_THROW(config::network_from_json(j), ConfigError);
    j = config::to_json(net);
    j.erase("shortcut");
    EXPECT_THROW(config::network_from_json(j), ConfigError);
}

TEST(PhModelJson, RoundTrip) {
    const auto m = checks::random_ph_model(7, 3, 2, 5);
    const auto back = config::ph_from_json(config::to_json(m));
    EXPECT_EQ(back.shape.descriptor(), "P7Q3L2");
    EXPECT_EQ(back.coeffs, m.coeffs);
    auto j = config::to_json(m);
    j["coeffs"].erase(0);
    EXPECT_THROW(config::ph_from_json(j), ConfigError);
}

TEST(ExperimentJson, ShippedFilesParse) {
    const auto c = load_experiment(kConfigs / "reference_experiment.json");
    expect_same(c.transmitter, txsim::reference_transmitter());
    EXPECT_EQ(c.shape.descriptor(), "8-8-8-8-2");
    EXPECT_EQ(c.train.total_steps, 50000);
    EXPECT_FALSE(c.prune.has_value());
    EXPECT_EQ(c.signal.eval_seed, 1001u);

    const auto j = config::read_json_file(kConfigs / "reference_sweep.json");
    const auto tmpl = experiment_from_json(j, kConfigs);
    const auto s = sweep_from_json(j);
    ASSERT_EQ(s.shapes.size(), 9u);
    std::vector<long long> budgets;
    for (const auto& sh : s.shapes) budgets.push_back(sh.flops(0.0));
    EXPECT_EQ(budgets, (std::vector<long long>{64, 152, 272, 424, 56, 144, 264, 416, budgets.back()}));
    EXPECT_EQ(s.shapes.back().kind, ModelKind::ph);
    EXPECT_EQ(s.seeds.size(), 3u);
    EXPECT_EQ(tmpl.shape.memory, 3);
}

TEST(ExperimentJson, PruneAndOverrides) {
    const config::json j = {
        {"model", {{"kind", "rvtdnn"}, {"memory", 2}, {"hidden", {5, 5}}, {"activation", "softsign"}}},
        {"train", {{"total_steps", 1000}, {"seed", 9}, {"prune_output_layer", false}}},
        {"prune", {{"eta_d", 0.25}, {"delta_n", 100}}},
        {"signal", {{"num_samples", 4096}}},
    };
    const auto c = experiment_from_json(j);
    EXPECT_EQ(c.shape.kind, ModelKind::rvtdnn);
    EXPECT_EQ(c.shape.descriptor(), "6-5-5-2");
    EXPECT_EQ(c.shape.activation, annet::Activation::softsign);
    ASSERT_TRUE(c.prune.has_value());
    EXPECT_EQ(c.prune->total_steps, 1000);
    EXPECT_EQ(c.prune->delta_n, 100);
    EXPECT_FALSE(c.train.prune_output_layer);
    EXPECT_EQ(c.signal.num_samples, 4096);
}

TEST(ExperimentJson, RejectsBadContent) {
    EXPECT_THROW(experiment_from_json({{"model", {{"kind", "lstm"}}}}), ConfigError);
    EXPECT_THROW(experiment_from_json({{"prune", {{"eta_d", 1.0}}}}), ConfigError);
    EXPECT_THROW(experiment_from_json({{"model", {{"kind", "ph"}}}, {"prune", {{"eta_d", 0.5}}}}), ConfigError);
    EXPECT_THROW(experiment_from_json({{"ila_iterations", 0}}), ConfigError);
    EXPECT_THROW(experiment_from_json({{"metrics", {{"window", "kaiser"}}}}), ConfigError);
    EXPECT_THROW(experiment_from_json({{"transmitter", "missing.json"}}, "/nonexistent"), ConfigError);
    EXPECT_THROW(sweep_from_json({{"sweep", {{"shapes", config::json::array()}, {"etas", {1.5}}}}}), ConfigError);
}
