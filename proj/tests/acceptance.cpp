// Acceptance runner: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails. Tolerances and time limits are fixed below.

#include <dpdlab/dpdlab.hpp>

#include "checks.hpp"

#include <chrono>
#include <cstdio>
#include <iostream>
#include <map>
#include <sstream>

using namespace dpdlab;

namespace {

constexpr double kGradTol = 1e-5;
constexpr double kPhCoeffTol = 1e-8;
constexpr double kPhNmseDb = -100.0;
constexpr double kNmseGainDb = 15.0;
constexpr double kAcprGainDb = 5.0;
constexpr double kPrunedSlackDb = 1.0;
constexpr double kNmseOracleTolDb = 1e-9;
constexpr double kAcprOracleTolDb = 0.1;

using Clock = std::chrono::steady_clock;

struct Outcome {
    bool pass = false;
    std::string detail;
};

int failures = 0;

void report(int id, const char* title, double limit_s, const std::function<Outcome()>& body) {
    const auto t0 = Clock::now();
    Outcome o;
    try {
        o = body();
    } catch (const std::exception& e) {
        o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
    const bool in_time = secs < limit_s;
    const bool pass = o.pass && in_time;
    if (!pass) ++failures;
    std::printf("criterion %d: %s  %s  [%s; %.1f s of %.0f s%s]\n", id, pass ? "PASS" : "FAIL", title, o.detail.c_str(), secs,
                limit_s, in_time ? "" : ", over time");
    std::fflush(stdout);
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const auto n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::string fmt(double v, int prec = 2) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(prec) << v;
    return os.str();
}

// Full-length reference runs on the shipped transmitter. Results are cached
// because several criteria share configurations; runs are deterministic.
struct Run {
    double nmse = 0.0;
    double acpr = 0.0;
    long long flops = 0;
};

std::map<std::tuple<int, std::vector<int>, double, std::uint64_t>, Run> g_runs;

Run reference_run(ModelKind kind, const std::vector<int>& hidden, double eta, std::uint64_t seed) {
    const auto key = std::make_tuple(static_cast<int>(kind), hidden, eta, seed);
    if (auto it = g_runs.find(key); it != g_runs.end()) return it->second;
    ExperimentConfig c;
    c.shape.kind = kind;
    c.shape.memory = 3;
    c.shape.hidden = hidden;
    c.train.seed = seed;
    if (eta > 0.0) c.prune = train::PruneSchedule{eta, 500, c.train.total_steps};
    const auto ila = ila_identify(c);
    const auto r = evaluate_dpd(ila.model, c);
    const Run out{r.nmse_db, r.acpr_dbc, r.flops};
    g_runs.emplace(key, out);
    return out;
}

Outcome flop_markers() {
    const std::vector<int> widths{2, 4, 6, 8, 10, 12, 18, 27};
    const std::vector<long long> want{64, 152, 272, 424, 608, 824, 1664, 3464};
    std::string got;
    bool ok = true;
    for (std::size_t i = 0; i < widths.size(); ++i) {
        const int d = widths[i];
        const long long f = annet::flops({8, d, d, d, 2}, 0.0, true);
        ok = ok && f == want[i];
        got += (i ? "," : "") + std::to_string(f);
    }
    return {ok, "flops = " + got};
}

Outcome pruned_flops() {
    const long long f = annet::flops({8, 12, 12, 12, 2}, 0.5, true);
    return {f == 416, "flops = " + std::to_string(f)};
}

Outcome gradients() {
    const std::vector<std::vector<int>> shapes{{2}, {4, 4}, {8, 8}, {8, 8, 8}, {12, 12}, {16, 16}};
    double worst = 0.0;
    std::size_t params = 0;
    for (std::size_t s = 0; s < shapes.size(); ++s) {
        auto net = annet::build_network(3, shapes[s], annet::Activation::softsign, true, 40 + s);
        std::mt19937_64 rng(90 + s);
        std::uniform_real_distribution<double> u(-0.5, 0.5);
        for (auto& b : net.biases)
            for (Eigen::Index i = 0; i < b.size(); ++i) b(i) = u(rng);
        net.shortcut << 1.0 + u(rng), u(rng), u(rng), 1.0 + u(rng);
        Eigen::MatrixXd in;
        Eigen::MatrixXd tgt;
        checks::random_batch(8, 32, 200 + s, in, tgt);
        const auto r = checks::finite_difference_check(net, in, tgt);
        worst = std::max(worst, r.max_rel_error);
        params += r.parameters;
    }
    std::ostringstream os;
    os << "max rel error " << std::scientific << std::setprecision(2) << worst << " over " << params << " parameters (tol 1e-5)";
    return {worst < kGradTol, os.str()};
}

Outcome pruning_schedule() {
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> ueta(0.0, 0.95);
    std::uniform_int_distribution<long long> un(1, 20000);
    bool schedule_ok = true;
    for (int trial = 0; trial < 50; ++trial) {
        const long long n_total = un(rng);
        std::uniform_int_distribution<long long> ud(1, n_total);
        const train::PruneSchedule s{ueta(rng), ud(rng), n_total};
        double prev = train::sparsity_at(s, 0);
        schedule_ok = schedule_ok && prev == 0.0;
        for (long long n = 1; n <= n_total; ++n) {
            const double v = train::sparsity_at(s, n);
            schedule_ok = schedule_ok && v >= prev;
            prev = v;
        }
        schedule_ok = schedule_ok && prev == s.eta_d;
    }

    const double eta = 0.6;
    auto net = annet::build_network(3, {16, 16}, annet::Activation::relu, true, 5);
    const auto data = checks::teacher_dataset(annet::build_network(3, {8, 8}, annet::Activation::relu, true, 6), 20000, 7);
    train::TrainConfig cfg;
    cfg.total_steps = 10000;
    const train::PruneSchedule sched{eta, 250, cfg.total_steps};
    std::vector<Eigen::MatrixXd> prev = net.masks;
    long long resurrections = 0;
    train::train_with_pruning(net, data, cfg, sched, nullptr, [&](long long, const annet::ArdenNetwork& n) {
        for (std::size_t i = 0; i < n.masks.size(); ++i) {
            resurrections += ((prev[i].array() == 0.0) && (n.masks[i].array() != 0.0)).count();
            resurrections += ((n.masks[i].array() == 0.0) && (n.weights[i].array() != 0.0)).count();
            prev[i] = n.masks[i];
        }
    });
    double worst_gap = 0.0;
    for (std::size_t i = 0; i < net.masks.size(); ++i)
        worst_gap = std::max(worst_gap, std::abs(static_cast<double>(net.zero_count(i)) - eta * static_cast<double>(net.masks[i].size())));
    const bool ok = schedule_ok && worst_gap <= 1.0 && resurrections == 0;
    return {ok, std::string("50 schedules ") + (schedule_ok ? "ok" : "BAD") + ", per-layer gap " + fmt(worst_gap, 1) +
                    " weights, resurrections " + std::to_string(resurrections)};
}

Outcome ph_recovery() {
    const auto truth = checks::random_ph_model(7, 3, 3, 77);
    std::mt19937_64 rng(78);
    std::normal_distribution<double> g(0.0, 0.3);
    std::vector<cplx> v(20000);
    for (auto& s : v) s = {g(rng), g(rng)};
    const ComplexSignal x(std::move(v), 1.0);
    const auto y = volterra::ph_predict(x, truth);
    const auto basis = volterra::ph_basis(x, truth.shape);
    const Eigen::VectorXcd h = volterra::ls_fit(basis, y);
    const double err = (h - truth.coeffs).cwiseAbs().maxCoeff();
    const auto fit = volterra::ph_predict(x, volterra::PhModel{truth.shape, h});
    const double nmse = nmse_db(fit, y, {false});
    std::ostringstream os;
    os << "max coeff error " << std::scientific << std::setprecision(2) << err << ", training NMSE " << std::fixed
       << std::setprecision(1) << nmse << " dB";
    return {err < kPhCoeffTol && nmse < kPhNmseDb, os.str()};
}

Outcome linearization() {
    const auto base = evaluate_no_dpd(ExperimentConfig{});
    std::vector<double> nm;
    std::vector<double> ac;
    for (std::uint64_t seed : {0, 1, 2}) {
        const auto r = reference_run(ModelKind::arden, {8, 8, 8}, 0.0, seed);
        nm.push_back(r.nmse);
        ac.push_back(r.acpr);
    }
    const double dn = base.nmse_db - median(nm);
    const double da = base.acpr_dbc - median(ac);
    return {dn >= kNmseGainDb && da >= kAcprGainDb,
            "no-DPD " + fmt(base.nmse_db) + " dB / " + fmt(base.acpr_dbc) + " dBc, ARDEN median " + fmt(median(nm)) + " dB / " +
                fmt(median(ac)) + " dBc, gain " + fmt(dn) + " dB / " + fmt(da) + " dBc"};
}

Outcome shortcut_ordering() {
    bool ok = true;
    std::string detail;
    for (int w : {2, 4, 6, 8}) {
        std::vector<double> with;
        std::vector<double> without;
        long long fa = 0;
        long long fb = 0;
        for (std::uint64_t seed = 0; seed < 5; ++seed) {
            const auto a = reference_run(ModelKind::arden, {w, w, w}, 0.0, seed);
            const auto b = reference_run(ModelKind::rvtdnn, {w, w, w}, 0.0, seed);
            with.push_back(a.nmse);
            without.push_back(b.nmse);
            fa = a.flops;
            fb = b.flops;
        }
        ok = ok && median(with) <= median(without);
        detail += (detail.empty() ? "" : "; ") + std::to_string(fa) + ": " + fmt(median(with)) + " vs " + std::to_string(fb) +
                  ": " + fmt(median(without));
    }
    return {ok, "median NMSE dB, ARDEN vs no shortcut: " + detail};
}

Outcome pruned_vs_dense() {
    std::vector<double> pruned;
    std::vector<double> dense;
    long long fp = 0;
    for (std::uint64_t seed : {0, 1, 2}) {
        const auto p = reference_run(ModelKind::arden, {12, 12, 12}, 0.5, seed);
        fp = p.flops;
        pruned.push_back(p.nmse);
        dense.push_back(reference_run(ModelKind::arden, {8, 8, 8}, 0.0, seed).nmse);
    }
    const double mp = median(pruned);
    const double md = median(dense);
    return {fp == 416 && mp <= md + kPrunedSlackDb,
            "824 pruned to " + std::to_string(fp) + ": " + fmt(mp) + " dB vs dense 424: " + fmt(md) + " dB (slack 1 dB)"};
}

Outcome metric_oracles() {
    std::mt19937_64 rng(31337);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double worst_nmse = 0.0;
    double worst_acpr = 0.0;
    for (int k = 0; k < 20; ++k) {
        const double fs = 200e6;
        const double bw = 4e6 + 26e6 * u(rng);
        const auto n = 2048 + static_cast<long long>(4096 * u(rng));
        const ComplexSignal ref = generate_multicarrier(n, bw, fs, 500 + k, {0.1 + 0.4 * u(rng), 0.9});
        // random memoryless compression, a delayed echo and noise
        const cplx a3{-0.5 * u(rng), 0.3 * (u(rng) - 0.5)};
        const cplx echo{0.1 * u(rng), 0.1 * u(rng)};
        std::normal_distribution<double> g(0.0, 1e-3 * (1 + 10 * u(rng)));
        const cplx gain = std::polar(0.5 + u(rng), 6.28 * u(rng));
        std::vector<cplx> yv(ref.size());
        for (std::size_t i = 0; i < ref.size(); ++i) {
            const cplx x = ref[i];
            yv[i] = gain * (x + a3 * std::norm(x) * x + (i > 0 ? echo * ref[i - 1] : cplx{})) + cplx{g(rng), g(rng)};
        }
        const ComplexSignal y(std::move(yv), fs);
        const bool align = k % 4 != 3;
        worst_nmse = std::max(worst_nmse, std::abs(nmse_db(y, ref, {align}) - checks::nmse_oracle(y.samples, ref.samples, align)));
        const std::size_t nfft = k % 2 ? 256 : 512;
        const double overlap = k % 3 == 0 ? 0.0 : 0.5;
        SpectrumConfig sc;
        sc.fft_size = nfft;
        sc.segment_overlap = overlap;
        worst_acpr = std::max(worst_acpr, std::abs(acpr_dbc(y, bw, sc) - checks::acpr_oracle(y.samples, fs, bw, nfft, overlap)));
    }
    std::ostringstream os;
    os << "20 cases, max |NMSE - oracle| " << std::scientific << std::setprecision(2) << worst_nmse << " dB, max |ACPR - oracle| "
       << worst_acpr << " dB";
    return {worst_nmse < kNmseOracleTolDb && worst_acpr < kAcprOracleTolDb, os.str()};
}

}  // namespace

int main() {
    report(1, "FLOP markers for K=5, M=3", 1.0, flop_markers);
    report(2, "pruned FLOPs of 8-12-12-12-2 at eta 0.5", 1.0, pruned_flops);
    report(3, "softsign gradients vs central differences", 30.0, gradients);
    report(4, "pruning schedule and masks", 120.0, pruning_schedule);
    report(5, "PH P7Q3L3 exact recovery", 30.0, ph_recovery);
    report(6, "ARDEN 8-8-8 linearizes the reference transmitter", 900.0, linearization);
    report(7, "shortcut benefit at 64/152/272/424 FLOPs", 2700.0, shortcut_ordering);
    report(8, "pruned 824 vs dense 424", 1800.0, pruned_vs_dense);
    report(9, "NMSE / ACPR vs extended-precision oracles", 60.0, metric_oracles);
    std::printf("%d of 9 criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
