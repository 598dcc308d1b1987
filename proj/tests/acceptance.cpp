// Acceptance run: one PASS/FAIL line per criterion. Criterion 10 is
// informational and never affects the exit status.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "pfgcn/experiment.hpp"

using namespace pfgcn;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

PhaseFieldParams random_params(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> beta(0.1, 10.0), frac(-0.999, 0.999);
    const double b = beta(rng);
    return {frac(rng) * b, b};
}

// Second central difference, Richardson-extrapolated; exact for quartics up to rounding.
double fd_second(const std::function<double(double)>& f, double t) {
    auto d2 = [&](double h) { return (f(t + h) - 2.0 * f(t) + f(t - h)) / (h * h); };
    const double h = 1.0 / 32.0;
    return (4.0 * d2(h / 2.0) - d2(h)) / 3.0;
}

Outcome criterion_1() {
    const auto t0 = Clock::now();
    std::mt19937_64 rng(1);
    double worst_grad = 0, worst_fd1 = 0, worst_curv = 0, worst_fd2 = 0, worst_gap = 0, worst_argmax = 0;
    for (int i = 0; i < 50; ++i) {
        const auto p = random_params(rng);
        auto V = [&](double t) { return ultra_local(t, p); };
        for (double t : {0.0, 1.0}) {
            worst_grad = std::max(worst_grad, std::abs(ultra_local_grad(t, p)));
            const double h = 1e-6;
            worst_fd1 = std::max(worst_fd1, std::abs((V(t + h) - V(t - h)) / (2 * h)));
        }
        const double c0 = 8.0 * (p.beta + p.alpha), c1 = 8.0 * (p.beta - p.alpha);
        worst_curv = std::max({worst_curv, std::abs(ultra_local_second(0.0, p) - c0),
                               std::abs(ultra_local_second(1.0, p) - c1)});
        worst_fd2 = std::max({worst_fd2, std::abs(fd_second(V, 0.0) - c0), std::abs(fd_second(V, 1.0) - c1)});
        worst_gap = std::max(worst_gap, std::abs(V(1.0) - V(0.0) - 4.0 * p.alpha / 3.0));
        const int grid = 100000;
        double best_t = 0, best_v = -1e300;
        for (int g = 0; g <= grid; ++g) {
            const double t = static_cast<double>(g) / grid;
            if (const double v = V(t); v > best_v) {
                best_v = v;
                best_t = t;
            }
        }
        worst_argmax = std::max(worst_argmax, std::abs(best_t - (p.alpha + p.beta) / (2.0 * p.beta)));
    }
    const double secs = seconds_since(t0);
    const bool pass = worst_grad <= 1e-12 && worst_fd1 <= 1e-7 && worst_curv <= 1e-9 && worst_fd2 <= 1e-9 &&
                      worst_gap <= 1e-12 && worst_argmax <= 2e-5 && secs < 10.0;
    return {pass, fmt("max |V'(0|1)| %.1e, fd %.1e; V'' gap %.1e, fd %.1e; |dV-4a/3| %.1e; argmax err %.1e; %.2fs",
                      worst_grad, worst_fd1, worst_curv, worst_fd2, worst_gap, worst_argmax, secs)};
}

Outcome criterion_2() {
    const auto t0 = Clock::now();
    std::mt19937_64 rng(2);
    std::normal_distribution<double> g(0.0, 2.0);
    bool range = true, symmetric = true, monotone = true;
    double worst_deriv = 0;
    std::vector<double> ws(10000);
    for (auto& w : ws) w = g(rng);
    for (double w : ws) {
        const double q = psi(w);
        range = range && q >= 0.0 && q < 1.0;
        symmetric = symmetric && psi(-w) == q;
        const double h = 1e-6 * std::max(1.0, std::abs(w));
        const double fd = (psi(w + h) - psi(w - h)) / (2 * h);
        worst_deriv = std::max(worst_deriv, std::abs(psi_grad(w) - fd) / std::max(1.0, std::abs(psi_grad(w))));
    }
    std::vector<double> mags(ws.size());
    for (std::size_t i = 0; i < ws.size(); ++i) mags[i] = std::abs(ws[i]);
    std::sort(mags.begin(), mags.end());
    for (std::size_t i = 1; i < mags.size(); ++i) monotone = monotone && psi(mags[i]) >= psi(mags[i - 1]);
    const bool zero = psi(0.0) == 0.0;
    const double secs = seconds_since(t0);
    const bool pass = range && symmetric && monotone && zero && worst_deriv < 1e-6 && secs < 5.0;
    return {pass, fmt("range %s, symmetry %s, psi(0)=0 %s, monotone %s, max psi' rel. err %.1e; %.2fs", range ? "ok" : "no",
                      symmetric ? "ok" : "no", zero ? "ok" : "no", monotone ? "ok" : "no", worst_deriv, secs)};
}

Outcome criterion_3() {
    const auto t0 = Clock::now();
    double worst = 0;
    std::string lines;
    for (const auto& l : gradcheck_report(0)) {
        worst = std::max(worst, l.max_rel_error);
        lines += fmt(" %s=%.1e", to_string(l.kind), l.max_rel_error);
    }
    const double secs = seconds_since(t0);
    return {worst < 1e-5 && secs < 120.0, fmt("max rel. error %.2e;%s; %.1fs", worst, lines.c_str(), secs)};
}

ExperimentConfig desk_config() {
    auto c = parse_config(nlohmann::json::parse(R"({
        "dataset": {"n_classes": 8, "samples_per_class": 72, "joints": 15, "target_frames": 8},
        "train": {"epochs": 600, "finetune_epochs": 300},
        "regularizer": {"kind": "pfm", "beta": 3}
    })"));
    return c;
}

struct DeskRuns {
    std::vector<ResultRow> pfm;        // tpr 0.5, 0.8 without fine-tuning; 0.95 with
    std::vector<ResultRow> magnitude;  // tpr 0.95
    std::size_t train_samples = 0;
};

DeskRuns desk_runs() {
    DeskRuns d;
    auto c = desk_config();
    d.train_samples = prepare_data(c, 0).train.size();
    for (double tpr : {0.5, 0.8, 0.95})
        for (std::uint64_t seed : {0, 1, 2}) {
            auto cc = c;
            if (tpr != 0.95) cc.finetune_epochs = 0;  // masks are fixed before fine-tuning
            Method m{"WR+PFM", cc.train.reg, false};
            m.reg.target_tpr = tpr;
            d.pfm.push_back(run_method(cc, m, seed));
            std::printf("  run %-10s tpr %.2f seed %llu: observed %.4f  bin %.4f  acc %.4f  (%.0fs)\n",
                        d.pfm.back().method.c_str(), tpr, static_cast<unsigned long long>(seed),
                        d.pfm.back().observed_rate, d.pfm.back().binarization_fraction, d.pfm.back().accuracy,
                        d.pfm.back().wall_time_s);
            std::fflush(stdout);
        }
    for (std::uint64_t seed : {0, 1, 2}) {
        Method m{"magnitude", c.train.reg, true};
        m.reg.kind = RegKind::none;
        m.reg.target_tpr = 0.95;
        d.magnitude.push_back(run_method(c, m, seed));
        std::printf("  run magnitude  tpr 0.95 seed %llu: observed %.4f  acc %.4f  (%.0fs)\n",
                    static_cast<unsigned long long>(seed), d.magnitude.back().observed_rate,
                    d.magnitude.back().accuracy, d.magnitude.back().wall_time_s);
        std::fflush(stdout);
    }
    return d;
}

Outcome criterion_4(const DeskRuns& d) {
    double worst = 0, slowest = 0;
    std::string pts;
    for (const auto& r : d.pfm) {
        worst = std::max(worst, std::abs(r.observed_rate - r.tpr));
        slowest = std::max(slowest, r.wall_time_s);
        pts += fmt(" %.2f->%.4f", r.tpr, r.observed_rate);
    }
    const bool pass = d.train_samples == 400 && worst <= 0.02 && slowest < 15 * 60.0;
    return {pass, fmt("%zu train samples; max |observed - tpr| %.4f;%s; slowest run %.0fs", d.train_samples, worst,
                      pts.c_str(), slowest)};
}

Outcome criterion_5(const DeskRuns& d) {
    double lowest = 1.0;
    for (const auto& r : d.pfm) lowest = std::min(lowest, r.binarization_fraction);
    return {lowest >= 0.95, fmt("min binarization fraction %.4f over %zu runs", lowest, d.pfm.size())};
}

Outcome criterion_6(const DeskRuns& d) {
    double pfm = 0, mag = 0;
    std::size_t n = 0;
    for (const auto& r : d.pfm)
        if (r.tpr == 0.95) {
            pfm += r.accuracy;
            ++n;
        }
    pfm /= static_cast<double>(n);
    for (const auto& r : d.magnitude) mag += r.accuracy;
    mag /= static_cast<double>(d.magnitude.size());
    return {n == 3 && pfm >= mag, fmt("mean accuracy at tpr 0.95: WR+PFM %.4f, magnitude %.4f", pfm, mag)};
}

Outcome criterion_7() {
    const auto t0 = Clock::now();
    std::size_t checked = 0, exact = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        GcnArchitecture a;
        a.n_nodes = 5 + seed % 11;
        a.in_channels = 3 * (1 + seed % 4);
        a.heads = 1 + seed % 3;
        a.conv_filters = 2 + seed % 7;
        a.n_classes = 2 + seed % 5;
        const auto m = build_model(a, seed, seed % 2 ? InitScheme::glorot : InitScheme::uniform_mask);
        const auto N = param_count(m);
        for (double tpr : {0.1, 0.5, 0.8, 0.95, 0.99}) {
            const auto masks = magnitude_prune(m, tpr);
            ++checked;
            exact += mask_pruning_rate(masks) == std::floor(tpr * static_cast<double>(N)) / static_cast<double>(N);
        }
    }
    const double secs = seconds_since(t0);
    return {exact == checked && secs < 5.0, fmt("%zu/%zu exact; %.2fs", exact, checked, secs)};
}

Outcome criterion_8() {
    auto base = fs::temp_directory_path() / "pfgcn_acceptance_determinism";
    fs::remove_all(base);
    auto c = parse_config(nlohmann::json::parse(R"({
        "train": {"epochs": 40, "finetune_epochs": 20},
        "regularizer": {"kind": "pfm", "target_tpr": 0.8},
        "seeds": [5]
    })"));
    std::vector<std::string> lines[2];
    for (int i = 0; i < 2; ++i) {
        c.output_dir = (base / ("run" + std::to_string(i))).string();
        run(c);
        for (auto r : read_results_csv((fs::path(c.output_dir) / "results.csv").string())) {
            r.wall_time_s = 0;
            lines[i].push_back(to_csv(r));
        }
    }
    fs::remove_all(base);
    const bool same = !lines[0].empty() && lines[0] == lines[1];
    return {same, fmt("%zu row(s) %s", lines[0].size(), same ? "bit-identical" : "differ")};
}

Outcome criterion_9() {
    const auto t0 = Clock::now();
    auto c = parse_config(nlohmann::json::parse(R"({"dataset": {"n_classes": 2}})"));
    const auto data = prepare_data(c, 0);
    TrainConfig tc = c.train;
    tc.epochs = 200;
    tc.reg.kind = RegKind::none;
    auto model = build_model(resolved_arch(c, data), 0, c.init, data.prior);
    auto res = train(std::move(model), data.train, tc);
    const double acc = evaluate(res.model, data.test);
    const double secs = seconds_since(t0);
    return {acc >= 0.95 && secs < 180.0, fmt("test accuracy %.4f after 200 epochs; %.1fs", acc, secs)};
}

Outcome criterion_10() {
    // SBU: 8 classes; one 15-joint skeleton, or two as a 30-node graph.
    const auto found = search_param_count(15320, 8, {15, 30}, 100, 8, 512);
    std::string list;
    for (std::size_t i = 0; i < found.size() && i < 5; ++i) {
        const auto& a = found[i].arch;
        list += fmt(" [n=%zu T=%zu K=%zu C=%zu]", a.n_nodes, found[i].frames, a.heads, a.conv_filters);
    }
    if (found.empty())
        return {false, "no (nodes in {15,30}, T<=100, K<=8, C<=512) architecture gives 15320 parameters"};
    return {true, fmt("%zu architecture(s) give 15320 parameters:%s", found.size(), list.c_str())};
}

}  // namespace

int main() {
    int failures = 0;
    auto report = [&](int id, const char* what, const Outcome& o, bool asserted = true) {
        std::printf("%s criterion %d: %s (%s)%s\n", o.pass ? "PASS" : "FAIL", id, what, o.detail.c_str(),
                    asserted ? "" : " [reported, not asserted]");
        std::fflush(stdout);
        if (asserted && !o.pass) ++failures;
    };
    auto guarded = [&](const std::function<Outcome()>& f) {
        try {
            return f();
        } catch (const std::exception& e) {
            return Outcome{false, std::string("exception: ") + e.what()};
        }
    };

    report(1, "phase-field analytic suite", guarded(criterion_1));
    report(2, "psi suite", guarded(criterion_2));
    report(3, "full-objective gradient check", guarded(criterion_3));
    DeskRuns desk;
    std::string desk_error;
    try {
        desk = desk_runs();
    } catch (const std::exception& e) {
        desk_error = e.what();
    }
    auto with_desk = [&](Outcome (*f)(const DeskRuns&)) {
        return desk_error.empty() ? guarded([&] { return f(desk); }) : Outcome{false, "desk runs failed: " + desk_error};
    };
    report(4, "tpr alignment", with_desk(criterion_4));
    report(5, "bi-phase behaviour", with_desk(criterion_5));
    report(6, "high-regime accuracy vs magnitude pruning", with_desk(criterion_6));
    report(7, "magnitude pruning exactness", guarded(criterion_7));
    report(8, "determinism", guarded(criterion_8));
    report(9, "baseline sanity", guarded(criterion_9));
    report(10, "parameter-count calibration", guarded(criterion_10), false);
    return failures == 0 ? 0 : 1;
}
