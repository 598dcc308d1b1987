// pfgcn: run, sweep, ablate, gradcheck, plot.
//
// Exit codes: 0 success, 2 config/data error, 3 numeric failure.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "pfgcn/experiment.hpp"

namespace {

constexpr int exit_ok = 0;
constexpr int exit_config = 2;
constexpr int exit_numeric = 3;

struct Common {
    std::string config;
    std::string out;
    std::optional<std::uint64_t> seed;
    bool paper_scale = false;
};

pfgcn::ExperimentConfig resolve(const Common& o) {
    auto c = o.config.empty() ? pfgcn::parse_config(nlohmann::json::object()) : pfgcn::load_config(o.config);
    if (!o.out.empty()) c.output_dir = o.out;
    if (o.seed) c.seeds = {*o.seed};
    if (o.paper_scale) c.train.epochs = pfgcn::ExperimentConfig::paper_epochs;
    c.validate();
    return c;
}

void print_row(const pfgcn::ResultRow& r) {
    std::printf("%-14s tpr %.3f  observed %.4f  kept %zu  acc %.4f  bin %.3f  dead %zu  seed %llu  %.1fs\n",
                r.method.c_str(), r.tpr, r.observed_rate, r.kept_params, r.accuracy, r.binarization_fraction,
                r.dead_units, static_cast<unsigned long long>(r.seed), r.wall_time_s);
}

void add_common(CLI::App* cmd, Common& o, bool with_scale = true) {
    cmd->add_option("--config", o.config, "JSON experiment config");
    cmd->add_option("--out", o.out, "output directory (overrides output_dir)");
    cmd->add_option("--seed", o.seed, "single seed (overrides seeds)");
    if (with_scale) cmd->add_flag("--paper-scale", o.paper_scale, "train for 2700 epochs");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Phase-field pruning of graph convolutional networks"};
    app.require_subcommand(1);
    Common o;
    std::string results;

    auto* run = app.add_subcommand("run", "train, prune and fine-tune one model");
    auto* sweep = app.add_subcommand("sweep", "PFM runs over the configured tpr values");
    auto* ablate = app.add_subcommand("ablate", "WR / WR+reg / WR+reg+PFM / WR+PFM / magnitude table");
    auto* grad = app.add_subcommand("gradcheck", "finite-difference check of the full objective");
    auto* plot = app.add_subcommand("plot", "write plot-ready series from a results CSV");
    for (auto* cmd : {run, sweep, ablate}) add_common(cmd, o);
    grad->add_option("--seed", o.seed, "model seed (default 0)");
    add_common(plot, o, false);
    plot->add_option("--results", results, "results CSV (default <output_dir>/results.csv)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? exit_ok : exit_config;
    }

    try {
        if (run->parsed()) {
            print_row(pfgcn::run(resolve(o)));
        } else if (sweep->parsed()) {
            auto res = pfgcn::sweep_tpr(resolve(o));
            for (const auto& r : res.rows) print_row(r);
            if (!res.failures.empty()) {
                std::cerr << res.failures.size() << " sweep point(s) failed; see failures.txt\n";
                return exit_numeric;
            }
        } else if (ablate->parsed()) {
            auto c = resolve(o);
            auto rows = pfgcn::ablate(c);
            for (const auto& r : rows) print_row(r);
            std::printf("\nmeans:\n");
            for (const auto& s : pfgcn::summarize(rows))
                std::printf("%-14s runs %zu  observed %.4f  kept %.1f  acc %.4f  bin %.3f  dead %.1f\n",
                            s.method.c_str(), s.runs, s.observed_rate, s.kept_params, s.accuracy,
                            s.binarization_fraction, s.dead_units);
        } else if (grad->parsed()) {
            bool ok = true;
            for (const auto& line : pfgcn::gradcheck_report(o.seed.value_or(0))) {
                const bool pass = line.max_rel_error <= pfgcn::gradcheck_tolerance;
                ok = ok && pass;
                std::printf("%-8s max rel. error %.3e  %s\n", pfgcn::to_string(line.kind), line.max_rel_error,
                            pass ? "ok" : "FAIL");
            }
            return ok ? exit_ok : exit_numeric;
        } else if (plot->parsed()) {
            std::string dir = o.out, csv = results;
            if (csv.empty() || dir.empty()) {
                auto c = resolve(o);
                if (csv.empty()) csv = (pfgcn::fs::path(c.output_dir) / "results.csv").string();
                if (dir.empty()) dir = (pfgcn::fs::path(c.output_dir) / "plots").string();
            }
            for (const auto& f : pfgcn::plot_data(csv, dir)) std::printf("%s\n", f.string().c_str());
        }
    } catch (const pfgcn::NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << '\n';
        return exit_numeric;
    } catch (const pfgcn::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return exit_config;
    } catch (const pfgcn::DataError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return exit_config;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return exit_ok;
}
