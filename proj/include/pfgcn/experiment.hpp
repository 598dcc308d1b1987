#pragma once

// Config-driven experiments: single runs, tpr sweeps, regularizer ablations,
// gradient checks and plot-ready series. Every output lands in one directory
// together with the resolved config.

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pfgcn/training.hpp"

namespace pfgcn {

namespace fs = std::filesystem;

struct DatasetSpec {
    std::string source = "synthetic";  // "synthetic" or "file"
    std::string path;                  // JSONL file when source == "file"
    int n_classes = 8;
    std::size_t samples_per_class = 72;
    std::size_t joints = 15;
    std::size_t frames = 32;
    double noise = 0.5;
    std::optional<std::uint64_t> seed;  // defaults to the run seed
    std::size_t target_frames = 8;
};

struct ExperimentConfig {
    DatasetSpec dataset;
    GcnArchitecture arch;
    InitScheme init = InitScheme::uniform_mask;
    TrainConfig train;
    std::size_t finetune_epochs = 300;
    bool finetune_with_regularizer = false;  // otherwise fine-tuning minimizes the task loss alone
    bool magnitude = false;  // run: prune by magnitude instead of thresholding
    std::vector<std::uint64_t> seeds{0, 1, 2};
    std::vector<double> sweep;
    std::vector<RegKind> ablation;
    std::string output_dir = "out";

    static constexpr std::size_t desk_epochs = 600;
    static constexpr std::size_t paper_epochs = 2700;

    void validate() const {
        if (dataset.source != "synthetic" && dataset.source != "file")
            throw ConfigError("dataset.source must be \"synthetic\" or \"file\"");
        if (dataset.source == "file" && dataset.path.empty()) throw ConfigError("dataset.path is required for file data");
        if (dataset.source == "synthetic" &&
            (dataset.n_classes < 2 || dataset.samples_per_class < 2 || dataset.joints < 1 || dataset.frames < 1))
            throw ConfigError("synthetic dataset needs >= 2 classes, >= 2 samples per class and >= 1 joint/frame");
        if (!(dataset.noise >= 0.0)) throw ConfigError("dataset.noise must be >= 0");
        if (dataset.target_frames < 1) throw ConfigError("dataset.target_frames must be >= 1");
        arch.validate();
        train.validate();
        if (seeds.empty()) throw ConfigError("at least one seed is required");
        for (double t : sweep)
            if (!(t > 0.0 && t < 1.0)) throw ConfigError("sweep tpr values must lie in (0,1)");
        for (auto k : ablation)
            if (k == RegKind::none || k == RegKind::pfm)
                throw ConfigError("ablation lists baseline regularizers (l0, l1, l2cost, entropy) only");
        if (output_dir.empty()) throw ConfigError("output_dir must not be empty");
    }
};

// ---------------------------------------------------------------------------
// Config (JSON, every key optional; unknown keys are rejected)

namespace detail {

template <class T>
void take(const nlohmann::json& j, const char* key, T& dst, std::vector<std::string>& seen) {
    seen.emplace_back(key);
    if (!j.contains(key)) return;
    try {
        dst = j.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config key '") + key + "': " + e.what());
    }
}

inline void reject_unknown(const nlohmann::json& j, const std::vector<std::string>& seen, const std::string& where) {
    if (!j.is_object()) throw ConfigError("config section '" + where + "' must be an object");
    for (auto it = j.begin(); it != j.end(); ++it)
        if (std::find(seen.begin(), seen.end(), it.key()) == seen.end())
            throw ConfigError("unknown config key '" + where + it.key() + "'");
}

inline nlohmann::json section(const nlohmann::json& j, const char* key) {
    if (!j.contains(key)) return nlohmann::json::object();
    if (!j.at(key).is_object()) throw ConfigError(std::string("config section '") + key + "' must be an object");
    return j.at(key);
}

inline RegKind kind_from_config(const std::string& s) {
    try {
        return reg_kind_from_string(s);
    } catch (const Error& e) {
        throw ConfigError(e.what());
    }
}

}  // namespace detail

inline ExperimentConfig parse_config(const nlohmann::json& j) {
    ExperimentConfig c;
    std::vector<std::string> top;
    if (!j.is_object()) throw ConfigError("config must be a JSON object");

    for (const char* s : {"dataset", "model", "train", "regularizer"}) top.emplace_back(s);
    {
        auto d = detail::section(j, "dataset");
        std::vector<std::string> seen;
        detail::take(d, "source", c.dataset.source, seen);
        detail::take(d, "path", c.dataset.path, seen);
        detail::take(d, "n_classes", c.dataset.n_classes, seen);
        detail::take(d, "samples_per_class", c.dataset.samples_per_class, seen);
        detail::take(d, "joints", c.dataset.joints, seen);
        detail::take(d, "frames", c.dataset.frames, seen);
        detail::take(d, "noise", c.dataset.noise, seen);
        detail::take(d, "target_frames", c.dataset.target_frames, seen);
        seen.emplace_back("seed");
        if (d.contains("seed") && !d.at("seed").is_null()) c.dataset.seed = d.at("seed").get<std::uint64_t>();
        detail::reject_unknown(d, seen, "dataset.");
    }
    {
        auto m = detail::section(j, "model");
        std::vector<std::string> seen;
        detail::take(m, "heads", c.arch.heads, seen);
        detail::take(m, "conv_filters", c.arch.conv_filters, seen);
        detail::take(m, "fan_in_gain", c.arch.fan_in_gain, seen);
        std::string act = "relu", init = "uniform_mask";
        detail::take(m, "activation", act, seen);
        detail::take(m, "init", init, seen);
        detail::reject_unknown(m, seen, "model.");
        if (act == "relu") c.arch.activation = Activation::relu;
        else if (act == "identity") c.arch.activation = Activation::identity;
        else throw ConfigError("model.activation must be \"relu\" or \"identity\"");
        if (init == "uniform_mask") c.init = InitScheme::uniform_mask;
        else if (init == "glorot") c.init = InitScheme::glorot;
        else throw ConfigError("model.init must be \"uniform_mask\" or \"glorot\"");
    }
    c.train.epochs = ExperimentConfig::desk_epochs;
    {
        auto t = detail::section(j, "train");
        std::vector<std::string> seen;
        detail::take(t, "epochs", c.train.epochs, seen);
        detail::take(t, "finetune_epochs", c.finetune_epochs, seen);
        detail::take(t, "finetune_with_regularizer", c.finetune_with_regularizer, seen);
        detail::take(t, "batch_size", c.train.batch_size, seen);
        detail::take(t, "base_lr", c.train.base_lr, seen);
        detail::take(t, "adam_beta1", c.train.adam_beta1, seen);
        detail::take(t, "adam_beta2", c.train.adam_beta2, seen);
        detail::take(t, "adam_eps", c.train.adam_eps, seen);
        detail::take(t, "checkpoint_interval", c.train.checkpoint_interval, seen);
        detail::take(t, "binarize_tol", c.train.binarize_tol, seen);
        detail::reject_unknown(t, seen, "train.");
    }
    {
        auto r = detail::section(j, "regularizer");
        std::vector<std::string> seen;
        std::string kind = to_string(c.train.reg.kind), prune = "threshold";
        detail::take(r, "kind", kind, seen);
        detail::take(r, "lambda", c.train.reg.lambda, seen);
        detail::take(r, "pfm_joint", c.train.reg.pfm_joint, seen);
        detail::take(r, "target_tpr", c.train.reg.target_tpr, seen);
        detail::take(r, "beta", c.train.reg.beta, seen);
        detail::take(r, "l0_tau", c.train.reg.l0_tau, seen);
        detail::take(r, "normalize_by_count", c.train.reg.normalize_by_count, seen);
        detail::take(r, "prune", prune, seen);
        detail::reject_unknown(r, seen, "regularizer.");
        c.train.reg.kind = detail::kind_from_config(kind);
        if (prune == "magnitude") c.magnitude = true;
        else if (prune != "threshold") throw ConfigError("regularizer.prune must be \"threshold\" or \"magnitude\"");
    }
    for (const char* s : {"seeds", "sweep", "ablation", "output_dir"}) top.emplace_back(s);
    std::vector<std::string> ignore;
    detail::take(j, "seeds", c.seeds, ignore);
    detail::take(j, "sweep", c.sweep, ignore);
    detail::take(j, "output_dir", c.output_dir, ignore);
    if (j.contains("ablation")) {
        c.ablation.clear();
        for (const auto& k : j.at("ablation")) c.ablation.push_back(detail::kind_from_config(k.get<std::string>()));
    }
    detail::reject_unknown(j, top, "");
    c.validate();
    return c;
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config '" + path + "'");
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in, nullptr, true, true);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
    }
    return parse_config(j);
}

/// Resolved config with every default spelled out; parse_config(to_json(c)) == c.
inline nlohmann::json to_json(const ExperimentConfig& c) {
    nlohmann::json j;
    j["dataset"] = {{"source", c.dataset.source},
                    {"path", c.dataset.path},
                    {"n_classes", c.dataset.n_classes},
                    {"samples_per_class", c.dataset.samples_per_class},
                    {"joints", c.dataset.joints},
                    {"frames", c.dataset.frames},
                    {"noise", c.dataset.noise},
                    {"seed", c.dataset.seed ? nlohmann::json(*c.dataset.seed) : nlohmann::json(nullptr)},
                    {"target_frames", c.dataset.target_frames}};
    j["model"] = {{"heads", c.arch.heads},
                  {"conv_filters", c.arch.conv_filters},
                  {"fan_in_gain", c.arch.fan_in_gain},
                  {"activation", c.arch.activation == Activation::relu ? "relu" : "identity"},
                  {"init", c.init == InitScheme::uniform_mask ? "uniform_mask" : "glorot"}};
    j["train"] = {{"epochs", c.train.epochs},
                  {"finetune_epochs", c.finetune_epochs},
                  {"finetune_with_regularizer", c.finetune_with_regularizer},
                  {"batch_size", c.train.batch_size},
                  {"base_lr", c.train.base_lr},
                  {"adam_beta1", c.train.adam_beta1},
                  {"adam_beta2", c.train.adam_beta2},
                  {"adam_eps", c.train.adam_eps},
                  {"checkpoint_interval", c.train.checkpoint_interval},
                  {"binarize_tol", c.train.binarize_tol}};
    const auto& r = c.train.reg;
    j["regularizer"] = {{"kind", to_string(r.kind)},
                        {"lambda", r.lambda},
                        {"pfm_joint", r.pfm_joint},
                        {"target_tpr", r.target_tpr},
                        {"beta", r.beta},
                        {"l0_tau", r.l0_tau},
                        {"normalize_by_count", r.normalize_by_count},
                        {"prune", c.magnitude ? "magnitude" : "threshold"}};
    j["seeds"] = c.seeds;
    j["sweep"] = c.sweep;
    j["ablation"] = nlohmann::json::array();
    for (auto k : c.ablation) j["ablation"].push_back(to_string(k));
    j["output_dir"] = c.output_dir;
    return j;
}

// ---------------------------------------------------------------------------
// Results

struct ResultRow {
    std::string method;
    double tpr = 0.0;
    double observed_rate = 0.0;
    std::size_t kept_params = 0;
    double accuracy = 0.0;
    double binarization_fraction = 0.0;
    std::size_t dead_units = 0;
    std::uint64_t seed = 0;
    double wall_time_s = 0.0;
};

inline constexpr const char* results_header =
    "method,tpr,observed_rate,kept_params,accuracy,binarization_fraction,dead_units,seed,wall_time_s";

namespace detail {

inline std::string fmt_real(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

inline std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream in(line);
    while (std::getline(in, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

}  // namespace detail

/// One CSV line without a trailing newline.
inline std::string to_csv(const ResultRow& r) {
    using detail::fmt_real;
    return r.method + "," + fmt_real(r.tpr) + "," + fmt_real(r.observed_rate) + "," + std::to_string(r.kept_params) +
           "," + fmt_real(r.accuracy) + "," + fmt_real(r.binarization_fraction) + "," + std::to_string(r.dead_units) +
           "," + std::to_string(r.seed) + "," + fmt_real(r.wall_time_s);
}

inline void write_results_csv(const std::string& path, const std::vector<ResultRow>& rows) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open '" + path + "' for writing");
    out << results_header << '\n';
    for (const auto& r : rows) out << to_csv(r) << '\n';
}

inline std::vector<ResultRow> read_results_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open '" + path + "'");
    std::string line;
    if (!std::getline(in, line)) throw SchemaError("'" + path + "' is empty");
    const auto cols = detail::split_csv(line);
    std::map<std::string, std::size_t> at;
    for (std::size_t i = 0; i < cols.size(); ++i) at[cols[i]] = i;
    for (const auto& need : detail::split_csv(results_header))
        if (!at.count(need)) throw SchemaError("'" + path + "' lacks column '" + need + "'");
    std::vector<ResultRow> rows;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto cells = detail::split_csv(line);
        if (cells.size() != cols.size())
            throw ParseError(path + ":" + std::to_string(lineno) + ": expected " + std::to_string(cols.size()) +
                             " cells");
        try {
            ResultRow r;
            r.method = cells[at["method"]];
            r.tpr = std::stod(cells[at["tpr"]]);
            r.observed_rate = std::stod(cells[at["observed_rate"]]);
            r.kept_params = std::stoull(cells[at["kept_params"]]);
            r.accuracy = std::stod(cells[at["accuracy"]]);
            r.binarization_fraction = std::stod(cells[at["binarization_fraction"]]);
            r.dead_units = std::stoull(cells[at["dead_units"]]);
            r.seed = std::stoull(cells[at["seed"]]);
            r.wall_time_s = std::stod(cells[at["wall_time_s"]]);
            rows.push_back(std::move(r));
        } catch (const std::logic_error&) {
            throw ParseError(path + ":" + std::to_string(lineno) + ": unreadable number");
        }
    }
    return rows;
}

// ---------------------------------------------------------------------------
// Runs

/// A training-and-pruning recipe: the regularizer used for training and
/// fine-tuning, and how the hard masks are chosen.
struct Method {
    std::string label;
    RegularizerSpec reg;
    bool magnitude = false;
};

inline std::string method_label(const RegularizerSpec& reg, bool magnitude) {
    if (magnitude) return "magnitude";
    std::string s = "WR";
    if (reg.kind == RegKind::pfm) return s + "+PFM";
    if (reg.kind != RegKind::none) s += std::string("+") + to_string(reg.kind);
    if (reg.pfm_joint) s += "+PFM";
    return s;
}

inline Method method_from(const ExperimentConfig& c) {
    return {method_label(c.train.reg, c.magnitude), c.train.reg, c.magnitude};
}

struct PreparedData {
    SignalSet train, test;
    Tensor prior;
};

inline PreparedData prepare_data(const ExperimentConfig& c, std::uint64_t seed) {
    SkeletonDataset ds;
    if (c.dataset.source == "file") {
        ds = load_skeleton_jsonl(c.dataset.path);
    } else {
        SyntheticSpec s{c.dataset.n_classes, c.dataset.samples_per_class, c.dataset.joints, c.dataset.frames,
                        c.dataset.seed.value_or(seed), c.dataset.noise};
        ds = generate_synthetic(s);
        normalize_per_joint(ds);
    }
    if (ds.train.empty() || ds.test.empty()) throw DataError("dataset needs non-empty train and test splits");
    return {make_signals(ds, ds.train, c.dataset.target_frames), make_signals(ds, ds.test, c.dataset.target_frames),
            skeleton_adjacency(ds.topology, ds.joints)};
}

/// Architecture with data-determined sizes filled in.
inline GcnArchitecture resolved_arch(const ExperimentConfig& c, const PreparedData& d) {
    GcnArchitecture a = c.arch;
    a.n_nodes = d.train.nodes;
    a.in_channels = d.train.channels;
    a.n_classes = static_cast<std::size_t>(d.train.n_classes);
    return a;
}

inline std::string run_name(const Method& m, double tpr, std::uint64_t seed) {
    std::string slug;
    for (char ch : m.label) slug += (std::isalnum(static_cast<unsigned char>(ch)) ? static_cast<char>(std::tolower(ch)) : '_');
    char buf[64];
    std::snprintf(buf, sizeof buf, "_tpr%.4g_seed%llu", tpr, static_cast<unsigned long long>(seed));
    return slug + buf;
}

namespace detail {

inline void write_metrics(std::ostream& out, const char* phase, const std::vector<EpochMetrics>& ms) {
    for (const auto& m : ms)
        out << phase << ',' << m.epoch << ',' << fmt_real(m.ce) << ',' << fmt_real(m.energy) << ',' << fmt_real(m.lr)
            << ',' << fmt_real(m.observed_rate) << ',' << fmt_real(m.binarization_fraction) << ','
            << fmt_real(m.loss) << '\n';
}

}  // namespace detail

/// Train with the method's regularizer, fix hard masks (threshold z or global
/// magnitude), fine-tune the kept weights for finetune_epochs, and report on
/// the test split. With `out` set, writes
/// metrics_<run>.csv and checkpoint_<run>.bin there.
inline ResultRow run_method(const ExperimentConfig& c, const Method& method, std::uint64_t seed,
                            const std::optional<fs::path>& out = std::nullopt) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto data = prepare_data(c, seed);
    TrainConfig tc = c.train;
    tc.reg = method.reg;
    tc.seed = seed;
    tc.validate();
    const double z = tc.threshold();

    auto model = build_model(resolved_arch(c, data), seed, c.init, data.prior);
    auto main = train(std::move(model), data.train, tc, &data.test);
    const double binarized = binarization_fraction(main.model, tc.binarize_tol);
    const auto masks = method.magnitude ? magnitude_prune(main.model, tc.reg.target_tpr) : binarize_masks(main.model, z);

    GcnModel final_model = apply_masks(main.model, masks);
    std::vector<EpochMetrics> ft_metrics;
    if (c.finetune_epochs > 0) {
        TrainConfig ft = tc;
        ft.epochs = c.finetune_epochs;
        if (!c.finetune_with_regularizer) {
            ft.reg.kind = RegKind::none;
            ft.reg.pfm_joint = false;
        }
        auto res = train(std::move(final_model), data.train, ft, &data.test);
        ft_metrics = std::move(res.metrics);
        final_model = std::move(res.model);
    }

    ResultRow row;
    row.method = method.label;
    row.tpr = tc.reg.target_tpr;
    row.observed_rate = mask_pruning_rate(masks);
    row.kept_params = kept_count(masks);
    row.accuracy = evaluate(final_model, data.test);
    row.binarization_fraction = binarized;
    row.dead_units = connectivity_report(final_model, masks).dead_output_units();
    row.seed = seed;

    if (out) {
        fs::create_directories(*out);
        const auto name = run_name(method, row.tpr, seed);
        std::ofstream metrics(*out / ("metrics_" + name + ".csv"));
        if (!metrics) throw DataError("cannot write metrics into '" + out->string() + "'");
        metrics << "phase,epoch,ce,energy,lr,observed_rate,binarization_fraction,loss\n";
        detail::write_metrics(metrics, "train", main.metrics);
        detail::write_metrics(metrics, "finetune", ft_metrics);
        save_checkpoint(final_model, (*out / ("checkpoint_" + name + ".bin")).string());
    }
    row.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return row;
}

inline void echo_config(const ExperimentConfig& c) {
    fs::create_directories(c.output_dir);
    std::ofstream out(fs::path(c.output_dir) / "config.resolved.json");
    if (!out) throw DataError("cannot write into output_dir '" + c.output_dir + "'");
    out << to_json(c).dump(2) << '\n';
}

/// Single method from the config, first seed.
inline ResultRow run(const ExperimentConfig& c) {
    c.validate();
    echo_config(c);
    auto row = run_method(c, method_from(c), c.seeds.front(), fs::path(c.output_dir));
    write_results_csv((fs::path(c.output_dir) / "results.csv").string(), {row});
    return row;
}

struct SweepResult {
    std::vector<ResultRow> rows;
    std::vector<std::string> failures;
};

/// One PFM run per (tpr, seed). Failed runs are recorded and skipped.
inline SweepResult sweep_tpr(const ExperimentConfig& c) {
    c.validate();
    if (c.sweep.empty()) throw ConfigError("sweep needs at least one tpr value");
    echo_config(c);
    SweepResult res;
    for (double tpr : c.sweep)
        for (auto seed : c.seeds) {
            Method m{"WR+PFM", c.train.reg, false};
            m.reg.kind = RegKind::pfm;
            m.reg.pfm_joint = false;
            m.reg.target_tpr = tpr;
            try {
                res.rows.push_back(run_method(c, m, seed, fs::path(c.output_dir)));
            } catch (const NumericError& e) {
                res.failures.push_back(run_name(m, tpr, seed) + ": " + e.what());
                std::cerr << "sweep: " << res.failures.back() << '\n';
            }
        }
    const fs::path dir(c.output_dir);
    write_results_csv((dir / "results.csv").string(), res.rows);
    std::ofstream align(dir / "alignment.dat");
    align << "# tpr observed_rate\n";
    for (const auto& r : res.rows) align << detail::fmt_real(r.tpr) << ' ' << detail::fmt_real(r.observed_rate) << '\n';
    std::ofstream acc(dir / "accuracy_vs_rate.dat");
    acc << "# observed_rate accuracy\n";
    for (const auto& r : res.rows)
        acc << detail::fmt_real(r.observed_rate) << ' ' << detail::fmt_real(r.accuracy) << '\n';
    if (!res.failures.empty()) {
        std::ofstream f(dir / "failures.txt");
        for (const auto& s : res.failures) f << s << '\n';
    }
    return res;
}

/// WR alone, WR + each listed regularizer, the same with a balanced PFM term,
/// WR + PFM at target_tpr, and magnitude pruning at target_tpr; per seed.
inline std::vector<Method> ablation_methods(const ExperimentConfig& c) {
    std::vector<Method> ms;
    auto base = c.train.reg;
    base.pfm_joint = false;
    auto with = [&](RegKind k, bool joint) {
        auto r = base;
        r.kind = k;
        r.pfm_joint = joint;
        return Method{method_label(r, false), r, false};
    };
    ms.push_back(with(RegKind::none, false));
    for (auto k : c.ablation) {
        ms.push_back(with(k, false));
        ms.push_back(with(k, true));
    }
    ms.push_back(with(RegKind::pfm, false));
    auto mag = with(RegKind::none, false);
    mag.magnitude = true;
    mag.label = method_label(mag.reg, true);
    ms.push_back(mag);
    return ms;
}

struct SummaryRow {
    std::string method;
    std::size_t runs = 0;
    double observed_rate = 0.0, accuracy = 0.0, binarization_fraction = 0.0, dead_units = 0.0, kept_params = 0.0;
};

/// Per-method means in first-appearance order.
inline std::vector<SummaryRow> summarize(const std::vector<ResultRow>& rows) {
    std::vector<SummaryRow> out;
    for (const auto& r : rows) {
        auto it = std::find_if(out.begin(), out.end(), [&](const SummaryRow& s) { return s.method == r.method; });
        if (it == out.end()) {
            out.push_back({r.method});
            it = out.end() - 1;
        }
        ++it->runs;
        it->observed_rate += r.observed_rate;
        it->accuracy += r.accuracy;
        it->binarization_fraction += r.binarization_fraction;
        it->dead_units += static_cast<double>(r.dead_units);
        it->kept_params += static_cast<double>(r.kept_params);
    }
    for (auto& s : out) {
        const auto n = static_cast<double>(s.runs);
        s.observed_rate /= n;
        s.accuracy /= n;
        s.binarization_fraction /= n;
        s.dead_units /= n;
        s.kept_params /= n;
    }
    return out;
}

inline std::vector<ResultRow> ablate(const ExperimentConfig& c) {
    c.validate();
    echo_config(c);
    std::vector<ResultRow> rows;
    for (const auto& m : ablation_methods(c))
        for (auto seed : c.seeds) rows.push_back(run_method(c, m, seed, fs::path(c.output_dir)));
    const fs::path dir(c.output_dir);
    write_results_csv((dir / "results.csv").string(), rows);
    std::ofstream sum(dir / "summary.csv");
    sum << "method,runs,observed_rate,kept_params,accuracy,binarization_fraction,dead_units\n";
    for (const auto& s : summarize(rows))
        sum << s.method << ',' << s.runs << ',' << detail::fmt_real(s.observed_rate) << ','
            << detail::fmt_real(s.kept_params) << ',' << detail::fmt_real(s.accuracy) << ','
            << detail::fmt_real(s.binarization_fraction) << ',' << detail::fmt_real(s.dead_units) << '\n';
    return rows;
}

// ---------------------------------------------------------------------------
// Gradient check

struct GradcheckLine {
    RegKind kind;
    double max_rel_error;
};

inline constexpr double gradcheck_tolerance = 1e-4;

/// Full objective on a random 5-node, two-head model, one line per kind.
inline std::vector<GradcheckLine> gradcheck_report(std::uint64_t seed) {
    GcnArchitecture a;
    a.n_nodes = 5;
    a.in_channels = 6;
    a.heads = 2;
    a.conv_filters = 3;
    a.n_classes = 3;
    const auto model = build_model(a, seed);
    std::mt19937_64 rng(seed + 1);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<double> x(4 * 6 * 5);
    for (auto& v : x) v = u(rng);
    const Tensor batch({4, 6, 5}, x);
    const std::vector<int> labels{0, 1, 2, 1};
    std::vector<GradcheckLine> out;
    for (auto kind : all_reg_kinds) {
        TrainConfig cfg;
        cfg.reg.kind = kind;
        cfg.reg.target_tpr = 0.8;
        cfg.reg.lambda = 1.0;
        const auto latents = model.latents();
        const double err = grad_check(
            [&](std::span<const Tensor> ls) {
                GcnModel probe = model;
                probe.set_latents({ls.begin(), ls.end()});
                return total_loss(probe, batch, labels, cfg);
            },
            latents);
        out.push_back({kind, err});
    }
    return out;
}

// ---------------------------------------------------------------------------
// Plot series

/// Regularizer curves over m in [0,1] plus alignment and accuracy-vs-rate
/// series from a results CSV. Plain "x y" text files; rewriting is idempotent.
inline std::vector<fs::path> plot_data(const std::string& results_csv, const fs::path& out_dir,
                                       double tpr_for_curves = 0.5, double beta = 3.0) {
    const auto rows = read_results_csv(results_csv);
    fs::create_directories(out_dir);
    std::vector<fs::path> written;
    auto series = [&](const std::string& name, const std::string& header,
                      const std::vector<std::pair<double, double>>& pts) {
        auto p = out_dir / name;
        std::ofstream f(p);
        if (!f) throw DataError("cannot write '" + p.string() + "'");
        f << "# " << header << '\n';
        for (auto [x, y] : pts) f << detail::fmt_real(x) << ' ' << detail::fmt_real(y) << '\n';
        written.push_back(p);
    };

    const auto pf = params_for_tpr(tpr_for_curves, beta);
    const double keep = 1.0 - tpr_for_curves, tau = RegularizerSpec{}.l0_tau;
    std::vector<std::pair<double, double>> v, l0, l1, l2, ent;
    for (int i = 0; i <= 200; ++i) {
        const double m = i / 200.0;
        v.emplace_back(m, ultra_local(m, pf));
        l0.emplace_back(m, 1.0 - std::exp(-(m / tau) * (m / tau)));
        l1.emplace_back(m, m);
        l2.emplace_back(m, (m - keep) * (m - keep));
        const double a = std::max(m, 1e-12), b = std::max(1.0 - m, 1e-12);
        ent.emplace_back(m, -(m * std::log(a) + (1.0 - m) * std::log(b)));
    }
    series("curve_pfm.dat", "m V(m)", v);
    series("curve_l0.dat", "m l0(m)", l0);
    series("curve_l1.dat", "m l1(m)", l1);
    series("curve_l2.dat", "m l2(m)", l2);
    series("curve_entropy.dat", "m entropy(m)", ent);

    std::vector<std::pair<double, double>> align;
    std::map<std::string, std::vector<std::pair<double, double>>> acc;
    for (const auto& r : rows) {
        if (r.method == "WR+PFM") align.emplace_back(r.tpr, r.observed_rate);
        acc[r.method].emplace_back(r.observed_rate, r.accuracy);
    }
    series("alignment.dat", "tpr observed_rate", align);
    for (const auto& [method, pts] : acc) {
        std::string slug;
        for (char ch : method) slug += std::isalnum(static_cast<unsigned char>(ch)) ? static_cast<char>(std::tolower(ch)) : '_';
        series("accuracy_vs_rate_" + slug + ".dat", "observed_rate accuracy (" + method + ")", pts);
    }
    return written;
}

// ---------------------------------------------------------------------------
// Parameter-count calibration

struct ArchMatch {
    GcnArchitecture arch;
    std::size_t frames;  // s = 3 * frames
};

/// Every (nodes, frames, heads, filters) within the given ranges whose
/// parameter count equals `target`.
inline std::vector<ArchMatch> search_param_count(std::size_t target, std::size_t n_classes,
                                                 const std::vector<std::size_t>& node_counts,
                                                 std::size_t max_frames = 64, std::size_t max_heads = 8,
                                                 std::size_t max_filters = 256) {
    std::vector<ArchMatch> out;
    for (auto n : node_counts)
        for (std::size_t t = 1; t <= max_frames; ++t)
            for (std::size_t k = 1; k <= max_heads; ++k)
                for (std::size_t c = 1; c <= max_filters; ++c) {
                    GcnArchitecture a;
                    a.n_nodes = n;
                    a.in_channels = 3 * t;
                    a.heads = k;
                    a.conv_filters = c;
                    a.n_classes = n_classes;
                    if (a.param_count() == target) out.push_back({a, t});
                }
    return out;
}

}  // namespace pfgcn
