#pragma once

// Skeleton sequences: synthetic generation, JSONL storage, per-joint
// normalization and conversion into GCN node signals.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numbers>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "pfgcn/tensor.hpp"

namespace pfgcn {

using Edge = std::pair<std::size_t, std::size_t>;

struct SkeletonSequence {
    std::size_t joints = 0;
    std::size_t frames = 0;
    std::vector<double> coords;  // [joint][frame][xyz]
    int label = 0;

    double coord(std::size_t j, std::size_t t, std::size_t c) const { return coords[(j * frames + t) * 3 + c]; }
    double& coord(std::size_t j, std::size_t t, std::size_t c) { return coords[(j * frames + t) * 3 + c]; }

    bool operator==(const SkeletonSequence&) const = default;
};

struct SkeletonDataset {
    std::vector<SkeletonSequence> sequences;
    int n_classes = 0;
    std::size_t joints = 0;
    std::vector<Edge> topology;
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;

    bool operator==(const SkeletonDataset&) const = default;

    void validate() const {
        if (n_classes < 1) throw DataError("dataset needs at least one class");
        for (const auto& s : sequences) {
            if (s.joints != joints) throw SchemaError("inconsistent joint counts in dataset");
            if (s.frames == 0) throw DataError("sequence with no frames");
            if (s.coords.size() != s.joints * s.frames * 3) throw SchemaError("coordinate array has wrong size");
            if (s.label < 0 || s.label >= n_classes)
                throw DataError("label " + std::to_string(s.label) + " outside [0, " + std::to_string(n_classes) + ")");
            for (double v : s.coords)
                if (!std::isfinite(v)) throw DataError("non-finite coordinate");
        }
        for (auto [a, b] : topology)
            if (a >= joints || b >= joints)
                throw DataError("edge (" + std::to_string(a) + "," + std::to_string(b) + ") references a missing joint");
        std::vector<char> used(sequences.size(), 0);
        for (auto* split : {&train, &test})
            for (auto i : *split) {
                if (i >= sequences.size()) throw DataError("split index out of range");
                if (used[i]) throw DataError("train and test splits overlap");
                used[i] = 1;
            }
    }
};

/// Stratified split: per class, a seeded shuffle then the first
/// round(train_fraction·count) samples go to training.
inline void stratified_split(SkeletonDataset& ds, std::uint64_t seed, double train_fraction = 0.7) {
    std::mt19937_64 rng(seed ^ 0x5eedULL);
    ds.train.clear();
    ds.test.clear();
    for (int k = 0; k < ds.n_classes; ++k) {
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < ds.sequences.size(); ++i)
            if (ds.sequences[i].label == k) idx.push_back(i);
        std::shuffle(idx.begin(), idx.end(), rng);
        auto n_train = static_cast<std::size_t>(std::lround(train_fraction * static_cast<double>(idx.size())));
        ds.train.insert(ds.train.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
        ds.test.insert(ds.test.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_train), idx.end());
    }
    std::sort(ds.train.begin(), ds.train.end());
    std::sort(ds.test.begin(), ds.test.end());
}

struct SyntheticSpec {
    int n_classes = 8;
    std::size_t samples_per_class = 72;
    std::size_t joints = 15;
    std::size_t frames = 32;
    std::uint64_t seed = 0;
    double noise = 0.5;
};

/// Chain skeletons whose joints oscillate with a class-specific frequency,
/// phase and travelling-wave offset along the chain. Per-sample amplitude and
/// phase jitter plus Gaussian coordinate noise make classes overlap a little.
inline SkeletonDataset generate_synthetic(const SyntheticSpec& spec) {
    if (spec.n_classes < 1 || spec.samples_per_class < 1 || spec.joints < 1 || spec.frames < 1)
        throw DataError("synthetic dataset counts must all be >= 1");
    constexpr double two_pi = 2.0 * std::numbers::pi;
    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);

    SkeletonDataset ds;
    ds.n_classes = spec.n_classes;
    ds.joints = spec.joints;
    for (std::size_t j = 1; j < spec.joints; ++j) ds.topology.emplace_back(j - 1, j);

    const auto K = static_cast<double>(spec.n_classes);
    for (int k = 0; k < spec.n_classes; ++k) {
        const double freq = spec.n_classes > 1 ? 0.5 + 1.5 * k / (K - 1.0) : 0.5;
        const double phase = std::numbers::pi * k / K;
        const double wave = 0.6 * ((k % 3) - 1.0) / static_cast<double>(spec.joints);
        for (std::size_t n = 0; n < spec.samples_per_class; ++n) {
            SkeletonSequence seq;
            seq.joints = spec.joints;
            seq.frames = spec.frames;
            seq.label = k;
            seq.coords.resize(spec.joints * spec.frames * 3);
            const double amp = 1.0 + 0.2 * unit(rng);
            const double jitter = 0.3 * gauss(rng);
            for (std::size_t j = 0; j < spec.joints; ++j) {
                const double reach = static_cast<double>(j + 1) / static_cast<double>(spec.joints);
                for (std::size_t t = 0; t < spec.frames; ++t) {
                    const double tau = static_cast<double>(t) / static_cast<double>(spec.frames);
                    const double theta = two_pi * freq * tau + phase + jitter + two_pi * wave * static_cast<double>(j);
                    seq.coord(j, t, 0) = amp * reach * std::sin(theta) + spec.noise * gauss(rng);
                    seq.coord(j, t, 1) = static_cast<double>(j) + 0.3 * amp * std::cos(theta) + spec.noise * gauss(rng);
                    seq.coord(j, t, 2) = 0.5 * amp * reach * std::sin(2.0 * theta) + spec.noise * gauss(rng);
                }
            }
            ds.sequences.push_back(std::move(seq));
        }
    }
    stratified_split(ds, spec.seed);
    return ds;
}

inline SkeletonDataset generate_synthetic(int n_classes, std::size_t samples_per_class, std::size_t joints,
                                          std::size_t frames, std::uint64_t seed) {
    return generate_synthetic(SyntheticSpec{n_classes, samples_per_class, joints, frames, seed});
}

/// Node signal [3T × J]: resample to T frames by linear interpolation, then
/// node u's channel vector is (x_1, y_1, z_1, ..., x_T, y_T, z_T).
inline Tensor to_node_signal(const SkeletonSequence& seq, std::size_t target_frames) {
    if (seq.frames == 0) throw DataError("cannot build a node signal from a sequence with no frames");
    if (target_frames == 0) throw DataError("target frame count must be >= 1");
    const std::size_t n = seq.joints, s = 3 * target_frames;
    std::vector<double> out(s * n);
    for (std::size_t i = 0; i < target_frames; ++i) {
        const double pos = target_frames > 1
            ? static_cast<double>(i) * static_cast<double>(seq.frames - 1) / static_cast<double>(target_frames - 1)
            : 0.0;
        const auto lo = std::min(static_cast<std::size_t>(pos), seq.frames - 1);
        const auto hi = std::min(lo + 1, seq.frames - 1);
        const double w = pos - static_cast<double>(lo);
        for (std::size_t u = 0; u < n; ++u)
            for (std::size_t c = 0; c < 3; ++c) {
                const double v = w == 0.0 ? seq.coord(u, lo, c)
                                          : (1.0 - w) * seq.coord(u, lo, c) + w * seq.coord(u, hi, c);
                out[(3 * i + c) * n + u] = v;
            }
    }
    return Tensor({s, n}, std::move(out));
}

/// Symmetric 0/1 adjacency with self-loops.
inline Tensor skeleton_adjacency(const std::vector<Edge>& topology, std::size_t joints) {
    if (joints == 0) throw DataError("skeleton needs at least one joint");
    std::vector<double> a(joints * joints, 0.0);
    for (std::size_t i = 0; i < joints; ++i) a[i * joints + i] = 1.0;
    for (auto [u, v] : topology) {
        if (u >= joints || v >= joints)
            throw DataError("edge (" + std::to_string(u) + "," + std::to_string(v) + ") references a missing joint");
        a[u * joints + v] = 1.0;
        a[v * joints + u] = 1.0;
    }
    return Tensor({joints, joints}, std::move(a));
}

struct JointNormalization {
    std::vector<double> mean;   // [joint][xyz]
    std::vector<double> scale;  // [joint]
};

/// Per joint: subtract the training-split mean position and divide by the RMS
/// distance to it. Statistics come from the training split only.
inline JointNormalization normalize_per_joint(SkeletonDataset& ds) {
    const std::size_t J = ds.joints;
    JointNormalization st{std::vector<double>(J * 3, 0.0), std::vector<double>(J, 0.0)};
    std::vector<double> count(J, 0.0);
    for (auto i : ds.train) {
        const auto& s = ds.sequences[i];
        for (std::size_t j = 0; j < J; ++j)
            for (std::size_t t = 0; t < s.frames; ++t) {
                for (std::size_t c = 0; c < 3; ++c) st.mean[j * 3 + c] += s.coord(j, t, c);
                count[j] += 1.0;
            }
    }
    for (std::size_t j = 0; j < J; ++j)
        for (std::size_t c = 0; c < 3; ++c) st.mean[j * 3 + c] /= std::max(count[j], 1.0);
    for (auto i : ds.train) {
        const auto& s = ds.sequences[i];
        for (std::size_t j = 0; j < J; ++j)
            for (std::size_t t = 0; t < s.frames; ++t)
                for (std::size_t c = 0; c < 3; ++c) {
                    const double d = s.coord(j, t, c) - st.mean[j * 3 + c];
                    st.scale[j] += d * d;
                }
    }
    for (std::size_t j = 0; j < J; ++j) {
        st.scale[j] = std::sqrt(st.scale[j] / std::max(count[j], 1.0));
        if (!(st.scale[j] > 0.0)) st.scale[j] = 1.0;
    }
    for (auto& s : ds.sequences)
        for (std::size_t j = 0; j < J; ++j)
            for (std::size_t t = 0; t < s.frames; ++t)
                for (std::size_t c = 0; c < 3; ++c)
                    s.coord(j, t, c) = (s.coord(j, t, c) - st.mean[j * 3 + c]) / st.scale[j];
    return st;
}

// ---------------------------------------------------------------------------
// JSONL storage
//
// Line 1 (header): {"format":"pfgcn-skeleton","version":1,"n_classes":K,
//                   "joints":J,"topology":[[a,b],...]}
// Other lines:     {"label":k,"joints":J,"coords":[[[x,y,z] per frame] per joint],
//                   "split":"train"|"test"}   (split optional)

inline void write_skeleton_jsonl(const SkeletonDataset& ds, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open '" + path + "' for writing");
    nlohmann::json header = {{"format", "pfgcn-skeleton"}, {"version", 1}, {"n_classes", ds.n_classes},
                             {"joints", ds.joints}, {"topology", nlohmann::json::array()}};
    for (auto [a, b] : ds.topology) header["topology"].push_back({a, b});
    out << header.dump() << '\n';
    std::vector<const char*> split(ds.sequences.size(), nullptr);
    for (auto i : ds.train) split[i] = "train";
    for (auto i : ds.test) split[i] = "test";
    for (std::size_t i = 0; i < ds.sequences.size(); ++i) {
        const auto& s = ds.sequences[i];
        nlohmann::json coords = nlohmann::json::array();
        for (std::size_t j = 0; j < s.joints; ++j) {
            nlohmann::json frames = nlohmann::json::array();
            for (std::size_t t = 0; t < s.frames; ++t)
                frames.push_back({s.coord(j, t, 0), s.coord(j, t, 1), s.coord(j, t, 2)});
            coords.push_back(std::move(frames));
        }
        nlohmann::json rec = {{"label", s.label}, {"joints", s.joints}, {"coords", std::move(coords)}};
        if (split[i]) rec["split"] = split[i];
        out << rec.dump() << '\n';
    }
}

/// Parses and validates a dataset file; applies per-joint normalization
/// from the training split unless disabled.
inline SkeletonDataset load_skeleton_jsonl(const std::string& path, bool normalize = true) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open '" + path + "'");
    SkeletonDataset ds;
    std::string line;
    std::size_t lineno = 0;
    bool have_header = false, any_split = false;
    std::vector<std::string> splits;
    auto fail = [&](const std::string& why) -> ParseError {
        return ParseError(path + ":" + std::to_string(lineno) + ": " + why);
    };
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw fail(std::string("malformed JSON: ") + e.what());
        }
        try {
            if (!have_header) {
                if (j.value("format", "") != "pfgcn-skeleton") throw fail("missing pfgcn-skeleton header line");
                ds.n_classes = j.at("n_classes").get<int>();
                ds.joints = j.at("joints").get<std::size_t>();
                for (const auto& e : j.at("topology")) ds.topology.emplace_back(e.at(0).get<std::size_t>(), e.at(1).get<std::size_t>());
                have_header = true;
                continue;
            }
            SkeletonSequence s;
            s.label = j.at("label").get<int>();
            s.joints = j.at("joints").get<std::size_t>();
            const auto& coords = j.at("coords");
            if (s.joints != ds.joints || coords.size() != s.joints)
                throw SchemaError(path + ":" + std::to_string(lineno) + ": expected " + std::to_string(ds.joints) +
                                  " joints");
            s.frames = coords.at(0).size();
            s.coords.reserve(s.joints * s.frames * 3);
            for (const auto& joint : coords) {
                if (joint.size() != s.frames)
                    throw SchemaError(path + ":" + std::to_string(lineno) + ": joints have different frame counts");
                for (const auto& xyz : joint) {
                    if (xyz.size() != 3) throw fail("coordinate triple expected");
                    for (const auto& c : xyz) s.coords.push_back(c.get<double>());
                }
            }
            splits.push_back(j.value("split", ""));
            any_split = any_split || !splits.back().empty();
            ds.sequences.push_back(std::move(s));
        } catch (const nlohmann::json::exception& e) {
            throw fail(std::string("schema violation: ") + e.what());
        }
    }
    if (!have_header) throw DataError("'" + path + "' is empty: expected a header line");
    if (ds.sequences.empty()) throw DataError("'" + path + "' holds no sequences");
    if (any_split) {
        for (std::size_t i = 0; i < splits.size(); ++i) {
            if (splits[i] == "train") ds.train.push_back(i);
            else if (splits[i] == "test") ds.test.push_back(i);
            else throw DataError("sequence " + std::to_string(i) + " has unknown split '" + splits[i] + "'");
        }
    } else {
        stratified_split(ds, 0);
    }
    ds.validate();
    if (normalize) normalize_per_joint(ds);
    return ds;
}

// ---------------------------------------------------------------------------

/// Flattened node signals of one split, ready for batching.
struct SignalSet {
    std::size_t channels = 0;  // s
    std::size_t nodes = 0;     // n
    int n_classes = 0;
    std::vector<double> signals;  // [sample][s][n]
    std::vector<int> labels;

    std::size_t size() const { return labels.size(); }
    std::size_t sample_size() const { return channels * nodes; }
};

inline SignalSet make_signals(const SkeletonDataset& ds, const std::vector<std::size_t>& indices,
                              std::size_t target_frames) {
    SignalSet out;
    out.channels = 3 * target_frames;
    out.nodes = ds.joints;
    out.n_classes = ds.n_classes;
    out.signals.reserve(indices.size() * out.sample_size());
    for (auto i : indices) {
        Tensor u = to_node_signal(ds.sequences.at(i), target_frames);
        out.signals.insert(out.signals.end(), u.values().begin(), u.values().end());
        out.labels.push_back(ds.sequences[i].label);
    }
    return out;
}

}  // namespace pfgcn
