#pragma once

// One multi-head aggregation + convolution block followed by a dense
// classifier. Every weight tensor is stored as a latent and used through
// latent ⊙ psi(latent).

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "pfgcn/data.hpp"
#include "pfgcn/phasefield.hpp"

namespace pfgcn {

enum class Activation { relu, identity };

inline Tensor activate(const Tensor& x, Activation f) { return f == Activation::relu ? relu(x) : x; }

/// How latents are drawn at construction.
enum class InitScheme {
    // psi(latent) ~ U(0,1) entrywise (stratified per tensor), random signs; adjacency ranks put the
    // largest draws on skeleton edges and self-loops.
    uniform_mask,
    // uniform in [-a, a], a = sqrt(6/(fan_in+fan_out)); adjacency = skeleton + N(0, 0.01).
    glorot,
};

struct GcnArchitecture {
    std::size_t n_nodes = 15;       // n
    std::size_t in_channels = 24;   // s
    std::size_t heads = 1;          // K
    std::size_t conv_filters = 32;  // C
    std::size_t n_classes = 8;
    Activation activation = Activation::relu;
    // Multiply each layer's effective weights by 1/sqrt(fan_in). Constant,
    // not trained, and not counted as a parameter.
    bool fan_in_gain = true;

    void validate() const {
        if (n_nodes < 1 || in_channels < 1 || heads < 1 || conv_filters < 1)
            throw ConfigError("architecture counts must all be >= 1");
        if (n_classes < 2) throw ConfigError("architecture needs at least two classes");
    }

    std::size_t param_count() const {
        return heads * n_nodes * n_nodes + heads * in_channels * conv_filters + n_nodes * conv_filters * n_classes;
    }

    double adjacency_gain() const { return fan_in_gain ? 1.0 / std::sqrt(static_cast<double>(n_nodes)) : 1.0; }
    double conv_gain() const { return fan_in_gain ? 1.0 / std::sqrt(static_cast<double>(in_channels)) : 1.0; }
    double dense_gain() const {
        return fan_in_gain ? 1.0 / std::sqrt(static_cast<double>(n_nodes * conv_filters)) : 1.0;
    }

    bool operator==(const GcnArchitecture&) const = default;
};

struct GcnModel {
    GcnArchitecture arch;
    std::vector<Tensor> adjacency;  // K latents [n×n]
    std::vector<Tensor> filters;    // K latents [s×C]
    Tensor dense;                   // latent [(n·C)×classes]
    // Optional binary masks, one per latent in latents() order.
    std::vector<Tensor> hard_masks;

    /// Latents in a fixed order: adjacency heads, filter heads, dense.
    std::vector<Tensor> latents() const {
        std::vector<Tensor> out(adjacency);
        out.insert(out.end(), filters.begin(), filters.end());
        out.push_back(dense);
        return out;
    }

    GcnModel clone() const {
        GcnModel m;
        m.arch = arch;
        for (const auto& a : adjacency) m.adjacency.push_back(a.clone());
        for (const auto& w : filters) m.filters.push_back(w.clone());
        m.dense = dense.clone();
        for (const auto& h : hard_masks) m.hard_masks.push_back(h.clone(false));
        return m;
    }

    /// Replaces the latent storage from a flat list in latents() order.
    void set_latents(const std::vector<Tensor>& ls) {
        const std::size_t K = arch.heads;
        if (ls.size() != 2 * K + 1) throw DimensionError("expected " + std::to_string(2 * K + 1) + " latents");
        for (std::size_t k = 0; k < K; ++k) {
            adjacency[k] = ls[k];
            filters[k] = ls[K + k];
        }
        dense = ls[2 * K];
    }

    std::vector<double> gains() const {
        std::vector<double> g(arch.heads, arch.adjacency_gain());
        g.insert(g.end(), arch.heads, arch.conv_gain());
        g.push_back(arch.dense_gain());
        return g;
    }
};

inline std::size_t param_count(const GcnModel& m) {
    std::size_t n = 0;
    for (const auto& l : m.latents()) n += l.size();
    return n;
}

/// f(sum_k A_k U^T W_k) for a single graph signal U [s×n]; returns [n×C].
inline Tensor gcn_block_forward(const Tensor& signal, std::span<const Tensor> adjacencies,
                                std::span<const Tensor> filters, Activation f) {
    if (adjacencies.size() != filters.size())
        throw ConfigError("gcn block: " + std::to_string(adjacencies.size()) + " adjacency heads but " +
                          std::to_string(filters.size()) + " filter heads");
    if (adjacencies.empty()) throw ConfigError("gcn block needs at least one head");
    Tensor ut = transpose(signal);
    std::vector<Tensor> heads;
    for (std::size_t k = 0; k < adjacencies.size(); ++k) heads.push_back(matmul(matmul(adjacencies[k], ut), filters[k]));
    return activate(add_all(heads), f);
}

namespace detail {

inline std::vector<double> uniform_mask_latents(std::size_t count, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    std::bernoulli_distribution coin(0.5);
    // stratified: one draw per interval [i/count, (i+1)/count), then shuffled
    std::vector<double> out(count);
    for (std::size_t i = 0; i < count; ++i) {
        const double mag = psi_inverse((static_cast<double>(i) + u01(rng)) / static_cast<double>(count));
        out[i] = coin(rng) ? mag : -mag;
    }
    std::shuffle(out.begin(), out.end(), rng);
    return out;
}

inline std::vector<double> glorot_latents(std::size_t count, double fan_in, double fan_out, std::mt19937_64& rng) {
    const double a = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-a, a);
    std::vector<double> out(count);
    for (auto& v : out) v = dist(rng);
    return out;
}

}  // namespace detail

/// Deterministic per seed. `prior` is the anatomical adjacency [n×n]; when
/// absent the identity (self-loops only) is used.
inline GcnModel build_model(const GcnArchitecture& arch, std::uint64_t seed,
                            InitScheme scheme = InitScheme::uniform_mask,
                            const std::optional<Tensor>& prior = std::nullopt) {
    arch.validate();
    const std::size_t n = arch.n_nodes, s = arch.in_channels, C = arch.conv_filters, K = arch.heads;
    const Tensor anatomy = prior ? *prior : Tensor::identity(n);
    if (anatomy.shape() != Shape{n, n}) throw DimensionError("adjacency prior must be " + shape_str({n, n}));

    std::mt19937_64 rng(seed);
    GcnModel m;
    m.arch = arch;
    for (std::size_t k = 0; k < K; ++k) {
        std::vector<double> a;
        if (scheme == InitScheme::uniform_mask) {
            // Same marginal law as every other latent; only the placement
            // follows the skeleton.
            auto draws = detail::uniform_mask_latents(n * n, rng);
            std::sort(draws.begin(), draws.end(), [](double x, double y) { return std::abs(x) > std::abs(y); });
            std::vector<std::size_t> edges, rest;
            for (std::size_t i = 0; i < n * n; ++i) (anatomy[i] != 0.0 ? edges : rest).push_back(i);
            std::shuffle(edges.begin(), edges.end(), rng);
            std::shuffle(rest.begin(), rest.end(), rng);
            a.assign(n * n, 0.0);
            std::size_t next = 0;
            for (auto i : edges) a[i] = std::abs(draws[next++]);
            for (auto i : rest) a[i] = draws[next++];
        } else {
            std::normal_distribution<double> noise(0.0, 0.01);
            a.resize(n * n);
            for (std::size_t i = 0; i < n * n; ++i) a[i] = anatomy[i] + noise(rng);
        }
        m.adjacency.emplace_back(Shape{n, n}, std::move(a), true);
    }
    for (std::size_t k = 0; k < K; ++k) {
        auto w = scheme == InitScheme::uniform_mask
            ? detail::uniform_mask_latents(s * C, rng)
            : detail::glorot_latents(s * C, static_cast<double>(s), static_cast<double>(C), rng);
        m.filters.emplace_back(Shape{s, C}, std::move(w), true);
    }
    auto d = scheme == InitScheme::uniform_mask
        ? detail::uniform_mask_latents(n * C * arch.n_classes, rng)
        : detail::glorot_latents(n * C * arch.n_classes, static_cast<double>(n * C),
                                 static_cast<double>(arch.n_classes), rng);
    m.dense = Tensor({n * C, arch.n_classes}, std::move(d), true);
    return m;
}

/// Effective weights (gain · latent ⊙ psi(latent) [⊙ hard mask]) in latents() order.
inline std::vector<Tensor> effective_weights(const GcnModel& m) {
    auto ls = m.latents();
    auto gains = m.gains();
    if (!m.hard_masks.empty() && m.hard_masks.size() != ls.size())
        throw DimensionError("model carries " + std::to_string(m.hard_masks.size()) + " masks for " +
                             std::to_string(ls.size()) + " latents");
    std::vector<Tensor> out;
    for (std::size_t i = 0; i < ls.size(); ++i) {
        Tensor w = reparametrize(ls[i]);
        if (!m.hard_masks.empty()) w = mul(w, m.hard_masks[i]);
        out.push_back(gains[i] == 1.0 ? w : scale(w, gains[i]));
    }
    return out;
}

/// Soft masks psi(latent) in latents() order, on the tape.
inline std::vector<Tensor> soft_masks(const GcnModel& m) {
    std::vector<Tensor> out;
    for (const auto& l : m.latents()) out.push_back(psi(l));
    return out;
}

/// Stacks per-sample U^T into [B·n × s].
inline Tensor pack_batch(const double* signals, std::size_t batch, std::size_t s, std::size_t n) {
    std::vector<double> x(batch * n * s);
    for (std::size_t b = 0; b < batch; ++b) {
        const double* u = signals + b * s * n;
        double* dst = x.data() + b * n * s;
        for (std::size_t c = 0; c < s; ++c)
            for (std::size_t v = 0; v < n; ++v) dst[v * s + c] = u[c * n + v];
    }
    return Tensor({batch * n, s}, std::move(x));
}

/// Logits [B × classes] for a packed batch [B·n × s] (see pack_batch).
inline Tensor forward_packed(const GcnModel& m, const Tensor& packed) {
    const auto& a = m.arch;
    if (packed.shape().size() != 2 || packed.cols() != a.in_channels || packed.rows() % a.n_nodes != 0)
        throw DimensionError("forward: packed batch " + shape_str(packed.shape()) + " does not match " +
                             std::to_string(a.n_nodes) + " nodes × " + std::to_string(a.in_channels) + " channels");
    const std::size_t batch = packed.rows() / a.n_nodes;
    auto w = effective_weights(m);
    std::vector<Tensor> heads;
    for (std::size_t k = 0; k < a.heads; ++k)
        heads.push_back(shared_left_matmul(w[k], matmul(packed, w[a.heads + k])));
    Tensor h = activate(add_all(heads), a.activation);
    return matmul(reshape(h, {batch, a.n_nodes * a.conv_filters}), w[2 * a.heads]);
}

/// Logits [B × classes] for a batch of node signals [B × s × n].
inline Tensor forward(const GcnModel& m, const Tensor& batch) {
    const auto& a = m.arch;
    if (batch.shape() != Shape{batch.shape()[0], a.in_channels, a.n_nodes})
        throw DimensionError("forward: batch " + shape_str(batch.shape()) + " does not match [B x " +
                             std::to_string(a.in_channels) + " x " + std::to_string(a.n_nodes) + "]");
    return forward_packed(m, pack_batch(batch.values().data(), batch.shape()[0], a.in_channels, a.n_nodes));
}

inline Tensor forward(const GcnModel& m, const SignalSet& data, std::span<const std::size_t> indices) {
    std::vector<double> buf;
    buf.reserve(indices.size() * data.sample_size());
    for (auto i : indices)
        buf.insert(buf.end(), data.signals.begin() + static_cast<std::ptrdiff_t>(i * data.sample_size()),
                   data.signals.begin() + static_cast<std::ptrdiff_t>((i + 1) * data.sample_size()));
    return forward_packed(m, pack_batch(buf.data(), indices.size(), data.channels, data.nodes));
}

// ---------------------------------------------------------------------------
// Checkpoints
//
//   "PFGCNCKP" | u32 version | u64 n_nodes, in_channels, heads, conv_filters,
//   n_classes, activation, fan_in_gain | u64 tensor_count |
//   per tensor: u64 ndim, u64 dims[ndim], f64 values (row-major)
// All integers and reals little-endian.

inline constexpr char checkpoint_magic[8] = {'P', 'F', 'G', 'C', 'N', 'C', 'K', 'P'};
inline constexpr std::uint32_t checkpoint_version = 1;

namespace detail {

template <class T>
void put_le(std::ostream& out, T v) {
    std::uint64_t bits;
    if constexpr (std::is_same_v<T, double>) bits = std::bit_cast<std::uint64_t>(v);
    else bits = static_cast<std::uint64_t>(v);
    for (std::size_t i = 0; i < sizeof(T); ++i) out.put(static_cast<char>((bits >> (8 * i)) & 0xff));
}

template <class T>
T get_le(std::istream& in) {
    std::uint64_t bits = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
        const int c = in.get();
        if (c == EOF) throw DataError("checkpoint truncated");
        bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(c)) << (8 * i);
    }
    if constexpr (std::is_same_v<T, double>) return std::bit_cast<double>(bits);
    else return static_cast<T>(bits);
}

}  // namespace detail

inline void save_checkpoint(const GcnModel& m, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open '" + path + "' for writing");
    out.write(checkpoint_magic, sizeof checkpoint_magic);
    detail::put_le<std::uint32_t>(out, checkpoint_version);
    const auto& a = m.arch;
    for (std::uint64_t v : {a.n_nodes, a.in_channels, a.heads, a.conv_filters, a.n_classes})
        detail::put_le<std::uint64_t>(out, v);
    detail::put_le<std::uint64_t>(out, a.activation == Activation::relu ? 0 : 1);
    detail::put_le<std::uint64_t>(out, a.fan_in_gain ? 1 : 0);
    const auto ls = m.latents();
    detail::put_le<std::uint64_t>(out, ls.size());
    for (const auto& t : ls) {
        detail::put_le<std::uint64_t>(out, t.shape().size());
        for (auto d : t.shape()) detail::put_le<std::uint64_t>(out, d);
        for (double v : t.values()) detail::put_le<double>(out, v);
    }
    if (!out) throw DataError("failed writing checkpoint '" + path + "'");
}

inline GcnModel load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open '" + path + "'");
    char magic[8];
    in.read(magic, sizeof magic);
    if (!in || !std::equal(magic, magic + 8, checkpoint_magic)) throw SchemaError("'" + path + "' is not a checkpoint");
    const auto version = detail::get_le<std::uint32_t>(in);
    if (version != checkpoint_version) throw SchemaError("unsupported checkpoint version " + std::to_string(version));
    GcnArchitecture a;
    a.n_nodes = detail::get_le<std::uint64_t>(in);
    a.in_channels = detail::get_le<std::uint64_t>(in);
    a.heads = detail::get_le<std::uint64_t>(in);
    a.conv_filters = detail::get_le<std::uint64_t>(in);
    a.n_classes = detail::get_le<std::uint64_t>(in);
    a.activation = detail::get_le<std::uint64_t>(in) == 0 ? Activation::relu : Activation::identity;
    a.fan_in_gain = detail::get_le<std::uint64_t>(in) != 0;
    a.validate();
    const auto count = detail::get_le<std::uint64_t>(in);
    if (count != 2 * a.heads + 1)
        throw SchemaError("checkpoint holds " + std::to_string(count) + " tensors, expected " +
                          std::to_string(2 * a.heads + 1));
    std::vector<Tensor> ls;
    std::size_t total = 0;
    for (std::uint64_t i = 0; i < count; ++i) {
        const auto ndim = detail::get_le<std::uint64_t>(in);
        if (ndim == 0 || ndim > 8) throw SchemaError("bad tensor rank in checkpoint");
        Shape shape(ndim);
        for (auto& d : shape) d = detail::get_le<std::uint64_t>(in);
        const auto sz = shape_size(shape);
        if (sz > a.param_count()) throw SchemaError("tensor larger than the architecture allows");
        std::vector<double> v(sz);
        for (auto& x : v) x = detail::get_le<double>(in);
        total += sz;
        ls.emplace_back(std::move(shape), std::move(v), true);
    }
    if (total != a.param_count())
        throw SchemaError("checkpoint holds " + std::to_string(total) + " parameters, architecture implies " +
                          std::to_string(a.param_count()));
    GcnModel m;
    m.arch = a;
    const std::size_t n = a.n_nodes, K = a.heads;
    for (std::size_t k = 0; k < K; ++k) {
        if (ls[k].shape() != Shape{n, n}) throw SchemaError("adjacency tensor has wrong shape");
        if (ls[K + k].shape() != Shape{a.in_channels, a.conv_filters}) throw SchemaError("filter tensor has wrong shape");
        m.adjacency.push_back(ls[k]);
        m.filters.push_back(ls[K + k]);
    }
    if (ls[2 * K].shape() != Shape{n * a.conv_filters, a.n_classes}) throw SchemaError("dense tensor has wrong shape");
    m.dense = ls[2 * K];
    return m;
}

}  // namespace pfgcn
