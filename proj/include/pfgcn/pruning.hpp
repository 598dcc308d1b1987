#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <vector>

#include "pfgcn/gcn.hpp"

namespace pfgcn {

struct PruneReport {
    double observed_rate = 0.0;
    std::size_t kept_params = 0;
    std::size_t total_params = 0;
    double binarization_fraction = 0.0;  // soft-mask entries within tol of {0,1}
    std::size_t dead_output_units = 0;
    double accuracy = 0.0;

    bool operator==(const PruneReport&) const = default;
};

/// 1 where psi(latent) > z (strict), else 0; one tensor per latent.
inline std::vector<Tensor> binarize_masks(const GcnModel& m, double z) {
    if (!(z > 0.0 && z < 1.0)) throw DomainError("threshold must lie in (0,1)");
    std::vector<Tensor> out;
    for (const auto& l : m.latents()) {
        std::vector<double> v(l.size());
        for (std::size_t i = 0; i < v.size(); ++i) v[i] = psi(l[i]) > z ? 1.0 : 0.0;
        out.emplace_back(l.shape(), std::move(v));
    }
    return out;
}

inline std::size_t kept_count(std::span<const Tensor> masks) {
    std::size_t kept = 0;
    for (const auto& m : masks)
        for (double v : m.values()) kept += v != 0.0;
    return kept;
}

inline std::size_t entry_count(std::span<const Tensor> ts) {
    std::size_t n = 0;
    for (const auto& t : ts) n += t.size();
    return n;
}

/// Fraction of zero entries of binary masks.
inline double mask_pruning_rate(std::span<const Tensor> masks) {
    const auto total = entry_count(masks);
    return static_cast<double>(total - kept_count(masks)) / static_cast<double>(total);
}

/// (# entries with psi(latent) <= z) / total entries.
inline double observed_pruning_rate(const GcnModel& m, double z) {
    if (!(z > 0.0 && z < 1.0)) throw DomainError("threshold must lie in (0,1)");
    std::size_t pruned = 0, total = 0;
    for (const auto& l : m.latents()) {
        for (double w : l.values()) pruned += psi(w) <= z;
        total += l.size();
    }
    return static_cast<double>(pruned) / static_cast<double>(total);
}

/// Global magnitude pruning of the reparametrized weights latent·psi(latent)
/// (fixed layer gains excluded). Exactly floor(tpr·N) entries are zeroed;
/// ties go to the lower flat index across the concatenated latents.
inline std::vector<Tensor> magnitude_prune(std::span<const Tensor> latents, double tpr) {
    if (!(tpr >= 0.0 && tpr < 1.0)) throw DomainError("magnitude pruning rate must lie in [0,1)");
    std::vector<double> mag;
    for (const auto& l : latents)
        for (double w : l.values()) mag.push_back(std::abs(w * psi(w)));
    const std::size_t total = mag.size();
    const auto cut = static_cast<std::size_t>(std::floor(tpr * static_cast<double>(total)));
    std::vector<std::size_t> order(total);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return mag[a] < mag[b]; });
    std::vector<double> keep(total, 1.0);
    for (std::size_t i = 0; i < cut; ++i) keep[order[i]] = 0.0;
    std::vector<Tensor> out;
    std::size_t offset = 0;
    for (const auto& l : latents) {
        out.emplace_back(l.shape(), std::vector<double>(keep.begin() + static_cast<std::ptrdiff_t>(offset),
                                                        keep.begin() + static_cast<std::ptrdiff_t>(offset + l.size())));
        offset += l.size();
    }
    return out;
}

inline std::vector<Tensor> magnitude_prune(const GcnModel& m, double tpr) { return magnitude_prune(m.latents(), tpr); }

/// Share of soft-mask values m with min(m, 1-m) <= tol.
inline double binarization_fraction(std::span<const double> mask_values, double tol) {
    if (!(tol > 0.0 && tol < 0.5)) throw DomainError("binarization tolerance must lie in (0, 0.5)");
    if (mask_values.empty()) return 1.0;
    std::size_t hits = 0;
    for (double v : mask_values) hits += std::min(v, 1.0 - v) <= tol;
    return static_cast<double>(hits) / static_cast<double>(mask_values.size());
}

inline double binarization_fraction(const GcnModel& m, double tol = 0.1) {
    std::vector<double> values;
    for (const auto& l : m.latents())
        for (double w : l.values()) values.push_back(psi(w));
    return binarization_fraction(values, tol);
}

/// Units cut off by pruning.
struct ConnectivityReport {
    std::size_t dead_filters = 0;        // conv filter c with W_k[:, c] == 0 for every head
    std::size_t dead_classes = 0;        // logit j with an all-zero dense column
    std::size_t isolated_nodes = 0;      // node v with A_k[v, :] == 0 for every head
    std::size_t unreachable_logits = 0;  // logits with no kept path from any input

    std::size_t dead_output_units() const { return dead_filters + dead_classes + isolated_nodes; }
};

inline ConnectivityReport connectivity_report(const GcnModel& m, std::span<const Tensor> masks) {
    const auto& a = m.arch;
    const std::size_t n = a.n_nodes, s = a.in_channels, C = a.conv_filters, K = a.heads, J = a.n_classes;
    if (masks.size() != 2 * K + 1) throw DimensionError("connectivity_report: wrong number of masks");
    auto on = [&](std::size_t t, std::size_t i) { return masks[t][i] != 0.0; };

    ConnectivityReport r;
    std::vector<std::vector<char>> filter_live(K, std::vector<char>(C, 0));
    for (std::size_t k = 0; k < K; ++k)
        for (std::size_t ch = 0; ch < s; ++ch)
            for (std::size_t c = 0; c < C; ++c)
                if (on(K + k, ch * C + c)) filter_live[k][c] = 1;
    for (std::size_t c = 0; c < C; ++c) {
        bool any = false;
        for (std::size_t k = 0; k < K; ++k) any = any || filter_live[k][c];
        r.dead_filters += !any;
    }
    std::vector<std::vector<char>> row_live(K, std::vector<char>(n, 0));
    for (std::size_t k = 0; k < K; ++k)
        for (std::size_t v = 0; v < n; ++v)
            for (std::size_t u = 0; u < n; ++u)
                if (on(k, v * n + u)) row_live[k][v] = 1;
    for (std::size_t v = 0; v < n; ++v) {
        bool any = false;
        for (std::size_t k = 0; k < K; ++k) any = any || row_live[k][v];
        r.isolated_nodes += !any;
    }
    const std::size_t dense = 2 * K;
    std::vector<char> block_live(n * C, 0);
    for (std::size_t v = 0; v < n; ++v)
        for (std::size_t c = 0; c < C; ++c)
            for (std::size_t k = 0; k < K && !block_live[v * C + c]; ++k)
                if (row_live[k][v] && filter_live[k][c]) block_live[v * C + c] = 1;
    for (std::size_t j = 0; j < J; ++j) {
        bool any = false, reach = false;
        for (std::size_t h = 0; h < n * C; ++h)
            if (on(dense, h * J + j)) {
                any = true;
                reach = reach || block_live[h];
            }
        r.dead_classes += !any;
        r.unreachable_logits += !reach;
    }
    return r;
}

/// Copy of the model whose forward multiplies effective weights by the masks.
inline GcnModel apply_masks(const GcnModel& m, std::span<const Tensor> masks) {
    const auto ls = m.latents();
    if (masks.size() != ls.size())
        throw DimensionError("apply_masks: " + std::to_string(masks.size()) + " masks for " +
                             std::to_string(ls.size()) + " latents");
    for (std::size_t i = 0; i < ls.size(); ++i)
        if (masks[i].shape() != ls[i].shape())
            throw DimensionError("apply_masks: mask " + shape_str(masks[i].shape()) + " vs latent " +
                                 shape_str(ls[i].shape()));
    GcnModel out = m.clone();
    out.hard_masks.clear();
    for (const auto& mk : masks) out.hard_masks.push_back(mk.clone(false));
    return out;
}

/// Pruning figures for binary masks; accuracy is left for the caller.
inline PruneReport prune_report(const GcnModel& m, std::span<const Tensor> masks, double tol = 0.1) {
    PruneReport r;
    r.total_params = entry_count(masks);
    r.kept_params = kept_count(masks);
    r.observed_rate = mask_pruning_rate(masks);
    r.binarization_fraction = binarization_fraction(m, tol);
    r.dead_output_units = connectivity_report(m, masks).dead_output_units();
    return r;
}

}  // namespace pfgcn
