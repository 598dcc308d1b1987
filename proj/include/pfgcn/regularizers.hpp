#pragma once

// Sparsity regularizers over soft masks. All take the list of mask tensors
// (one per layer) and treat them as a single flattened vector.

#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pfgcn/phasefield.hpp"

namespace pfgcn {

enum class RegKind { none, pfm, l0, l1, l2cost, entropy };

inline const char* to_string(RegKind k) {
    switch (k) {
        case RegKind::none: return "none";
        case RegKind::pfm: return "pfm";
        case RegKind::l0: return "l0";
        case RegKind::l1: return "l1";
        case RegKind::l2cost: return "l2cost";
        case RegKind::entropy: return "entropy";
    }
    return "?";
}

inline RegKind reg_kind_from_string(const std::string& s) {
    for (auto k : {RegKind::none, RegKind::pfm, RegKind::l0, RegKind::l1, RegKind::l2cost, RegKind::entropy})
        if (s == to_string(k)) return k;
    throw ConfigError("unknown regularizer kind '" + s + "'");
}

inline constexpr RegKind all_reg_kinds[] = {RegKind::none, RegKind::pfm,    RegKind::l0,
                                            RegKind::l1,   RegKind::l2cost, RegKind::entropy};

struct RegularizerSpec {
    RegKind kind = RegKind::pfm;
    double lambda = 100.0;
    bool pfm_joint = false;    // adds a balanced (alpha = 0) phase-field term
    double target_tpr = 0.5;   // used by pfm and l2cost
    double beta = 3.0;
    double l0_tau = 0.1;
    // Sum-based terms are divided by the mask entry count so lambda does not
    // scale with model size. l2cost is already a mean.
    bool normalize_by_count = true;

    void validate() const {
        if (!(lambda >= 0.0)) throw ConfigError("regularizer lambda must be >= 0");
        if (!(target_tpr > 0.0 && target_tpr < 1.0)) throw ConfigError("target_tpr must lie in (0,1)");
        if (!(beta > 0.0)) throw ConfigError("beta must be positive");
        if (!(l0_tau > 0.0)) throw ConfigError("l0_tau must be positive");
        if (kind == RegKind::pfm && pfm_joint)
            throw ConfigError("pfm regularizer cannot also carry a joint pfm term");
    }

    /// Phase-field parameters this spec trains with (balanced unless kind == pfm).
    PhaseFieldParams phase_field() const {
        if (kind == RegKind::pfm) return params_for_tpr(target_tpr, beta);
        return PhaseFieldParams{0.0, beta};
    }
};

namespace detail {

inline Tensor sum_over(std::span<const Tensor> masks, const std::function<Tensor(const Tensor&)>& per_mask) {
    if (masks.empty()) throw ContractError("regularizer needs at least one mask");
    std::vector<Tensor> parts;
    parts.reserve(masks.size());
    for (const auto& m : masks) parts.push_back(sum(per_mask(m)));
    return add_all(parts);
}

inline std::size_t entry_count(std::span<const Tensor> masks) {
    std::size_t n = 0;
    for (const auto& m : masks) n += m.size();
    return n;
}

}  // namespace detail

/// sum |m_i|
inline Tensor l1_reg(std::span<const Tensor> masks) {
    return detail::sum_over(masks, [](const Tensor& m) { return abs(m); });
}

/// sum -m log m - (1-m) log(1-m), with 0·log 0 := 0 through a log floor of 1e-12.
inline Tensor entropy_reg(std::span<const Tensor> masks) {
    constexpr double floor = 1e-12;
    return detail::sum_over(masks, [](const Tensor& m) {
        Tensor one_minus = affine(m, -1.0, 1.0);
        Tensor h = add(mul(m, clamped_log(m, floor)), mul(one_minus, clamped_log(one_minus, floor)));
        return scale(h, -1.0);
    });
}

/// (mean(m) - (1 - target_tpr))^2: squared gap between the soft keep fraction and the budget.
inline Tensor l2_cost_reg(std::span<const Tensor> masks, double target_tpr) {
    if (!(target_tpr > 0.0 && target_tpr < 1.0)) throw DomainError("target_tpr must lie in (0,1)");
    Tensor total = detail::sum_over(masks, [](const Tensor& m) { return m; });
    const double n = static_cast<double>(detail::entry_count(masks));
    return square(affine(total, 1.0 / n, -(1.0 - target_tpr)));
}

/// Smooth count of non-zeros: sum 1 - exp(-(m/tau)^2).
inline Tensor l0_reg(std::span<const Tensor> masks, double tau = 0.1) {
    if (!(tau > 0.0)) throw DomainError("l0 tau must be positive");
    return detail::sum_over(masks, [tau](const Tensor& m) {
        return affine(exp(scale(square(m), -1.0 / (tau * tau))), -1.0, 1.0);
    });
}

/// lambda·(selected regularizer) [+ lambda·E_P with alpha = 0 when pfm_joint].
/// Returns std::nullopt for kind none without a joint term.
inline std::optional<Tensor> assemble_regularizer(const RegularizerSpec& spec, std::span<const Tensor> masks) {
    spec.validate();
    const double n = static_cast<double>(detail::entry_count(masks));
    const double sum_scale = spec.normalize_by_count ? spec.lambda / n : spec.lambda;
    std::optional<Tensor> out;
    auto push = [&](Tensor t) { out = out ? add(*out, t) : t; };
    switch (spec.kind) {
        case RegKind::none: break;
        case RegKind::pfm: push(scale(phase_field_energy(masks, spec.phase_field()), sum_scale)); break;
        case RegKind::l0: push(scale(l0_reg(masks, spec.l0_tau), sum_scale)); break;
        case RegKind::l1: push(scale(l1_reg(masks), sum_scale)); break;
        case RegKind::l2cost: push(scale(l2_cost_reg(masks, spec.target_tpr), spec.lambda)); break;
        case RegKind::entropy: push(scale(entropy_reg(masks), sum_scale)); break;
    }
    if (spec.pfm_joint) push(scale(phase_field_energy(masks, PhaseFieldParams{0.0, spec.beta}), sum_scale));
    return out;
}

/// Same as above with an explicit beta for the phase-field terms.
inline std::optional<Tensor> assemble_regularizer(RegularizerSpec spec, std::span<const Tensor> masks,
                                                  double beta) {
    spec.beta = beta;
    return assemble_regularizer(spec, masks);
}

}  // namespace pfgcn
