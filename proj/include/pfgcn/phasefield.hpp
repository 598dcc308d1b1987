#pragma once

// Double-well phase-field energy over soft masks, the soft magnitude gate psi
// and the latent-weight reparametrization built on it.

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "pfgcn/tensor.hpp"

namespace pfgcn {

/// Coefficients of the ultra-local term. beta sets the well depth, alpha
/// tilts the wells: alpha > 0 favours the 0 phase, alpha < 0 the 1 phase.
struct PhaseFieldParams {
    double alpha = 0.0;
    double beta = 3.0;

    bool valid() const { return beta > 0.0 && beta > std::abs(alpha); }

    void validate() const {
        if (!valid())
            throw DomainError("phase-field parameters need beta > |alpha| (alpha=" + std::to_string(alpha) +
                              ", beta=" + std::to_string(beta) + ")");
    }
};

/// V(t) = beta((2t-1)^4/4 - (2t-1)^2/2) + alpha(2t-1 - (2t-1)^3/3)
inline double ultra_local(double t, const PhaseFieldParams& p) {
    const double s = 2.0 * t - 1.0;
    const double s2 = s * s;
    return p.beta * (s2 * s2 / 4.0 - s2 / 2.0) + p.alpha * (s - s2 * s / 3.0);
}

/// dV/dt = 2(s^2 - 1)(beta·s - alpha) with s = 2t - 1.
inline double ultra_local_grad(double t, const PhaseFieldParams& p) {
    const double s = 2.0 * t - 1.0;
    return 2.0 * (s * s - 1.0) * (p.beta * s - p.alpha);
}

/// V'' = 4(3 beta s^2 - 2 alpha s - beta).
inline double ultra_local_second(double t, const PhaseFieldParams& p) {
    const double s = 2.0 * t - 1.0;
    return 4.0 * (3.0 * p.beta * s * s - 2.0 * p.alpha * s - p.beta);
}

/// Interior critical point of V (its local maximum): z = (alpha + beta) / (2 beta).
inline double threshold_for(const PhaseFieldParams& p) {
    p.validate();
    return (p.alpha + p.beta) / (2.0 * p.beta);
}

/// alpha placing the local maximum of V at the targeted pruning rate.
inline double alpha_for_tpr(double tpr, double beta) {
    if (!(tpr > 0.0 && tpr < 1.0))
        throw DomainError("targeted pruning rate must lie strictly inside (0,1), got " + std::to_string(tpr));
    if (!(beta > 0.0)) throw DomainError("beta must be positive");
    return 2.0 * beta * tpr - beta;
}

inline PhaseFieldParams params_for_tpr(double tpr, double beta = 3.0) {
    return PhaseFieldParams{alpha_for_tpr(tpr, beta), beta};
}

/// Entrywise V on the tape.
inline Tensor ultra_local(const Tensor& t, const PhaseFieldParams& p) {
    return detail::unary("ultra_local", t, [p](double v) { return ultra_local(v, p); },
                         [p](double v, double) { return ultra_local_grad(v, p); });
}

/// Discrete phase-field energy: sum of V over every entry of every mask.
inline Tensor phase_field_energy(std::span<const Tensor> masks, const PhaseFieldParams& p) {
    p.validate();
    if (masks.empty()) throw ContractError("phase_field_energy needs at least one mask");
    std::vector<Tensor> parts;
    parts.reserve(masks.size());
    for (const auto& m : masks) {
        for (double v : m.values())
            if (!(v >= 0.0 && v <= 1.0))
                throw ContractError("mask entry " + std::to_string(v) + " outside [0,1]");
        parts.push_back(sum(ultra_local(m, p)));
    }
    return add_all(parts);
}

// ---------------------------------------------------------------------------
// Soft magnitude gate

/// 2·sigma(w^2) - 1, evaluated as tanh(w^2/2) and kept below 1 where it would round up.
inline double psi(double w) { return std::min(std::tanh(0.5 * w * w), std::nextafter(1.0, 0.0)); }

/// psi'(w) = 4w·sigma(w^2)(1 - sigma(w^2))
inline double psi_grad(double w) {
    const double s = detail::stable_sigmoid(w * w);
    return 4.0 * w * s * (1.0 - s);
}

/// Smallest |w| with psi(w) > q, i.e. sqrt(logit((1+q)/2)).
inline double psi_inverse(double q) {
    if (!(q >= 0.0 && q < 1.0)) throw DomainError("psi_inverse needs q in [0,1)");
    const double p = (1.0 + q) / 2.0;
    return std::sqrt(std::log(p / (1.0 - p)));
}

/// psi(w) = 2·sigmoid(w^2) - 1, composed from tape primitives.
inline Tensor psi(const Tensor& w) {
    return detail::unary("psi", w, [](double v) { return psi(v); }, [](double v, double) { return psi_grad(v); });
}

/// Effective weight latent ⊙ psi(latent).
inline Tensor reparametrize(const Tensor& latent) { return mul(latent, psi(latent)); }

/// Kept coordinates {i : psi(w_i) > z} of one latent tensor.
struct ThresholdRegion {
    double z = 0.5;
    std::vector<std::size_t> kept_indices;

    static ThresholdRegion of(const Tensor& latent, double z) {
        if (!(z > 0.0 && z < 1.0)) throw DomainError("threshold must lie in (0,1)");
        ThresholdRegion r{z, {}};
        for (std::size_t i = 0; i < latent.size(); ++i)
            if (psi(latent[i]) > z) r.kept_indices.push_back(i);
        return r;
    }
};

}  // namespace pfgcn
