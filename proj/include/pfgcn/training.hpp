#pragma once

// Joint objective CE(effective weights) + lambda·R(psi(latents)), Adam with
// the loss-speed learning-rate rule, and the epoch loop.

#include <cmath>
#include <cstdint>
#include <functional>
#include <iostream>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "pfgcn/pruning.hpp"
#include "pfgcn/regularizers.hpp"

namespace pfgcn {

struct TrainConfig {
    std::size_t epochs = 2700;
    std::size_t batch_size = 200;
    double base_lr = 0.01;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    RegularizerSpec reg;  // reg.lambda is the mixing weight of the objective
    std::uint64_t seed = 0;
    std::size_t checkpoint_interval = 100;
    double binarize_tol = 0.1;

    void validate() const {
        if (epochs < 1) throw ConfigError("epochs must be >= 1");
        if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
        if (!(base_lr > 0.0)) throw ConfigError("base_lr must be positive");
        if (!(adam_beta1 > 0.0 && adam_beta1 < 1.0) || !(adam_beta2 > 0.0 && adam_beta2 < 1.0))
            throw ConfigError("Adam coefficients must lie in (0,1)");
        if (!(adam_eps > 0.0)) throw ConfigError("adam_eps must be positive");
        if (checkpoint_interval < 1) throw ConfigError("checkpoint_interval must be >= 1");
        reg.validate();
    }

    /// Threshold used for hard masks and observed rates.
    double threshold() const { return threshold_for(reg.phase_field()); }
};

struct OptimizerState {
    std::vector<std::vector<double>> m, v;
    std::uint64_t step = 0;
    double current_lr = 0.01;
    std::optional<double> previous_loss;
    std::optional<double> previous_speed;
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

    static OptimizerState for_latents(std::span<const Tensor> latents, const TrainConfig& cfg) {
        OptimizerState s;
        for (const auto& l : latents) {
            s.m.emplace_back(l.size(), 0.0);
            s.v.emplace_back(l.size(), 0.0);
        }
        s.current_lr = cfg.base_lr;
        s.beta1 = cfg.adam_beta1;
        s.beta2 = cfg.adam_beta2;
        s.eps = cfg.adam_eps;
        return s;
    }
};

/// Bias-corrected Adam update at state.current_lr.
inline void adam_step(OptimizerState& st, std::span<Tensor> latents, const std::vector<std::vector<double>>& grads) {
    if (latents.size() != st.m.size() || grads.size() != latents.size())
        throw DimensionError("adam_step: optimizer state, latents and gradients disagree in count");
    ++st.step;
    const double c1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step));
    const double c2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step));
    for (std::size_t t = 0; t < latents.size(); ++t) {
        auto w = latents[t].mutable_data();
        const auto& g = grads[t];
        if (g.size() != w.size() || st.m[t].size() != w.size())
            throw DimensionError("adam_step: gradient shape does not match latent");
        auto& m = st.m[t];
        auto& v = st.v[t];
        for (std::size_t i = 0; i < w.size(); ++i) {
            m[i] = st.beta1 * m[i] + (1.0 - st.beta1) * g[i];
            v[i] = st.beta2 * v[i] + (1.0 - st.beta2) * g[i] * g[i];
            w[i] -= st.current_lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + st.eps);
        }
    }
}

/// speed(t) = |L(t) - L(t-1)|; a faster change shrinks the rate by 0.99,
/// otherwise it grows by 1/0.99. Needs two speeds before acting.
inline void lr_schedule_update(OptimizerState& st, double loss) {
    if (st.previous_loss) {
        const double speed = std::abs(loss - *st.previous_loss);
        if (st.previous_speed) {
            if (speed > *st.previous_speed) st.current_lr *= 0.99;
            else st.current_lr /= 0.99;
        }
        st.previous_speed = speed;
    }
    st.previous_loss = loss;
}

struct LossTerms {
    Tensor total;
    double ce = 0.0;
    double reg = 0.0;
};

/// Cross-entropy on the forward logits plus the assembled regularizer over
/// every soft mask. A non-finite value is reported with the offending term.
inline LossTerms loss_terms(const GcnModel& model, const Tensor& packed, std::span<const int> labels,
                            const RegularizerSpec& reg) {
    Tensor ce;
    try {
        ce = softmax_cross_entropy(forward_packed(model, packed), labels);
    } catch (const NumericError& e) {
        throw NumericError(std::string("cross-entropy term: ") + e.what());
    }
    LossTerms out{ce, ce.item(), 0.0};
    try {
        auto masks = soft_masks(model);
        if (auto r = assemble_regularizer(reg, masks)) {
            out.reg = r->item();
            out.total = add(ce, *r);
        }
    } catch (const NumericError& e) {
        throw NumericError(std::string("regularizer (E_P) term: ") + e.what());
    }
    if (!std::isfinite(out.total.item())) throw NumericError("total loss is not finite");
    return out;
}

inline Tensor total_loss(const GcnModel& model, const Tensor& batch, std::span<const int> labels,
                         const TrainConfig& cfg) {
    const auto& a = model.arch;
    if (batch.shape().size() != 3) throw DimensionError("total_loss expects a [B x s x n] batch");
    return loss_terms(model, pack_batch(batch.values().data(), batch.shape()[0], a.in_channels, a.n_nodes), labels,
                      cfg.reg)
        .total;
}

/// Macro-averaged accuracy (mean of per-class recalls) with argmax decisions.
/// Classes absent from the data are skipped with a warning.
inline double evaluate(const GcnModel& model, const SignalSet& data,
                       const std::optional<std::vector<Tensor>>& hard_masks = std::nullopt) {
    if (data.size() == 0) throw DataError("evaluate: empty dataset");
    GcnModel frozen;
    frozen.arch = model.arch;
    for (const auto& a : model.adjacency) frozen.adjacency.push_back(a.clone(false));
    for (const auto& w : model.filters) frozen.filters.push_back(w.clone(false));
    frozen.dense = model.dense.clone(false);
    if (hard_masks) frozen = apply_masks(frozen, *hard_masks);
    else for (const auto& h : model.hard_masks) frozen.hard_masks.push_back(h);

    const auto K = static_cast<std::size_t>(data.n_classes);
    std::vector<std::size_t> hits(K, 0), count(K, 0);
    constexpr std::size_t chunk = 256;
    std::vector<std::size_t> idx;
    for (std::size_t start = 0; start < data.size(); start += chunk) {
        idx.clear();
        for (std::size_t i = start; i < std::min(data.size(), start + chunk); ++i) idx.push_back(i);
        Tensor logits = forward(frozen, data, idx);
        for (std::size_t r = 0; r < idx.size(); ++r) {
            std::size_t best = 0;
            for (std::size_t j = 1; j < logits.cols(); ++j)
                if (logits.at(r, j) > logits.at(r, best)) best = j;
            const auto y = static_cast<std::size_t>(data.labels[idx[r]]);
            ++count[y];
            hits[y] += best == y;
        }
    }
    double acc = 0.0;
    std::size_t present = 0;
    for (std::size_t k = 0; k < K; ++k) {
        if (count[k] == 0) {
            std::cerr << "warning: class " << k << " has no samples; excluded from accuracy\n";
            continue;
        }
        acc += static_cast<double>(hits[k]) / static_cast<double>(count[k]);
        ++present;
    }
    return present ? acc / static_cast<double>(present) : 0.0;
}

struct EpochMetrics {
    std::size_t epoch = 0;
    double ce = 0.0;           // epoch-mean cross-entropy
    double energy = 0.0;       // mean ultra-local energy per mask entry
    double lr = 0.0;
    double observed_rate = 0.0;
    double binarization_fraction = 0.0;
    double loss = 0.0;         // epoch-mean total objective
};

struct Checkpoint {
    std::size_t epoch = 0;
    PruneReport report;
};

struct TrainResult {
    GcnModel model;
    std::vector<EpochMetrics> metrics;
    std::vector<Checkpoint> checkpoints;
    double final_lr = 0.0;
};

/// Mean of V(psi(latent)) over all entries.
inline double mean_energy(const GcnModel& m, const PhaseFieldParams& p) {
    double e = 0.0;
    std::size_t n = 0;
    for (const auto& l : m.latents())
        for (double w : l.values()) {
            e += ultra_local(psi(w), p);
            ++n;
        }
    return e / static_cast<double>(n);
}

/// Hard-mask report at threshold z; accuracy measured on `eval` with the masks applied.
inline PruneReport report_at(const GcnModel& m, double z, const SignalSet& eval, double tol = 0.1) {
    auto masks = m.hard_masks.empty() ? binarize_masks(m, z) : m.hard_masks;
    auto r = prune_report(m, masks, tol);
    GcnModel plain = m;
    plain.hard_masks.clear();
    r.accuracy = evaluate(plain, eval, masks);
    return r;
}

using EpochCallback = std::function<void(const EpochMetrics&)>;

/// Minibatch training. With model.hard_masks set the masks stay frozen
/// (fine-tuning). Reports are emitted every checkpoint_interval epochs and at
/// the last epoch, evaluated on `eval` (or the training set when absent).
inline TrainResult train(GcnModel model, const SignalSet& data, const TrainConfig& cfg,
                         const SignalSet* eval = nullptr, const EpochCallback& on_epoch = {}) {
    cfg.validate();
    if (data.size() == 0) throw DataError("train: empty dataset");
    if (data.channels != model.arch.in_channels || data.nodes != model.arch.n_nodes)
        throw DimensionError("train: data signals do not match the architecture");
    const SignalSet& eval_set = eval ? *eval : data;
    const PhaseFieldParams pf = cfg.reg.phase_field();
    const double z = threshold_for(pf);

    auto latents = model.latents();
    auto state = OptimizerState::for_latents(latents, cfg);
    std::mt19937_64 rng(cfg.seed ^ 0x7261696eULL);
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    TrainResult result;
    std::vector<std::vector<double>> grads(latents.size());
    std::vector<double> buf;
    std::vector<int> labels;
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double loss_sum = 0.0, ce_sum = 0.0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
            buf.clear();
            labels.clear();
            for (std::size_t i = start; i < stop; ++i) {
                const auto* src = data.signals.data() + order[i] * data.sample_size();
                buf.insert(buf.end(), src, src + data.sample_size());
                labels.push_back(data.labels[order[i]]);
            }
            Tensor packed = pack_batch(buf.data(), stop - start, data.channels, data.nodes);
            for (auto& l : latents) l.zero_grad();
            auto terms = loss_terms(model, packed, labels, cfg.reg);
            backward(terms.total);
            for (std::size_t t = 0; t < latents.size(); ++t) grads[t] = latents[t].grad();
            adam_step(state, latents, grads);
            const auto w = static_cast<double>(stop - start);
            loss_sum += terms.total.item() * w;
            ce_sum += terms.ce * w;
        }
        const double n = static_cast<double>(data.size());
        EpochMetrics em;
        em.epoch = epoch;
        em.loss = loss_sum / n;
        em.ce = ce_sum / n;
        em.lr = state.current_lr;
        em.energy = mean_energy(model, pf);
        em.observed_rate =
            model.hard_masks.empty() ? observed_pruning_rate(model, z) : mask_pruning_rate(model.hard_masks);
        em.binarization_fraction = binarization_fraction(model, cfg.binarize_tol);
        lr_schedule_update(state, em.loss);
        result.metrics.push_back(em);
        if (on_epoch) on_epoch(em);
        if (epoch % cfg.checkpoint_interval == 0 || epoch == cfg.epochs)
            result.checkpoints.push_back({epoch, report_at(model, z, eval_set, cfg.binarize_tol)});
    }
    for (auto& l : latents) l.zero_grad();
    result.final_lr = state.current_lr;
    result.model = std::move(model);
    return result;
}

}  // namespace pfgcn
