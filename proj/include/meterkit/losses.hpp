#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace meterkit {

struct LossConfig {
    double positive_weight = 1.0;
    int pred_pool_width = 7;
    int label_pool_width = 13;
    std::vector<double> widen_weights = {0.5, 0.25};

    void validate() const {
        if (pred_pool_width < 1 || pred_pool_width % 2 == 0)
            throw std::invalid_argument("LossConfig: pred_pool_width must be odd and positive");
        if (label_pool_width < 1 || label_pool_width % 2 == 0)
            throw std::invalid_argument("LossConfig: label_pool_width must be odd and positive");
        if (!(positive_weight > 0.0))
            throw std::invalid_argument("LossConfig: positive_weight must be > 0");
        for (std::size_t i = 0; i < widen_weights.size(); ++i) {
            if (widen_weights[i] <= 0.0 || widen_weights[i] >= 1.0)
                throw std::invalid_argument("LossConfig: widen weights must lie in (0,1)");
            if (i > 0 && widen_weights[i] > widen_weights[i - 1])
                throw std::invalid_argument("LossConfig: widen weights must be non-increasing");
        }
    }
};

struct LossResult {
    double loss = 0.0;
    std::vector<double> grad;  // w.r.t. predictions
};

namespace detail {

inline constexpr double kPredClampEps = 1e-7;

inline std::vector<double> clamp_preds(std::vector<double> preds) {
    for (double& p : preds) p = std::clamp(p, kPredClampEps, 1.0 - kPredClampEps);
    return preds;
}

/// Centered sliding max with truncated windows at the edges.
/// argmax picks the leftmost maximizer inside each window.
inline void sliding_max(const std::vector<double>& x, int width, std::vector<double>& out,
                        std::vector<std::size_t>* argmax_out = nullptr) {
    const auto n = static_cast<long long>(x.size());
    const long long half = width / 2;
    out.assign(x.size(), 0.0);
    if (argmax_out) argmax_out->assign(x.size(), 0);
    for (long long t = 0; t < n; ++t) {
        const long long lo = std::max<long long>(0, t - half);
        const long long hi = std::min<long long>(n - 1, t + half);
        long long best = lo;
        for (long long j = lo + 1; j <= hi; ++j)
            if (x[j] > x[best]) best = j;
        out[t] = x[best];
        if (argmax_out) (*argmax_out)[t] = static_cast<std::size_t>(best);
    }
}

}  // namespace detail

/// Frame-wise binary cross-entropy, summed over frames, with its gradient.
inline LossResult bce_loss(const std::vector<double>& targets, const std::vector<double>& preds) {
    if (targets.size() != preds.size())
        throw std::invalid_argument("bce_loss: length mismatch");
    const auto p = detail::clamp_preds(preds);
    LossResult r;
    r.grad.resize(p.size());
    for (std::size_t t = 0; t < p.size(); ++t) {
        r.loss -= targets[t] * std::log(p[t]) + (1.0 - targets[t]) * std::log(1.0 - p[t]);
        r.grad[t] = (p[t] - targets[t]) / (p[t] * (1.0 - p[t]));
    }
    return r;
}

/// Spreads each annotated 1 outward with fractional weights; overlaps keep the max.
inline std::vector<double> widen_targets(const std::vector<double>& targets,
                                         const std::vector<double>& widen_weights) {
    for (double t : targets)
        if (t != 0.0 && t != 1.0)
            throw std::invalid_argument("widen_targets: targets must be binary");
    std::vector<double> out = targets;
    const auto n = static_cast<long long>(targets.size());
    for (long long i = 0; i < n; ++i) {
        if (targets[i] != 1.0) continue;
        for (std::size_t d = 0; d < widen_weights.size(); ++d) {
            const long long off = static_cast<long long>(d) + 1;
            if (i - off >= 0) out[i - off] = std::max(out[i - off], widen_weights[d]);
            if (i + off < n) out[i + off] = std::max(out[i + off], widen_weights[d]);
        }
    }
    return out;
}

/// Shift-tolerant BCE: positive term against max-pooled predictions, negative
/// term silenced near any label via a wider label pool. Gradient routes through
/// the leftmost argmax of each prediction window.
inline LossResult shift_tolerant_bce(const std::vector<double>& targets,
                                     const std::vector<double>& preds, const LossConfig& cfg) {
    cfg.validate();
    if (targets.size() != preds.size())
        throw std::invalid_argument("shift_tolerant_bce: length mismatch");
    const auto p = detail::clamp_preds(preds);

    std::vector<double> pooled_pred, pooled_label;
    std::vector<std::size_t> argmax;
    detail::sliding_max(p, cfg.pred_pool_width, pooled_pred, &argmax);
    detail::sliding_max(targets, cfg.label_pool_width, pooled_label);

    LossResult r;
    r.grad.assign(p.size(), 0.0);
    for (std::size_t t = 0; t < p.size(); ++t) {
        const double m7 = pooled_pred[t];
        const double pos = cfg.positive_weight * targets[t] * std::log(m7);
        const double neg = (1.0 - pooled_label[t]) * std::log(1.0 - m7);
        r.loss -= pos + neg;
        const double d = -cfg.positive_weight * targets[t] / m7 +
                         (1.0 - pooled_label[t]) / (1.0 - m7);
        r.grad[argmax[t]] += d;
    }
    return r;
}

/// w = negative frames / positive frames over the whole training set.
/// Degenerate all-positive input returns 0 (documented relaxation of w > 0).
inline double positive_weight_from_targets(const std::vector<std::vector<double>>& all_targets) {
    double positives = 0.0, negatives = 0.0;
    for (const auto& seq : all_targets)
        for (double t : seq) {
            if (t != 0.0 && t != 1.0)
                throw std::invalid_argument("positive_weight_from_targets: targets must be binary");
            (t == 1.0 ? positives : negatives) += 1.0;
        }
    if (positives == 0.0)
        throw std::invalid_argument("positive_weight_from_targets: no positive frames");
    return negatives / positives;
}

/// Sum of beat and downbeat BCE terms.
inline double combined_meter_loss(const std::vector<double>& beat_targets,
                                  const std::vector<double>& beat_preds,
                                  const std::vector<double>& down_targets,
                                  const std::vector<double>& down_preds) {
    return bce_loss(beat_targets, beat_preds).loss + bce_loss(down_targets, down_preds).loss;
}

}  // namespace meterkit
