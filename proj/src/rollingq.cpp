#include "mmfusion/rollingq.hpp"

#include <cmath>
#include <limits>

#include "mmfusion/errors.hpp"
#include "mmfusion/kernels.hpp"

namespace mmfusion {

void validate(const RollingQConfig& cfg) {
    if (!(cfg.rho > 0.0)) {
        throw ContractError("rollingq: rho must be positive");
    }
    if (!(cfg.beta > 0.0) || cfg.beta > 2.0 + 1e-12) {
        throw ContractError("rollingq: beta must lie in (0, 2]");
    }
}

BatchKeyStats compute_batch_stats(std::span<const FusionForwardTrace> traces) {
    if (traces.empty()) {
        throw ContractError("compute_batch_stats: empty batch");
    }
    const std::size_t d = traces.front().query.dim();
    BatchKeyStats s;
    s.mean_avg_key_a = Vector(d);
    s.mean_avg_key_v = Vector(d);
    s.mean_query = Vector(d);
    for (const FusionForwardTrace& tr : traces) {
        const Vector khat_a = average_keys(tr.keys_a);
        const Vector khat_v = average_keys(tr.keys_v);
        const double cos_a = cosine_similarity(tr.query, khat_a);
        const double cos_v = cosine_similarity(tr.query, khat_v);
        s.mean_cos_a += cos_a;
        s.mean_cos_v += cos_v;
        add_scaled(s.mean_avg_key_a, khat_a, 1.0);
        add_scaled(s.mean_avg_key_v, khat_v, 1.0);
        add_scaled(s.mean_query, tr.query, 1.0);
    }
    const double inv_n = 1.0 / static_cast<double>(traces.size());
    s.mean_cos_a *= inv_n;
    s.mean_cos_v *= inv_n;
    scale_in_place(s.mean_avg_key_a, inv_n);
    scale_in_place(s.mean_avg_key_v, inv_n);
    scale_in_place(s.mean_query, inv_n);
    s.air = s.mean_cos_a - s.mean_cos_v;
    return s;
}

double compute_alpha(double air, double rho) {
    if (!(rho > 0.0)) {
        throw ContractError("compute_alpha: rho must be positive");
    }
    return 0.5 * (1.0 + std::tanh(-rho * air));
}

Vector compute_anchor(const BatchKeyStats& stats, double alpha) {
    const double norm_a = l2_norm(stats.mean_avg_key_a);
    const double norm_v = l2_norm(stats.mean_avg_key_v);
    const double norm_q = l2_norm(stats.mean_query);
    if (norm_a <= 1e-12 || norm_v <= 1e-12 || norm_q <= 1e-12) {
        throw NumericError("compute_anchor: degenerate mean key or query");
    }
    Vector blend(stats.mean_query.dim());
    add_scaled(blend, stats.mean_avg_key_a, alpha / norm_a);
    add_scaled(blend, stats.mean_avg_key_v, (1.0 - alpha) / norm_v);
    const double blend_norm = l2_norm(blend);
    if (blend_norm < 1e-12) {
        throw NumericError("compute_anchor: degenerate anchor");
    }
    scale_in_place(blend, norm_q / blend_norm);
    return blend;
}

Matrix compute_rotation(const BatchKeyStats& stats, const Vector& anchor) {
    return plane_rotation_from_pair(stats.mean_query, anchor);
}

ControllerEvent controller_step(ControllerState& state, const RollingQConfig& cfg,
                                const BatchKeyStats& stats, FusionParams& fusion,
                                std::size_t epoch) {
    validate(cfg);
    state.air_history.emplace_back(epoch, stats.air);
    ControllerEvent ev;
    ev.epoch = epoch;
    ev.air = stats.air;
    ev.alpha = std::numeric_limits<double>::quiet_NaN();
    if (std::abs(stats.air) >= cfg.beta && state.rotations_used < cfg.max_rotations) {
        const double alpha = compute_alpha(stats.air, cfg.rho);
        const Vector anchor = compute_anchor(stats, alpha);
        const Matrix rotation = compute_rotation(stats, anchor);
        fusion.rotation = matmul(fusion.rotation, rotation);
        ++state.rotations_used;
        ev.alpha = alpha;
        ev.applied = true;
    }
    return ev;
}

}  // namespace mmfusion
