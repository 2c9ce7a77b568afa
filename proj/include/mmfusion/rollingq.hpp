#pragma once

#include <span>
#include <utility>
#include <vector>

#include "mmfusion/attention.hpp"

namespace mmfusion {

struct RollingQConfig {
    double rho = 1.0;
    double beta = 0.5;
    std::size_t max_rotations = 3;
};

void validate(const RollingQConfig& cfg);

// Batch aggregates behind the AIR indicator: per-sample average keys and
// their cosines against that sample's effective query, plus the mean
// vectors the anchor and rotation are built from.
struct BatchKeyStats {
    Vector mean_avg_key_a;
    Vector mean_avg_key_v;
    Vector mean_query;
    double mean_cos_a = 0.0;
    double mean_cos_v = 0.0;
    double air = 0.0;  // mean(cos_a - cos_v), in [-2, 2]
};

struct ControllerState {
    std::size_t rotations_used = 0;
    std::vector<std::pair<std::size_t, double>> air_history;  // (epoch, air)
};

struct ControllerEvent {
    std::size_t epoch = 0;
    double air = 0.0;
    double alpha = 0.0;  // NaN when the threshold did not trip
    bool applied = false;
};

BatchKeyStats compute_batch_stats(std::span<const FusionForwardTrace> traces);

// alpha = (1 + tanh(-rho * air)) / 2, strictly decreasing in air.
double compute_alpha(double air, double rho);

// Blend of the two unit mean keys weighted by alpha, renormalized to the
// norm of the mean query so the rotation below maps one exactly onto the
// other.
Vector compute_anchor(const BatchKeyStats& stats, double alpha);

// Rotation carrying unit(mean query) onto unit(anchor).
Matrix compute_rotation(const BatchKeyStats& stats, const Vector& anchor);

// End-of-epoch trigger: if |air| >= beta and the rotation budget remains,
// fold a new rotation into fusion.rotation (gradients never flow through
// it). Always appends to the air history. No other model parameter is
// touched.
ControllerEvent controller_step(ControllerState& state, const RollingQConfig& cfg,
                                const BatchKeyStats& stats, FusionParams& fusion,
                                std::size_t epoch);

}  // namespace mmfusion
