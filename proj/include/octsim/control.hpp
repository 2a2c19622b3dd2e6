#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>

#include "octsim/geometry.hpp"
#include "octsim/targeting.hpp"

namespace octsim {

enum class ControlMode { virtual_layer, fixed_point };

enum class CommandReason { advancing, above_ilm_full_speed, near_target_stop, tracking_lost_hold };

inline const char* to_string(CommandReason r) {
    switch (r) {
        case CommandReason::advancing: return "advancing";
        case CommandReason::above_ilm_full_speed: return "above_ilm_full_speed";
        case CommandReason::near_target_stop: return "near_target_stop";
        case CommandReason::tracking_lost_hold: return "tracking_lost_hold";
    }
    return "unknown";
}

inline const char* to_string(ControlMode m) {
    return m == ControlMode::virtual_layer ? "virtual_layer" : "fixed_point";
}

struct ControlParams {
    double v_max_mm_s = 0.3;
    double alpha = 0.1;  // stopping criterion
    ControlMode mode = ControlMode::virtual_layer;

    void validate() const {
        if (v_max_mm_s <= 0) throw std::invalid_argument("ControlParams: v_max must be positive");
        if (alpha < 0 || alpha > 1) throw std::invalid_argument("ControlParams: alpha must be within [0, 1]");
    }
};

struct ControlCommand {
    double velocity_mm_s = 0.0;  // along the needle axis, never negative
    bool stopped = false;
    CommandReason reason = CommandReason::advancing;

    static ControlCommand hold() { return {0.0, false, CommandReason::tracking_lost_hold}; }
};

// Insertion velocity from the tip's position relative to the target layer:
// full speed above the ILM, speed proportional to the normalized gap while it
// exceeds alpha, stop otherwise. Normalized gaps above 1 clamp to full speed.
inline ControlCommand velocity_command(double tip_depth_um, double ilm_um, double rpe_um, double target_depth_um,
                                       const ControlParams& params) {
    params.validate();
    if (!(rpe_um > ilm_um)) return ControlCommand::hold();
    if (tip_depth_um < ilm_um) return {params.v_max_mm_s, false, CommandReason::above_ilm_full_speed};
    const double g = std::abs(target_depth_um - tip_depth_um) / (rpe_um - ilm_um);
    if (g > params.alpha) return {std::min(g, 1.0) * params.v_max_mm_s, false, CommandReason::advancing};
    return {0.0, true, CommandReason::near_target_stop};
}

// Baseline from prior work: constant full speed until the tip's projection
// along the insertion axis passes the pre-planned target's projection, then a
// permanent stop. The target is never updated, so tissue deformation after
// planning is not compensated.
inline ControlCommand fixed_point_command(Vec3 tip, Vec3 target, Vec3 axis, const ControlParams& params) {
    params.validate();
    if (dot(tip, axis) < dot(target, axis)) return {params.v_max_mm_s, false, CommandReason::advancing};
    return {0.0, true, CommandReason::near_target_stop};
}

// Plan the fixed 3D target: march from the perceived tip along the insertion
// axis until the path crosses the target layer surface. Returns nullopt when
// the axis never reaches the layer inside the scanned extent.
inline std::optional<Vec3> plan_fixed_target(Vec3 tip, Vec3 axis, const VirtualLayer& layer,
                                             const SurfaceCloud& cloud, double step_um = 1.0,
                                             double max_travel_um = 5000.0) {
    for (double t = 0.0; t <= max_travel_um; t += step_um) {
        const Vec3 q = tip + t * axis;
        const int a = static_cast<int>(std::lround(q.x / cloud.lat_spacing_um));
        const int b = static_cast<int>(std::lround(q.y / cloud.bscan_spacing_um));
        if (a < 0 || a >= cloud.n_ascans || b < 0 || b >= cloud.n_bscans) return std::nullopt;
        if (q.z >= layer.at(b, a)) return q;
    }
    return std::nullopt;
}

}  // namespace octsim
