#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <deque>
#include <functional>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <vector>

#include "octsim/control.hpp"
#include "octsim/perception.hpp"
#include "octsim/phantom.hpp"
#include "octsim/scan.hpp"
#include "octsim/targeting.hpp"

namespace octsim {

struct ConfigError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Timing of the acquisition/processing chain, in virtual milliseconds. A scan
// snapshots the scene at acquisition start (or at acquisition end with
// snapshot_at_end, the instantaneous-scan idealization); the resulting
// command applies one segmentation + processing interval after acquisition
// completes. In pipelined mode the next acquisition starts immediately, so
// frames arrive every acquisition_ms and sustained operation requires the
// processing chain to fit inside one acquisition.
struct LatencyModel {
    double acquisition_ms = 115.0;
    double segmentation_ms = 20.0;
    double processing_ms = 47.0;
    bool pipelined = true;
    bool snapshot_at_end = false;

    double staleness_ms() const {
        return (snapshot_at_end ? 0.0 : acquisition_ms) + segmentation_ms + processing_ms;
    }
    double period_ms() const {
        return pipelined ? acquisition_ms : acquisition_ms + segmentation_ms + processing_ms;
    }
    void validate() const {
        if (acquisition_ms <= 0) throw ConfigError("LatencyModel: acquisition time must be positive");
        if (segmentation_ms < 0 || processing_ms < 0)
            throw ConfigError("LatencyModel: processing times must be non-negative");
        if (pipelined && segmentation_ms + processing_ms > acquisition_ms)
            throw ConfigError("LatencyModel: pipelined mode requires segmentation + processing <= acquisition");
    }
};

struct PerceptionParams {
    double ransac_threshold_um = 30.0;
    int ransac_iterations = 256;
    double tip_window_fraction = 0.10;
};

struct PerceptionResult {
    SurfaceCloud cloud;
    std::optional<NeedleLine> line;
    std::optional<Vec3> tip;
    bool layers_ok = false;
};

// The full per-frame pipeline: corruption stand-in for the segmenter, surface
// extraction, needle line fit, outlier removal, layer inpainting, tip pick.
inline PerceptionResult perceive(const B5Scan& scan, const CorruptionModel& corruption,
                                 const PerceptionParams& params, std::uint64_t ransac_seed) {
    PerceptionResult res;
    const B5Scan segmented = segment(scan, corruption);
    res.cloud = extract_surfaces(segmented);
    res.line = fit_needle_line(needle_points(res.cloud), params.ransac_threshold_um, params.ransac_iterations,
                               ransac_seed);
    if (res.line) res.cloud = remove_needle_outliers(res.cloud, *res.line, params.ransac_threshold_um);
    try {
        res.cloud = inpaint_layers(res.cloud);
        res.layers_ok = true;
    } catch (const InpaintError&) {
        res.layers_ok = false;
    }
    if (res.line) res.tip = detect_tip(res.cloud, *res.line, params.tip_window_fraction);
    return res;
}

struct TrialConfig {
    RetinaDescription retina;
    TissueParams tissue;
    ScanConfig scan;
    CorruptionModel corruption;
    ControlParams control;
    LatencyModel latency;
    PerceptionParams perception;
    double target_p = 0.4;
    std::uint64_t seed = 0;
    double timeout_s = 10.0;
    double substep_ms = 1.0;
    double start_x_um = 1200.0;         // insertion site along the B-scan axis
    double needle_y_offset_um = 0.0;    // offset from the scan's center line
    double start_height_um = 100.0;     // tip above the rest ILM at start
    double needle_radius_um = 50.0;
    double rpe_safety_margin_um = 20.0;

    void validate() const {
        scan.validate();
        control.validate();
        latency.validate();
        corruption.validate();
        if (target_p <= 0.0 || target_p > 1.0) throw ConfigError("TrialConfig: target_p must be in (0, 1]");
        if (timeout_s <= 0 || substep_ms <= 0) throw ConfigError("TrialConfig: timeout and substep must be positive");
        if (retina.extent_x_um < scan.extent_x_um || retina.extent_y_um < scan.extent_y_um)
            throw ConfigError("TrialConfig: phantom must cover the scan extent");
        if (start_x_um < 0 || start_x_um > scan.extent_x_um)
            throw ConfigError("TrialConfig: insertion site outside the scan extent");
        if (needle_radius_um <= 0) throw ConfigError("TrialConfig: needle radius must be positive");
    }
};

enum class EndReason { target_stop, rpe_contact, timeout, left_scan };

inline const char* to_string(EndReason r) {
    switch (r) {
        case EndReason::target_stop: return "target_stop";
        case EndReason::rpe_contact: return "rpe_contact";
        case EndReason::timeout: return "timeout";
        case EndReason::left_scan: return "left_scan";
    }
    return "unknown";
}

struct TrajectoryPoint {
    double t_s = 0.0;
    Vec3 tip;
    double ilm_um = 0.0;     // ground truth at the tip's A-scan
    double rpe_um = 0.0;
    double target_um = 0.0;  // ground-truth virtual layer depth
    double v_mm_s = 0.0;
    CommandReason reason = CommandReason::tracking_lost_hold;
};

struct TrialOutcome {
    double final_tip_depth_um = 0.0;
    double final_p = 0.0;
    double target_p = 0.0;
    double final_axial_error_um = 0.0;
    bool rpe_contact = false;
    bool punctured = false;
    bool bleb_success = false;
    double duration_s = 0.0;
    EndReason end_reason = EndReason::timeout;
    int frames = 0;
    std::vector<TrajectoryPoint> trajectory;
};

using FrameSink = std::function<void(int frame, const B5Scan& scan, const SurfaceCloud& cloud)>;

namespace detail {

inline std::uint64_t seed_for_frame(std::uint64_t trial_seed, int frame, int stream) {
    return mix_seed(mix_seed(trial_seed, 0xF1a600 + static_cast<std::uint64_t>(stream)),
                    static_cast<std::uint64_t>(frame));
}

// Ground truth evaluated at the lateral sample nearest the tip.
inline LayerDepths ground_truth_at_tip(const RetinaState& state, const ScanConfig& scan, Vec3 tip) {
    const double xa = std::clamp(std::round(tip.x / scan.lat_spacing_um()) * scan.lat_spacing_um(), 0.0,
                                 scan.extent_x_um);
    const double yb = std::clamp(std::round(tip.y / scan.bscan_spacing_um()) * scan.bscan_spacing_um(), 0.0,
                                 scan.extent_y_um);
    return layer_depths(state, xa, yb);
}

}  // namespace detail

// Geometric bleb proxy and final metrics, all from the ground-truth phantom.
inline TrialOutcome evaluate_outcome(const RetinaState& state, const NeedlePose& needle, const TrialConfig& cfg,
                                     EndReason end, bool rpe_contact, double duration_s, int frames,
                                     std::vector<TrajectoryPoint> trajectory) {
    TrialOutcome out;
    const Vec3 tip = needle.tip();
    const LayerDepths gt = detail::ground_truth_at_tip(state, cfg.scan, tip);
    out.final_tip_depth_um = tip.z;
    out.final_p = (tip.z - gt.ilm_um) / (gt.rpe_um - gt.ilm_um);
    out.target_p = cfg.target_p;
    const double target_depth = gt.ilm_um + cfg.target_p * (gt.rpe_um - gt.ilm_um);
    out.final_axial_error_um = std::abs(tip.z - target_depth);
    out.rpe_contact = rpe_contact;
    out.punctured = state.punctured;
    out.bleb_success = state.punctured && !rpe_contact && tip.z > gt.ilm_um &&
                       tip.z < gt.rpe_um - cfg.rpe_safety_margin_um;
    out.duration_s = duration_s;
    out.end_reason = end;
    out.frames = frames;
    out.trajectory = std::move(trajectory);
    return out;
}

// Closed-loop trial on a virtual clock. The needle moves continuously at the
// last applied command (zero-order hold); each frame's command is computed
// from a snapshot that is staleness_ms old when it takes effect. The tissue
// advances at a fixed substep. The trial ends at a latched stop, ground-truth
// RPE contact, or timeout.
inline TrialOutcome run_trial(const TrialConfig& cfg, const FrameSink* sink = nullptr) {
    cfg.validate();

    RetinaState state;
    state.rest = make_retina(cfg.retina);
    state.model = cfg.tissue;

    const double y0 = cfg.scan.extent_y_um / 2.0 + cfg.needle_y_offset_um;
    const double x0 = cfg.start_x_um;
    const double z0 = state.rest.ilm().sample(x0, y0) - cfg.start_height_um;
    NeedlePose pose = make_needle_45({x0, y0, z0}, cfg.needle_radius_um);

    const double period = cfg.latency.period_ms();
    const double snap_offset = cfg.latency.snapshot_at_end ? cfg.latency.acquisition_ms : 0.0;
    const double apply_offset =
        cfg.latency.acquisition_ms + cfg.latency.segmentation_ms + cfg.latency.processing_ms;
    const double timeout_ms = cfg.timeout_s * 1000.0;
    constexpr double kEps = 1e-9;

    std::deque<std::pair<double, ControlCommand>> pending;
    std::vector<TrajectoryPoint> trajectory;
    int next_frame = 0;
    double t_ms = 0.0;
    double v_mm_s = 0.0;
    bool fixed_planned = false;
    Vec3 fixed_target;
    bool rpe_hit = false;
    bool ended = false;
    EndReason end = EndReason::timeout;
    double end_ms = timeout_ms;

    auto record = [&](double t, double v, CommandReason reason) {
        const Vec3 tip = pose.tip();
        const LayerDepths gt = detail::ground_truth_at_tip(state, cfg.scan, tip);
        trajectory.push_back({t / 1000.0, tip, gt.ilm_um, gt.rpe_um,
                              gt.ilm_um + cfg.target_p * (gt.rpe_um - gt.ilm_um), v, reason});
    };

    auto make_command = [&](const PerceptionResult& per) -> ControlCommand {
        if (cfg.control.mode == ControlMode::virtual_layer) {
            if (!per.layers_ok || !per.tip) return ControlCommand::hold();
            try {
                const VirtualLayer layer = virtual_layer(per.cloud, cfg.target_p);
                const auto gap = tip_gap(*per.tip, layer, per.cloud);
                if (!gap) return ControlCommand::hold();
                return velocity_command(per.tip->z, gap->ilm_um, gap->rpe_um, layer.at(gap->b, gap->a),
                                        cfg.control);
            } catch (const std::domain_error&) {
                return ControlCommand::hold();
            }
        }
        // fixed-point baseline: plan once from the first usable frame, then
        // run on robot odometry alone
        if (!fixed_planned) {
            if (!per.layers_ok || !per.tip) return ControlCommand::hold();
            try {
                const VirtualLayer layer = virtual_layer(per.cloud, cfg.target_p);
                const auto planned = plan_fixed_target(*per.tip, pose.axis, layer, per.cloud);
                if (!planned) return ControlCommand::hold();
                fixed_target = *planned;
                fixed_planned = true;
            } catch (const std::domain_error&) {
                return ControlCommand::hold();
            }
        }
        return fixed_point_command(pose.tip(), fixed_target, pose.axis, cfg.control);
    };

    while (!ended) {
        // commands first, then snapshots, at equal event times
        while (!pending.empty() && pending.front().first <= t_ms + kEps) {
            const auto [at, cmd] = pending.front();
            pending.pop_front();
            v_mm_s = cmd.velocity_mm_s;
            record(at, cmd.velocity_mm_s, cmd.reason);
            if (cmd.stopped) {
                ended = true;
                end = EndReason::target_stop;
                end_ms = at;
                break;
            }
        }
        if (ended) break;

        while (next_frame * period + snap_offset <= t_ms + kEps) {
            const int frame = next_frame++;
            const B5Scan scan = acquire(state, pose, cfg.scan);
            CorruptionModel cm = cfg.corruption;
            cm.seed = detail::seed_for_frame(cfg.seed, frame, 0);
            const PerceptionResult per =
                perceive(scan, cm, cfg.perception, detail::seed_for_frame(cfg.seed, frame, 1));
            if (sink) (*sink)(frame, scan, per.cloud);
            pending.emplace_back(frame * period + apply_offset, make_command(per));
        }

        if (t_ms >= timeout_ms - kEps) {
            end = EndReason::timeout;
            end_ms = timeout_ms;
            break;
        }

        pose = advance_needle(pose, v_mm_s * cfg.substep_ms);  // mm/s equals um/ms
        state = step_tissue(state, pose, cfg.substep_ms / 1000.0);
        t_ms += cfg.substep_ms;

        const Vec3 tip = pose.tip();
        if (tip.x < 0 || tip.x > cfg.scan.extent_x_um || tip.y < 0 || tip.y > cfg.scan.extent_y_um) {
            end = EndReason::left_scan;
            end_ms = t_ms;
            break;
        }
        const LayerDepths gt = layer_depths(state, tip.x, tip.y);
        if (tip.z >= gt.rpe_um) {
            rpe_hit = true;
            end = EndReason::rpe_contact;
            end_ms = t_ms;
            break;
        }
        // the fixed-point stop runs on robot odometry, checked every substep
        if (cfg.control.mode == ControlMode::fixed_point && fixed_planned && v_mm_s > 0 &&
            dot(tip, pose.axis) >= dot(fixed_target, pose.axis)) {
            v_mm_s = 0.0;
            record(t_ms, 0.0, CommandReason::near_target_stop);
            end = EndReason::target_stop;
            end_ms = t_ms;
            break;
        }
    }

    return evaluate_outcome(state, pose, cfg, end, rpe_hit, end_ms / 1000.0, next_frame, std::move(trajectory));
}

inline void write_trajectory_csv(const TrialOutcome& outcome, std::ostream& os) {
    os << "t_s,tip_x_um,tip_y_um,tip_z_um,ilm_um,rpe_um,target_um,v_cmd_mm_s,reason\n";
    char buf[256];
    for (const TrajectoryPoint& p : outcome.trajectory) {
        std::snprintf(buf, sizeof buf, "%.6f,%.3f,%.3f,%.3f,%.3f,%.3f,%.3f,%.6f,%s\n", p.t_s, p.tip.x, p.tip.y,
                      p.tip.z, p.ilm_um, p.rpe_um, p.target_um, p.v_mm_s, to_string(p.reason));
        os << buf;
    }
}

}  // namespace octsim
