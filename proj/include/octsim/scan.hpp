#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

#include "octsim/geometry.hpp"
#include "octsim/phantom.hpp"

namespace octsim {

enum class VoxelClass : std::uint8_t { background = 0, needle = 1, ilm = 2, rpe = 3 };

// Geometry of one B5-scan: n_bscans parallel B-scans spread over the minor
// lateral extent, each with n_ascans depth columns. Sample positions use the
// node convention pos = index * spacing, spanning the extent inclusively.
struct ScanConfig {
    double extent_x_um = 4000.0;  // along each B-scan
    double extent_y_um = 100.0;   // across the B-scan stack
    int n_bscans = 5;
    int n_ascans = 500;
    int depth_pixels = 1024;
    double depth_range_um = 4000.0;
    double acquisition_ms = 115.0;

    double lat_spacing_um() const { return extent_x_um / (n_ascans - 1); }
    double bscan_spacing_um() const { return extent_y_um / (n_bscans - 1); }
    double axial_spacing_um() const { return depth_range_um / (depth_pixels - 1); }

    void validate() const {
        if (n_bscans < 2) throw std::invalid_argument("ScanConfig: need at least 2 B-scans");
        if (n_ascans < 2 || depth_pixels < 2)
            throw std::invalid_argument("ScanConfig: raster dimensions too small");
        if (extent_x_um <= 0 || extent_y_um <= 0 || depth_range_um <= 0)
            throw std::invalid_argument("ScanConfig: extents must be positive");
        if (acquisition_ms <= 0) throw std::invalid_argument("ScanConfig: acquisition time must be positive");
    }
};

// Label raster of one acquisition. Every voxel carries exactly one class.
struct B5Scan {
    int n_bscans = 0;
    int n_ascans = 0;
    int depth_pixels = 0;
    Vec3 voxel_spacing_um;  // x: lateral, y: inter-B-scan, z: axial
    double timestamp_s = 0.0;
    std::vector<std::uint8_t> labels;  // indexed [b][a][d]

    B5Scan() = default;
    B5Scan(const ScanConfig& cfg, double timestamp)
        : n_bscans(cfg.n_bscans),
          n_ascans(cfg.n_ascans),
          depth_pixels(cfg.depth_pixels),
          voxel_spacing_um{cfg.lat_spacing_um(), cfg.bscan_spacing_um(), cfg.axial_spacing_um()},
          timestamp_s(timestamp),
          labels(static_cast<std::size_t>(cfg.n_bscans) * cfg.n_ascans * cfg.depth_pixels,
                 static_cast<std::uint8_t>(VoxelClass::background)) {}

    std::size_t index(int b, int a, int d) const {
        return (static_cast<std::size_t>(b) * n_ascans + a) * depth_pixels + d;
    }
    VoxelClass at(int b, int a, int d) const { return static_cast<VoxelClass>(labels[index(b, a, d)]); }
    void set(int b, int a, int d, VoxelClass c) { labels[index(b, a, d)] = static_cast<std::uint8_t>(c); }

    bool in_bounds(int b, int a, int d) const {
        return b >= 0 && b < n_bscans && a >= 0 && a < n_ascans && d >= 0 && d < depth_pixels;
    }
};

struct VoxelIndex {
    int b = 0;
    int a = 0;
    int d = 0;
};

inline Vec3 voxel_to_metric(VoxelIndex idx, const B5Scan& scan) {
    if (!scan.in_bounds(idx.b, idx.a, idx.d))
        throw std::out_of_range("voxel_to_metric: index outside raster");
    return {idx.a * scan.voxel_spacing_um.x, idx.b * scan.voxel_spacing_um.y, idx.d * scan.voxel_spacing_um.z};
}

inline VoxelIndex metric_to_voxel(Vec3 pos, const B5Scan& scan) {
    const VoxelIndex idx{static_cast<int>(std::lround(pos.y / scan.voxel_spacing_um.y)),
                         static_cast<int>(std::lround(pos.x / scan.voxel_spacing_um.x)),
                         static_cast<int>(std::lround(pos.z / scan.voxel_spacing_um.z))};
    if (!scan.in_bounds(idx.b, idx.a, idx.d))
        throw std::out_of_range("metric_to_voxel: position outside raster");
    return idx;
}

// Depth of the first (shallowest) intersection of the vertical column at
// (x, y) with the needle cylinder, including its flat distal end cap.
// OCT only sees this top interface; everything beneath is occluded.
inline std::optional<double> needle_top_depth(const NeedlePose& needle, double x, double y) {
    const Vec3 tip = needle.tip();
    const Vec3 u = needle.axis;
    const double dx = x - tip.x;
    const double dy = y - tip.y;
    const double r2 = needle.radius_um * needle.radius_um;

    std::optional<double> best;
    auto consider = [&](double z) {
        if (!best || z < *best) best = z;
    };

    // Cylinder barrel: |q - tip|^2 - ((q - tip) . u)^2 = r^2 with q = (x, y, z).
    const double c0 = dx * u.x + dy * u.y;
    const double A = 1.0 - u.z * u.z;
    const double lat2 = dx * dx + dy * dy;
    if (A > 1e-12) {
        const double B = -2.0 * c0 * u.z;
        const double C = lat2 - c0 * c0 - r2;
        const double disc = B * B - 4.0 * A * C;
        if (disc >= 0.0) {
            const double sq = std::sqrt(disc);
            for (const double w : {(-B - sq) / (2.0 * A), (-B + sq) / (2.0 * A)}) {
                // s: distance behind the tip along the shaft
                const double s = -(c0 + w * u.z);
                if (s >= 0.0 && s <= needle.length_um) consider(tip.z + w);
            }
        }
    } else if (lat2 <= r2) {
        // Column parallel to a vertical needle: the first interface is the
        // shaft's upper end.
        consider(u.z > 0 ? tip.z - needle.length_um * u.z : tip.z);
    }

    // Flat end cap at the tip, perpendicular to the axis.
    if (std::abs(u.z) > 1e-12) {
        const double w = -c0 / u.z;  // (q - tip) . u = 0
        const double rad2 = dx * dx + dy * dy + w * w;
        if (rad2 <= r2) consider(tip.z + w);
    }
    return best;
}

// Synthesize one B5-scan from the ground truth: per column, mark the needle
// top-surface voxel and the ILM/RPE surface voxels, suppressing any layer the
// needle occludes from above. Depths quantize to the nearest voxel.
inline B5Scan acquire(const RetinaState& state, const NeedlePose& needle, const ScanConfig& cfg) {
    cfg.validate();
    B5Scan scan(cfg, state.time_s);
    const double axial = cfg.axial_spacing_um();
    auto depth_index = [&](double z) -> int {
        if (z < -0.5 * axial) return -1;
        const int d = static_cast<int>(std::lround(z / axial));
        return d < cfg.depth_pixels ? d : -1;
    };
    for (int b = 0; b < cfg.n_bscans; ++b) {
        const double y = b * cfg.bscan_spacing_um();
        for (int a = 0; a < cfg.n_ascans; ++a) {
            const double x = a * cfg.lat_spacing_um();
            const auto ntop = needle_top_depth(needle, x, y);
            const LayerDepths layers = layer_depths(state, x, y);
            // write order rpe, ilm, needle so needle > ilm > rpe on collisions
            if (!ntop || layers.rpe_um < *ntop) {
                if (const int d = depth_index(layers.rpe_um); d >= 0) scan.set(b, a, d, VoxelClass::rpe);
            }
            if (!ntop || layers.ilm_um < *ntop) {
                if (const int d = depth_index(layers.ilm_um); d >= 0) scan.set(b, a, d, VoxelClass::ilm);
            }
            if (ntop) {
                if (const int d = depth_index(*ntop); d >= 0) scan.set(b, a, d, VoxelClass::needle);
            }
        }
    }
    return scan;
}

}  // namespace octsim
