#pragma once

#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "octsim/geometry.hpp"
#include "octsim/perception.hpp"

namespace octsim {

// Normalized axial position between ILM (0) and RPE (1). Values outside
// [0, 1] are representable (tip above the ILM or below the RPE) but flagged.
struct RelativeDepth {
    double p = 0.0;
    bool in_retina() const { return p >= 0.0 && p <= 1.0; }
};

inline RelativeDepth relative_depth(double z_um, double ilm_um, double rpe_um) {
    if (!(rpe_um > ilm_um))
        throw std::domain_error("relative_depth: degenerate layers (rpe <= ilm)");
    return {(z_um - ilm_um) / (rpe_um - ilm_um)};
}

// The target surface at fixed fraction p between the ILM and RPE, one depth
// per lateral sample. Recomputed from scratch every frame.
struct VirtualLayer {
    int n_bscans = 0;
    int n_ascans = 0;
    double p = 0.0;
    std::vector<double> target_depth_um;

    std::size_t index(int b, int a) const { return static_cast<std::size_t>(b) * n_ascans + a; }
    double at(int b, int a) const { return target_depth_um[index(b, a)]; }
};

inline VirtualLayer virtual_layer(const SurfaceCloud& cloud, double p) {
    VirtualLayer layer{cloud.n_bscans, cloud.n_ascans, p, {}};
    layer.target_depth_um.resize(static_cast<std::size_t>(cloud.n_bscans) * cloud.n_ascans);
    for (int b = 0; b < cloud.n_bscans; ++b)
        for (int a = 0; a < cloud.n_ascans; ++a) {
            const std::size_t i = cloud.index(b, a);
            if (!cloud.ilm[i].depth_um || !cloud.rpe[i].depth_um)
                throw std::invalid_argument("virtual_layer: cloud must be fully inpainted at sample b=" +
                                            std::to_string(b) + " a=" + std::to_string(a));
            const double ilm = *cloud.ilm[i].depth_um;
            const double rpe = *cloud.rpe[i].depth_um;
            if (!(rpe > ilm))
                throw std::domain_error("virtual_layer: degenerate layers at sample b=" + std::to_string(b) +
                                        " a=" + std::to_string(a));
            // convex form so p = 0 and p = 1 reproduce the layers bit-exactly
            layer.target_depth_um[i] = (1.0 - p) * ilm + p * rpe;
        }
    return layer;
}

// Signed tip-to-layer distance at the tip's A-scan (nearest lateral sample,
// no sub-sample interpolation). Positive distance means the tip is above the
// target and must keep advancing.
struct TipGap {
    double dist_um = 0.0;       // target_depth - tip_depth
    double thickness_um = 0.0;  // rpe - ilm at the tip's A-scan
    double ilm_um = 0.0;
    double rpe_um = 0.0;
    int b = 0;
    int a = 0;
};

inline std::optional<TipGap> tip_gap(Vec3 tip, const VirtualLayer& layer, const SurfaceCloud& cloud) {
    const int a = static_cast<int>(std::lround(tip.x / cloud.lat_spacing_um));
    const int b = static_cast<int>(std::lround(tip.y / cloud.bscan_spacing_um));
    if (a < 0 || a >= cloud.n_ascans || b < 0 || b >= cloud.n_bscans) return std::nullopt;  // tracking lost
    const std::size_t i = cloud.index(b, a);
    TipGap g;
    g.ilm_um = *cloud.ilm[i].depth_um;
    g.rpe_um = *cloud.rpe[i].depth_um;
    g.thickness_um = g.rpe_um - g.ilm_um;
    g.dist_um = layer.at(b, a) - tip.z;
    g.b = b;
    g.a = a;
    return g;
}

}  // namespace octsim
