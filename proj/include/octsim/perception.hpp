#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <optional>
#include <ostream>
#include <random>
#include <stdexcept>
#include <vector>

#include "octsim/geometry.hpp"
#include "octsim/scan.hpp"

namespace octsim {

// Stand-in for segmentation network error modes: per-column surface dropout,
// spurious needle voxels, and axial label jitter. Rates of zero reproduce the
// input bit-for-bit.
struct CorruptionModel {
    double dropout_rate = 0.0;         // per labeled surface voxel, per column
    double needle_outlier_rate = 0.0;  // per column
    double jitter_sigma_um = 0.0;      // axial displacement of surface labels
    std::uint64_t seed = 0;

    void validate() const {
        if (dropout_rate < 0 || dropout_rate > 1 || needle_outlier_rate < 0 || needle_outlier_rate > 1)
            throw std::invalid_argument("CorruptionModel: rates must be within [0, 1]");
        if (jitter_sigma_um < 0) throw std::invalid_argument("CorruptionModel: jitter sigma must be >= 0");
    }
};

enum class Provenance : std::uint8_t { missing = 0, measured = 1, inpainted = 2 };

struct LayerSample {
    std::optional<double> depth_um;
    Provenance provenance = Provenance::missing;
};

// First-occurrence surface depths per lateral sample. Needle samples are
// never inpainted; layer samples become total after inpaint_layers.
struct SurfaceCloud {
    int n_bscans = 0;
    int n_ascans = 0;
    double lat_spacing_um = 0.0;
    double bscan_spacing_um = 0.0;
    std::vector<LayerSample> ilm;
    std::vector<LayerSample> rpe;
    std::vector<std::optional<double>> needle;

    SurfaceCloud() = default;
    SurfaceCloud(int nb, int na, double lat, double inter)
        : n_bscans(nb),
          n_ascans(na),
          lat_spacing_um(lat),
          bscan_spacing_um(inter),
          ilm(static_cast<std::size_t>(nb) * na),
          rpe(static_cast<std::size_t>(nb) * na),
          needle(static_cast<std::size_t>(nb) * na) {}

    std::size_t index(int b, int a) const { return static_cast<std::size_t>(b) * n_ascans + a; }
    double x_of(int a) const { return a * lat_spacing_um; }
    double y_of(int b) const { return b * bscan_spacing_um; }
};

struct NeedleLine {
    Vec3 point;
    Vec3 direction;  // unit length
    int inlier_count = 0;
    double inlier_threshold_um = 0.0;
};

struct InpaintError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
    return splitmix64(seed ^ splitmix64(stream));
}

}  // namespace detail

// Apply the corruption model to a label raster. Dropout uses one uniform draw
// per (column, class) in a fixed order, so raising the rate only grows the
// set of dropped voxels for a given seed.
inline B5Scan segment(const B5Scan& scan, const CorruptionModel& cm) {
    cm.validate();
    B5Scan out = scan;
    if (cm.dropout_rate == 0.0 && cm.needle_outlier_rate == 0.0 && cm.jitter_sigma_um == 0.0) return out;

    const double axial = scan.voxel_spacing_um.z;
    auto first_of = [&](int b, int a, VoxelClass c) -> int {
        for (int d = 0; d < scan.depth_pixels; ++d)
            if (out.at(b, a, d) == c) return d;
        return -1;
    };

    if (cm.jitter_sigma_um > 0.0) {
        std::mt19937_64 rng(detail::mix_seed(cm.seed, 0x6a177e5));
        std::normal_distribution<double> noise(0.0, cm.jitter_sigma_um);
        for (int b = 0; b < scan.n_bscans; ++b)
            for (int a = 0; a < scan.n_ascans; ++a)
                for (const VoxelClass c : {VoxelClass::needle, VoxelClass::ilm, VoxelClass::rpe}) {
                    const int d = first_of(b, a, c);
                    if (d < 0) continue;
                    const int nd = d + static_cast<int>(std::lround(noise(rng) / axial));
                    if (nd == d || nd < 0 || nd >= scan.depth_pixels) continue;
                    out.set(b, a, d, VoxelClass::background);
                    out.set(b, a, nd, c);
                }
    }

    {
        std::mt19937_64 rng(detail::mix_seed(cm.seed, 0xd209001));
        std::uniform_real_distribution<double> uni(0.0, 1.0);
        for (int b = 0; b < scan.n_bscans; ++b)
            for (int a = 0; a < scan.n_ascans; ++a)
                for (const VoxelClass c : {VoxelClass::needle, VoxelClass::ilm, VoxelClass::rpe}) {
                    const double u = uni(rng);  // drawn unconditionally to keep streams aligned across rates
                    if (u >= cm.dropout_rate) continue;
                    const int d = first_of(b, a, c);
                    if (d >= 0) out.set(b, a, d, VoxelClass::background);
                }
    }

    if (cm.needle_outlier_rate > 0.0) {
        std::mt19937_64 rng(detail::mix_seed(cm.seed, 0x0417a3b));
        std::uniform_real_distribution<double> uni(0.0, 1.0);
        std::uniform_int_distribution<int> depth(0, scan.depth_pixels - 1);
        for (int b = 0; b < scan.n_bscans; ++b)
            for (int a = 0; a < scan.n_ascans; ++a) {
                if (uni(rng) >= cm.needle_outlier_rate) continue;
                out.set(b, a, depth(rng), VoxelClass::needle);
            }
    }
    return out;
}

// First occurrence of each class along every A-scan, converted to metric depth.
inline SurfaceCloud extract_surfaces(const B5Scan& scan) {
    SurfaceCloud cloud(scan.n_bscans, scan.n_ascans, scan.voxel_spacing_um.x, scan.voxel_spacing_um.y);
    const double axial = scan.voxel_spacing_um.z;
    for (int b = 0; b < scan.n_bscans; ++b) {
        for (int a = 0; a < scan.n_ascans; ++a) {
            int found = 0;
            const std::size_t i = cloud.index(b, a);
            const std::uint8_t* col = scan.labels.data() + scan.index(b, a, 0);
            // columns are almost entirely background; skip zero runs a word at a time
            for (int d0 = 0; d0 < scan.depth_pixels && found != 7; d0 += 8) {
                const int run = std::min(8, scan.depth_pixels - d0);
                if (run == 8) {
                    std::uint64_t word;
                    std::memcpy(&word, col + d0, 8);
                    if (word == 0) continue;
                }
                for (int k = 0; k < run; ++k) {
                    const int d = d0 + k;
                    switch (static_cast<VoxelClass>(col[d])) {
                        case VoxelClass::needle:
                            if (!(found & 1)) { cloud.needle[i] = d * axial; found |= 1; }
                            break;
                        case VoxelClass::ilm:
                            if (!(found & 2)) { cloud.ilm[i] = {d * axial, Provenance::measured}; found |= 2; }
                            break;
                        case VoxelClass::rpe:
                            if (!(found & 4)) { cloud.rpe[i] = {d * axial, Provenance::measured}; found |= 4; }
                            break;
                        default:
                            break;
                    }
                }
            }
        }
    }
    return cloud;
}

inline std::vector<Vec3> needle_points(const SurfaceCloud& cloud) {
    std::vector<Vec3> pts;
    for (int b = 0; b < cloud.n_bscans; ++b)
        for (int a = 0; a < cloud.n_ascans; ++a)
            if (const auto& z = cloud.needle[cloud.index(b, a)])
                pts.push_back({cloud.x_of(a), cloud.y_of(b), *z});
    return pts;
}

// RANSAC over two-point line hypotheses, then a least-squares refit over the
// winning inlier set (principal axis through the inlier centroid). Returns
// nullopt with fewer than two points; the caller must hold position.
inline std::optional<NeedleLine> fit_needle_line(const std::vector<Vec3>& points, double threshold_um,
                                                 int iterations, std::uint64_t seed) {
    const int n = static_cast<int>(points.size());
    if (n < 2) return std::nullopt;
    if (threshold_um <= 0 || iterations < 1)
        throw std::invalid_argument("fit_needle_line: threshold and iterations must be positive");

    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> pick(0, n - 1);

    auto count_inliers = [&](Vec3 q, Vec3 u) {
        int c = 0;
        for (const Vec3& p : points)
            if (point_line_distance(p, q, u) <= threshold_um) ++c;
        return c;
    };

    Vec3 best_q, best_u;
    int best_count = -1;
    for (int it = 0; it < iterations; ++it) {
        const int i = pick(rng);
        int j = pick(rng);
        if (j == i) j = (j + 1) % n;
        const Vec3 d = points[j] - points[i];
        const double len = norm(d);
        if (len < 1e-9) continue;
        const Vec3 u = {d.x / len, d.y / len, d.z / len};
        const int c = count_inliers(points[i], u);
        if (c > best_count) {
            best_count = c;
            best_q = points[i];
            best_u = u;
        }
    }
    if (best_count < 2) return std::nullopt;

    // refine over inliers of the best hypothesis
    std::vector<const Vec3*> inliers;
    for (const Vec3& p : points)
        if (point_line_distance(p, best_q, best_u) <= threshold_um) inliers.push_back(&p);

    Vec3 centroid{};
    for (const Vec3* p : inliers) centroid = centroid + *p;
    centroid = (1.0 / static_cast<double>(inliers.size())) * centroid;

    double cov[3][3] = {};
    for (const Vec3* p : inliers) {
        const Vec3 d = *p - centroid;
        const double v[3] = {d.x, d.y, d.z};
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) cov[r][c] += v[r] * v[c];
    }
    // dominant eigenvector by power iteration, started from the RANSAC direction
    Vec3 u = best_u;
    for (int it = 0; it < 64; ++it) {
        const Vec3 w = {cov[0][0] * u.x + cov[0][1] * u.y + cov[0][2] * u.z,
                        cov[1][0] * u.x + cov[1][1] * u.y + cov[1][2] * u.z,
                        cov[2][0] * u.x + cov[2][1] * u.y + cov[2][2] * u.z};
        const double wn = norm(w);
        if (wn < 1e-12) break;  // degenerate spread; keep the sample direction
        u = {w.x / wn, w.y / wn, w.z / wn};
    }
    // canonical orientation: descend in depth, ties broken toward +x then +y
    if (u.z < -1e-12 || (std::abs(u.z) <= 1e-12 && (u.x < -1e-12 || (std::abs(u.x) <= 1e-12 && u.y < 0))))
        u = {-u.x, -u.y, -u.z};

    NeedleLine line{centroid, u, 0, threshold_um};
    line.inlier_count = count_inliers(centroid, u);
    return line;
}

// Drop needle samples farther than threshold from the fitted line.
inline SurfaceCloud remove_needle_outliers(const SurfaceCloud& cloud, const NeedleLine& line, double threshold_um) {
    SurfaceCloud out = cloud;
    for (int b = 0; b < cloud.n_bscans; ++b)
        for (int a = 0; a < cloud.n_ascans; ++a) {
            auto& z = out.needle[out.index(b, a)];
            if (!z) continue;
            const Vec3 p{cloud.x_of(a), cloud.y_of(b), *z};
            if (point_line_distance(p, line.point, line.direction) > threshold_um) z.reset();
        }
    return out;
}

namespace detail {

inline void inpaint_row(std::vector<LayerSample>& row) {
    const int n = static_cast<int>(row.size());
    std::vector<int> valid;
    for (int i = 0; i < n; ++i)
        if (row[i].depth_um) valid.push_back(i);
    if (valid.empty()) return;  // handled by the cross-row fallback

    // leading and trailing gaps extend flat from the nearest valid sample
    for (int i = 0; i < valid.front(); ++i) row[i] = {row[valid.front()].depth_um, Provenance::inpainted};
    for (int i = valid.back() + 1; i < n; ++i) row[i] = {row[valid.back()].depth_um, Provenance::inpainted};
    // interior gaps interpolate linearly between their bracketing samples
    for (std::size_t k = 0; k + 1 < valid.size(); ++k) {
        const int lo = valid[k], hi = valid[k + 1];
        if (hi == lo + 1) continue;
        const double zlo = *row[lo].depth_um, zhi = *row[hi].depth_um;
        for (int i = lo + 1; i < hi; ++i) {
            const double t = static_cast<double>(i - lo) / (hi - lo);
            row[i] = {zlo + t * (zhi - zlo), Provenance::inpainted};
        }
    }
    // 3-sample median over inpainted samples to knock out filler spikes
    std::vector<LayerSample> filtered = row;
    for (int i = 1; i + 1 < n; ++i) {
        if (row[i].provenance != Provenance::inpainted) continue;
        double v[3] = {*row[i - 1].depth_um, *row[i].depth_um, *row[i + 1].depth_um};
        std::sort(v, v + 3);
        filtered[i].depth_um = v[1];
    }
    row = std::move(filtered);
}

inline void inpaint_layer(SurfaceCloud& cloud, std::vector<LayerSample>& layer, const char* name) {
    bool any = false;
    for (const auto& s : layer)
        if (s.depth_um) { any = true; break; }
    if (!any) throw InpaintError(std::string("inpaint_layers: layer ") + name + " absent from the whole scan");

    std::vector<int> empty_rows;
    for (int b = 0; b < cloud.n_bscans; ++b) {
        std::vector<LayerSample> row(layer.begin() + cloud.index(b, 0), layer.begin() + cloud.index(b, 0) + cloud.n_ascans);
        bool row_any = false;
        for (const auto& s : row)
            if (s.depth_um) { row_any = true; break; }
        if (!row_any) {
            empty_rows.push_back(b);
            continue;
        }
        inpaint_row(row);
        std::copy(row.begin(), row.end(), layer.begin() + cloud.index(b, 0));
    }
    // rows with no data copy the nearest filled row
    for (const int b : empty_rows) {
        int src = -1;
        for (int off = 1; off < cloud.n_bscans; ++off) {
            const int lo = b - off, hi = b + off;
            if (lo >= 0 && std::find(empty_rows.begin(), empty_rows.end(), lo) == empty_rows.end()) { src = lo; break; }
            if (hi < cloud.n_bscans && std::find(empty_rows.begin(), empty_rows.end(), hi) == empty_rows.end()) { src = hi; break; }
        }
        for (int a = 0; a < cloud.n_ascans; ++a)
            layer[cloud.index(b, a)] = {layer[cloud.index(src, a)].depth_um, Provenance::inpainted};
    }
}

}  // namespace detail

// Fill missing ILM/RPE samples per B-scan: linear interpolation inside gaps,
// flat extension at the scan edges, then a 3-sample median over the filled
// spans. Throws InpaintError when a layer has no samples anywhere.
inline SurfaceCloud inpaint_layers(const SurfaceCloud& cloud) {
    SurfaceCloud out = cloud;
    detail::inpaint_layer(out, out.ilm, "ilm");
    detail::inpaint_layer(out, out.rpe, "rpe");
    return out;
}

// Needle tip estimate: within the distal window of the needle's extent along
// the fitted line, take each B-scan's most distal sample and return the
// shallowest of those. The per-B-scan candidates are the cross-section
// samples of the tip; their highest point is nearest the needle center.
// A candidate must terminate a contiguous run of needle columns: the needle
// is one connected body, and an isolated sample that merely happens to lie
// near the line's distal extension is a segmentation artifact.
inline std::optional<Vec3> detect_tip(const SurfaceCloud& cloud, const NeedleLine& line,
                                      double window_fraction = 0.10, int min_run = 3) {
    struct Candidate {
        double s = 0.0;
        Vec3 p;
        bool set = false;
    };

    // proximal = against the line's dominant lateral direction
    const bool along_a = std::abs(line.direction.x) >= std::abs(line.direction.y);
    const int step = along_a ? (line.direction.x >= 0 ? -1 : 1) : (line.direction.y >= 0 ? -1 : 1);
    auto run_length = [&](int b, int a) {
        int run = 1;
        int bb = b, aa = a;
        while (run < min_run) {
            (along_a ? aa : bb) += step;
            if (aa < 0 || aa >= cloud.n_ascans || bb < 0 || bb >= cloud.n_bscans) break;
            if (!cloud.needle[cloud.index(bb, aa)]) break;
            ++run;
        }
        return run;
    };

    // the window anchors at the most distal contiguous sample, so a lone
    // artifact cannot drag it away from the needle body; if the whole trace
    // is sparser than min_run, degrade to the unfiltered rule
    auto collect = [&](bool filtered) -> std::optional<Vec3> {
        double s_min = 0.0, s_max = 0.0;
        bool any = false;
        for (int b = 0; b < cloud.n_bscans; ++b)
            for (int a = 0; a < cloud.n_ascans; ++a) {
                const auto& z = cloud.needle[cloud.index(b, a)];
                if (!z) continue;
                if (filtered && run_length(b, a) < min_run) continue;
                const Vec3 p{cloud.x_of(a), cloud.y_of(b), *z};
                const double s = dot(p - line.point, line.direction);
                if (!any) { s_min = s_max = s; any = true; }
                s_min = std::min(s_min, s);
                s_max = std::max(s_max, s);
            }
        if (!any) return std::nullopt;

        const double window_lo = s_max - window_fraction * (s_max - s_min);
        std::vector<Candidate> per_bscan(cloud.n_bscans);
        for (int b = 0; b < cloud.n_bscans; ++b)
            for (int a = 0; a < cloud.n_ascans; ++a) {
                const auto& z = cloud.needle[cloud.index(b, a)];
                if (!z) continue;
                if (filtered && run_length(b, a) < min_run) continue;
                const Vec3 p{cloud.x_of(a), cloud.y_of(b), *z};
                const double s = dot(p - line.point, line.direction);
                if (s < window_lo || s > s_max) continue;
                auto& c = per_bscan[b];
                if (!c.set || s > c.s) c = {s, p, true};
            }
        std::optional<Vec3> tip;
        for (const auto& c : per_bscan) {
            if (!c.set) continue;
            if (!tip || c.p.z < tip->z) tip = c.p;
        }
        return tip;
    };

    if (auto tip = collect(true)) return tip;
    return collect(false);
}

// Optional per-frame dump: one row per present sample.
inline void write_cloud_csv(const SurfaceCloud& cloud, std::ostream& os) {
    os << "b,a,class,depth_um,provenance\n";
    auto prov_name = [](Provenance p) { return p == Provenance::measured ? "measured" : "inpainted"; };
    for (int b = 0; b < cloud.n_bscans; ++b)
        for (int a = 0; a < cloud.n_ascans; ++a) {
            const std::size_t i = cloud.index(b, a);
            char buf[160];
            if (cloud.ilm[i].depth_um) {
                std::snprintf(buf, sizeof buf, "%d,%d,ilm,%.6f,%s\n", b, a, *cloud.ilm[i].depth_um,
                              prov_name(cloud.ilm[i].provenance));
                os << buf;
            }
            if (cloud.rpe[i].depth_um) {
                std::snprintf(buf, sizeof buf, "%d,%d,rpe,%.6f,%s\n", b, a, *cloud.rpe[i].depth_um,
                              prov_name(cloud.rpe[i].provenance));
                os << buf;
            }
            if (cloud.needle[i]) {
                std::snprintf(buf, sizeof buf, "%d,%d,needle,%.6f,measured\n", b, a, *cloud.needle[i]);
                os << buf;
            }
        }
}

}  // namespace octsim
