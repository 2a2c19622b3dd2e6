#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "octsim/geometry.hpp"

namespace octsim {

// Lateral height field sampled on a regular grid, value = depth in um.
// Node convention: node (i, j) sits at (i * pitch_x, j * pitch_y), nodes
// cover the extent inclusively.
class HeightField {
public:
    HeightField() = default;

    template <typename Fn>
    static HeightField build(double extent_x_um, double extent_y_um, double pitch_um, Fn&& f) {
        if (extent_x_um <= 0 || extent_y_um <= 0 || pitch_um <= 0)
            throw std::invalid_argument("HeightField: extents and pitch must be positive");
        HeightField hf;
        hf.nx_ = static_cast<int>(std::ceil(extent_x_um / pitch_um)) + 1;
        hf.ny_ = static_cast<int>(std::ceil(extent_y_um / pitch_um)) + 1;
        hf.pitch_ = pitch_um;
        hf.values_.resize(static_cast<std::size_t>(hf.nx_) * hf.ny_);
        for (int j = 0; j < hf.ny_; ++j)
            for (int i = 0; i < hf.nx_; ++i)
                hf.values_[static_cast<std::size_t>(j) * hf.nx_ + i] = f(i * pitch_um, j * pitch_um);
        return hf;
    }

    int nx() const { return nx_; }
    int ny() const { return ny_; }
    double pitch() const { return pitch_; }
    double extent_x() const { return (nx_ - 1) * pitch_; }
    double extent_y() const { return (ny_ - 1) * pitch_; }

    double at(int i, int j) const { return values_[static_cast<std::size_t>(j) * nx_ + i]; }
    double& at(int i, int j) { return values_[static_cast<std::size_t>(j) * nx_ + i]; }

    // Bilinear interpolation between grid nodes. Out-of-extent queries are a
    // caller error; a half-pitch slack absorbs floating-point edge queries.
    double sample(double x, double y) const {
        const double slack = 0.5 * pitch_;
        if (x < -slack || y < -slack || x > extent_x() + slack || y > extent_y() + slack)
            throw std::out_of_range("HeightField::sample: query outside lateral extent");
        const double gx = std::clamp(x / pitch_, 0.0, static_cast<double>(nx_ - 1));
        const double gy = std::clamp(y / pitch_, 0.0, static_cast<double>(ny_ - 1));
        const int i0 = std::min(static_cast<int>(gx), nx_ - 2);
        const int j0 = std::min(static_cast<int>(gy), ny_ - 2);
        const double fx = gx - i0;
        const double fy = gy - j0;
        const double v00 = at(i0, j0), v10 = at(i0 + 1, j0);
        const double v01 = at(i0, j0 + 1), v11 = at(i0 + 1, j0 + 1);
        return (1 - fx) * (1 - fy) * v00 + fx * (1 - fy) * v10 + (1 - fx) * fy * v01 + fx * fy * v11;
    }

private:
    int nx_ = 0;
    int ny_ = 0;
    double pitch_ = 0.0;
    std::vector<double> values_;
};

// Mechanical response of the tissue to the needle.
struct TissueParams {
    double sigma_um = 300.0;    // lateral spread of the indentation bump
    double kappa = 0.25;        // fraction of the bump transferred to the RPE
    double tau_p_um = 150.0;    // peak indentation at which the ILM punctures
    double rho = 0.2;           // residual indentation fraction after recoil
    double t_r_s = 0.5;         // recoil time constant
};

struct RetinaDescription {
    double extent_x_um = 4000.0;
    double extent_y_um = 100.0;
    double grid_pitch_um = 4.0;
    double base_ilm_um = 1000.0;   // ILM depth at the lateral center
    double thickness_um = 400.0;   // constant rest thickness
    double tilt_x_deg = 0.0;       // layer slope along x
    double tilt_y_deg = 0.0;       // layer slope along y
    double thickness_band_min_um = 300.0;
    double thickness_band_max_um = 500.0;
};

// Rest-shape layer geometry. RPE is always deeper than ILM. The fields are
// immutable and shared, so copying a tissue state is cheap; mutation happens
// only through the single writer in the simulation loop.
struct RetinaRest {
    std::shared_ptr<const HeightField> ilm_field;
    std::shared_ptr<const HeightField> rpe_field;

    const HeightField& ilm() const { return *ilm_field; }
    const HeightField& rpe() const { return *rpe_field; }

    void validate(double band_min_um, double band_max_um) const {
        if (!ilm_field || !rpe_field) throw std::invalid_argument("RetinaRest: missing layer fields");
        if (ilm().nx() != rpe().nx() || ilm().ny() != rpe().ny())
            throw std::invalid_argument("RetinaRest: layer grids must match");
        for (int j = 0; j < ilm().ny(); ++j) {
            for (int i = 0; i < ilm().nx(); ++i) {
                const double t = rpe().at(i, j) - ilm().at(i, j);
                if (t <= 0.0)
                    throw std::invalid_argument("RetinaRest: rpe must be deeper than ilm everywhere");
                if (t < band_min_um || t > band_max_um)
                    throw std::invalid_argument("RetinaRest: rest thickness " + std::to_string(t) +
                                                " um outside configured band");
            }
        }
    }
};

inline RetinaRest make_retina(const RetinaDescription& d) {
    constexpr double kDegToRad = 3.14159265358979323846 / 180.0;
    const double gx = std::tan(d.tilt_x_deg * kDegToRad);
    const double gy = std::tan(d.tilt_y_deg * kDegToRad);
    const double cx = d.extent_x_um / 2.0;
    const double cy = d.extent_y_um / 2.0;
    RetinaRest rest;
    auto ilm = std::make_shared<HeightField>(HeightField::build(
        d.extent_x_um, d.extent_y_um, d.grid_pitch_um,
        [&](double x, double y) { return d.base_ilm_um + gx * (x - cx) + gy * (y - cy); }));
    auto rpe = std::make_shared<HeightField>(HeightField::build(
        d.extent_x_um, d.extent_y_um, d.grid_pitch_um,
        [&](double x, double y) { return ilm->sample(x, y) + d.thickness_um; }));
    rest.ilm_field = std::move(ilm);
    rest.rpe_field = std::move(rpe);
    rest.validate(d.thickness_band_min_um, d.thickness_band_max_um);
    return rest;
}

// Ground-truth tissue state the simulation loop evolves. The deformation is a
// single radially symmetric Gaussian bump; pre-puncture its peak equals the
// needle penetration below the rest ILM, post-puncture it relaxes toward
// rho * (peak at puncture).
struct RetinaState {
    RetinaRest rest;
    TissueParams model;
    double time_s = 0.0;
    double bump_amp_um = 0.0;
    double bump_x_um = 0.0;
    double bump_y_um = 0.0;
    bool punctured = false;
    double puncture_time_s = -1.0;        // < 0 means not punctured yet
    double bump_amp_at_puncture_um = 0.0;

    double bump(double x, double y) const {
        if (bump_amp_um == 0.0) return 0.0;
        const double dx = x - bump_x_um;
        const double dy = y - bump_y_um;
        const double s2 = model.sigma_um * model.sigma_um;
        return bump_amp_um * std::exp(-(dx * dx + dy * dy) / (2.0 * s2));
    }
};

struct LayerDepths {
    double ilm_um = 0.0;
    double rpe_um = 0.0;
};

// Deformed layer depths at a lateral position.
inline LayerDepths layer_depths(const RetinaState& s, double x, double y) {
    const double b = s.bump(x, y);
    return {s.rest.ilm().sample(x, y) + b, s.rest.rpe().sample(x, y) + s.model.kappa * b};
}

// Needle kinematics. The tip is derived from the start pose and the odometer
// so that advancing twice by d equals advancing once by 2d bit-for-bit.
struct NeedlePose {
    Vec3 start;                   // tip position at trial start
    Vec3 axis;                    // unit insertion direction
    double radius_um = 50.0;      // half needle thickness
    double length_um = 10000.0;   // modeled shaft length behind the tip
    double odometer_um = 0.0;     // total distance advanced along axis

    Vec3 tip() const { return start + odometer_um * axis; }
};

// 45 degrees to the lateral plane, descending along +x.
inline NeedlePose make_needle_45(Vec3 tip, double radius_um) {
    constexpr double kInvSqrt2 = 0.70710678118654752440;
    return {tip, {kInvSqrt2, 0.0, kInvSqrt2}, radius_um, 10000.0, 0.0};
}

inline NeedlePose advance_needle(NeedlePose pose, double distance_um) {
    if (distance_um < 0.0)
        throw std::invalid_argument("advance_needle: retraction is not supported");
    pose.odometer_um += distance_um;
    return pose;
}

// One tissue update. Pre-puncture the bump is memoryless and tracks the tip;
// post-puncture it decays exponentially toward the residual fraction.
inline RetinaState step_tissue(const RetinaState& s, const NeedlePose& needle, double dt_s) {
    if (dt_s <= 0.0)
        throw std::invalid_argument("step_tissue: dt must be positive");
    RetinaState n = s;
    n.time_s += dt_s;
    if (!n.punctured) {
        const Vec3 tip = needle.tip();
        const double pen = tip.z - s.rest.ilm().sample(tip.x, tip.y);
        if (pen > 0.0) {
            n.bump_amp_um = pen;
            n.bump_x_um = tip.x;
            n.bump_y_um = tip.y;
            if (pen >= s.model.tau_p_um) {
                n.punctured = true;
                n.puncture_time_s = n.time_s;
                n.bump_amp_at_puncture_um = pen;
            }
        }
        // no contact: nothing to update
    } else {
        const double residual = s.model.rho * s.bump_amp_at_puncture_um;
        n.bump_amp_um = residual + (s.bump_amp_um - residual) * std::exp(-dt_s / s.model.t_r_s);
    }
    return n;
}

// Fraction of the recoil completed, in [0, 1]. Zero before puncture and when
// rho = 1 (recoil disabled).
inline double recoil_progress(const RetinaState& s) {
    if (!s.punctured) return 0.0;
    const double total = (1.0 - s.model.rho) * s.bump_amp_at_puncture_um;
    if (total <= 0.0) return 0.0;
    const double done = s.bump_amp_at_puncture_um - s.bump_amp_um;
    return std::clamp(done / total, 0.0, 1.0);
}

}  // namespace octsim
