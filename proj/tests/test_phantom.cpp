#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "octsim/phantom.hpp"

using namespace octsim;

namespace {

RetinaState flat_state(double ilm = 1000.0, double thickness = 400.0) {
    RetinaState s;
    RetinaDescription d;
    d.base_ilm_um = ilm;
    d.thickness_um = thickness;
    s.rest = make_retina(d);
    return s;
}

}  // namespace

TEST_CASE("layer_depths on a flat rest phantom is the identity") {
    const RetinaState s = flat_state();
    const LayerDepths L = layer_depths(s, 1234.0, 37.0);
    CHECK(L.ilm_um == Catch::Approx(1000.0).margin(1e-9));
    CHECK(L.rpe_um == Catch::Approx(1400.0).margin(1e-9));
}

TEST_CASE("indentation bump moves ILM fully and RPE by kappa") {
    RetinaState s = flat_state();
    s.bump_amp_um = 120.0;
    s.bump_x_um = 2000.0;
    s.bump_y_um = 50.0;
    const LayerDepths L = layer_depths(s, 2000.0, 50.0);
    CHECK(L.ilm_um == Catch::Approx(1120.0).margin(1e-9));
    CHECK(L.rpe_um == Catch::Approx(1430.0).margin(1e-9));
}

TEST_CASE("height field interpolates bilinearly between nodes") {
    const HeightField hf =
        HeightField::build(8.0, 8.0, 8.0, [](double x, double) { return x == 0.0 ? 1000.0 : 1100.0; });
    CHECK(hf.sample(4.0, 0.0) == Catch::Approx(1050.0).margin(1e-12));
    CHECK_THROWS_AS(hf.sample(1e6, 0.0), std::out_of_range);
}

TEST_CASE("layer query outside the lateral extent is a domain error") {
    const RetinaState s = flat_state();
    CHECK_THROWS_AS(layer_depths(s, -500.0, 0.0), std::out_of_range);
}

TEST_CASE("step_tissue without contact leaves the tissue unchanged") {
    const RetinaState s = flat_state();
    NeedlePose pose = make_needle_45({2000.0, 50.0, 200.0}, 50.0);
    const RetinaState n = step_tissue(s, pose, 0.01);
    CHECK(n.bump_amp_um == 0.0);
    CHECK_FALSE(n.punctured);
    CHECK(n.time_s == Catch::Approx(0.01));
}

TEST_CASE("indentation tracks tip penetration and punctures at the threshold") {
    RetinaState s = flat_state();
    s.model.tau_p_um = 150.0;
    NeedlePose pose = make_needle_45({2000.0, 50.0, 1100.0}, 50.0);  // 100 um below rest ILM
    RetinaState n = step_tissue(s, pose, 0.001);
    CHECK(n.bump_amp_um == Catch::Approx(100.0).margin(1e-9));
    CHECK_FALSE(n.punctured);
    // deformed ILM rides the tip exactly, never above it
    CHECK(layer_depths(n, 2000.0, 50.0).ilm_um == Catch::Approx(1100.0).margin(1e-9));

    pose = make_needle_45({2000.0, 50.0, 1150.0}, 50.0);  // exactly tau_p below
    n = step_tissue(n, pose, 0.001);
    CHECK(n.punctured);
    CHECK(n.bump_amp_at_puncture_um == Catch::Approx(150.0).margin(1e-9));
}

TEST_CASE("post-puncture indentation decays to the residual fraction") {
    RetinaState s = flat_state();
    s.model.rho = 0.2;
    s.model.t_r_s = 0.5;
    s.punctured = true;
    s.bump_amp_um = 100.0;
    s.bump_amp_at_puncture_um = 100.0;
    s.bump_x_um = 2000.0;
    s.bump_y_um = 50.0;
    NeedlePose pose = make_needle_45({2000.0, 50.0, 1100.0}, 50.0);
    for (int i = 0; i < 5000; ++i) s = step_tissue(s, pose, 0.001);
    // closed form: 20 + 80 * exp(-10)
    CHECK(s.bump_amp_um == Catch::Approx(20.0).margin(1.0));
    CHECK(s.bump_amp_um == Catch::Approx(20.0 + 80.0 * std::exp(-10.0)).margin(1e-6));
    CHECK(recoil_progress(s) == Catch::Approx(1.0).margin(0.01));
}

TEST_CASE("puncture latches for the rest of the trial") {
    RetinaState s = flat_state();
    s.punctured = true;
    s.bump_amp_um = 150.0;
    s.bump_amp_at_puncture_um = 150.0;
    NeedlePose far = make_needle_45({2000.0, 50.0, 0.0}, 50.0);
    for (int i = 0; i < 100; ++i) s = step_tissue(s, far, 0.01);
    CHECK(s.punctured);
}

TEST_CASE("bounce-back: ILM recoils while a held tip stays, so relative depth grows") {
    RetinaState s = flat_state();
    s.model = {300.0, 0.25, 150.0, 0.2, 0.5};
    NeedlePose pose = make_needle_45({2000.0, 50.0, 1150.0}, 50.0);
    s = step_tissue(s, pose, 0.001);
    REQUIRE(s.punctured);

    double prev_ilm = layer_depths(s, 2000.0, 50.0).ilm_um;
    double prev_progress = recoil_progress(s);
    double prev_rel = pose.tip().z - prev_ilm;
    for (int i = 0; i < 2000; ++i) {
        s = step_tissue(s, pose, 0.001);  // zero commanded velocity: pose untouched
        const double ilm = layer_depths(s, 2000.0, 50.0).ilm_um;
        const double progress = recoil_progress(s);
        CHECK(ilm <= prev_ilm + 1e-12);          // tissue moves back toward rest
        CHECK(progress >= prev_progress - 1e-12);
        prev_ilm = ilm;
        prev_progress = progress;
    }
    const double rel = pose.tip().z - prev_ilm;
    CHECK(rel > prev_rel + 50.0);  // tip advanced >50 um relative to the ILM without moving
}

TEST_CASE("advance_needle is exact 45-degree kinematics") {
    const NeedlePose p0 = make_needle_45({1000.0, 50.0, 900.0}, 50.0);

    const NeedlePose same = advance_needle(p0, 0.0);
    CHECK(same.tip() == p0.tip());

    const NeedlePose p1 = advance_needle(p0, 100.0);
    CHECK(p1.tip().z - p0.tip().z == Catch::Approx(70.710678118654755).epsilon(1e-12));
    CHECK(p1.tip().x - p0.tip().x == Catch::Approx(70.710678118654755).epsilon(1e-12));
    CHECK(p1.axis == p0.axis);
    CHECK(p1.odometer_um == 100.0);

    // additivity is bit-exact
    const NeedlePose twice = advance_needle(advance_needle(p0, 50.0), 50.0);
    const NeedlePose once = advance_needle(p0, 100.0);
    CHECK(twice.tip().x == once.tip().x);
    CHECK(twice.tip().y == once.tip().y);
    CHECK(twice.tip().z == once.tip().z);

    CHECK_THROWS_AS(advance_needle(p0, -1.0), std::invalid_argument);
}

TEST_CASE("rest thickness outside the configured band is rejected") {
    RetinaDescription d;
    d.thickness_um = 200.0;
    CHECK_THROWS_AS(make_retina(d), std::invalid_argument);
    d.thickness_um = 550.0;
    CHECK_THROWS_AS(make_retina(d), std::invalid_argument);
}

TEST_CASE("rpe stays below ilm everywhere with tilt and indentation") {
    RetinaDescription d;
    d.tilt_x_deg = 3.0;
    d.tilt_y_deg = -2.0;
    RetinaState s;
    s.rest = make_retina(d);
    s.bump_amp_um = 220.0;
    s.bump_x_um = 1700.0;
    s.bump_y_um = 40.0;
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> ux(0.0, d.extent_x_um), uy(0.0, d.extent_y_um);
    for (int i = 0; i < 2000; ++i) {
        const LayerDepths L = layer_depths(s, ux(rng), uy(rng));
        CHECK(L.rpe_um > L.ilm_um);
    }
}
