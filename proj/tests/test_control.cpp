#include <catch2/catch_amalgamated.hpp>

#include "octsim/control.hpp"

using namespace octsim;

TEST_CASE("full speed above the ILM") {
    const ControlParams params{0.4, 0.1, ControlMode::virtual_layer};
    const ControlCommand cmd = velocity_command(800.0, 1000.0, 1400.0, 1160.0, params);
    CHECK(cmd.velocity_mm_s == 0.4);
    CHECK_FALSE(cmd.stopped);
    CHECK(cmd.reason == CommandReason::above_ilm_full_speed);
}

TEST_CASE("velocity is proportional to the normalized gap above alpha") {
    const ControlParams params{0.3, 0.1, ControlMode::virtual_layer};
    // thickness 400, gap 160 -> g = 0.4 -> 0.12 mm/s
    const ControlCommand cmd = velocity_command(1000.0, 1000.0, 1400.0, 1160.0, params);
    CHECK(cmd.velocity_mm_s == Catch::Approx(0.12).epsilon(1e-12));
    CHECK_FALSE(cmd.stopped);
    CHECK(cmd.reason == CommandReason::advancing);
}

TEST_CASE("stop inside the alpha band") {
    const ControlParams params{0.3, 0.1, ControlMode::virtual_layer};
    // thickness 400, gap 30 -> g = 0.075 <= 0.1
    const ControlCommand cmd = velocity_command(1130.0, 1000.0, 1400.0, 1160.0, params);
    CHECK(cmd.velocity_mm_s == 0.0);
    CHECK(cmd.stopped);
    CHECK(cmd.reason == CommandReason::near_target_stop);
}

TEST_CASE("the piecewise law is exact at its boundaries") {
    const ControlParams params{0.3, 0.1, ControlMode::virtual_layer};
    // g exactly alpha stops; just above advances
    CHECK(velocity_command(1120.0, 1000.0, 1400.0, 1160.0, params).stopped);  // g = 0.1
    const ControlCommand just_above = velocity_command(1119.0, 1000.0, 1400.0, 1160.0, params);
    CHECK_FALSE(just_above.stopped);
    CHECK(just_above.velocity_mm_s == Catch::Approx(0.1025 * 0.3).epsilon(1e-12));
}

TEST_CASE("commanded velocity grows with the gap and clamps at v_max") {
    const ControlParams params{0.3, 0.1, ControlMode::virtual_layer};
    double prev = 0.0;
    for (double gap = 45.0; gap <= 400.0; gap += 5.0) {
        const ControlCommand cmd = velocity_command(1000.0, 1000.0, 1400.0, 1000.0 + gap, params);
        REQUIRE(cmd.velocity_mm_s > prev - 1e-15);
        REQUIRE(cmd.velocity_mm_s <= params.v_max_mm_s + 1e-15);
        prev = cmd.velocity_mm_s;
    }
    // g = 1 reaches v_max exactly
    CHECK(velocity_command(1000.0, 1000.0, 1400.0, 1400.0, params).velocity_mm_s == params.v_max_mm_s);
    // deep target beyond the RPE: g > 1 clamps to v_max
    CHECK(velocity_command(1000.0, 1000.0, 1400.0, 1600.0, params).velocity_mm_s == params.v_max_mm_s);
}

TEST_CASE("overshoot commands forward motion, never retraction") {
    const ControlParams params{0.3, 0.1, ControlMode::virtual_layer};
    // tip 80 um past the target: |dist| rule keeps advancing
    const ControlCommand cmd = velocity_command(1240.0, 1000.0, 1400.0, 1160.0, params);
    CHECK(cmd.velocity_mm_s == Catch::Approx(0.2 * 0.3).epsilon(1e-12));
    CHECK(cmd.velocity_mm_s >= 0.0);
}

TEST_CASE("degenerate layers hold instead of moving") {
    const ControlParams params{0.3, 0.1, ControlMode::virtual_layer};
    const ControlCommand cmd = velocity_command(1100.0, 1400.0, 1000.0, 1160.0, params);
    CHECK(cmd.velocity_mm_s == 0.0);
    CHECK_FALSE(cmd.stopped);
    CHECK(cmd.reason == CommandReason::tracking_lost_hold);
}

TEST_CASE("stopped commands always carry zero velocity") {
    const ControlParams params{0.4, 0.2, ControlMode::virtual_layer};
    for (double tip = 900.0; tip <= 1500.0; tip += 7.0) {
        const ControlCommand cmd = velocity_command(tip, 1000.0, 1400.0, 1160.0, params);
        if (cmd.stopped) REQUIRE(cmd.velocity_mm_s == 0.0);
        REQUIRE(cmd.velocity_mm_s >= 0.0);
        REQUIRE(cmd.velocity_mm_s <= params.v_max_mm_s);
    }
}

TEST_CASE("control parameter invariants are enforced") {
    const ControlParams zero_v{0.0, 0.1, ControlMode::virtual_layer};
    const ControlParams big_alpha{0.3, 1.5, ControlMode::virtual_layer};
    const ControlParams neg_alpha{0.3, -0.1, ControlMode::virtual_layer};
    CHECK_THROWS_AS(zero_v.validate(), std::invalid_argument);
    CHECK_THROWS_AS(big_alpha.validate(), std::invalid_argument);
    CHECK_THROWS_AS(neg_alpha.validate(), std::invalid_argument);
}

TEST_CASE("fixed-point baseline: constant speed until the projection passes the target") {
    const ControlParams params{0.4, 0.1, ControlMode::fixed_point};
    const Vec3 axis = normalized({1.0, 0.0, 1.0});
    const Vec3 target{2000.0, 50.0, 1160.0};

    const ControlCommand before = fixed_point_command({1900.0, 50.0, 1060.0}, target, axis, params);
    CHECK(before.velocity_mm_s == 0.4);
    CHECK_FALSE(before.stopped);

    const ControlCommand at = fixed_point_command(target, target, axis, params);
    CHECK(at.stopped);
    CHECK(at.velocity_mm_s == 0.0);

    const ControlCommand past = fixed_point_command({2100.0, 50.0, 1260.0}, target, axis, params);
    CHECK(past.stopped);
}

TEST_CASE("fixed-target planning marches the axis onto the layer surface") {
    SurfaceCloud cloud(3, 40, 10.0, 25.0);
    for (int b = 0; b < 3; ++b)
        for (int a = 0; a < 40; ++a) {
            cloud.ilm[cloud.index(b, a)] = {1000.0, Provenance::measured};
            cloud.rpe[cloud.index(b, a)] = {1400.0, Provenance::measured};
        }
    const VirtualLayer layer = virtual_layer(cloud, 0.4);  // 1160
    const Vec3 axis = normalized({1.0, 0.0, 1.0});

    const auto target = plan_fixed_target({100.0, 25.0, 1000.0}, axis, layer, cloud);
    REQUIRE(target);
    CHECK(target->z == Catch::Approx(1160.0).margin(1.0));
    CHECK(target->x == Catch::Approx(260.0).margin(1.0));

    // tip already below the layer: the plan degenerates to the tip itself
    const auto at_once = plan_fixed_target({100.0, 25.0, 1300.0}, axis, layer, cloud);
    REQUIRE(at_once);
    CHECK(at_once->z == Catch::Approx(1300.0).margin(1e-9));

    // marching out of the scanned extent finds nothing
    CHECK_FALSE(plan_fixed_target({390.0, 25.0, 0.0}, axis, layer, cloud));
}
