// Acceptance suite: one check per release criterion, one PASS/FAIL line each.
// Exits nonzero if any criterion fails.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <vector>

#include "octsim/experiment.hpp"

using namespace octsim;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

int g_failures = 0;
std::map<int, std::string> g_lines;

void report(int index, const std::string& name, bool ok, const std::string& detail) {
    char line[512];
    std::snprintf(line, sizeof line, "%s  %d. %s  (%s)", ok ? "PASS" : "FAIL", index, name.c_str(),
                  detail.c_str());
    g_lines[index] = line;
    if (!ok) ++g_failures;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

TrialConfig ideal_trial_config(std::uint64_t seed, double y_offset) {
    TrialConfig cfg;
    cfg.tissue.rho = 1.0;                         // quasi-static: recoil disabled
    cfg.latency = {115.0, 0.0, 0.0, true, true};  // zero staleness
    cfg.corruption = {};
    cfg.control = {0.4, 0.1, ControlMode::virtual_layer};
    cfg.target_p = 0.4;
    cfg.seed = seed;
    cfg.needle_y_offset_um = y_offset;
    return cfg;
}

// --- 1. stopping accuracy under ideal conditions -----------------------------

void criterion_stopping_accuracy() {
    const ScanConfig scan;
    const double bound = 0.1 * 400.0 + 50.0 + scan.axial_spacing_um() / 2;
    std::mt19937_64 rng(424242);
    std::uniform_real_distribution<double> uoff(-12.5, 12.5);

    int ok_trials = 0;
    double worst = 0.0;
    const auto t0 = Clock::now();
    for (int i = 0; i < 100; ++i) {
        const TrialOutcome out = run_trial(ideal_trial_config(1000 + i, uoff(rng)));
        if (out.end_reason == EndReason::target_stop && out.final_axial_error_um <= bound) ++ok_trials;
        worst = std::max(worst, out.final_axial_error_um);
    }
    const double secs = std::chrono::duration<double>(Clock::now() - t0).count();

    char detail[160];
    std::snprintf(detail, sizeof detail, "%d/100 within %.1f um, worst %.1f um, %.1f s", ok_trials, bound,
                  worst, secs);
    report(1, "stopping accuracy, ideal loop", ok_trials == 100 && secs < 10.0, detail);
}

// --- 2 & 8. comparison grid + byte-identical reruns ---------------------------

void criterion_comparison_and_determinism() {
    const ExperimentConfig cfg;  // the default 40-trial grid
    const fs::path dir_a = fs::temp_directory_path() / "octsim_accept_grid_a";
    const fs::path dir_b = fs::temp_directory_path() / "octsim_accept_grid_b";
    const GridResult a = run_grid(cfg, {dir_a, 4, false});
    const GridResult b = run_grid(cfg, {dir_b, 1, false});

    int virtual_blebs = 0, fixed_blebs = 0, failed = 0;
    for (const TrialRecord& r : a.records) {
        if (r.failed) { ++failed; continue; }
        if (r.outcome.bleb_success) (r.mode == ControlMode::virtual_layer ? virtual_blebs : fixed_blebs)++;
    }
    bool cells_dominated = true;
    std::string cell_detail;
    for (const CellSummary& vc : a.cells) {
        if (vc.mode != ControlMode::virtual_layer) continue;
        for (const CellSummary& fc : a.cells) {
            if (fc.mode != ControlMode::fixed_point || fc.target_p != vc.target_p ||
                fc.v_max_mm_s != vc.v_max_mm_s)
                continue;
            if (!(vc.mean_error_um < fc.mean_error_um)) cells_dominated = false;
            char buf[64];
            std::snprintf(buf, sizeof buf, " p%.0f/v%.1f: %.0f<%.0f", vc.target_p * 100, vc.v_max_mm_s,
                          vc.mean_error_um, fc.mean_error_um);
            cell_detail += buf;
        }
    }

    char detail[256];
    std::snprintf(detail, sizeof detail, "virtual bleb %d/20, fixed bleb %d/20, failed %d;%s", virtual_blebs,
                  fixed_blebs, failed, cell_detail.c_str());
    report(2, "virtual-layer vs fixed-point comparison",
           virtual_blebs >= 18 && fixed_blebs <= 12 && cells_dominated && failed == 0, detail);

    const bool identical = slurp(dir_a / "raw.jsonl") == slurp(dir_b / "raw.jsonl") &&
                           slurp(dir_a / "summary.csv") == slurp(dir_b / "summary.csv");
    report(8, "byte-identical reruns with identical seeds", identical,
           identical ? "raw.jsonl and summary.csv match across reruns and thread counts"
                     : "outputs differ between reruns");

    fs::remove_all(dir_a);
    fs::remove_all(dir_b);
}

// --- 3. needle tip depth error bound ------------------------------------------

void criterion_tip_error() {
    ScanConfig cfg;
    cfg.extent_x_um = 1000.0;
    cfg.extent_y_um = 400.0;  // B-scan spacing 100 um = needle diameter
    cfg.n_bscans = 5;
    cfg.n_ascans = 126;
    cfg.depth_pixels = 512;
    cfg.depth_range_um = 2000.0;
    const double r = 50.0, z_c = 1000.0;
    const double half_axial = cfg.axial_spacing_um() / 2;

    RetinaDescription d;
    d.extent_y_um = cfg.extent_y_um;
    d.base_ilm_um = 1500.0;
    RetinaState tissue;
    tissue.rest = make_retina(d);

    auto measure = [&](double y_c) -> double {
        const NeedlePose pose{{700.0, y_c, z_c}, {1.0, 0.0, 0.0}, r, 10000.0, 0.0};
        const SurfaceCloud cloud = extract_surfaces(acquire(tissue, pose, cfg));
        const auto line = fit_needle_line(needle_points(cloud), 30.0, 128, 9);
        if (!line) return 1e18;
        const auto tip = detect_tip(cloud, *line);
        if (!tip) return 1e18;
        return std::abs(tip->z - (z_c - r));
    };

    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> uoff(0.0, cfg.bscan_spacing_um());
    int within = 0;
    double worst = 0.0;
    for (int i = 0; i < 1000; ++i) {
        const double err = measure(100.0 + uoff(rng));
        worst = std::max(worst, err);
        if (err <= r + half_axial + 1e-9) ++within;
    }
    // centered exactly between two B-scan lines: both graze the cylinder
    const double center_err = measure(150.0);
    const bool center_ok = std::abs(center_err - r) <= 0.1 * r;

    char detail[160];
    std::snprintf(detail, sizeof detail, "%d/1000 within r + half voxel (worst %.2f um), centered case %.2f um",
                  within, worst, center_err);
    report(3, "tip depth error bounded by needle radius", within == 1000 && center_ok, detail);
}

// --- 4. relative depth and virtual layer identities ---------------------------

void criterion_targeting_identities() {
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> ui(700.0, 1300.0), ut(300.0, 500.0), up(0.001, 1.0),
        uoff(-300.0, 300.0);

    bool round_trip = true;
    for (int i = 0; i < 1000; ++i) {
        const double ilm = ui(rng), rpe = ilm + ut(rng), p = up(rng);
        const double layer = (1.0 - p) * ilm + p * rpe;
        const double back = relative_depth(layer, ilm, rpe).p;
        if (std::abs(back - p) > 1e-12 * std::abs(p)) round_trip = false;
    }

    SurfaceCloud cloud(2, 32, 10.0, 25.0);
    for (int b = 0; b < 2; ++b)
        for (int a = 0; a < 32; ++a) {
            const double ilm = ui(rng);
            cloud.ilm[cloud.index(b, a)] = {ilm, Provenance::measured};
            cloud.rpe[cloud.index(b, a)] = {ilm + ut(rng), Provenance::measured};
        }
    const VirtualLayer l0 = virtual_layer(cloud, 0.0);
    const VirtualLayer l1 = virtual_layer(cloud, 1.0);
    bool pinned = true;
    for (int b = 0; b < 2; ++b)
        for (int a = 0; a < 32; ++a) {
            pinned &= l0.at(b, a) == *cloud.ilm[cloud.index(b, a)].depth_um;
            pinned &= l1.at(b, a) == *cloud.rpe[cloud.index(b, a)].depth_um;
        }

    bool covariant = true;
    const VirtualLayer base = virtual_layer(cloud, 0.4);
    for (int i = 0; i < 100; ++i) {
        const double off = uoff(rng);
        SurfaceCloud moved = cloud;
        for (std::size_t k = 0; k < moved.ilm.size(); ++k) {
            moved.ilm[k].depth_um = *cloud.ilm[k].depth_um + off;
            moved.rpe[k].depth_um = *cloud.rpe[k].depth_um + off;
        }
        const VirtualLayer shifted = virtual_layer(moved, 0.4);
        for (std::size_t k = 0; k < shifted.target_depth_um.size(); ++k)
            if (std::abs(shifted.target_depth_um[k] - base.target_depth_um[k] - off) > 1e-9) covariant = false;
    }

    char detail[160];
    std::snprintf(detail, sizeof detail, "round-trip 1e-12: %s, p=0/1 bit-exact: %s, covariance 100 offsets: %s",
                  round_trip ? "yes" : "no", pinned ? "yes" : "no", covariant ? "yes" : "no");
    report(4, "relative-depth and virtual-layer identities", round_trip && pinned && covariant, detail);
}

// --- 5. velocity law piecewise exactness ---------------------------------------

void criterion_velocity_law() {
    const ControlParams p03{0.3, 0.1, ControlMode::virtual_layer};
    const ControlParams p04{0.4, 0.1, ControlMode::virtual_layer};

    bool ok = true;
    // above the ILM: full speed
    const ControlCommand c1 = velocity_command(800.0, 1000.0, 1400.0, 1160.0, p04);
    ok &= c1.velocity_mm_s == 0.4 && !c1.stopped && c1.reason == CommandReason::above_ilm_full_speed;
    // normalized gap 0.4 at v_max 0.3: exactly 0.12 mm/s
    const ControlCommand c2 = velocity_command(1000.0, 1000.0, 1400.0, 1160.0, p03);
    ok &= std::abs(c2.velocity_mm_s - 0.12) <= 1e-12 * 0.12 && !c2.stopped;
    // normalized gap 0.075 <= alpha: stop
    const ControlCommand c3 = velocity_command(1130.0, 1000.0, 1400.0, 1160.0, p03);
    ok &= c3.stopped && c3.velocity_mm_s == 0.0;
    // gap equal to thickness: exactly v_max; beyond: clamped
    ok &= velocity_command(1000.0, 1000.0, 1400.0, 1400.0, p03).velocity_mm_s == 0.3;
    ok &= velocity_command(1000.0, 1000.0, 1400.0, 1700.0, p03).velocity_mm_s == 0.3;

    report(5, "velocity law piecewise exactness", ok,
           ok ? "all three cases match hand-computed values to 1e-12" : "case mismatch");
}

// --- 6. latency/overshoot sweep -------------------------------------------------

void criterion_latency_overshoot() {
    const LatencyModel sweep[3] = {
        {115.0, 0.0, 0.0, true, true},     // 0 ms staleness
        {115.0, 20.0, 47.0, true, true},   // 67 ms
        {115.0, 20.0, 47.0, true, false},  // 182 ms
    };
    double means[3] = {};
    for (int i = 0; i < 3; ++i) {
        double total = 0.0;
        for (std::uint64_t seed = 0; seed < 12; ++seed) {
            TrialConfig cfg = ideal_trial_config(7000 + seed, (seed % 5) * 5.0 - 10.0);
            cfg.tissue = {300.0, 0.25, 150.0, 0.2, 0.5};  // bounce-back enabled
            cfg.latency = sweep[i];
            const TrialOutcome out = run_trial(cfg);
            total += out.final_p > out.target_p ? out.final_axial_error_um : 0.0;
        }
        means[i] = total / 12.0;
    }
    const bool monotone = means[0] <= means[1] + 1e-9 && means[1] <= means[2] + 1e-9;
    char detail[160];
    std::snprintf(detail, sizeof detail, "mean overshoot %.1f -> %.1f -> %.1f um for 0/67/182 ms", means[0],
                  means[1], means[2]);
    report(6, "overshoot non-decreasing in latency", monotone, detail);
}

// --- 7. throughput feasibility ---------------------------------------------------

void criterion_throughput() {
    bool budget_ok = true;
    try {
        LatencyModel{}.validate();  // 20 + 47 <= 115
    } catch (const ConfigError&) {
        budget_ok = false;
    }
    bool rejects = false;
    try {
        LatencyModel{115.0, 50.0, 70.0, true, false}.validate();
    } catch (const ConfigError&) {
        rejects = true;
    }

    // wall-clock smoke: a full 10 s trial at the default scan size; slow
    // creep with no stopping band keeps the loop busy until timeout
    TrialConfig cfg;
    cfg.control = {0.05, 0.0, ControlMode::virtual_layer};
    cfg.corruption = {0.05, 0.02, 2.0, 0};
    cfg.seed = 31337;
    const auto t0 = Clock::now();
    const TrialOutcome out = run_trial(cfg);
    const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
    const double fps = out.frames / secs;

    char detail[160];
    std::snprintf(detail, sizeof detail, "budget 67<=115 holds, violation rejected: %s; %d frames in %.2f s = %.0f sim fps",
                  rejects ? "yes" : "no", out.frames, secs, fps);
    report(7, "processing budget and sustained frame rate", budget_ok && rejects && fps >= 9.0, detail);
}

}  // namespace

int main() {
    criterion_stopping_accuracy();
    criterion_comparison_and_determinism();
    criterion_tip_error();
    criterion_targeting_identities();
    criterion_velocity_law();
    criterion_latency_overshoot();
    criterion_throughput();
    for (const auto& [index, line] : g_lines) std::printf("%s\n", line.c_str());
    if (g_failures == 0) {
        std::printf("all acceptance criteria passed\n");
        return 0;
    }
    std::printf("%d acceptance criteria FAILED\n", g_failures);
    return 1;
}
