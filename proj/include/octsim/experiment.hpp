#pragma once

#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "octsim/config.hpp"
#include "octsim/raster_io.hpp"
#include "octsim/simloop.hpp"

namespace octsim {

using json = nlohmann::ordered_json;

// Batch experiment over the grid mode x target_p x v_max, with per-trial
// phantom variation standing in for biological spread between eyes.
struct ExperimentConfig {
    std::vector<ControlMode> modes = {ControlMode::virtual_layer, ControlMode::fixed_point};
    std::vector<double> target_ps = {0.40, 0.60};
    std::vector<double> v_maxes_mm_s = {0.3, 0.4};
    int trials_per_cell = 5;
    std::uint64_t master_seed = 1;

    double alpha = 0.1;

    // per-trial randomization bands
    double thickness_min_um = 350.0;
    double thickness_max_um = 500.0;
    double tilt_band_deg = 3.0;
    double y_offset_band_um = 12.0;
    double base_ilm_min_um = 900.0;
    double base_ilm_max_um = 1100.0;

    double grid_pitch_um = 4.0;
    double thickness_band_min_um = 300.0;
    double thickness_band_max_um = 500.0;

    // The default puncture threshold sits above the penetration the baseline
    // reaches at p = 40%, which is the regime where a pre-planned fixed point
    // dimples the membrane without crossing it. The recoil constant matches:
    // deep dimples in swollen ex-vivo tissue relax over roughly a second.
    TissueParams tissue{300.0, 0.25, 240.0, 0.2, 1.5};
    ScanConfig scan;
    LatencyModel latency;
    CorruptionModel corruption{0.05, 0.02, 2.0, 0};
    PerceptionParams perception;

    double timeout_s = 10.0;
    double substep_ms = 1.0;
    double start_height_um = 100.0;
    double start_x_um = 1200.0;
    double needle_radius_um = 50.0;
    double rpe_safety_margin_um = 20.0;

    void validate() const {
        if (modes.empty() || target_ps.empty() || v_maxes_mm_s.empty())
            throw ConfigError("ExperimentConfig: grid axes must be non-empty");
        if (trials_per_cell < 1) throw ConfigError("ExperimentConfig: trials_per_cell must be >= 1");
        if (thickness_min_um > thickness_max_um || base_ilm_min_um > base_ilm_max_um)
            throw ConfigError("ExperimentConfig: randomization band inverted");
        if (thickness_min_um < thickness_band_min_um || thickness_max_um > thickness_band_max_um)
            throw ConfigError("ExperimentConfig: thickness band outside phantom limits");
        if (tilt_band_deg < 0 || y_offset_band_um < 0) throw ConfigError("ExperimentConfig: negative band");
        for (const double p : target_ps)
            if (p <= 0 || p > 1) throw ConfigError("ExperimentConfig: target_p must be in (0, 1]");
        for (const double v : v_maxes_mm_s)
            if (v <= 0) throw ConfigError("ExperimentConfig: v_max must be positive");
        scan.validate();
        latency.validate();
        corruption.validate();
    }
};

struct TrialRecord {
    std::string id;
    ControlMode mode = ControlMode::virtual_layer;
    double target_p = 0.0;
    double v_max_mm_s = 0.0;
    int trial_index = 0;
    std::uint64_t seed = 0;
    // sampled phantom
    double thickness_um = 0.0;
    double tilt_x_deg = 0.0;
    double tilt_y_deg = 0.0;
    double base_ilm_um = 0.0;
    double y_offset_um = 0.0;
    bool failed = false;
    std::string error;
    TrialOutcome outcome;
};

namespace detail {

inline std::uint64_t cell_seed(std::uint64_t master, std::uint64_t tag, double target_p, double v_max, int trial) {
    std::uint64_t s = mix_seed(master, tag);
    s = mix_seed(s, static_cast<std::uint64_t>(std::llround(target_p * 1000.0)));
    s = mix_seed(s, static_cast<std::uint64_t>(std::llround(v_max * 1000.0)));
    return mix_seed(s, static_cast<std::uint64_t>(trial));
}

inline std::string trial_id(ControlMode mode, double p, double v, int trial) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "%s-p%02d-v%.2f-t%02d", to_string(mode),
                  static_cast<int>(std::llround(p * 100.0)), v, trial);
    return buf;
}

}  // namespace detail

// Build one trial of a cell. Phantom sampling is keyed on (target_p, v_max,
// trial) but not on the mode, so both controllers see identical eyes and the
// comparison is paired.
inline TrialRecord make_trial(const ExperimentConfig& cfg, ControlMode mode, double target_p, double v_max,
                              int trial) {
    TrialRecord rec;
    rec.id = detail::trial_id(mode, target_p, v_max, trial);
    rec.mode = mode;
    rec.target_p = target_p;
    rec.v_max_mm_s = v_max;
    rec.trial_index = trial;
    rec.seed = detail::cell_seed(cfg.master_seed,
                                 0x7216a1 + static_cast<std::uint64_t>(mode == ControlMode::fixed_point),
                                 target_p, v_max, trial);

    std::mt19937_64 rng(detail::cell_seed(cfg.master_seed, 0xeffe77, target_p, v_max, trial));
    auto uniform = [&](double lo, double hi) {
        return lo == hi ? lo : std::uniform_real_distribution<double>(lo, hi)(rng);
    };
    rec.thickness_um = uniform(cfg.thickness_min_um, cfg.thickness_max_um);
    rec.tilt_x_deg = uniform(-cfg.tilt_band_deg, cfg.tilt_band_deg);
    rec.tilt_y_deg = uniform(-cfg.tilt_band_deg, cfg.tilt_band_deg);
    rec.base_ilm_um = uniform(cfg.base_ilm_min_um, cfg.base_ilm_max_um);
    rec.y_offset_um = uniform(-cfg.y_offset_band_um, cfg.y_offset_band_um);
    return rec;
}

inline TrialConfig trial_config_from_record(const ExperimentConfig& cfg, const TrialRecord& rec) {
    TrialConfig tc;
    tc.retina = {cfg.scan.extent_x_um, cfg.scan.extent_y_um, cfg.grid_pitch_um,
                 rec.base_ilm_um,      rec.thickness_um,     rec.tilt_x_deg,
                 rec.tilt_y_deg,       cfg.thickness_band_min_um, cfg.thickness_band_max_um};
    tc.tissue = cfg.tissue;
    tc.scan = cfg.scan;
    tc.corruption = cfg.corruption;
    tc.control = {rec.v_max_mm_s, cfg.alpha, rec.mode};
    tc.latency = cfg.latency;
    tc.perception = cfg.perception;
    tc.target_p = rec.target_p;
    tc.seed = rec.seed;
    tc.timeout_s = cfg.timeout_s;
    tc.substep_ms = cfg.substep_ms;
    tc.start_x_um = cfg.start_x_um;
    tc.needle_y_offset_um = rec.y_offset_um;
    tc.start_height_um = cfg.start_height_um;
    tc.needle_radius_um = cfg.needle_radius_um;
    tc.rpe_safety_margin_um = cfg.rpe_safety_margin_um;
    return tc;
}

// --- JSON serialization -----------------------------------------------------

inline json to_json(const ExperimentConfig& c) {
    json j;
    json grid;
    std::vector<std::string> mode_names;
    for (const ControlMode m : c.modes) mode_names.emplace_back(to_string(m));
    grid["modes"] = mode_names;
    grid["target_p"] = c.target_ps;
    grid["v_max_mm_s"] = c.v_maxes_mm_s;
    grid["trials_per_cell"] = c.trials_per_cell;
    grid["master_seed"] = c.master_seed;
    j["grid"] = grid;
    j["control"] = {{"alpha", c.alpha}};
    j["phantom"] = {{"thickness_band_um", {c.thickness_min_um, c.thickness_max_um}},
                    {"tilt_band_deg", c.tilt_band_deg},
                    {"y_offset_band_um", c.y_offset_band_um},
                    {"base_ilm_band_um", {c.base_ilm_min_um, c.base_ilm_max_um}},
                    {"grid_pitch_um", c.grid_pitch_um},
                    {"thickness_limits_um", {c.thickness_band_min_um, c.thickness_band_max_um}}};
    j["tissue"] = {{"sigma_um", c.tissue.sigma_um},
                   {"kappa", c.tissue.kappa},
                   {"tau_p_um", c.tissue.tau_p_um},
                   {"rho", c.tissue.rho},
                   {"t_r_s", c.tissue.t_r_s}};
    j["scan"] = {{"extent_x_um", c.scan.extent_x_um}, {"extent_y_um", c.scan.extent_y_um},
                 {"n_bscans", c.scan.n_bscans},       {"n_ascans", c.scan.n_ascans},
                 {"depth_pixels", c.scan.depth_pixels}, {"depth_range_um", c.scan.depth_range_um},
                 {"acquisition_ms", c.scan.acquisition_ms}};
    j["latency"] = {{"acquisition_ms", c.latency.acquisition_ms},
                    {"segmentation_ms", c.latency.segmentation_ms},
                    {"processing_ms", c.latency.processing_ms},
                    {"pipelined", c.latency.pipelined},
                    {"snapshot_at_end", c.latency.snapshot_at_end}};
    j["corruption"] = {{"dropout_rate", c.corruption.dropout_rate},
                       {"needle_outlier_rate", c.corruption.needle_outlier_rate},
                       {"jitter_sigma_um", c.corruption.jitter_sigma_um}};
    j["perception"] = {{"ransac_threshold_um", c.perception.ransac_threshold_um},
                       {"ransac_iterations", c.perception.ransac_iterations},
                       {"tip_window_fraction", c.perception.tip_window_fraction}};
    j["trial"] = {{"timeout_s", c.timeout_s},
                  {"substep_ms", c.substep_ms},
                  {"start_height_um", c.start_height_um},
                  {"start_x_um", c.start_x_um},
                  {"needle_radius_um", c.needle_radius_um},
                  {"rpe_safety_margin_um", c.rpe_safety_margin_um}};
    return j;
}

inline ControlMode mode_from_string(const std::string& s) {
    if (s == "virtual_layer") return ControlMode::virtual_layer;
    if (s == "fixed_point") return ControlMode::fixed_point;
    throw ConfigError("unknown control mode '" + s + "'");
}

inline ExperimentConfig experiment_config_from_json(const json& j) {
    ExperimentConfig c;
    const json& grid = j.at("grid");
    c.modes.clear();
    for (const auto& m : grid.at("modes")) c.modes.push_back(mode_from_string(m.get<std::string>()));
    c.target_ps = grid.at("target_p").get<std::vector<double>>();
    c.v_maxes_mm_s = grid.at("v_max_mm_s").get<std::vector<double>>();
    c.trials_per_cell = grid.at("trials_per_cell").get<int>();
    c.master_seed = grid.at("master_seed").get<std::uint64_t>();
    c.alpha = j.at("control").at("alpha").get<double>();
    const json& ph = j.at("phantom");
    c.thickness_min_um = ph.at("thickness_band_um").at(0).get<double>();
    c.thickness_max_um = ph.at("thickness_band_um").at(1).get<double>();
    c.tilt_band_deg = ph.at("tilt_band_deg").get<double>();
    c.y_offset_band_um = ph.at("y_offset_band_um").get<double>();
    c.base_ilm_min_um = ph.at("base_ilm_band_um").at(0).get<double>();
    c.base_ilm_max_um = ph.at("base_ilm_band_um").at(1).get<double>();
    c.grid_pitch_um = ph.at("grid_pitch_um").get<double>();
    c.thickness_band_min_um = ph.at("thickness_limits_um").at(0).get<double>();
    c.thickness_band_max_um = ph.at("thickness_limits_um").at(1).get<double>();
    const json& ti = j.at("tissue");
    c.tissue = {ti.at("sigma_um").get<double>(), ti.at("kappa").get<double>(), ti.at("tau_p_um").get<double>(),
                ti.at("rho").get<double>(), ti.at("t_r_s").get<double>()};
    const json& sc = j.at("scan");
    c.scan = {sc.at("extent_x_um").get<double>(),   sc.at("extent_y_um").get<double>(),
              sc.at("n_bscans").get<int>(),         sc.at("n_ascans").get<int>(),
              sc.at("depth_pixels").get<int>(),     sc.at("depth_range_um").get<double>(),
              sc.at("acquisition_ms").get<double>()};
    const json& la = j.at("latency");
    c.latency = {la.at("acquisition_ms").get<double>(), la.at("segmentation_ms").get<double>(),
                 la.at("processing_ms").get<double>(), la.at("pipelined").get<bool>(),
                 la.at("snapshot_at_end").get<bool>()};
    const json& co = j.at("corruption");
    c.corruption = {co.at("dropout_rate").get<double>(), co.at("needle_outlier_rate").get<double>(),
                    co.at("jitter_sigma_um").get<double>(), 0};
    const json& pe = j.at("perception");
    c.perception = {pe.at("ransac_threshold_um").get<double>(), pe.at("ransac_iterations").get<int>(),
                    pe.at("tip_window_fraction").get<double>()};
    const json& tr = j.at("trial");
    c.timeout_s = tr.at("timeout_s").get<double>();
    c.substep_ms = tr.at("substep_ms").get<double>();
    c.start_height_um = tr.at("start_height_um").get<double>();
    c.start_x_um = tr.at("start_x_um").get<double>();
    c.needle_radius_um = tr.at("needle_radius_um").get<double>();
    c.rpe_safety_margin_um = tr.at("rpe_safety_margin_um").get<double>();
    return c;
}

inline json to_json(const TrialRecord& r) {
    json j;
    j["type"] = "trial";
    j["id"] = r.id;
    j["mode"] = to_string(r.mode);
    j["target_p"] = r.target_p;
    j["v_max_mm_s"] = r.v_max_mm_s;
    j["trial"] = r.trial_index;
    j["seed"] = r.seed;
    j["phantom"] = {{"thickness_um", r.thickness_um}, {"tilt_x_deg", r.tilt_x_deg},
                    {"tilt_y_deg", r.tilt_y_deg},     {"base_ilm_um", r.base_ilm_um},
                    {"y_offset_um", r.y_offset_um}};
    if (r.failed) {
        j["failed"] = true;
        j["error"] = r.error;
        return j;
    }
    j["outcome"] = {{"final_tip_depth_um", r.outcome.final_tip_depth_um},
                    {"final_p", r.outcome.final_p},
                    {"target_p", r.outcome.target_p},
                    {"final_axial_error_um", r.outcome.final_axial_error_um},
                    {"rpe_contact", r.outcome.rpe_contact},
                    {"punctured", r.outcome.punctured},
                    {"bleb_success", r.outcome.bleb_success},
                    {"duration_s", r.outcome.duration_s},
                    {"end_reason", to_string(r.outcome.end_reason)},
                    {"frames", r.outcome.frames}};
    return j;
}

// --- Aggregation -------------------------------------------------------------

struct CellSummary {
    ControlMode mode = ControlMode::virtual_layer;
    double target_p = 0.0;
    double v_max_mm_s = 0.0;
    int n = 0;
    int n_failed = 0;
    double mean_error_um = 0.0;
    double std_error_um = 0.0;
    double mean_final_p = 0.0;
    double std_final_p = 0.0;
    int bleb_successes = 0;
    double mean_duration_s = 0.0;
};

namespace detail {

struct Accum {
    std::vector<double> errors, ps, durations;
    int blebs = 0;
    int failed = 0;
};

inline std::pair<double, double> mean_std(const std::vector<double>& v) {
    if (v.empty()) return {0.0, 0.0};
    double mean = 0.0;
    for (const double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    if (v.size() < 2) return {mean, 0.0};
    double ss = 0.0;
    for (const double x : v) ss += (x - mean) * (x - mean);
    return {mean, std::sqrt(ss / static_cast<double>(v.size() - 1))};  // sample std
}

}  // namespace detail

// Cells in first-appearance order, so a re-aggregation from the raw records
// reproduces the run's summary exactly.
template <typename RecordLike>
inline std::vector<CellSummary> summarize_cells(const std::vector<RecordLike>& records) {
    std::vector<std::tuple<std::string, ControlMode, double, double>> order;
    std::map<std::string, detail::Accum> accums;
    for (const auto& r : records) {
        char key[96];
        std::snprintf(key, sizeof key, "%s|%.6f|%.6f", to_string(r.mode), r.target_p, r.v_max_mm_s);
        if (!accums.count(key)) order.emplace_back(key, r.mode, r.target_p, r.v_max_mm_s);
        auto& acc = accums[key];
        if (r.failed) {
            ++acc.failed;
            continue;
        }
        acc.errors.push_back(r.outcome.final_axial_error_um);
        acc.ps.push_back(r.outcome.final_p);
        acc.durations.push_back(r.outcome.duration_s);
        if (r.outcome.bleb_success) ++acc.blebs;
    }
    std::vector<CellSummary> cells;
    for (const auto& [key, mode, p, v] : order) {
        const auto& acc = accums.at(key);
        CellSummary c;
        c.mode = mode;
        c.target_p = p;
        c.v_max_mm_s = v;
        c.n = static_cast<int>(acc.errors.size()) + acc.failed;
        c.n_failed = acc.failed;
        std::tie(c.mean_error_um, c.std_error_um) = detail::mean_std(acc.errors);
        std::tie(c.mean_final_p, c.std_final_p) = detail::mean_std(acc.ps);
        c.bleb_successes = acc.blebs;
        c.mean_duration_s = detail::mean_std(acc.durations).first;
        cells.push_back(c);
    }
    return cells;
}

inline std::string summary_csv(const std::vector<CellSummary>& cells) {
    std::string out =
        "mode,target_p,v_max_mm_s,n,n_failed,mean_final_axial_error_um,std_final_axial_error_um,"
        "mean_final_p,std_final_p,bleb_success,mean_duration_s\n";
    char buf[320];
    for (const CellSummary& c : cells) {
        std::snprintf(buf, sizeof buf, "%s,%.2f,%.2f,%d,%d,%.6f,%.6f,%.6f,%.6f,%d/%d,%.6f\n", to_string(c.mode),
                      c.target_p, c.v_max_mm_s, c.n, c.n_failed, c.mean_error_um, c.std_error_um, c.mean_final_p,
                      c.std_final_p, c.bleb_successes, c.n - c.n_failed, c.mean_duration_s);
        out += buf;
    }
    return out;
}

inline std::string comparison_table(const std::vector<CellSummary>& cells) {
    std::string out;
    char buf[256];
    std::snprintf(buf, sizeof buf, "%-14s %-9s %-6s %-20s %-18s %-6s %s\n", "mode", "target_p", "v_max",
                  "final_error_um", "final_p", "bleb", "mean_dur_s");
    out += buf;
    for (const CellSummary& c : cells) {
        char err[48], fp[48];
        std::snprintf(err, sizeof err, "%.1f +/- %.1f", c.mean_error_um, c.std_error_um);
        std::snprintf(fp, sizeof fp, "%.3f +/- %.3f", c.mean_final_p, c.std_final_p);
        std::snprintf(buf, sizeof buf, "%-14s %-9.0f %-6.2f %-20s %-18s %d/%-4d %.2f\n", to_string(c.mode),
                      c.target_p * 100.0, c.v_max_mm_s, err, fp, c.bleb_successes, c.n - c.n_failed,
                      c.mean_duration_s);
        out += buf;
    }
    return out;
}

// --- Grid runner -------------------------------------------------------------

struct RunOptions {
    std::filesystem::path out_dir;
    int parallel = 1;
    bool dump_frames = false;
};

struct GridResult {
    std::vector<TrialRecord> records;
    std::vector<CellSummary> cells;
    std::filesystem::path raw_path;
    std::filesystem::path summary_path;
};

// Frame dump: per frame one raster per B-scan plus the surface cloud, and an
// index of raster files.
inline int dump_trial_frames(const ExperimentConfig& cfg, const TrialRecord& rec,
                             const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    std::vector<std::string> raster_files;
    int frames = 0;
    FrameSink sink = [&](int frame, const B5Scan& scan, const SurfaceCloud& cloud) {
        char base[32];
        std::snprintf(base, sizeof base, "frame_%04d", frame);
        save_b5scan(scan, dir, base);
        for (int b = 0; b < scan.n_bscans; ++b)
            raster_files.push_back(bscan_raster_path(dir, base, b).filename().string());
        std::ofstream csv(dir / (std::string(base) + "_cloud.csv"));
        write_cloud_csv(cloud, csv);
        frames = frame + 1;
    };
    const TrialOutcome outcome = run_trial(trial_config_from_record(cfg, rec), &sink);
    std::ofstream traj(dir / "trajectory.csv");
    write_trajectory_csv(outcome, traj);
    std::ofstream index(dir / "index.txt");
    if (!index) throw std::runtime_error("dump_trial_frames: cannot write index");
    index << "trial " << rec.id << "\nframes " << frames << "\n";
    for (const std::string& f : raster_files) index << f << "\n";
    return frames;
}

inline GridResult run_grid(const ExperimentConfig& cfg, const RunOptions& opt) {
    cfg.validate();
    std::filesystem::create_directories(opt.out_dir);

    std::vector<TrialRecord> records;
    for (const ControlMode mode : cfg.modes)
        for (const double p : cfg.target_ps)
            for (const double v : cfg.v_maxes_mm_s)
                for (int t = 0; t < cfg.trials_per_cell; ++t) records.push_back(make_trial(cfg, mode, p, v, t));

    auto execute = [&](TrialRecord& rec) {
        try {
            rec.outcome = run_trial(trial_config_from_record(cfg, rec));
        } catch (const std::exception& e) {
            rec.failed = true;
            rec.error = e.what();
        }
    };

    const int workers = std::max(1, opt.parallel);
    if (workers == 1) {
        for (TrialRecord& rec : records) execute(rec);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        pool.reserve(workers);
        for (int w = 0; w < workers; ++w)
            pool.emplace_back([&] {
                for (std::size_t i = next.fetch_add(1); i < records.size(); i = next.fetch_add(1))
                    execute(records[i]);
            });
        for (std::thread& th : pool) th.join();
    }

    if (opt.dump_frames)
        for (const TrialRecord& rec : records)
            if (!rec.failed) dump_trial_frames(cfg, rec, opt.out_dir / "frames" / rec.id);

    GridResult result;
    result.raw_path = opt.out_dir / "raw.jsonl";
    result.summary_path = opt.out_dir / "summary.csv";

    std::ofstream raw(result.raw_path);
    if (!raw) throw std::runtime_error("run_grid: cannot write " + result.raw_path.string());
    json meta;
    meta["type"] = "meta";
    meta["config"] = to_json(cfg);
    raw << meta.dump() << "\n";
    for (const TrialRecord& rec : records) raw << to_json(rec).dump() << "\n";
    raw.close();

    result.cells = summarize_cells(records);
    std::ofstream sum(result.summary_path);
    sum << summary_csv(result.cells);
    sum.close();

    result.records = std::move(records);
    return result;
}

// --- Raw-record re-aggregation (the independent path used by `summarize`) ----

struct RawFile {
    ExperimentConfig config;
    std::vector<TrialRecord> records;
};

inline RawFile load_raw_jsonl(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_raw_jsonl: cannot open " + path.string());
    RawFile raw;
    bool have_meta = false;
    std::string line;
    while (std::getline(in, line)) {
        if (IniFile::trim(line).empty()) continue;
        const json j = json::parse(line);
        const std::string type = j.at("type").get<std::string>();
        if (type == "meta") {
            raw.config = experiment_config_from_json(j.at("config"));
            have_meta = true;
            continue;
        }
        if (type != "trial") continue;
        TrialRecord r;
        r.id = j.at("id").get<std::string>();
        r.mode = mode_from_string(j.at("mode").get<std::string>());
        r.target_p = j.at("target_p").get<double>();
        r.v_max_mm_s = j.at("v_max_mm_s").get<double>();
        r.trial_index = j.at("trial").get<int>();
        r.seed = j.at("seed").get<std::uint64_t>();
        const json& ph = j.at("phantom");
        r.thickness_um = ph.at("thickness_um").get<double>();
        r.tilt_x_deg = ph.at("tilt_x_deg").get<double>();
        r.tilt_y_deg = ph.at("tilt_y_deg").get<double>();
        r.base_ilm_um = ph.at("base_ilm_um").get<double>();
        r.y_offset_um = ph.at("y_offset_um").get<double>();
        if (j.contains("failed") && j.at("failed").get<bool>()) {
            r.failed = true;
            r.error = j.value("error", "");
        } else {
            const json& o = j.at("outcome");
            r.outcome.final_tip_depth_um = o.at("final_tip_depth_um").get<double>();
            r.outcome.final_p = o.at("final_p").get<double>();
            r.outcome.target_p = o.at("target_p").get<double>();
            r.outcome.final_axial_error_um = o.at("final_axial_error_um").get<double>();
            r.outcome.rpe_contact = o.at("rpe_contact").get<bool>();
            r.outcome.punctured = o.at("punctured").get<bool>();
            r.outcome.bleb_success = o.at("bleb_success").get<bool>();
            r.outcome.duration_s = o.at("duration_s").get<double>();
            r.outcome.frames = o.at("frames").get<int>();
        }
        raw.records.push_back(std::move(r));
    }
    if (!have_meta) throw std::runtime_error("load_raw_jsonl: no meta record in " + path.string());
    return raw;
}

inline std::string summarize_raw(const std::filesystem::path& raw_path) {
    const RawFile raw = load_raw_jsonl(raw_path);
    return summary_csv(summarize_cells(raw.records));
}

// Re-export the label raster sequence of one recorded trial by replaying it
// deterministically from the recorded seeds and phantom sample.
inline int export_frames(const std::filesystem::path& raw_path, const std::string& trial_id,
                         const std::filesystem::path& out_dir) {
    const RawFile raw = load_raw_jsonl(raw_path);
    for (const TrialRecord& rec : raw.records) {
        if (rec.id != trial_id) continue;
        if (rec.failed)
            throw std::runtime_error("export_frames: trial " + trial_id + " failed during the run: " + rec.error);
        return dump_trial_frames(raw.config, rec, out_dir);
    }
    throw std::runtime_error("export_frames: no trial '" + trial_id + "' in " + raw_path.string());
}

// --- INI binding --------------------------------------------------------------

inline ExperimentConfig experiment_config_from_ini(const IniFile& ini) {
    ExperimentConfig c;
    using Setter = std::function<void(const std::string&, const std::string&)>;
    std::map<std::string, std::map<std::string, Setter>> bind;

    auto dbl = [](double& field) {
        return [&field](const std::string& v, const std::string& where) { field = IniFile::to_double(v, where); };
    };
    auto integer = [](auto& field) {
        return [&field](const std::string& v, const std::string& where) {
            field = static_cast<std::decay_t<decltype(field)>>(IniFile::to_int(v, where));
        };
    };
    auto boolean = [](bool& field) {
        return [&field](const std::string& v, const std::string& where) { field = IniFile::to_bool(v, where); };
    };
    auto dbl_list = [](std::vector<double>& field) {
        return [&field](const std::string& v, const std::string& where) {
            field.clear();
            for (const std::string& item : IniFile::split_list(v)) field.push_back(IniFile::to_double(item, where));
        };
    };

    bind["grid"]["modes"] = [&c](const std::string& v, const std::string&) {
        c.modes.clear();
        for (const std::string& item : IniFile::split_list(v)) c.modes.push_back(mode_from_string(item));
    };
    bind["grid"]["target_p"] = dbl_list(c.target_ps);
    bind["grid"]["v_max_mm_s"] = dbl_list(c.v_maxes_mm_s);
    bind["grid"]["trials_per_cell"] = integer(c.trials_per_cell);
    bind["grid"]["master_seed"] = integer(c.master_seed);
    bind["control"]["alpha"] = dbl(c.alpha);
    bind["phantom"]["thickness_min_um"] = dbl(c.thickness_min_um);
    bind["phantom"]["thickness_max_um"] = dbl(c.thickness_max_um);
    bind["phantom"]["tilt_band_deg"] = dbl(c.tilt_band_deg);
    bind["phantom"]["y_offset_band_um"] = dbl(c.y_offset_band_um);
    bind["phantom"]["base_ilm_min_um"] = dbl(c.base_ilm_min_um);
    bind["phantom"]["base_ilm_max_um"] = dbl(c.base_ilm_max_um);
    bind["phantom"]["grid_pitch_um"] = dbl(c.grid_pitch_um);
    bind["phantom"]["thickness_limit_min_um"] = dbl(c.thickness_band_min_um);
    bind["phantom"]["thickness_limit_max_um"] = dbl(c.thickness_band_max_um);
    bind["tissue"]["sigma_um"] = dbl(c.tissue.sigma_um);
    bind["tissue"]["kappa"] = dbl(c.tissue.kappa);
    bind["tissue"]["tau_p_um"] = dbl(c.tissue.tau_p_um);
    bind["tissue"]["rho"] = dbl(c.tissue.rho);
    bind["tissue"]["t_r_s"] = dbl(c.tissue.t_r_s);
    bind["scan"]["extent_x_um"] = dbl(c.scan.extent_x_um);
    bind["scan"]["extent_y_um"] = dbl(c.scan.extent_y_um);
    bind["scan"]["n_bscans"] = integer(c.scan.n_bscans);
    bind["scan"]["n_ascans"] = integer(c.scan.n_ascans);
    bind["scan"]["depth_pixels"] = integer(c.scan.depth_pixels);
    bind["scan"]["depth_range_um"] = dbl(c.scan.depth_range_um);
    bind["scan"]["acquisition_ms"] = dbl(c.scan.acquisition_ms);
    bind["latency"]["acquisition_ms"] = dbl(c.latency.acquisition_ms);
    bind["latency"]["segmentation_ms"] = dbl(c.latency.segmentation_ms);
    bind["latency"]["processing_ms"] = dbl(c.latency.processing_ms);
    bind["latency"]["pipelined"] = boolean(c.latency.pipelined);
    bind["latency"]["snapshot_at_end"] = boolean(c.latency.snapshot_at_end);
    bind["corruption"]["dropout_rate"] = dbl(c.corruption.dropout_rate);
    bind["corruption"]["needle_outlier_rate"] = dbl(c.corruption.needle_outlier_rate);
    bind["corruption"]["jitter_sigma_um"] = dbl(c.corruption.jitter_sigma_um);
    bind["perception"]["ransac_threshold_um"] = dbl(c.perception.ransac_threshold_um);
    bind["perception"]["ransac_iterations"] = integer(c.perception.ransac_iterations);
    bind["perception"]["tip_window_fraction"] = dbl(c.perception.tip_window_fraction);
    bind["trial"]["timeout_s"] = dbl(c.timeout_s);
    bind["trial"]["substep_ms"] = dbl(c.substep_ms);
    bind["trial"]["start_height_um"] = dbl(c.start_height_um);
    bind["trial"]["start_x_um"] = dbl(c.start_x_um);
    bind["trial"]["needle_radius_um"] = dbl(c.needle_radius_um);
    bind["trial"]["rpe_safety_margin_um"] = dbl(c.rpe_safety_margin_um);

    for (const auto& [section, kv] : ini.sections()) {
        const auto bs = bind.find(section);
        if (bs == bind.end()) throw ConfigError("config: unknown section [" + section + "]");
        for (const auto& [key, value] : kv) {
            const auto bk = bs->second.find(key);
            if (bk == bs->second.end())
                throw ConfigError("config: unknown key '" + key + "' in section [" + section + "]");
            bk->second(value, section + "." + key);
        }
    }
    return c;
}

inline ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    return experiment_config_from_ini(IniFile::parse(in));
}

}  // namespace octsim
