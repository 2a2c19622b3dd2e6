// Command-line front end: run an experiment grid, re-aggregate raw records,
// or export the label rasters of one recorded trial.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "octsim/experiment.hpp"

namespace {

int cmd_run(const std::optional<std::string>& config_path, const std::string& out_dir,
            const std::optional<std::uint64_t>& seed, const std::optional<std::string>& mode,
            const std::optional<double>& target_p, const std::optional<double>& v_max,
            const std::optional<int>& trials, int parallel, bool dump_frames) {
    octsim::ExperimentConfig cfg;
    if (config_path) cfg = octsim::load_experiment_config(*config_path);
    if (seed) cfg.master_seed = *seed;
    if (mode) cfg.modes = {octsim::mode_from_string(*mode)};
    if (target_p) cfg.target_ps = {*target_p};
    if (v_max) cfg.v_maxes_mm_s = {*v_max};
    if (trials) cfg.trials_per_cell = *trials;

    octsim::RunOptions opt;
    opt.out_dir = out_dir;
    opt.parallel = parallel;
    opt.dump_frames = dump_frames;

    const octsim::GridResult result = octsim::run_grid(cfg, opt);
    int failed = 0;
    for (const auto& rec : result.records)
        if (rec.failed) ++failed;

    std::cout << octsim::comparison_table(result.cells) << "\n"
              << result.records.size() << " trials (" << failed << " failed)\n"
              << "raw records: " << result.raw_path.string() << "\n"
              << "summary:     " << result.summary_path.string() << "\n";
    return failed == 0 ? 0 : 1;
}

int cmd_summarize(const std::string& raw_path, const std::optional<std::string>& out_path) {
    const std::string csv = octsim::summarize_raw(raw_path);
    if (out_path) {
        std::ofstream out(*out_path);
        if (!out) throw std::runtime_error("cannot write " + *out_path);
        out << csv;
    } else {
        std::cout << csv;
    }
    return 0;
}

int cmd_export_frames(const std::string& raw_path, const std::string& trial_id, const std::string& out_dir) {
    const int frames = octsim::export_frames(raw_path, trial_id, out_dir);
    std::cout << "exported " << frames << " frames for " << trial_id << " to " << out_dir << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"iOCT-guided subretinal insertion simulator"};
    app.require_subcommand(1);

    std::optional<std::string> config_path;
    std::string out_dir = "out";
    std::optional<std::uint64_t> seed;
    std::optional<std::string> mode;
    std::optional<double> target_p;
    std::optional<double> v_max;
    std::optional<int> trials;
    int parallel = 1;
    bool dump_frames = false;

    CLI::App* run = app.add_subcommand("run", "run the experiment grid");
    run->add_option("--config", config_path, "experiment config file (INI)")->check(CLI::ExistingFile);
    run->add_option("--out", out_dir, "output directory");
    run->add_option("--seed", seed, "master seed override");
    run->add_option("--mode", mode, "restrict to one mode (virtual_layer | fixed_point)");
    run->add_option("--target-p", target_p, "restrict to one relative target depth");
    run->add_option("--v-max", v_max, "restrict to one maximum velocity (mm/s)");
    run->add_option("--trials", trials, "trials per cell override");
    run->add_option("--parallel", parallel, "worker threads")->check(CLI::PositiveNumber);
    run->add_flag("--dump-frames", dump_frames, "write per-frame label rasters and clouds");

    std::string raw_path;
    std::optional<std::string> summary_out;
    CLI::App* summarize = app.add_subcommand("summarize", "recompute the summary from raw records");
    summarize->add_option("--raw", raw_path, "raw.jsonl from a run")->required()->check(CLI::ExistingFile);
    summarize->add_option("--out", summary_out, "write CSV here instead of stdout");

    std::string trial_id;
    std::string frames_out = "frames";
    CLI::App* exportf = app.add_subcommand("export-frames", "replay one trial and export its rasters");
    exportf->add_option("--raw", raw_path, "raw.jsonl from a run")->required()->check(CLI::ExistingFile);
    exportf->add_option("--trial", trial_id, "trial id, e.g. virtual_layer-p40-v0.30-t00")->required();
    exportf->add_option("--out", frames_out, "output directory");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed())
            return cmd_run(config_path, out_dir, seed, mode, target_p, v_max, trials, parallel, dump_frames);
        if (summarize->parsed()) return cmd_summarize(raw_path, summary_out);
        if (exportf->parsed()) return cmd_export_frames(raw_path, trial_id, frames_out);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
