// Command-line front end: scene generation and the four benchmark tasks.

#include <cstdio>
#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "envlink/envlink.hpp"

namespace {

using namespace envlink;

struct CommonOpts {
    std::string scene_file;
    std::uint64_t seed = 0;
    double grid_gap = 2.0;
    std::string tier = "wei";
    std::string out_dir = "out";
    std::string tasks = "1,2,3,4";
    double exact_alloc_limit = 1e7;
    int n_users = 10;
    bool no_proactive = false;
};

void add_common_flags(CLI::App* cmd, CommonOpts& o) {
    cmd->add_option("--scene", o.scene_file, "Scene file to load instead of generating");
    cmd->add_option("--seed", o.seed, "Master seed");
    cmd->add_option("--grid-gap", o.grid_gap, "Rx grid gap in meters")->check(CLI::PositiveNumber);
    cmd->add_option("--tier", o.tier, "Predictor tier: stat|simple|wei")
        ->check(CLI::IsMember({"stat", "simple", "wei"}));
    cmd->add_option("--out", o.out_dir, "Output directory");
    cmd->add_option("--exact-alloc-limit", o.exact_alloc_limit,
                    "Run the exact allocator when N^(T*R) is below this");
    cmd->add_option("--users", o.n_users, "Number of allocation users")->check(CLI::PositiveNumber);
    cmd->add_flag("--no-proactive", o.no_proactive, "Skip the proactive decision stage");
}

predict::PredictorTier parse_tier(const std::string& s) {
    if (s == "stat") return predict::PredictorTier::StatModel;
    if (s == "simple") return predict::PredictorTier::SimpleFeature;
    return predict::PredictorTier::WeiRegressor;
}

std::vector<int> parse_tasks(const std::string& s) {
    std::vector<int> out;
    std::string cur;
    for (char c : s + ",") {
        if (c == ',') {
            if (cur.empty()) continue;
            if (cur.size() != 1 || cur[0] < '1' || cur[0] > '4')
                throw std::invalid_argument("--tasks expects a comma-separated subset of 1,2,3,4");
            out.push_back(cur[0] - '0');
            cur.clear();
        } else {
            cur += c;
        }
    }
    return out;
}

pipeline::RunConfig make_config(const CommonOpts& o, std::vector<int> tasks) {
    pipeline::RunConfig cfg;
    cfg.scene_file = o.scene_file;
    cfg.master_seed = o.seed;
    cfg.scene_config.rx_grid_gap_m = o.grid_gap;
    cfg.tier = parse_tier(o.tier);
    cfg.out_dir = o.out_dir;
    cfg.tasks = std::move(tasks);
    cfg.exact_alloc_limit = o.exact_alloc_limit;
    cfg.n_users = o.n_users;
    cfg.proactive = !o.no_proactive;
    return cfg;
}

void print_report(const pipeline::RunReport& report) {
    for (const auto& line : report.config_echo) std::cout << "# " << line << "\n";
    for (const auto& rec : report.tasks) {
        std::cout << "task " << rec.task_id << ":";
        for (const auto& [k, v] : rec.metrics) std::cout << " " << k << "=" << v;
        std::cout << "\n";
    }
    for (const auto& [stage, ms] : report.stage_ms)
        std::printf("stage %-20s %10.1f ms\n", stage.c_str(), ms);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Cube-city wireless environment simulator and link optimizer"};
    app.require_subcommand(1);

    CommonOpts opts;

    auto* gen = app.add_subcommand("gen-scene", "Generate a scene and write it to a file");
    std::string gen_out = "scene.json";
    gen->add_option("--seed", opts.seed, "Scene seed");
    gen->add_option("--grid-gap", opts.grid_gap, "Rx grid gap in meters");
    gen->add_option("--out", gen_out, "Scene file path");

    auto* coverage = app.add_subcommand("coverage", "Task 1: coverage maps per predictor tier");
    auto* csi = app.add_subcommand("predict-csi", "Task 2: path-loss and pilot-reconstruction NMSE");
    auto* beam_cmd = app.add_subcommand("beam", "Task 3: codebook beam selection accuracy");
    auto* allocate = app.add_subcommand("allocate", "Task 4: max-min resource allocation");
    auto* run_all = app.add_subcommand("run-all", "Run the full loop and all requested tasks");
    run_all->add_option("--tasks", opts.tasks, "Comma-separated task ids (subset of 1,2,3,4)");
    for (auto* cmd : {coverage, csi, beam_cmd, allocate, run_all}) add_common_flags(cmd, opts);

    CLI11_PARSE(app, argc, argv);

    std::string stage = "setup";
    try {
        if (gen->parsed()) {
            stage = "gen-scene";
            scene::SceneGenConfig sconf;
            sconf.rx_grid_gap_m = opts.grid_gap;
            const auto sc = scene::generate_scene(sconf, child_seed(opts.seed, pipeline::kStageScene));
            scene::save_scene(sc, gen_out);
            std::cout << "wrote " << gen_out << " (" << sc.scatterers.size() << " scatterers, "
                      << sc.rx_points.size() << " rx points)\n";
            return 0;
        }

        pipeline::RunReport report;
        if (coverage->parsed()) {
            stage = "coverage";
            report = pipeline::run_loop(make_config(opts, {1}));
        } else if (csi->parsed()) {
            stage = "predict-csi";
            report = pipeline::run_loop(make_config(opts, {2}));
        } else if (beam_cmd->parsed()) {
            stage = "beam";
            report = pipeline::run_loop(make_config(opts, {3}));
        } else if (allocate->parsed()) {
            stage = "allocate";
            report = pipeline::run_loop(make_config(opts, {4}));
        } else {
            stage = "run-all";
            report = pipeline::run_loop(make_config(opts, parse_tasks(opts.tasks)));
        }
        print_report(report);
        return 0;
    } catch (const std::exception& e) {
        std::cerr << stage << ": " << e.what() << "\n";
        return 1;
    }
}
