// lanecast: generate synthetic lane panels, train and evaluate forecasters,
// and render benchmark tables.

#include "lanecast/harness.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace {

struct Flags {
    std::string config;
    std::string dataset;
    std::string graph;
    std::vector<std::string> models;
    std::vector<std::size_t> horizons;
    std::size_t window = 0;
    std::vector<std::uint64_t> seeds;
    bool deterministic = false;
    std::string out;
    std::size_t max_epochs = 0;
    std::size_t max_steps = 0;
    std::string ablation;
};

void add_run_flags(CLI::App* cmd, Flags& f) {
    cmd->add_option("--config", f.config, "JSON config or a manifest.json from an earlier run");
    cmd->add_option("--dataset", f.dataset, "panel CSV (replaces the synthetic spec)");
    cmd->add_option("--graph", f.graph, "lane graph file for --dataset");
    cmd->add_option("--model", f.models, "graphmlp, persistence, havg, linear")->delimiter(',');
    cmd->add_option("--horizon", f.horizons, "forecast horizons")->delimiter(',');
    cmd->add_option("--window", f.window, "input window T");
    cmd->add_option("--seeds", f.seeds, "seeds, one cell per seed")->delimiter(',');
    cmd->add_flag("--deterministic", f.deterministic, "single-threaded, bit-reproducible training");
    cmd->add_option("--out", f.out, "output directory");
    cmd->add_option("--max-epochs", f.max_epochs, "epoch cap for trained models");
    cmd->add_option("--max-steps", f.max_steps, "optimizer step cap for trained models");
    cmd->add_option("--ablation", f.ablation, "full, no_instance_norm, no_dynamic_graph, no_temporal_mlp");
}

// Flags override the config file, which overrides the defaults.
lanecast::RunConfig resolve(const CLI::App* cmd, const Flags& f) {
    lanecast::RunConfig c = f.config.empty() ? lanecast::RunConfig{} : lanecast::load_run_config(f.config);
    if (cmd->count("--dataset")) {
        c.dataset = f.dataset;
        c.synth.reset();
    }
    if (cmd->count("--graph")) c.graph = f.graph;
    if (cmd->count("--model")) c.models = f.models;
    if (cmd->count("--horizon")) c.horizons = f.horizons;
    if (cmd->count("--window")) c.window = f.window;
    if (cmd->count("--seeds")) c.seeds = f.seeds;
    if (f.deterministic) c.deterministic = true;
    if (cmd->count("--out")) c.out = f.out;
    if (cmd->count("--max-epochs")) c.train.max_epochs = f.max_epochs;
    if (cmd->count("--max-steps")) c.train.max_steps = f.max_steps;
    if (cmd->count("--ablation")) {
        const auto a = lanecast::parse_ablation(f.ablation);
        if (!a) throw std::invalid_argument("unknown ablation '" + f.ablation + "'");
        c.ablation = *a;
    }
    return c;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Lane-level traffic forecasting benchmark"};
    app.require_subcommand(1);

    Flags flags;
    auto* generate = app.add_subcommand("generate", "write a synthetic panel CSV and its graph file");
    auto* benchmark = app.add_subcommand("benchmark", "train and evaluate every (model, horizon, seed) cell");
    auto* longhorizon = app.add_subcommand("longhorizon", "sweep horizons 3..36 with a 50-step window");
    auto* ablate = app.add_subcommand("ablate", "GraphMLP with each component removed in turn");
    for (auto* cmd : {generate, benchmark, longhorizon, ablate}) add_run_flags(cmd, flags);
    auto* report = app.add_subcommand("report", "re-render tables from a run's metrics.csv");
    std::string report_dir = "runs/latest";
    report->add_option("--out", report_dir, "run directory");

    CLI11_PARSE(app, argc, argv);

    try {
        if (report->parsed()) {
            lanecast::run_report(report_dir, std::cout);
            return 0;
        }
        if (generate->parsed()) {
            lanecast::run_generate(resolve(generate, flags), std::cout);
            return 0;
        }
        lanecast::CommandResult result;
        if (benchmark->parsed()) result = lanecast::run_benchmark(resolve(benchmark, flags), std::cout);
        else if (longhorizon->parsed()) result = lanecast::run_longhorizon(resolve(longhorizon, flags), std::cout);
        else result = lanecast::run_ablation(resolve(ablate, flags), std::cout);
        if (!result.all_ok) std::cerr << "some cells failed; see metrics.csv\n";
        return result.all_ok ? 0 : 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
}
