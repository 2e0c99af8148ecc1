// mdl: generate datasets, train methods, compare runs, export decision grids.

#include <iostream>

#include <CLI11.hpp>

#include "mdl/cli.hpp"
#include "mdl/errors.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Multi-domain learning lab"};
    app.require_subcommand(1);

    mdl::cli::Options opt;
    std::string config, out, seeds, checkpoint, dataset;
    std::size_t jobs = 1, resolution = 200;

    auto common = [&](CLI::App* sub, bool config_required) {
        auto* c = sub->add_option("--config", config, "Experiment config (JSON), or a directory of them for compare");
        if (config_required) c->required();
        sub->add_option("--out", out, "Output directory (overrides output_dir)");
        sub->add_option("--seeds", seeds, "Comma-separated root seeds (overrides seeds)");
    };
    auto* gen = app.add_subcommand("generate", "Write a synthetic dataset as CSV plus JSON sidecar");
    common(gen, true);
    auto* train = app.add_subcommand("train", "Train the configured method once per seed");
    common(train, true);
    train->add_option("--jobs", jobs, "Seed replicates run concurrently")->check(CLI::PositiveNumber);
    auto* compare = app.add_subcommand("compare", "Tabulate completed runs as mean±std over seeds");
    common(compare, true);
    auto* boundary = app.add_subcommand("boundary", "Export per-domain decision grids and the conflict mask");
    common(boundary, false);
    boundary->add_option("--checkpoint", checkpoint, "Model checkpoint")->required();
    boundary->add_option("--dataset", dataset, "Dataset CSV (default: data from --config)");
    boundary->add_option("--resolution", resolution, "Cells per axis")->check(CLI::PositiveNumber);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : mdl::cli::kConfigError;
    }

    try {
        opt.config = config;
        if (!out.empty()) opt.out = out;
        if (!seeds.empty()) opt.seeds = mdl::cli::parse_seed_list(seeds);
        if (!checkpoint.empty()) opt.checkpoint = checkpoint;
        if (!dataset.empty()) opt.dataset = dataset;
        opt.jobs = jobs;
        opt.resolution = resolution;
    } catch (const mdl::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return mdl::cli::kConfigError;
    }
    const std::string name = app.get_subcommands().front()->get_name();
    return mdl::cli::run_command(name, opt, std::cout, std::cerr);
}
