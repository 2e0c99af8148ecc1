#pragma once

// Experiment runner behind the `mdl` executable.
//
// Config document (unknown keys are rejected at every level):
//   {
//     "data":    {"generator": {...}} | {"path": "dataset.csv"},
//     "arch":    {"backbone_layers": [...], "head_layers": [...], ...},
//     "method":  "joint" | ... | "dtrain" | "dtrain_ablation:<variant>" | "plugin:<base>",
//     "phases":  {"<phase>": {"epochs", "batch_size", "eval_every", "optimizer": {...}}},
//     "seeds":   [0, 1, ...],
//     "output_dir": "runs/suite"
//   }
// A relative data path is resolved against the config file's directory.
// Run outputs go to <output_dir>/<method slug>/seed_<s>/.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mdl/data.hpp"
#include "mdl/dtrain.hpp"
#include "mdl/models.hpp"

namespace mdl::cli {

enum ExitCode : int { kOk = 0, kConfigError = 2, kDataError = 3, kRuntimeError = 4 };

struct ExperimentConfig {
    std::optional<data::SyntheticSpec> generator;
    std::optional<std::filesystem::path> data_path;
    std::optional<nlohmann::json> arch;
    std::string method;
    std::map<std::string, dtrain::PhaseConfig> phases;
    std::vector<std::uint64_t> seeds;
    std::filesystem::path output_dir;
};

ExperimentConfig parse_config(const nlohmann::json& j, const std::filesystem::path& base_dir);
ExperimentConfig load_config(const std::filesystem::path& path);

dtrain::PhaseConfig parse_phase_config(const nlohmann::json& j, dtrain::Phase phase);
ad::OptimizerConfig parse_optimizer(const nlohmann::json& j);

// Throws ConfigError on an unknown method or an arch kind the method cannot use.
void check_method(const ExperimentConfig& cfg);
std::string method_slug(const std::string& method);

data::DomainDataset load_data(const ExperimentConfig& cfg);

// Arch spec for `cfg` with the data-derived dimensions filled in.
models::ArchSpec resolve_arch(const ExperimentConfig& cfg, const data::DomainDataset& data);

dtrain::PipelineReport run_method(const ExperimentConfig& cfg, const data::DomainDataset& data, std::uint64_t seed);

// report.json, curves.csv, metrics.csv and checkpoint_<phase>.bin.
void write_run(const dtrain::PipelineReport& report, const std::filesystem::path& dir);
std::filesystem::path run_dir(const std::filesystem::path& output_dir, const std::string& method, std::uint64_t seed);

struct Options {
    std::filesystem::path config;
    std::optional<std::filesystem::path> out;
    std::optional<std::vector<std::uint64_t>> seeds;
    std::size_t jobs = 1;
    std::optional<std::filesystem::path> checkpoint;
    std::optional<std::filesystem::path> dataset;
    std::size_t resolution = 200;
};

// Each command reports progress on `log` and throws mdl::Error subclasses.
void cmd_generate(const Options& opt, std::ostream& log);
void cmd_train(const Options& opt, std::ostream& log);
void cmd_compare(const Options& opt, std::ostream& log);
void cmd_boundary(const Options& opt, std::ostream& log);

// Runs a command by name and maps errors to exit codes, printing the message
// on `err`.
int run_command(const std::string& name, const Options& opt, std::ostream& log, std::ostream& err);

std::vector<std::uint64_t> parse_seed_list(const std::string& text);

}  // namespace mdl::cli
