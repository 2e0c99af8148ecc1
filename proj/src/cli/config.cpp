#include <algorithm>
#include <sstream>

#include "mdl/checkpoint.hpp"
#include "mdl/cli.hpp"
#include "mdl/errors.hpp"
#include "mdl/io.hpp"

namespace mdl::cli {
namespace {

const std::string kAblationPrefix = "dtrain_ablation:";
const std::string kPluginPrefix = "plugin:";

bool starts_with(const std::string& s, const std::string& prefix) { return s.rfind(prefix, 0) == 0; }

std::size_t positive_size(const nlohmann::json& j, const std::string& where) {
    if (!j.is_number_integer() || j.get<long long>() < 1) throw ConfigError(where + " must be a positive integer");
    return j.get<std::size_t>();
}

double number(const nlohmann::json& j, const std::string& where) {
    if (!j.is_number()) throw ConfigError(where + " must be a number");
    return j.get<double>();
}

std::vector<std::string> required_phases(const std::string& method) {
    if (method == "dtrain") return {"pretrain", "posttrain", "finetune"};
    if (starts_with(method, kAblationPrefix)) {
        switch (dtrain::parse_variant(method.substr(kAblationPrefix.size()))) {
            case dtrain::Variant::Full: return {"pretrain", "posttrain", "finetune"};
            case dtrain::Variant::NoPretrain: return {"posttrain", "finetune"};
            case dtrain::Variant::NoPosttrain: return {"pretrain", "finetune"};
            case dtrain::Variant::NoFinetune: return {"pretrain", "posttrain"};
        }
    }
    if (starts_with(method, kPluginPrefix)) return {"train", "plugin"};
    return {"train"};
}

std::string method_kind(const std::string& method) {
    if (method == "dtrain" || starts_with(method, kAblationPrefix)) return "shared_bottom";
    if (starts_with(method, kPluginPrefix)) {
        const std::string base = method.substr(kPluginPrefix.size());
        if (base != "shared_bottom" && base != "mmoe" && base != "ple")
            throw ConfigError("method '" + method + "': plugin base must be shared_bottom, mmoe or ple");
        return base;
    }
    models::parse_kind(method);
    return method;
}

}  // namespace

ad::OptimizerConfig parse_optimizer(const nlohmann::json& j) {
    if (!j.is_object()) throw ConfigError("optimizer: expected an object");
    io::reject_unknown_keys(j, {"kind", "learning_rate", "momentum", "beta1", "beta2", "epsilon", "decay"}, "optimizer");
    ad::OptimizerConfig c;
    if (j.contains("kind")) {
        const auto k = j["kind"].is_string() ? j["kind"].get<std::string>() : "";
        if (k == "sgd") c.kind = ad::OptimizerKind::SgdMomentum;
        else if (k == "adam") c.kind = ad::OptimizerKind::Adam;
        else throw ConfigError("optimizer: kind must be \"sgd\" or \"adam\"");
    }
    if (j.contains("learning_rate")) c.learning_rate = number(j["learning_rate"], "optimizer.learning_rate");
    if (j.contains("momentum")) c.momentum = number(j["momentum"], "optimizer.momentum");
    if (j.contains("beta1")) c.beta1 = number(j["beta1"], "optimizer.beta1");
    if (j.contains("beta2")) c.beta2 = number(j["beta2"], "optimizer.beta2");
    if (j.contains("epsilon")) c.epsilon = number(j["epsilon"], "optimizer.epsilon");
    if (j.contains("decay")) c.decay = number(j["decay"], "optimizer.decay");
    c.validate();
    return c;
}

dtrain::PhaseConfig parse_phase_config(const nlohmann::json& j, dtrain::Phase phase) {
    const std::string where = std::string("phases.") + dtrain::phase_name(phase);
    if (!j.is_object()) throw ConfigError(where + ": expected an object");
    io::reject_unknown_keys(j, {"epochs", "batch_size", "eval_every", "optimizer"}, where);
    dtrain::PhaseConfig c;
    c.phase = phase;
    if (!j.contains("epochs")) throw ConfigError(where + ": 'epochs' is required");
    c.epochs = positive_size(j["epochs"], where + ".epochs");
    if (!j.contains("batch_size")) throw ConfigError(where + ": 'batch_size' is required");
    const auto& b = j["batch_size"];
    if (b.is_array()) {
        c.batch_size.clear();
        for (const auto& e : b) c.batch_size.push_back(positive_size(e, where + ".batch_size"));
    } else {
        c.batch_size = {positive_size(b, where + ".batch_size")};
    }
    if (j.contains("eval_every")) c.eval_every = positive_size(j["eval_every"], where + ".eval_every");
    if (j.contains("optimizer")) c.optimizer = parse_optimizer(j["optimizer"]);
    c.validate();
    return c;
}

ExperimentConfig parse_config(const nlohmann::json& j, const std::filesystem::path& base_dir) {
    if (!j.is_object()) throw ConfigError("config: expected an object");
    io::reject_unknown_keys(j, {"data", "arch", "method", "phases", "seeds", "output_dir"}, "config");
    ExperimentConfig c;
    if (j.contains("data")) {
        const auto& d = j["data"];
        if (!d.is_object()) throw ConfigError("data: expected an object");
        io::reject_unknown_keys(d, {"generator", "path"}, "data");
        if (d.contains("generator") == d.contains("path"))
            throw ConfigError("data: give exactly one of 'generator' and 'path'");
        if (d.contains("generator")) c.generator = data::spec_from_json(d["generator"]);
        if (d.contains("path")) {
            if (!d["path"].is_string()) throw ConfigError("data.path must be a string");
            std::filesystem::path p = d["path"].get<std::string>();
            c.data_path = p.is_absolute() ? p : base_dir / p;
        }
    }
    if (j.contains("arch")) {
        if (!j["arch"].is_object()) throw ConfigError("arch: expected an object");
        c.arch = j["arch"];
    }
    if (j.contains("method")) {
        if (!j["method"].is_string()) throw ConfigError("method must be a string");
        c.method = j["method"].get<std::string>();
    }
    if (j.contains("phases")) {
        if (!j["phases"].is_object()) throw ConfigError("phases: expected an object");
        for (const auto& [name, pj] : j["phases"].items())
            c.phases.emplace(name, parse_phase_config(pj, dtrain::parse_phase(name)));
    }
    if (j.contains("seeds")) {
        if (!j["seeds"].is_array()) throw ConfigError("seeds must be an array");
        for (const auto& s : j["seeds"]) {
            if (!s.is_number_integer() || s.get<long long>() < 0) throw ConfigError("seeds must be non-negative integers");
            c.seeds.push_back(s.get<std::uint64_t>());
        }
    }
    if (j.contains("output_dir")) {
        if (!j["output_dir"].is_string()) throw ConfigError("output_dir must be a string");
        c.output_dir = j["output_dir"].get<std::string>();
    }
    return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(io::read_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config " + path.string() + ": " + e.what());
    } catch (const DataError& e) {
        throw ConfigError(e.what());
    }
    return parse_config(j, path.parent_path());
}

void check_method(const ExperimentConfig& cfg) {
    if (cfg.method.empty()) throw ConfigError("config: 'method' is required");
    const std::string kind = method_kind(cfg.method);
    if (!cfg.arch) throw ConfigError("config: 'arch' is required");
    if (cfg.arch->contains("kind") && (*cfg.arch)["kind"] != kind)
        throw ConfigError("method '" + cfg.method + "' needs arch kind '" + kind + "', config has " +
                          (*cfg.arch)["kind"].dump());
    const auto needed = required_phases(cfg.method);
    for (const auto& p : needed)
        if (!cfg.phases.count(p)) throw ConfigError("method '" + cfg.method + "' needs phase '" + p + "'");
    const bool dtrain_family = kind == "shared_bottom" && !starts_with(cfg.method, kPluginPrefix) &&
                               cfg.method != "shared_bottom";
    for (const auto& [name, _] : cfg.phases) {
        const bool used = std::find(needed.begin(), needed.end(), name) != needed.end();
        const bool spare_dtrain = dtrain_family && (name == "pretrain" || name == "posttrain" || name == "finetune");
        if (!used && !spare_dtrain) throw ConfigError("method '" + cfg.method + "' does not use phase '" + name + "'");
    }
}

std::string method_slug(const std::string& method) {
    std::string s = method;
    std::replace(s.begin(), s.end(), ':', '_');
    return s;
}

data::DomainDataset load_data(const ExperimentConfig& cfg) {
    if (cfg.generator) return data::generate(*cfg.generator);
    if (cfg.data_path) return data::read_dataset(*cfg.data_path);
    throw ConfigError("config: 'data' is required");
}

models::ArchSpec resolve_arch(const ExperimentConfig& cfg, const data::DomainDataset& data) {
    check_method(cfg);
    nlohmann::json j = *cfg.arch;
    j["kind"] = method_kind(cfg.method);
    auto require = [&](const char* key, std::size_t value) {
        if (j.contains(key) && j[key] != value)
            throw ConfigError(std::string("arch.") + key + " is " + j[key].dump() + " but the data needs " +
                              std::to_string(value));
        j[key] = value;
    };
    require("input_dim", data.input_dim());
    require("num_domains", data.num_domains());
    require("num_classes", data.model_classes());
    models::ArchSpec spec = models::arch_from_json(j);
    spec.validate();
    return spec;
}

dtrain::PipelineReport run_method(const ExperimentConfig& cfg, const data::DomainDataset& data, std::uint64_t seed) {
    const models::ArchSpec arch = resolve_arch(cfg, data);
    auto phase = [&](const char* name) -> const dtrain::PhaseConfig& { return cfg.phases.at(name); };
    if (cfg.method == "dtrain" || starts_with(cfg.method, kAblationPrefix)) {
        const auto variant = cfg.method == "dtrain" ? dtrain::Variant::Full
                                                    : dtrain::parse_variant(cfg.method.substr(kAblationPrefix.size()));
        dtrain::PipelineConfig p;
        p.arch = arch;
        if (cfg.phases.count("pretrain")) p.pretrain = phase("pretrain");
        if (cfg.phases.count("posttrain")) p.posttrain = phase("posttrain");
        if (cfg.phases.count("finetune")) p.finetune = phase("finetune");
        dtrain::PipelineReport r = dtrain::run_pipeline(p, data, variant, seed);
        r.method = cfg.method;
        return r;
    }
    if (starts_with(cfg.method, kPluginPrefix)) return dtrain::run_plugin(arch, data, phase("train"), phase("plugin"), seed);
    return dtrain::run_baseline(arch, data, phase("train"), seed);
}

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
    std::vector<std::uint64_t> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty() || item.find_first_not_of("0123456789") != std::string::npos)
            throw ConfigError("--seeds: '" + item + "' is not a non-negative integer");
        try {
            out.push_back(std::stoull(item));
        } catch (const std::out_of_range&) {
            throw ConfigError("--seeds: '" + item + "' is out of range");
        }
    }
    if (out.empty()) throw ConfigError("--seeds: empty list");
    return out;
}

}  // namespace mdl::cli
