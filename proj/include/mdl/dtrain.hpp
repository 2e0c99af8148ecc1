#pragma once

// Tri-phase general-to-specific training and the baseline trainers.
//
//   pretrain   joint model on the domain-averaged loss over balanced batches
//   posttrain  backbone plus one head per domain, heads cloned from the
//              pre-trained head
//   finetune   backbone frozen; every head trained on its own domain only
//   plugin     finetune applied to a trained shared_bottom / mmoe / ple model
//   train      single phase used by the baselines

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "mdl/data.hpp"
#include "mdl/metrics.hpp"
#include "mdl/models.hpp"
#include "mdl/optim.hpp"

namespace mdl::dtrain {

enum class Phase { Pretrain, Posttrain, Finetune, Plugin, Train };

const char* phase_name(Phase p);
Phase parse_phase(const std::string& name);

struct PhaseConfig {
    Phase phase = Phase::Train;
    std::size_t epochs = 1;
    ad::OptimizerConfig optimizer;
    // Per-domain batch size; a single entry applies to every domain.
    std::vector<std::size_t> batch_size{32};
    std::size_t eval_every = 10;

    void validate() const;
    std::vector<std::size_t> batch_for(std::size_t num_domains) const;
};

struct CurvePoint {
    std::size_t step = 0;
    std::vector<double> test;        // accuracy or AUC per domain
    std::vector<double> test_loss;
    std::vector<double> train;
    std::vector<double> train_loss;
    double test_average = 0.0;
};

struct PhaseReport {
    Phase phase = Phase::Train;
    std::size_t steps = 0;
    std::vector<CurvePoint> curve;  // starts at step 0, ends at `steps`
    // Step of each domain's best test score within the phase (first wins).
    std::vector<std::size_t> best_step;
};

struct Snapshot {
    Phase phase;
    models::Model model;
};

struct PipelineReport {
    std::string method;
    std::uint64_t seed = 0;
    data::Metric metric = data::Metric::Accuracy;
    std::vector<PhaseReport> phases;
    std::vector<Snapshot> snapshots;  // model at the end of every phase
    // "posttrain_vs_pretrain", "finetune_vs_pretrain", "finetune_vs_posttrain",
    // "plugin_vs_train": per-domain head update norms.
    std::map<std::string, std::vector<double>> head_update_norms;
    metrics::MetricRecord test;
    metrics::MetricRecord train;

    const PhaseReport* phase(Phase p) const;
    const models::Model& final_model() const { return snapshots.back().model; }
};

// Runs `cfg.epochs` epochs of balanced-batch training on the trainable groups
// of `model`, minimizing the mean over domains of the per-domain losses (the
// sum for the separate kind, whose domains share no parameters).
PhaseReport train_phase(models::Model& model, const data::DomainDataset& data, const PhaseConfig& cfg,
                        std::uint64_t seed);

// Joint root model: returns the trained model and its curve.
models::Model pretrain(const models::ArchSpec& spec, const data::DomainDataset& data, const PhaseConfig& cfg,
                       std::uint64_t seed, PhaseReport* report = nullptr);

// Shared-bottom model whose backbone is the joint backbone and whose T heads
// are copies of the joint head.
models::Model split_into_heads(const models::Model& joint, std::size_t num_domains);

PhaseReport posttrain(models::Model& model, const data::DomainDataset& data, const PhaseConfig& cfg,
                      std::uint64_t seed);

// Freezes every non-head group and trains head t on domain t alone, each with
// a fresh optimizer and its own sample stream, for the same number of steps.
// `order` fixes the sequence in which heads are visited; the result does not
// depend on it. Throws ContractError if the frozen groups changed.
PhaseReport finetune_heads(models::Model& model, const data::DomainDataset& data, const PhaseConfig& cfg,
                           std::uint64_t seed, const std::vector<std::size_t>& order = {});

// finetune_heads for trained shared_bottom, mmoe and ple models.
PhaseReport plugin_finetune(models::Model& model, const data::DomainDataset& data, const PhaseConfig& cfg,
                            std::uint64_t seed, const std::vector<std::size_t>& order = {});

enum class Variant { Full, NoPretrain, NoPosttrain, NoFinetune };

const char* variant_name(Variant v);
Variant parse_variant(const std::string& name);

struct PipelineConfig {
    // Backbone and head widths; kind and domain count are filled in per phase.
    models::ArchSpec arch;
    PhaseConfig pretrain;
    PhaseConfig posttrain;
    PhaseConfig finetune;
};

PipelineReport run_pipeline(const PipelineConfig& cfg, const data::DomainDataset& data, Variant variant,
                            std::uint64_t seed);

// Single-phase baseline of the given kind.
PipelineReport run_baseline(const models::ArchSpec& arch, const data::DomainDataset& data, const PhaseConfig& train,
                            std::uint64_t seed);

// Baseline followed by the plug-in head fine-tune.
PipelineReport run_plugin(const models::ArchSpec& arch, const data::DomainDataset& data, const PhaseConfig& train,
                          const PhaseConfig& plugin, std::uint64_t seed);

// report.json document (without model weights).
nlohmann::json report_to_json(const PipelineReport& report);
// phase,step,domain,split,accuracy_or_auc,loss
std::string curves_csv(const PipelineReport& report);
// Final per-domain and aggregate scores on both splits.
std::string metrics_csv(const PipelineReport& report);

}  // namespace mdl::dtrain
