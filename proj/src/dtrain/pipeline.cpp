#include "mdl/dtrain.hpp"
#include "mdl/errors.hpp"

namespace mdl::dtrain {
namespace {

enum SeedTag : std::uint64_t { kInit = 1, kPretrain, kPosttrain, kFinetune, kTrain, kPlugin };

PhaseConfig as_phase(PhaseConfig cfg, Phase p) {
    cfg.phase = p;
    return cfg;
}

models::ArchSpec with_kind(models::ArchSpec spec, models::ArchKind kind, const data::DomainDataset& data) {
    spec.kind = kind;
    spec.num_domains = data.num_domains();
    spec.input_dim = data.input_dim();
    spec.num_classes = data.model_classes();
    spec.validate();
    return spec;
}

std::vector<double> head_norms(const std::vector<models::DenseLayer>& reference, const models::Model& model) {
    std::vector<double> out;
    for (const auto& h : model.head_names()) out.push_back(models::head_update_norm(reference, model.group(h).layers));
    return out;
}

std::vector<double> head_norms(const models::Model& reference, const models::Model& model) {
    std::vector<double> out;
    const auto names = model.head_names();
    for (std::size_t t = 0; t < names.size(); ++t)
        out.push_back(models::head_update_norm(reference.group(reference.head_name(t)).layers, model.group(names[t]).layers));
    return out;
}

void finish(PipelineReport& r, const data::DomainDataset& data) {
    r.metric = data.metric;
    r.test = metrics::evaluate(r.final_model(), data, data::Split::Test).record;
    r.train = metrics::evaluate(r.final_model(), data, data::Split::Train).record;
}

}  // namespace

const char* variant_name(Variant v) {
    switch (v) {
        case Variant::Full: return "full";
        case Variant::NoPretrain: return "no_pretrain";
        case Variant::NoPosttrain: return "no_posttrain";
        case Variant::NoFinetune: return "no_finetune";
    }
    return "?";
}

Variant parse_variant(const std::string& name) {
    for (Variant v : {Variant::Full, Variant::NoPretrain, Variant::NoPosttrain, Variant::NoFinetune})
        if (name == variant_name(v)) return v;
    throw ConfigError("unknown pipeline variant '" + name + "'");
}

models::Model pretrain(const models::ArchSpec& spec, const data::DomainDataset& data, const PhaseConfig& cfg,
                       std::uint64_t seed, PhaseReport* report) {
    models::Model joint = models::build_model(with_kind(spec, models::ArchKind::Joint, data), derive_seed(seed, {kInit}));
    PhaseReport r = train_phase(joint, data, as_phase(cfg, Phase::Pretrain), derive_seed(seed, {kPretrain}));
    if (report) *report = std::move(r);
    return joint;
}

models::Model split_into_heads(const models::Model& joint, std::size_t num_domains) {
    if (joint.spec().kind != models::ArchKind::Joint) throw ConfigError("split_into_heads expects a joint model");
    models::ArchSpec spec = joint.spec();
    spec.kind = models::ArchKind::SharedBottom;
    spec.num_domains = num_domains;
    models::Model model = models::build_model(spec, 0);
    model.set_group_layers("backbone", joint.group("backbone").layers);
    for (const auto& h : model.head_names()) model.set_group_layers(h, joint.group("head").layers);
    return model;
}

PhaseReport posttrain(models::Model& model, const data::DomainDataset& data, const PhaseConfig& cfg,
                      std::uint64_t seed) {
    if (model.spec().kind != models::ArchKind::SharedBottom) throw ConfigError("posttrain expects a shared_bottom model");
    for (const auto& g : model.groups())
        if (!g.trainable) throw ConfigError("posttrain expects every group trainable");
    return train_phase(model, data, as_phase(cfg, Phase::Posttrain), seed);
}

PipelineReport run_pipeline(const PipelineConfig& cfg, const data::DomainDataset& data, Variant variant,
                            std::uint64_t seed) {
    data.validate();
    const std::size_t T = data.num_domains();
    PipelineReport r;
    r.method = variant == Variant::Full ? "dtrain" : std::string("dtrain_ablation:") + variant_name(variant);
    r.seed = seed;

    models::Model model;
    std::optional<models::Model> joint;
    if (variant == Variant::NoPretrain) {
        model = models::build_model(with_kind(cfg.arch, models::ArchKind::SharedBottom, data), derive_seed(seed, {kInit}));
    } else {
        PhaseReport pre;
        joint = pretrain(cfg.arch, data, cfg.pretrain, seed, &pre);
        r.phases.push_back(std::move(pre));
        r.snapshots.push_back({Phase::Pretrain, *joint});
        model = split_into_heads(*joint, T);
    }
    std::optional<models::Model> post;
    if (variant != Variant::NoPosttrain) {
        r.phases.push_back(posttrain(model, data, cfg.posttrain, derive_seed(seed, {kPosttrain})));
        r.snapshots.push_back({Phase::Posttrain, model});
        post = model;
        if (joint) r.head_update_norms["posttrain_vs_pretrain"] = head_norms(joint->group("head").layers, model);
    }
    if (variant != Variant::NoFinetune) {
        r.phases.push_back(
            finetune_heads(model, data, as_phase(cfg.finetune, Phase::Finetune), derive_seed(seed, {kFinetune})));
        r.snapshots.push_back({Phase::Finetune, model});
        if (joint) r.head_update_norms["finetune_vs_pretrain"] = head_norms(joint->group("head").layers, model);
        if (post) r.head_update_norms["finetune_vs_posttrain"] = head_norms(*post, model);
    }
    finish(r, data);
    return r;
}

PipelineReport run_baseline(const models::ArchSpec& arch, const data::DomainDataset& data, const PhaseConfig& train,
                            std::uint64_t seed) {
    models::Model model = models::build_model(with_kind(arch, arch.kind, data), derive_seed(seed, {kInit}));
    PipelineReport r;
    r.method = models::kind_name(arch.kind);
    r.seed = seed;
    r.phases.push_back(train_phase(model, data, as_phase(train, Phase::Train), derive_seed(seed, {kTrain})));
    r.snapshots.push_back({Phase::Train, model});
    finish(r, data);
    return r;
}

PipelineReport run_plugin(const models::ArchSpec& arch, const data::DomainDataset& data, const PhaseConfig& train,
                          const PhaseConfig& plugin, std::uint64_t seed) {
    PipelineReport r = run_baseline(arch, data, train, seed);
    r.method = std::string("plugin:") + models::kind_name(arch.kind);
    models::Model model = r.final_model();
    r.phases.push_back(plugin_finetune(model, data, as_phase(plugin, Phase::Plugin), derive_seed(seed, {kPlugin})));
    r.head_update_norms["plugin_vs_train"] = head_norms(r.final_model(), model);
    r.snapshots.push_back({Phase::Plugin, std::move(model)});
    finish(r, data);
    return r;
}

}  // namespace mdl::dtrain
