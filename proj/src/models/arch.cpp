#include <cmath>
#include <numeric>

#include "mdl/errors.hpp"
#include "mdl/models.hpp"

namespace mdl::models {

namespace {

struct KindName {
    ArchKind kind;
    const char* name;
};

constexpr KindName kKinds[] = {
    {ArchKind::Joint, "joint"},   {ArchKind::Separate, "separate"}, {ArchKind::SharedBottom, "shared_bottom"},
    {ArchKind::MoE, "moe"},       {ArchKind::MMoE, "mmoe"},         {ArchKind::PLE, "ple"},
    {ArchKind::DannMdl, "dann_mdl"}, {ArchKind::MulAnn, "mulann"},
};

bool uses_experts(ArchKind k) { return k == ArchKind::MoE || k == ArchKind::MMoE; }
bool adversarial(ArchKind k) { return k == ArchKind::DannMdl || k == ArchKind::MulAnn; }

void require_positive(const std::vector<std::size_t>& widths, const char* what) {
    for (auto w : widths)
        if (w == 0) throw ConfigError(std::string(what) + " widths must be positive");
}

}  // namespace

const char* kind_name(ArchKind kind) {
    for (const auto& k : kKinds)
        if (k.kind == kind) return k.name;
    return "?";
}

ArchKind parse_kind(const std::string& name) {
    for (const auto& k : kKinds)
        if (name == k.name) return k.kind;
    throw ConfigError("unknown architecture kind '" + name + "'");
}

void ArchSpec::validate() const {
    if (input_dim == 0) throw ConfigError("arch: input_dim must be positive");
    if (num_classes == 0) throw ConfigError("arch: num_classes must be positive");
    if (num_domains == 0) throw ConfigError("arch: num_domains must be positive");
    if (backbone_layers.empty()) throw ConfigError("arch: backbone_layers must be non-empty");
    require_positive(backbone_layers, "backbone");
    require_positive(head_layers, "head");

    const auto field = [&](bool present, bool required, const char* name) {
        if (present && !required)
            throw ConfigError(std::string("arch: field '") + name + "' is not used by kind " + kind_name(kind));
        if (!present && required)
            throw ConfigError(std::string("arch: kind ") + kind_name(kind) + " requires field '" + name + "'");
    };
    field(expert_count.has_value(), uses_experts(kind), "expert_count");
    field(shared_experts.has_value(), kind == ArchKind::PLE, "shared_experts");
    field(specific_experts.has_value(), kind == ArchKind::PLE, "specific_experts");
    field(discriminator_layers.has_value(), adversarial(kind), "discriminator_layers");
    field(lambda.has_value(), adversarial(kind), "lambda");

    if (expert_count && *expert_count == 0) throw ConfigError("arch: expert_count must be >= 1");
    if (shared_experts && *shared_experts == 0) throw ConfigError("arch: shared_experts must be >= 1");
    if (specific_experts) {
        if (specific_experts->size() != num_domains)
            throw ConfigError("arch: specific_experts needs one entry per domain");
        for (auto m : *specific_experts)
            if (m == 0) throw ConfigError("arch: specific_experts entries must be >= 1");
    }
    if (discriminator_layers) require_positive(*discriminator_layers, "discriminator");
    if (lambda && !(*lambda >= 0.0 && std::isfinite(*lambda))) throw ConfigError("arch: lambda must be nonnegative");
    if (adversarial(kind) && num_domains < 2)
        throw ConfigError("arch: adversarial kinds need at least two domains");
}

bool operator==(const ArchSpec& a, const ArchSpec& b) {
    return a.kind == b.kind && a.input_dim == b.input_dim && a.backbone_layers == b.backbone_layers &&
           a.head_layers == b.head_layers && a.num_classes == b.num_classes && a.num_domains == b.num_domains &&
           a.expert_count == b.expert_count && a.shared_experts == b.shared_experts &&
           a.specific_experts == b.specific_experts && a.discriminator_layers == b.discriminator_layers &&
           a.lambda == b.lambda;
}

std::size_t mlp_param_count(std::size_t input, const std::vector<std::size_t>& widths) {
    std::size_t total = 0;
    std::size_t in = input;
    for (auto w : widths) {
        total += in * w + w;
        in = w;
    }
    return total;
}

ComponentSizes component_sizes(const ArchSpec& spec) {
    ComponentSizes c;
    c.backbone = mlp_param_count(spec.input_dim, spec.backbone_layers);
    std::vector<std::size_t> head = spec.head_layers;
    head.push_back(spec.num_classes);
    c.head = mlp_param_count(spec.feature_dim(), head);
    if (spec.expert_count) c.gate = mlp_param_count(spec.input_dim, {*spec.expert_count});
    if (spec.specific_experts)
        for (auto m : *spec.specific_experts)
            c.ple_gates.push_back(mlp_param_count(spec.input_dim, {*spec.shared_experts + m}));
    if (spec.discriminator_layers) {
        std::vector<std::size_t> d = *spec.discriminator_layers;
        d.push_back(spec.num_domains);
        c.discriminator = mlp_param_count(spec.feature_dim(), d);
    }
    return c;
}

std::size_t closed_form_param_count(const ArchSpec& spec) {
    spec.validate();
    const ComponentSizes c = component_sizes(spec);
    const std::size_t T = spec.num_domains;
    switch (spec.kind) {
        case ArchKind::Joint: return c.backbone + c.head;
        case ArchKind::Separate: return T * c.backbone + T * c.head;
        case ArchKind::SharedBottom: return c.backbone + T * c.head;
        case ArchKind::MoE: return *spec.expert_count * c.backbone + c.gate + T * c.head;
        case ArchKind::MMoE: return *spec.expert_count * c.backbone + T * (c.head + c.gate);
        case ArchKind::PLE: {
            const std::size_t experts = std::accumulate(spec.specific_experts->begin(), spec.specific_experts->end(),
                                                        *spec.shared_experts);
            const std::size_t gates = std::accumulate(c.ple_gates.begin(), c.ple_gates.end(), std::size_t{0});
            return experts * c.backbone + T * c.head + gates;
        }
        case ArchKind::DannMdl: return c.backbone + T * c.head + c.discriminator;
        case ArchKind::MulAnn: return c.backbone + c.head + c.discriminator;
    }
    throw ConfigError("unknown architecture kind");
}

}  // namespace mdl::models
