#include <algorithm>
#include <cmath>
#include <cstring>

#include "mdl/errors.hpp"
#include "mdl/kernels.hpp"
#include "mdl/models.hpp"
#include "mdl/rng.hpp"

namespace mdl::models {

namespace {

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

// Glorot-uniform weights, zero biases. Each group draws from its own stream
// so adding or removing a group never shifts another group's initialization.
Group make_group(const std::string& name, std::size_t input, const std::vector<std::size_t>& widths,
                 std::uint64_t seed) {
    Group g;
    g.name = name;
    Rng rng(derive_seed(seed, {fnv1a(name)}));
    std::size_t in = input;
    for (auto w : widths) {
        DenseLayer layer{ad::Tensor::zeros({in, w}), ad::Tensor::zeros({w})};
        const double limit = std::sqrt(6.0 / static_cast<double>(in + w));
        for (auto& v : layer.weight.data) v = rng.uniform(-limit, limit);
        g.layers.push_back(std::move(layer));
        in = w;
    }
    return g;
}

std::vector<std::size_t> with_output(std::vector<std::size_t> hidden, std::size_t out) {
    hidden.push_back(out);
    return hidden;
}

std::string indexed(const std::string& base, std::size_t i) { return base + "." + std::to_string(i); }

// Dense stack; relu after every layer when `relu_last`, otherwise between.
ad::Var run_mlp(const Binding& b, const std::string& group, std::size_t layers, ad::Var x, bool relu_last) {
    ad::Var h = x;
    for (std::size_t l = 0; l < layers; ++l) {
        h = ad::bias_add(ad::matmul(h, b.weight(group, l)), b.bias(group, l));
        if (relu_last || l + 1 < layers) h = ad::relu(h);
    }
    return h;
}

// sum_e gate[:, e] * experts[e]
ad::Var mix(ad::Var gate, const std::vector<ad::Var>& experts) {
    ad::Var out = ad::scale_rows(experts[0], ad::slice(gate, 0, 1));
    for (std::size_t e = 1; e < experts.size(); ++e)
        out = ad::add(out, ad::scale_rows(experts[e], ad::slice(gate, e, e + 1)));
    return out;
}

bool single_head(ArchKind k) { return k == ArchKind::Joint || k == ArchKind::MulAnn; }

std::string ple_specific(std::size_t domain, std::size_t k) {
    return "expert.domain" + std::to_string(domain) + "." + std::to_string(k);
}

}  // namespace

std::string weight_key(const std::string& group, std::size_t layer) { return indexed(group, layer) + ".W"; }
std::string bias_key(const std::string& group, std::size_t layer) { return indexed(group, layer) + ".b"; }

Binding::Binding(const Model& model, ad::Tape& tape) : tape_(&tape) {
    for (const auto& g : model.groups()) {
        auto& slots = vars_[g.name];
        for (std::size_t l = 0; l < g.layers.size(); ++l)
            slots.emplace_back(tape.parameter(weight_key(g.name, l), g.layers[l].weight),
                               tape.parameter(bias_key(g.name, l), g.layers[l].bias));
    }
}

Binding::Binding(const Model& model, ad::Tape& tape, const std::set<std::string>& groups) : tape_(&tape) {
    for (const auto& g : model.groups()) {
        const bool differentiable = groups.count(g.name) > 0;
        auto& slots = vars_[g.name];
        for (std::size_t l = 0; l < g.layers.size(); ++l) {
            if (differentiable)
                slots.emplace_back(tape.parameter(weight_key(g.name, l), g.layers[l].weight),
                                   tape.parameter(bias_key(g.name, l), g.layers[l].bias));
            else
                slots.emplace_back(tape.constant(g.layers[l].weight), tape.constant(g.layers[l].bias));
        }
    }
}

ad::Var Binding::weight(const std::string& group, std::size_t layer) const {
    auto it = vars_.find(group);
    if (it == vars_.end() || layer >= it->second.size())
        throw ContractError("binding: no layer " + std::to_string(layer) + " in group '" + group + "'");
    return it->second[layer].first;
}

ad::Var Binding::bias(const std::string& group, std::size_t layer) const {
    auto it = vars_.find(group);
    if (it == vars_.end() || layer >= it->second.size())
        throw ContractError("binding: no layer " + std::to_string(layer) + " in group '" + group + "'");
    return it->second[layer].second;
}

Model::Model(ArchSpec spec, std::vector<Group> groups) : spec_(std::move(spec)), groups_(std::move(groups)) {}

std::size_t Model::index_of(const std::string& name) const {
    for (std::size_t i = 0; i < groups_.size(); ++i)
        if (groups_[i].name == name) return i;
    throw ContractError("unknown parameter group '" + name + "'");
}

bool Model::has_group(const std::string& name) const {
    return std::any_of(groups_.begin(), groups_.end(), [&](const Group& g) { return g.name == name; });
}

const Group& Model::group(const std::string& name) const { return groups_[index_of(name)]; }
Group& Model::group(const std::string& name) { return groups_[index_of(name)]; }

std::string Model::head_name(std::size_t domain) const {
    if (domain >= spec_.num_domains)
        throw ContractError("domain " + std::to_string(domain) + " out of range [0, " +
                            std::to_string(spec_.num_domains) + ")");
    return single_head(spec_.kind) ? "head" : indexed("head", domain);
}

std::vector<std::string> Model::head_names() const {
    if (single_head(spec_.kind)) return {"head"};
    std::vector<std::string> out;
    for (std::size_t t = 0; t < spec_.num_domains; ++t) out.push_back(indexed("head", t));
    return out;
}

std::vector<std::string> Model::trunk_group_names() const {
    std::vector<std::string> out;
    for (const auto& g : groups_)
        if (g.name.rfind("head", 0) != 0) out.push_back(g.name);
    return out;
}

void Model::set_trainable(const std::set<std::string>& names, bool trainable) {
    for (const auto& n : names) index_of(n);
    for (const auto& n : names) groups_[index_of(n)].trainable = trainable;
}

std::set<std::string> Model::trainable_param_keys() const {
    std::set<std::string> keys;
    for (const auto& g : groups_) {
        if (!g.trainable) continue;
        for (std::size_t l = 0; l < g.layers.size(); ++l) {
            keys.insert(weight_key(g.name, l));
            keys.insert(bias_key(g.name, l));
        }
    }
    return keys;
}

ad::ParamMap Model::params() const {
    ad::ParamMap out;
    for (const auto& g : groups_)
        for (std::size_t l = 0; l < g.layers.size(); ++l) {
            out.emplace(weight_key(g.name, l), g.layers[l].weight);
            out.emplace(bias_key(g.name, l), g.layers[l].bias);
        }
    return out;
}

void Model::assign(const ad::ParamMap& params) {
    for (auto& g : groups_)
        for (std::size_t l = 0; l < g.layers.size(); ++l) {
            for (auto [key, slot] : {std::pair{weight_key(g.name, l), &g.layers[l].weight},
                                     std::pair{bias_key(g.name, l), &g.layers[l].bias}}) {
                auto it = params.find(key);
                if (it == params.end()) continue;
                if (it->second.shape != slot->shape)
                    throw DimensionError("assign: shape mismatch for '" + key + "'");
                if (!g.trainable && !ad::bit_equal(it->second, *slot))
                    throw ContractError("attempt to update frozen group '" + g.name + "'");
                slot->data = it->second.data;
            }
        }
}

void Model::step(ad::Optimizer& optimizer, const ad::GradMap& grads) {
    ad::ParamMap p = params();
    optimizer.step(p, grads, trainable_param_keys());
    assign(p);
}

void Model::set_group_layers(const std::string& target, const std::vector<DenseLayer>& layers) {
    Group& g = groups_[index_of(target)];
    if (g.layers.size() != layers.size())
        throw DimensionError("group '" + target + "' has a different depth");
    for (std::size_t l = 0; l < layers.size(); ++l)
        if (g.layers[l].weight.shape != layers[l].weight.shape || g.layers[l].bias.shape != layers[l].bias.shape)
            throw DimensionError("group '" + target + "' has different layer shapes");
    if (!g.trainable) throw ContractError("attempt to overwrite frozen group '" + target + "'");
    for (std::size_t l = 0; l < layers.size(); ++l) {
        g.layers[l].weight.data = layers[l].weight.data;
        g.layers[l].bias.data = layers[l].bias.data;
    }
}

Model build_model(const ArchSpec& spec, std::uint64_t seed) {
    spec.validate();
    const std::size_t T = spec.num_domains;
    const auto head_widths = with_output(spec.head_layers, spec.num_classes);
    const std::size_t feat = spec.feature_dim();
    std::vector<Group> groups;
    auto add = [&](const std::string& name, std::size_t input, const std::vector<std::size_t>& widths) {
        groups.push_back(make_group(name, input, widths, seed));
    };
    auto add_heads = [&] {
        for (std::size_t t = 0; t < T; ++t) add(indexed("head", t), feat, head_widths);
    };

    switch (spec.kind) {
        case ArchKind::Joint:
            add("backbone", spec.input_dim, spec.backbone_layers);
            add("head", feat, head_widths);
            break;
        case ArchKind::Separate:
            for (std::size_t t = 0; t < T; ++t) add(indexed("backbone", t), spec.input_dim, spec.backbone_layers);
            add_heads();
            break;
        case ArchKind::SharedBottom:
            add("backbone", spec.input_dim, spec.backbone_layers);
            add_heads();
            break;
        case ArchKind::MoE:
            for (std::size_t e = 0; e < *spec.expert_count; ++e) add(indexed("expert", e), spec.input_dim, spec.backbone_layers);
            add("gate", spec.input_dim, {*spec.expert_count});
            add_heads();
            break;
        case ArchKind::MMoE:
            for (std::size_t e = 0; e < *spec.expert_count; ++e) add(indexed("expert", e), spec.input_dim, spec.backbone_layers);
            for (std::size_t t = 0; t < T; ++t) add(indexed("gate", t), spec.input_dim, {*spec.expert_count});
            add_heads();
            break;
        case ArchKind::PLE:
            for (std::size_t k = 0; k < *spec.shared_experts; ++k)
                add(indexed("expert.shared", k), spec.input_dim, spec.backbone_layers);
            for (std::size_t t = 0; t < T; ++t)
                for (std::size_t k = 0; k < (*spec.specific_experts)[t]; ++k)
                    add(ple_specific(t, k), spec.input_dim, spec.backbone_layers);
            for (std::size_t t = 0; t < T; ++t)
                add(indexed("gate", t), spec.input_dim, {*spec.shared_experts + (*spec.specific_experts)[t]});
            add_heads();
            break;
        case ArchKind::DannMdl:
            add("backbone", spec.input_dim, spec.backbone_layers);
            add_heads();
            add("discriminator", feat, with_output(*spec.discriminator_layers, T));
            break;
        case ArchKind::MulAnn:
            add("backbone", spec.input_dim, spec.backbone_layers);
            add("head", feat, head_widths);
            add("discriminator", feat, with_output(*spec.discriminator_layers, T));
            break;
    }
    return Model(spec, std::move(groups));
}

void zero_parameters(Model& model) {
    auto p = model.params();
    for (auto& [_, t] : p) std::fill(t.data.begin(), t.data.end(), 0.0);
    std::set<std::string> all;
    for (const auto& g : model.groups()) all.insert(g.name);
    const auto frozen = [&] {
        std::set<std::string> f;
        for (const auto& g : model.groups())
            if (!g.trainable) f.insert(g.name);
        return f;
    }();
    model.set_trainable(all, true);
    model.assign(p);
    model.set_trainable(frozen, false);
}

ad::Var trunk_features(const Model& model, const Binding& b, ad::Var x, std::size_t domain,
                       std::vector<ad::Var>* gate_weights) {
    const ArchSpec& spec = model.spec();
    model.head_name(domain);  // range check
    if (x.value().rank() != 2 || x.value().shape[1] != spec.input_dim)
        throw DimensionError("forward: input width must be " + std::to_string(spec.input_dim) + ", got shape " +
                             ad::shape_string(x.value().shape));
    const std::size_t depth = spec.backbone_layers.size();
    auto experts = [&](const std::vector<std::string>& names) {
        std::vector<ad::Var> outs;
        for (const auto& n : names) outs.push_back(run_mlp(b, n, depth, x, true));
        return outs;
    };
    auto gated = [&](const std::string& gate, const std::vector<std::string>& names) {
        ad::Var g = ad::softmax(ad::bias_add(ad::matmul(x, b.weight(gate, 0)), b.bias(gate, 0)));
        if (gate_weights) gate_weights->push_back(g);
        return mix(g, experts(names));
    };
    switch (spec.kind) {
        case ArchKind::Joint:
        case ArchKind::SharedBottom:
        case ArchKind::DannMdl:
        case ArchKind::MulAnn:
            return run_mlp(b, "backbone", depth, x, true);
        case ArchKind::Separate:
            return run_mlp(b, indexed("backbone", domain), depth, x, true);
        case ArchKind::MoE:
        case ArchKind::MMoE: {
            std::vector<std::string> names;
            for (std::size_t e = 0; e < *spec.expert_count; ++e) names.push_back(indexed("expert", e));
            return gated(spec.kind == ArchKind::MoE ? "gate" : indexed("gate", domain), names);
        }
        case ArchKind::PLE: {
            std::vector<std::string> names;
            for (std::size_t k = 0; k < *spec.shared_experts; ++k) names.push_back(indexed("expert.shared", k));
            for (std::size_t k = 0; k < (*spec.specific_experts)[domain]; ++k) names.push_back(ple_specific(domain, k));
            return gated(indexed("gate", domain), names);
        }
    }
    throw ContractError("unknown architecture kind");
}

ad::Var apply_head(const Binding& b, const std::string& head, std::size_t layers, ad::Var features) {
    return run_mlp(b, head, layers, features, false);
}

ForwardOutput forward(const Model& model, const Binding& b, ad::Var x, std::size_t domain) {
    const ArchSpec& spec = model.spec();
    ForwardOutput out;
    out.features = trunk_features(model, b, x, domain, &out.gate_weights);
    out.logits = apply_head(b, model.head_name(domain), spec.head_layers.size() + 1, out.features);
    if (spec.discriminator_layers) {
        ad::Var reversed = ad::grad_reverse(out.features, 1.0);
        out.domain_logits = run_mlp(b, "discriminator", spec.discriminator_layers->size() + 1, reversed, false);
    }
    return out;
}

ad::Var task_loss(const ArchSpec& spec, ad::Var logits, std::span<const int> labels) {
    ad::Tape& tape = *logits.tape();
    std::vector<double> y(labels.begin(), labels.end());
    for (int l : labels) {
        const std::size_t classes = spec.num_classes == 1 ? 2 : spec.num_classes;
        if (l < 0 || static_cast<std::size_t>(l) >= classes)
            throw ContractError("label " + std::to_string(l) + " out of range");
    }
    ad::Var yv = tape.constant(ad::Tensor({labels.size()}, std::move(y)));
    return spec.num_classes == 1 ? ad::binary_cross_entropy(logits, yv) : ad::softmax_cross_entropy(logits, yv);
}

ad::Var loss(const Model& model, const Binding& b, ad::Var x, std::span<const int> labels, std::size_t domain) {
    if (labels.size() != x.value().shape[0]) throw DimensionError("loss: one label per row required");
    ForwardOutput out = forward(model, b, x, domain);
    ad::Var task = task_loss(model.spec(), out.logits, labels);
    if (!out.domain_logits) return task;
    ad::Tape& tape = b.tape();
    ad::Var d = tape.constant(ad::Tensor::filled({labels.size()}, static_cast<double>(domain)));
    ad::Var disc = ad::softmax_cross_entropy(*out.domain_logits, d);
    return ad::add(task, ad::scale(disc, *model.spec().lambda));
}

ad::Tensor predict_logits(const Model& model, const ad::Tensor& x, std::size_t domain) {
    ad::Tape tape;
    Binding b(model, tape, {});
    ad::Var xv = tape.constant(x);
    ad::Var features = trunk_features(model, b, xv, domain);
    ad::Var logits = apply_head(b, model.head_name(domain), model.spec().head_layers.size() + 1, features);
    return logits.value();
}

std::vector<int> predict_classes(const Model& model, const ad::Tensor& x, std::size_t domain) {
    const ad::Tensor z = predict_logits(model, x, domain);
    const std::size_t rows = z.shape[0], c = z.shape[1];
    std::vector<int> out(rows);
    for (std::size_t i = 0; i < rows; ++i) {
        if (c == 1) {
            out[i] = z[i] > 0.0 ? 1 : 0;
            continue;
        }
        std::size_t best = 0;
        for (std::size_t j = 1; j < c; ++j)
            if (z[i * c + j] > z[i * c + best]) best = j;
        out[i] = static_cast<int>(best);
    }
    return out;
}

std::vector<double> predict_scores(const Model& model, const ad::Tensor& x, std::size_t domain) {
    const ad::Tensor z = predict_logits(model, x, domain);
    const std::size_t rows = z.shape[0], c = z.shape[1];
    std::vector<double> out(rows);
    if (c == 1) {
        for (std::size_t i = 0; i < rows; ++i) out[i] = 1.0 / (1.0 + std::exp(-z[i]));
        return out;
    }
    std::vector<double> p(z.size());
    kernels::serial::softmax_rows(z.data, p, rows, c);
    for (std::size_t i = 0; i < rows; ++i) out[i] = p[i * c + 1];
    return out;
}

Model set_trainable(Model model, const std::set<std::string>& groups, bool trainable) {
    model.set_trainable(groups, trainable);
    return model;
}

Model clone_head(Model model, const std::string& source, const std::vector<std::string>& targets) {
    const std::vector<DenseLayer> layers = model.group(source).layers;
    for (const auto& t : targets) model.set_group_layers(t, layers);
    return model;
}

ParamCount count_params(const Model& model) {
    ParamCount c;
    for (const auto& g : model.groups()) {
        std::size_t n = 0;
        for (const auto& l : g.layers) n += l.weight.size() + l.bias.size();
        c.per_group[g.name] = n;
        c.total += n;
    }
    return c;
}

double head_update_norm(const std::vector<DenseLayer>& reference, const std::vector<DenseLayer>& head) {
    if (reference.size() != head.size()) throw DimensionError("head_update_norm: depth mismatch");
    double s = 0.0;
    for (std::size_t l = 0; l < head.size(); ++l) {
        const auto& a = reference[l];
        const auto& b = head[l];
        if (a.weight.shape != b.weight.shape || a.bias.shape != b.bias.shape)
            throw DimensionError("head_update_norm: layer shape mismatch");
        for (std::size_t i = 0; i < a.weight.size(); ++i) s += (b.weight[i] - a.weight[i]) * (b.weight[i] - a.weight[i]);
        for (std::size_t i = 0; i < a.bias.size(); ++i) s += (b.bias[i] - a.bias[i]) * (b.bias[i] - a.bias[i]);
    }
    return std::sqrt(s);
}

bool bit_equal(const Group& a, const Group& b) {
    if (a.name != b.name || a.layers.size() != b.layers.size()) return false;
    for (std::size_t l = 0; l < a.layers.size(); ++l)
        if (!ad::bit_equal(a.layers[l].weight, b.layers[l].weight) || !ad::bit_equal(a.layers[l].bias, b.layers[l].bias))
            return false;
    return true;
}

bool bit_equal(const Model& a, const Model& b) {
    if (!(a.spec() == b.spec()) || a.groups().size() != b.groups().size()) return false;
    for (std::size_t i = 0; i < a.groups().size(); ++i)
        if (!bit_equal(a.groups()[i], b.groups()[i])) return false;
    return true;
}

}  // namespace mdl::models
