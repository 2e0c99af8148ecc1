#pragma once

// Multi-domain architectures as named parameter groups over the autodiff core.
//
// Domains are indexed 0..T-1. Every group is a stack of dense layers
// (weight [in,out], bias [out]). Backbones and experts apply relu after every
// layer; heads, gates and the discriminator apply relu between layers only.
//
// Group names by kind:
//   joint          backbone, head
//   separate       backbone.<t>, head.<t>
//   shared_bottom  backbone, head.<t>
//   moe            expert.<e>, gate, head.<t>
//   mmoe           expert.<e>, gate.<t>, head.<t>
//   ple            expert.shared.<k>, expert.domain<t>.<k>, gate.<t>, head.<t>
//   dann_mdl       backbone, head.<t>, discriminator
//   mulann         backbone, head, discriminator
//
// Gates read the raw input x (the MoE gate does not see the domain id).

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "mdl/autodiff.hpp"
#include "mdl/optim.hpp"
#include "mdl/tensor.hpp"

namespace mdl::models {

enum class ArchKind { Joint, Separate, SharedBottom, MoE, MMoE, PLE, DannMdl, MulAnn };

const char* kind_name(ArchKind kind);
ArchKind parse_kind(const std::string& name);

struct ArchSpec {
    ArchKind kind = ArchKind::SharedBottom;
    std::size_t input_dim = 0;
    std::vector<std::size_t> backbone_layers;
    std::vector<std::size_t> head_layers;  // hidden widths; the output layer is implied
    std::size_t num_classes = 2;           // 1 means a single binary logit
    std::size_t num_domains = 1;
    std::optional<std::size_t> expert_count;                    // moe, mmoe
    std::optional<std::size_t> shared_experts;                  // ple
    std::optional<std::vector<std::size_t>> specific_experts;   // ple, one entry per domain
    std::optional<std::vector<std::size_t>> discriminator_layers;  // dann_mdl, mulann
    std::optional<double> lambda;                                // dann_mdl, mulann

    // Throws ConfigError when a dimension is zero or kind-specific fields are
    // missing or present on a kind that does not use them.
    void validate() const;
    std::size_t feature_dim() const { return backbone_layers.back(); }
    std::size_t output_dim() const { return num_classes; }
};

bool operator==(const ArchSpec& a, const ArchSpec& b);

struct DenseLayer {
    ad::Tensor weight;  // [in, out]
    ad::Tensor bias;    // [out]
};

struct Group {
    std::string name;
    std::vector<DenseLayer> layers;
    bool trainable = true;
};

struct ParamCount {
    std::map<std::string, std::size_t> per_group;
    std::size_t total = 0;
};

class Model;

// Parameter leaves of one model registered on one tape.
class Binding {
public:
    Binding(const Model& model, ad::Tape& tape);
    // Registers only the listed groups; the rest enter as constants.
    Binding(const Model& model, ad::Tape& tape, const std::set<std::string>& groups);

    ad::Var weight(const std::string& group, std::size_t layer) const;
    ad::Var bias(const std::string& group, std::size_t layer) const;
    ad::Tape& tape() const { return *tape_; }

private:
    ad::Tape* tape_;
    std::map<std::string, std::vector<std::pair<ad::Var, ad::Var>>> vars_;
};

std::string weight_key(const std::string& group, std::size_t layer);
std::string bias_key(const std::string& group, std::size_t layer);

struct ForwardOutput {
    ad::Var logits;                        // [B, num_classes]
    ad::Var features;                      // head input
    std::vector<ad::Var> gate_weights;     // [B, experts seen] per gate used
    std::optional<ad::Var> domain_logits;  // adversarial kinds, on reversed features
};

class Model {
public:
    Model() = default;
    Model(ArchSpec spec, std::vector<Group> groups);

    const ArchSpec& spec() const { return spec_; }
    const std::vector<Group>& groups() const { return groups_; }
    bool has_group(const std::string& name) const;
    const Group& group(const std::string& name) const;
    Group& group(const std::string& name);

    // Head group used for domain t ("head" for single-head kinds).
    std::string head_name(std::size_t domain) const;
    std::vector<std::string> head_names() const;
    // Every non-head group (backbones, experts, gates, discriminator).
    std::vector<std::string> trunk_group_names() const;

    void set_trainable(const std::set<std::string>& names, bool trainable);
    std::set<std::string> trainable_param_keys() const;

    // Flat name -> tensor view used with the optimizer.
    ad::ParamMap params() const;
    // Writes tensors back. Throws ContractError when a changed value belongs
    // to a frozen group.
    void assign(const ad::ParamMap& params);

    // One optimizer step over the trainable groups.
    void step(ad::Optimizer& optimizer, const ad::GradMap& grads);

    // Replaces the layers of `target` with a deep copy of `layers`.
    void set_group_layers(const std::string& target, const std::vector<DenseLayer>& layers);

private:
    std::size_t index_of(const std::string& name) const;

    ArchSpec spec_;
    std::vector<Group> groups_;
};

Model build_model(const ArchSpec& spec, std::uint64_t seed);

// Zero every parameter (useful for probes and tests).
void zero_parameters(Model& model);

ForwardOutput forward(const Model& model, const Binding& binding, ad::Var x, std::size_t domain);

// Head-input features for `domain` (backbone, expert mixture, ...).
ad::Var trunk_features(const Model& model, const Binding& binding, ad::Var x, std::size_t domain,
                       std::vector<ad::Var>* gate_weights = nullptr);
ad::Var apply_head(const Binding& binding, const std::string& head, std::size_t layers, ad::Var features);

// Mean cross-entropy of logits against labels (binary when num_classes==1).
ad::Var task_loss(const ArchSpec& spec, ad::Var logits, std::span<const int> labels);

// Task loss (mean cross-entropy, or binary cross-entropy when num_classes==1)
// plus lambda * domain-classification loss for the adversarial kinds.
ad::Var loss(const Model& model, const Binding& binding, ad::Var x, std::span<const int> labels,
             std::size_t domain);

// Plain-value inference helpers (no gradients).
ad::Tensor predict_logits(const Model& model, const ad::Tensor& x, std::size_t domain);
// Argmax with lowest-index tie-breaking; for binary models, score > 0.
std::vector<int> predict_classes(const Model& model, const ad::Tensor& x, std::size_t domain);
// Positive-class probability per sample (binary models) or the softmax
// probability of class 1 otherwise.
std::vector<double> predict_scores(const Model& model, const ad::Tensor& x, std::size_t domain);

Model set_trainable(Model model, const std::set<std::string>& groups, bool trainable);
Model clone_head(Model model, const std::string& source, const std::vector<std::string>& targets);

ParamCount count_params(const Model& model);

// Closed-form counts per kind, from the component sizes:
//   joint n_psi + n_h; separate T(n_psi + n_h); shared_bottom n_psi + T n_h;
//   moe E n_psi + n_G + T n_h; mmoe E n_psi + T (n_h + n_G);
//   ple (m_s + sum m_t) n_psi + T n_h + sum_t n_G(t);
//   dann_mdl n_psi + T n_h + n_D; mulann n_psi + n_h + n_D.
struct ComponentSizes {
    std::size_t backbone = 0;       // n_psi
    std::size_t head = 0;           // n_h
    std::size_t gate = 0;           // n_G (moe/mmoe)
    std::vector<std::size_t> ple_gates;  // n_G(t)
    std::size_t discriminator = 0;  // n_D
};
std::size_t mlp_param_count(std::size_t input, const std::vector<std::size_t>& widths);
ComponentSizes component_sizes(const ArchSpec& spec);
std::size_t closed_form_param_count(const ArchSpec& spec);

// Flatten-and-concatenate both heads and return the Euclidean norm of the
// difference. Shapes must agree layer by layer.
double head_update_norm(const std::vector<DenseLayer>& reference, const std::vector<DenseLayer>& head);

bool bit_equal(const Group& a, const Group& b);
bool bit_equal(const Model& a, const Model& b);

}  // namespace mdl::models
