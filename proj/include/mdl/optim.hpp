#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "mdl/autodiff.hpp"
#include "mdl/tensor.hpp"

namespace mdl::ad {

using ParamMap = std::map<std::string, Tensor>;

enum class OptimizerKind { SgdMomentum, Adam };

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::SgdMomentum;
    double learning_rate = 0.01;
    double momentum = 0.0;  // sgd only, in [0,1)
    double beta1 = 0.9;     // adam
    double beta2 = 0.999;
    double epsilon = 1e-8;
    // Annealing: lr_t = lr_0 / (1 + decay * t), t = completed steps.
    double decay = 0.0;

    void validate() const;
};

// Optimizer state: config, per-parameter moment buffers and step count.
// Buffers are created lazily on the first step that touches a parameter.
class Optimizer {
public:
    explicit Optimizer(OptimizerConfig config);

    const OptimizerConfig& config() const { return config_; }
    std::uint64_t step_count() const { return step_count_; }
    double effective_learning_rate() const;

    // Updates every parameter whose name is in `trainable`. Each trainable
    // parameter needs a gradient of matching size; other entries of `grads`
    // are ignored. Passing an empty `trainable` set updates nothing.
    void step(ParamMap& params, const GradMap& grads, const std::set<std::string>& trainable);

    // Convenience overload: every parameter in `params` is trainable.
    void step(ParamMap& params, const GradMap& grads);

    const std::map<std::string, std::vector<double>>& first_moments() const { return m_; }
    const std::map<std::string, std::vector<double>>& second_moments() const { return v_; }

private:
    OptimizerConfig config_;
    std::map<std::string, std::vector<double>> m_;
    std::map<std::string, std::vector<double>> v_;
    std::uint64_t step_count_ = 0;
};

}  // namespace mdl::ad
