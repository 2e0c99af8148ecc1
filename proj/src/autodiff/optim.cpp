#include "mdl/optim.hpp"

#include <cmath>

#include "mdl/errors.hpp"

namespace mdl::ad {

void OptimizerConfig::validate() const {
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
        throw ConfigError("optimizer: learning_rate must be positive");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("optimizer: momentum must lie in [0,1)");
    if (!(decay >= 0.0)) throw ConfigError("optimizer: decay must be nonnegative");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
        throw ConfigError("optimizer: adam betas must lie in [0,1)");
    if (!(epsilon > 0.0)) throw ConfigError("optimizer: epsilon must be positive");
}

Optimizer::Optimizer(OptimizerConfig config) : config_(config) { config_.validate(); }

double Optimizer::effective_learning_rate() const {
    return config_.learning_rate / (1.0 + config_.decay * static_cast<double>(step_count_));
}

void Optimizer::step(ParamMap& params, const GradMap& grads) {
    std::set<std::string> all;
    for (const auto& [name, _] : params) all.insert(name);
    step(params, grads, all);
}

void Optimizer::step(ParamMap& params, const GradMap& grads, const std::set<std::string>& trainable) {
    for (const auto& name : trainable) {
        if (!params.count(name)) throw ContractError("optimizer: unknown parameter '" + name + "'");
        auto g = grads.find(name);
        if (g == grads.end()) throw ContractError("optimizer: missing gradient for trainable parameter '" + name + "'");
        if (g->second.size() != params.at(name).size())
            throw ContractError("optimizer: gradient size mismatch for '" + name + "'");
    }

    const double lr = effective_learning_rate();
    const double t = static_cast<double>(step_count_ + 1);
    for (const auto& name : trainable) {
        Tensor& w = params.at(name);
        const std::vector<double>& g = grads.at(name);
        auto& m = m_[name];
        if (m.size() != w.size()) m.assign(w.size(), 0.0);

        if (config_.kind == OptimizerKind::SgdMomentum) {
            for (std::size_t i = 0; i < w.size(); ++i) {
                m[i] = config_.momentum * m[i] + g[i];
                w[i] -= lr * m[i];
            }
        } else {
            auto& v = v_[name];
            if (v.size() != w.size()) v.assign(w.size(), 0.0);
            const double c1 = 1.0 - std::pow(config_.beta1, t);
            const double c2 = 1.0 - std::pow(config_.beta2, t);
            for (std::size_t i = 0; i < w.size(); ++i) {
                m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * g[i];
                v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * g[i] * g[i];
                const double mhat = m[i] / c1;
                const double vhat = v[i] / c2;
                w[i] -= lr * mhat / (std::sqrt(vhat) + config_.epsilon);
            }
        }
        w.check_finite("optimizer step");
    }
    ++step_count_;
}

}  // namespace mdl::ad
