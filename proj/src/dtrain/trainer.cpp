#include <algorithm>
#include <exception>
#include <numeric>

#include "mdl/dtrain.hpp"
#include "mdl/errors.hpp"

namespace mdl::dtrain {
namespace {

CurvePoint evaluate_at(const models::Model& model, const data::DomainDataset& data, std::size_t step) {
    CurvePoint p;
    p.step = step;
    const auto test = metrics::evaluate(model, data, data::Split::Test);
    const auto train = metrics::evaluate(model, data, data::Split::Train);
    p.test = test.record.per_domain;
    p.test_loss = test.loss;
    p.train = train.record.per_domain;
    p.train_loss = train.loss;
    p.test_average = test.record.average;
    return p;
}

void fill_best_steps(PhaseReport& r) {
    const std::size_t T = r.curve.front().test.size();
    r.best_step.assign(T, 0);
    for (std::size_t t = 0; t < T; ++t) {
        double best = r.curve.front().test[t];
        for (const auto& p : r.curve)
            if (p.test[t] > best) {
                best = p.test[t];
                r.best_step[t] = p.step;
            }
    }
}

bool due(const PhaseConfig& cfg, std::size_t step, std::size_t steps) {
    return step % cfg.eval_every == 0 || step == steps;
}

std::vector<std::vector<std::size_t>> train_rows(const data::DomainDataset& data) {
    std::vector<std::vector<std::size_t>> rows;
    for (const auto& d : data.domains) rows.push_back(d.indices(data::Split::Train));
    return rows;
}

std::vector<std::size_t> sizes_of(const std::vector<std::vector<std::size_t>>& rows) {
    std::vector<std::size_t> n;
    for (const auto& r : rows) n.push_back(r.size());
    return n;
}

void check_domains(const models::Model& model, const data::DomainDataset& data) {
    data.validate();
    if (model.spec().num_domains != data.num_domains())
        throw ConfigError("model expects " + std::to_string(model.spec().num_domains) + " domains, data has " +
                          std::to_string(data.num_domains()));
    if (model.spec().input_dim != data.input_dim())
        throw ConfigError("model input width " + std::to_string(model.spec().input_dim) + " does not match data width " +
                          std::to_string(data.input_dim()));
    if (model.spec().num_classes != data.model_classes())
        throw ConfigError("model output width does not match the label set");
}

ad::Tensor gather_rows(const ad::Tensor& src, std::span<const std::size_t> rows) {
    const std::size_t w = src.cols();
    ad::Tensor out = ad::Tensor::zeros({rows.size(), w});
    for (std::size_t r = 0; r < rows.size(); ++r)
        std::copy_n(src.data.data() + rows[r] * w, w, out.data.data() + r * w);
    return out;
}

}  // namespace

const char* phase_name(Phase p) {
    switch (p) {
        case Phase::Pretrain: return "pretrain";
        case Phase::Posttrain: return "posttrain";
        case Phase::Finetune: return "finetune";
        case Phase::Plugin: return "plugin";
        case Phase::Train: return "train";
    }
    return "?";
}

Phase parse_phase(const std::string& name) {
    for (Phase p : {Phase::Pretrain, Phase::Posttrain, Phase::Finetune, Phase::Plugin, Phase::Train})
        if (name == phase_name(p)) return p;
    throw ConfigError("unknown phase '" + name + "'");
}

void PhaseConfig::validate() const {
    if (epochs == 0) throw ConfigError(std::string(phase_name(phase)) + ": epochs must be at least 1");
    if (eval_every == 0) throw ConfigError(std::string(phase_name(phase)) + ": eval_every must be at least 1");
    if (batch_size.empty()) throw ConfigError(std::string(phase_name(phase)) + ": batch_size is required");
    for (auto b : batch_size)
        if (b == 0) throw ConfigError(std::string(phase_name(phase)) + ": batch sizes must be at least 1");
    optimizer.validate();
}

std::vector<std::size_t> PhaseConfig::batch_for(std::size_t num_domains) const {
    if (batch_size.size() == 1) return std::vector<std::size_t>(num_domains, batch_size[0]);
    if (batch_size.size() != num_domains)
        throw ConfigError(std::string(phase_name(phase)) + ": need one batch size per domain or a single value");
    return batch_size;
}

const PhaseReport* PipelineReport::phase(Phase p) const {
    for (const auto& r : phases)
        if (r.phase == p) return &r;
    return nullptr;
}

PhaseReport train_phase(models::Model& model, const data::DomainDataset& data, const PhaseConfig& cfg,
                        std::uint64_t seed) {
    cfg.validate();
    check_domains(model, data);
    const std::size_t T = data.num_domains();
    const auto rows = train_rows(data);
    data::BalancedBatches batches(sizes_of(rows), cfg.batch_for(T), seed);
    const std::size_t steps = cfg.epochs * batches.steps_per_epoch();

    std::set<std::string> trainable;
    for (const auto& g : model.groups())
        if (g.trainable) trainable.insert(g.name);
    const bool summed = model.spec().kind == models::ArchKind::Separate;

    ad::Optimizer opt(cfg.optimizer);
    PhaseReport report;
    report.phase = cfg.phase;
    report.steps = steps;
    report.curve.push_back(evaluate_at(model, data, 0));
    for (std::size_t step = 1; step <= steps; ++step) {
        const auto picks = batches.next();
        ad::Tape tape;
        models::Binding binding(model, tape, trainable);
        std::optional<ad::Var> total;
        for (std::size_t t = 0; t < T; ++t) {
            std::vector<std::size_t> r(picks[t].size());
            for (std::size_t i = 0; i < r.size(); ++i) r[i] = rows[t][picks[t][i]];
            const ad::Var x = tape.constant(data.inputs(t, r));
            const auto y = data.labels(t, r);
            const ad::Var l = models::loss(model, binding, x, y, t);
            total = total ? ad::add(*total, l) : l;
        }
        const ad::Var objective = summed ? *total : ad::scale(*total, 1.0 / static_cast<double>(T));
        const ad::GradMap grads = tape.backward(objective);
        model.step(opt, grads);
        if (due(cfg, step, steps)) report.curve.push_back(evaluate_at(model, data, step));
    }
    fill_best_steps(report);
    return report;
}

PhaseReport finetune_heads(models::Model& model, const data::DomainDataset& data, const PhaseConfig& cfg,
                           std::uint64_t seed, const std::vector<std::size_t>& order_in) {
    cfg.validate();
    check_domains(model, data);
    const auto& spec = model.spec();
    const std::size_t T = data.num_domains();
    if (model.head_names().size() != T)
        throw ConfigError(std::string("head fine-tuning needs one head per domain; kind '") + models::kind_name(spec.kind) +
                          "' has " + std::to_string(model.head_names().size()));

    std::vector<std::size_t> order = order_in;
    if (order.empty()) {
        order.resize(T);
        std::iota(order.begin(), order.end(), std::size_t{0});
    }
    {
        auto sorted = order;
        std::sort(sorted.begin(), sorted.end());
        for (std::size_t t = 0; t < T; ++t)
            if (sorted.size() != T || sorted[t] != t) throw ConfigError("domain order must be a permutation of 0..T-1");
    }

    const auto trunk_names = model.trunk_group_names();
    const std::set<std::string> trunk(trunk_names.begin(), trunk_names.end());
    const auto heads = model.head_names();
    model.set_trainable(trunk, false);
    model.set_trainable(std::set<std::string>(heads.begin(), heads.end()), true);
    std::vector<models::Group> frozen;
    for (const auto& n : trunk_names) frozen.push_back(model.group(n));

    const auto rows = train_rows(data);
    const auto batch = cfg.batch_for(T);
    const std::size_t steps = cfg.epochs * data::steps_per_epoch(sizes_of(rows), batch);
    const std::size_t head_layers = spec.head_layers.size() + 1;

    std::vector<ad::Tensor> features(T);
    std::vector<std::vector<int>> labels(T);
    std::vector<models::Model> head_models;
    std::vector<ad::Optimizer> opts;
    std::vector<data::DomainStream> streams;
    for (std::size_t t = 0; t < T; ++t) {
        ad::Tape tape;
        models::Binding b(model, tape, {});
        const ad::Var x = tape.constant(data.inputs(t, rows[t]));
        features[t] = models::trunk_features(model, b, x, t).value();
        labels[t] = data.labels(t, rows[t]);
        head_models.emplace_back(spec, std::vector<models::Group>{model.group(heads[t])});
        opts.emplace_back(cfg.optimizer);
        streams.emplace_back(rows[t].size(), batch[t], derive_seed(seed, {t}));
    }

    PhaseReport report;
    report.phase = cfg.phase;
    report.steps = steps;
    report.curve.push_back(evaluate_at(model, data, 0));
    std::vector<std::exception_ptr> errors(T);
    for (std::size_t step = 1; step <= steps; ++step) {
#pragma omp parallel for schedule(static)
        for (std::size_t k = 0; k < T; ++k) {
            const std::size_t t = order[k];
            try {
                const auto picks = streams[t].next();
                std::vector<int> y(picks.size());
                for (std::size_t i = 0; i < picks.size(); ++i) y[i] = labels[t][picks[i]];
                ad::Tape tape;
                models::Binding b(head_models[t], tape);
                const ad::Var f = tape.constant(gather_rows(features[t], picks));
                const ad::Var logits = models::apply_head(b, heads[t], head_layers, f);
                const ad::GradMap grads = tape.backward(models::task_loss(spec, logits, y));
                head_models[t].step(opts[t], grads);
            } catch (...) {
                errors[t] = std::current_exception();
            }
        }
        for (auto& e : errors)
            if (e) std::rethrow_exception(e);
        for (std::size_t t = 0; t < T; ++t) model.set_group_layers(heads[t], head_models[t].group(heads[t]).layers);
        if (due(cfg, step, steps)) report.curve.push_back(evaluate_at(model, data, step));
    }

    for (std::size_t i = 0; i < trunk_names.size(); ++i)
        if (!models::bit_equal(frozen[i], model.group(trunk_names[i])))
            throw ContractError("frozen group '" + trunk_names[i] + "' changed during head fine-tuning");
    fill_best_steps(report);
    return report;
}

PhaseReport plugin_finetune(models::Model& model, const data::DomainDataset& data, const PhaseConfig& cfg,
                            std::uint64_t seed, const std::vector<std::size_t>& order) {
    const auto kind = model.spec().kind;
    if (kind != models::ArchKind::SharedBottom && kind != models::ArchKind::MMoE && kind != models::ArchKind::PLE)
        throw ConfigError(std::string("plugin fine-tuning supports shared_bottom, mmoe and ple, not '") +
                          models::kind_name(kind) + "'");
    return finetune_heads(model, data, cfg, seed, order);
}

}  // namespace mdl::dtrain
