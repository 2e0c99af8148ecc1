#include "mdl/dtrain.hpp"
#include "mdl/io.hpp"

namespace mdl::dtrain {
namespace {

nlohmann::json record_json(const metrics::MetricRecord& r) {
    return {{"per_domain", r.per_domain}, {"average", r.average}, {"worst", r.worst}, {"best", r.best},
            {"pooled", r.pooled}};
}

void curve_rows(std::string& out, const char* phase, std::size_t step, const char* split,
                const std::vector<double>& score, const std::vector<double>& loss) {
    for (std::size_t t = 0; t < score.size(); ++t) {
        out += phase;
        out += ',' + std::to_string(step) + ',' + std::to_string(t) + ',' + split + ',';
        out += io::format_double(score[t]);
        out += ',';
        out += io::format_double(loss[t]);
        out += '\n';
    }
}

void metric_rows(std::string& out, const char* split, const metrics::MetricRecord& r) {
    for (std::size_t t = 0; t < r.per_domain.size(); ++t)
        out += std::string(split) + ',' + std::to_string(t) + ',' + io::format_double(r.per_domain[t]) + '\n';
    for (auto [name, v] : {std::pair{"average", r.average}, std::pair{"worst", r.worst}, std::pair{"best", r.best},
                           std::pair{"pooled", r.pooled}})
        out += std::string(split) + ',' + name + ',' + io::format_double(v) + '\n';
}

}  // namespace

nlohmann::json report_to_json(const PipelineReport& report) {
    nlohmann::json j;
    j["method"] = report.method;
    j["seed"] = report.seed;
    j["metric"] = report.metric == data::Metric::Auc ? "auc" : "accuracy";
    nlohmann::json phases = nlohmann::json::array();
    for (const auto& p : report.phases) {
        nlohmann::json curve = nlohmann::json::array();
        for (const auto& c : p.curve)
            curve.push_back({{"step", c.step},
                             {"test", c.test},
                             {"test_average", c.test_average},
                             {"test_loss", c.test_loss},
                             {"train", c.train},
                             {"train_loss", c.train_loss}});
        phases.push_back({{"phase", phase_name(p.phase)}, {"steps", p.steps}, {"best_step", p.best_step}, {"curve", curve}});
    }
    j["phases"] = phases;
    j["phase_boundaries"] = report.phases.empty() ? 0 : report.phases.size() - 1;
    nlohmann::json norms = nlohmann::json::object();
    for (const auto& [k, v] : report.head_update_norms) norms[k] = v;
    j["head_update_norms"] = norms;
    nlohmann::json ckpts = nlohmann::json::array();
    for (const auto& s : report.snapshots) ckpts.push_back(std::string("checkpoint_") + phase_name(s.phase) + ".bin");
    j["checkpoints"] = ckpts;
    j["final"] = {{"test", record_json(report.test)}, {"train", record_json(report.train)}};
    return j;
}

std::string curves_csv(const PipelineReport& report) {
    std::string out = "phase,step,domain,split,accuracy_or_auc,loss\n";
    for (const auto& p : report.phases)
        for (const auto& c : p.curve) {
            curve_rows(out, phase_name(p.phase), c.step, "test", c.test, c.test_loss);
            curve_rows(out, phase_name(p.phase), c.step, "train", c.train, c.train_loss);
        }
    return out;
}

std::string metrics_csv(const PipelineReport& report) {
    std::string out = "split,domain,value\n";
    metric_rows(out, "test", report.test);
    metric_rows(out, "train", report.train);
    return out;
}

}  // namespace mdl::dtrain
