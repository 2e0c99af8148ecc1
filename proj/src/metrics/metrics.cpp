#include <algorithm>
#include <cmath>
#include <numeric>

#include "mdl/errors.hpp"
#include "mdl/metrics.hpp"

namespace mdl::metrics {
namespace {

constexpr std::size_t kEvalChunk = 4096;

MetricRecord aggregate(std::vector<double> per_domain, double pooled) {
    MetricRecord r;
    r.average = std::accumulate(per_domain.begin(), per_domain.end(), 0.0) / static_cast<double>(per_domain.size());
    r.worst = *std::min_element(per_domain.begin(), per_domain.end());
    r.best = *std::max_element(per_domain.begin(), per_domain.end());
    r.per_domain = std::move(per_domain);
    r.pooled = pooled;
    return r;
}

}  // namespace

double accuracy(std::span<const int> predictions, std::span<const int> labels) {
    if (predictions.size() != labels.size())
        throw DimensionError("accuracy: " + std::to_string(predictions.size()) + " predictions for " +
                             std::to_string(labels.size()) + " labels");
    if (labels.empty()) throw DimensionError("accuracy: empty domain");
    std::size_t correct = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) correct += predictions[i] == labels[i];
    return static_cast<double>(correct) / static_cast<double>(labels.size());
}

MetricRecord accuracy_metrics(std::span<const std::vector<int>> predictions, std::span<const std::vector<int>> labels) {
    if (predictions.size() != labels.size() || labels.empty())
        throw DimensionError("accuracy_metrics: need one prediction list per domain");
    std::vector<double> per;
    std::size_t correct = 0, total = 0;
    for (std::size_t t = 0; t < labels.size(); ++t) {
        per.push_back(accuracy(predictions[t], labels[t]));
        for (std::size_t i = 0; i < labels[t].size(); ++i) correct += predictions[t][i] == labels[t][i];
        total += labels[t].size();
    }
    return aggregate(std::move(per), static_cast<double>(correct) / static_cast<double>(total));
}

double auc(std::span<const double> scores, std::span<const int> labels) {
    if (scores.size() != labels.size())
        throw DimensionError("auc: " + std::to_string(scores.size()) + " scores for " + std::to_string(labels.size()) +
                             " labels");
    const std::size_t n = scores.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    double rank_sum = 0.0;
    std::size_t pos = 0;
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j < n && scores[order[j]] == scores[order[i]]) ++j;
        const double midrank = 0.5 * static_cast<double>(i + 1 + j);
        for (std::size_t k = i; k < j; ++k)
            if (labels[order[k]] == 1) {
                rank_sum += midrank;
                ++pos;
            }
        i = j;
    }
    for (int l : labels)
        if (l != 0 && l != 1) throw DataError("auc: labels must be 0 or 1");
    const std::size_t neg = n - pos;
    if (pos == 0 || neg == 0) throw UndefinedMetricError("auc: labels contain a single class");
    const double p = static_cast<double>(pos);
    return (rank_sum - p * (p + 1.0) / 2.0) / (p * static_cast<double>(neg));
}

MetricRecord auc_metrics(std::span<const std::vector<double>> scores, std::span<const std::vector<int>> labels) {
    if (scores.size() != labels.size() || labels.empty())
        throw DimensionError("auc_metrics: need one score list per domain");
    std::vector<double> per, all_scores;
    std::vector<int> all_labels;
    for (std::size_t t = 0; t < labels.size(); ++t) {
        per.push_back(auc(scores[t], labels[t]));
        all_scores.insert(all_scores.end(), scores[t].begin(), scores[t].end());
        all_labels.insert(all_labels.end(), labels[t].begin(), labels[t].end());
    }
    return aggregate(std::move(per), auc(all_scores, all_labels));
}

Evaluation evaluate(const models::Model& model, const data::DomainDataset& data, data::Split split) {
    Evaluation ev;
    ev.metric = data.metric;
    const bool binary = model.spec().num_classes == 1;
    std::vector<std::vector<int>> preds, labels;
    std::vector<std::vector<double>> scores;
    for (std::size_t t = 0; t < data.num_domains(); ++t) {
        const auto rows = data.domains[t].indices(split);
        if (rows.empty()) throw DataError("evaluate: domain " + std::to_string(t) + " has no " + data::split_name(split) + " samples");
        std::vector<int> p, y = data.labels(t, rows);
        std::vector<double> s;
        double loss_sum = 0.0;
        for (std::size_t begin = 0; begin < rows.size(); begin += kEvalChunk) {
            const std::size_t end = std::min(rows.size(), begin + kEvalChunk);
            const std::span<const std::size_t> chunk(rows.data() + begin, end - begin);
            const ad::Tensor logits = models::predict_logits(model, data.inputs(t, chunk), t);
            const std::size_t C = logits.cols();
            for (std::size_t r = 0; r < chunk.size(); ++r) {
                const double* z = logits.data.data() + r * C;
                const int label = y[begin + r];
                if (binary) {
                    const double prob = 1.0 / (1.0 + std::exp(-z[0]));
                    s.push_back(prob);
                    p.push_back(z[0] > 0.0 ? 1 : 0);
                    const double q = label == 1 ? prob : 1.0 - prob;
                    loss_sum -= std::log(std::max(q, ad::kDefaultLogEpsilon));
                } else {
                    const double mx = *std::max_element(z, z + C);
                    double den = 0.0;
                    for (std::size_t c = 0; c < C; ++c) den += std::exp(z[c] - mx);
                    p.push_back(static_cast<int>(std::max_element(z, z + C) - z));
                    s.push_back(C > 1 ? std::exp(z[1] - mx) / den : 0.0);
                    const double q = std::exp(z[label] - mx) / den;
                    loss_sum -= std::log(std::max(q, ad::kDefaultLogEpsilon));
                }
            }
        }
        ev.loss.push_back(loss_sum / static_cast<double>(rows.size()));
        preds.push_back(std::move(p));
        scores.push_back(std::move(s));
        labels.push_back(std::move(y));
    }
    ev.record = data.metric == data::Metric::Auc ? auc_metrics(scores, labels) : accuracy_metrics(preds, labels);
    return ev;
}

}  // namespace mdl::metrics
