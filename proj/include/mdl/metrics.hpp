#pragma once

// Evaluation: per-domain accuracy / AUC with macro, worst, best and pooled
// aggregates, and decision-boundary grids for 2-d data.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mdl/data.hpp"
#include "mdl/models.hpp"

namespace mdl::metrics {

struct MetricRecord {
    std::vector<double> per_domain;
    double average = 0.0;  // unweighted mean over domains
    double worst = 0.0;
    double best = 0.0;
    double pooled = 0.0;   // over all samples of all domains
};

double accuracy(std::span<const int> predictions, std::span<const int> labels);

// Throws DimensionError on a length mismatch or an empty domain.
MetricRecord accuracy_metrics(std::span<const std::vector<int>> predictions,
                              std::span<const std::vector<int>> labels);

// Mann-Whitney statistic with midranks. Throws UndefinedMetricError when the
// labels hold a single class.
double auc(std::span<const double> scores, std::span<const int> labels);

// per_domain AUCs, average = AUC_d, pooled = AUC_s.
MetricRecord auc_metrics(std::span<const std::vector<double>> scores, std::span<const std::vector<int>> labels);

struct Evaluation {
    data::Metric metric = data::Metric::Accuracy;
    MetricRecord record;
    std::vector<double> loss;  // mean task loss per domain
};

// Scores `model` on one split of every domain.
Evaluation evaluate(const models::Model& model, const data::DomainDataset& data, data::Split split);

struct GridExtents {
    double x_min = 0.0;
    double x_max = 1.0;
    double y_min = 0.0;
    double y_max = 1.0;
};

// Bounding box of all samples, padded by `pad` of its width on each side.
GridExtents data_extents(const data::DomainDataset& data, double pad = 0.1);

struct BoundaryGrid {
    GridExtents extents;
    std::size_t resolution = 0;
    std::vector<std::vector<int>> predictions;  // [domain][iy * resolution + ix]
    std::vector<std::uint8_t> conflict;         // 1 where the domains disagree
    std::vector<double> accuracy;               // test accuracy per domain

    double cell_x(std::size_t ix) const;
    double cell_y(std::size_t iy) const;
    std::size_t conflict_count() const;
};

inline constexpr std::size_t kDefaultResolution = 200;

// Predicted class at every cell centre, once per domain head. Throws
// DataError unless the data is 2-d and continuous.
BoundaryGrid boundary_grid(const models::Model& model, const GridExtents& extents, std::size_t resolution,
                           const data::DomainDataset& data);

// CSV rows x,y,domain,predicted_class,in_conflict for one domain.
std::string grid_csv(const BoundaryGrid& grid, std::size_t domain);

}  // namespace mdl::metrics
