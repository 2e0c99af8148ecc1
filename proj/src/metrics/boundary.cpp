#include <algorithm>
#include <limits>

#include "mdl/errors.hpp"
#include "mdl/io.hpp"
#include "mdl/metrics.hpp"

namespace mdl::metrics {
namespace {

void require_planar(const data::DomainDataset& data) {
    if (data.dim != 2 || !data.categorical.empty())
        throw DataError("boundary: decision grids need 2-d continuous features");
}

}  // namespace

double BoundaryGrid::cell_x(std::size_t ix) const {
    return extents.x_min + (static_cast<double>(ix) + 0.5) * (extents.x_max - extents.x_min) / static_cast<double>(resolution);
}

double BoundaryGrid::cell_y(std::size_t iy) const {
    return extents.y_min + (static_cast<double>(iy) + 0.5) * (extents.y_max - extents.y_min) / static_cast<double>(resolution);
}

std::size_t BoundaryGrid::conflict_count() const {
    return static_cast<std::size_t>(std::count(conflict.begin(), conflict.end(), std::uint8_t{1}));
}

GridExtents data_extents(const data::DomainDataset& data, double pad) {
    require_planar(data);
    const double inf = std::numeric_limits<double>::infinity();
    GridExtents e{inf, -inf, inf, -inf};
    for (const auto& d : data.domains)
        for (std::size_t i = 0; i < d.size(); ++i) {
            e.x_min = std::min(e.x_min, d.features[2 * i]);
            e.x_max = std::max(e.x_max, d.features[2 * i]);
            e.y_min = std::min(e.y_min, d.features[2 * i + 1]);
            e.y_max = std::max(e.y_max, d.features[2 * i + 1]);
        }
    const double px = std::max(e.x_max - e.x_min, 1e-9) * pad;
    const double py = std::max(e.y_max - e.y_min, 1e-9) * pad;
    return {e.x_min - px, e.x_max + px, e.y_min - py, e.y_max + py};
}

BoundaryGrid boundary_grid(const models::Model& model, const GridExtents& extents, std::size_t resolution,
                           const data::DomainDataset& data) {
    require_planar(data);
    if (resolution == 0) throw ConfigError("boundary: resolution must be positive");
    if (!(extents.x_max > extents.x_min) || !(extents.y_max > extents.y_min))
        throw ConfigError("boundary: empty grid extents");
    BoundaryGrid g;
    g.extents = extents;
    g.resolution = resolution;
    const std::size_t cells = resolution * resolution;
    ad::Tensor x = ad::Tensor::zeros({cells, 2});
    for (std::size_t iy = 0; iy < resolution; ++iy)
        for (std::size_t ix = 0; ix < resolution; ++ix) {
            x[2 * (iy * resolution + ix)] = g.cell_x(ix);
            x[2 * (iy * resolution + ix) + 1] = g.cell_y(iy);
        }
    for (std::size_t t = 0; t < data.num_domains(); ++t) g.predictions.push_back(models::predict_classes(model, x, t));
    g.conflict.assign(cells, 0);
    for (std::size_t c = 0; c < cells; ++c)
        for (std::size_t t = 1; t < g.predictions.size(); ++t)
            if (g.predictions[t][c] != g.predictions[0][c]) g.conflict[c] = 1;
    g.accuracy = evaluate(model, data, data::Split::Test).record.per_domain;
    return g;
}

std::string grid_csv(const BoundaryGrid& grid, std::size_t domain) {
    if (domain >= grid.predictions.size()) throw ContractError("grid_csv: domain out of range");
    std::string out = "x,y,domain,predicted_class,in_conflict\n";
    for (std::size_t iy = 0; iy < grid.resolution; ++iy)
        for (std::size_t ix = 0; ix < grid.resolution; ++ix) {
            const std::size_t c = iy * grid.resolution + ix;
            out += io::format_double(grid.cell_x(ix));
            out += ',';
            out += io::format_double(grid.cell_y(iy));
            out += ',';
            out += std::to_string(domain);
            out += ',';
            out += std::to_string(grid.predictions[domain][c]);
            out += ',';
            out += grid.conflict[c] ? '1' : '0';
            out += '\n';
        }
    return out;
}

}  // namespace mdl::metrics
