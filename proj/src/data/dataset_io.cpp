#include <fstream>
#include <numeric>
#include <sstream>

#include "mdl/data.hpp"
#include "mdl/errors.hpp"
#include "mdl/io.hpp"

namespace mdl::data {

std::vector<std::size_t> DomainData::indices(Split s) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < splits.size(); ++i)
        if (splits[i] == s) out.push_back(i);
    return out;
}

std::size_t DomainDataset::input_dim() const {
    if (categorical.empty()) return dim;
    return std::accumulate(categorical.begin(), categorical.end(), std::size_t{0});
}

void DomainDataset::validate() const {
    if (domains.empty()) throw DataError("dataset: no domains");
    if (dim == 0) throw DataError("dataset: feature width must be positive");
    if (num_classes < 2) throw DataError("dataset: label set needs at least two classes");
    if (!categorical.empty() && categorical.size() != dim)
        throw DataError("dataset: one cardinality per categorical column required");
    for (std::size_t t = 0; t < domains.size(); ++t) {
        const auto& d = domains[t];
        const std::string where = "dataset: domain " + std::to_string(t);
        if (d.size() == 0) throw DataError(where + " is empty");
        if (d.features.size() != d.size() * dim) throw DataError(where + " has ragged features");
        if (d.splits.size() != d.size()) throw DataError(where + " is missing split tags");
        for (int l : d.labels)
            if (l < 0 || static_cast<std::size_t>(l) >= num_classes) throw DataError(where + " has a label outside the shared set");
        if (d.indices(Split::Train).empty()) throw DataError(where + " has no training samples");
        for (std::size_t i = 0; i < d.size() && !categorical.empty(); ++i)
            for (std::size_t k = 0; k < dim; ++k) {
                const double v = d.features[i * dim + k];
                if (v < 0 || v != static_cast<double>(static_cast<std::size_t>(v)) ||
                    static_cast<std::size_t>(v) >= categorical[k])
                    throw DataError(where + " has an id outside its cardinality");
            }
    }
}

ad::Tensor DomainDataset::inputs(std::size_t domain, std::span<const std::size_t> rows) const {
    if (domain >= domains.size()) throw DataError("dataset: domain out of range");
    if (rows.empty()) throw DataError("dataset: empty row selection");
    const auto& d = domains[domain];
    const std::size_t width = input_dim();
    ad::Tensor x = ad::Tensor::zeros({rows.size(), width});
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const double* src = d.features.data() + rows[r] * dim;
        double* dst = x.data.data() + r * width;
        if (categorical.empty()) {
            std::copy_n(src, dim, dst);
            continue;
        }
        std::size_t offset = 0;
        for (std::size_t k = 0; k < dim; ++k) {
            dst[offset + static_cast<std::size_t>(src[k])] = 1.0;
            offset += categorical[k];
        }
    }
    return x;
}

std::vector<int> DomainDataset::labels(std::size_t domain, std::span<const std::size_t> rows) const {
    std::vector<int> out;
    out.reserve(rows.size());
    for (auto r : rows) out.push_back(domains.at(domain).labels.at(r));
    return out;
}

std::filesystem::path sidecar_path(const std::filesystem::path& csv_path) {
    std::filesystem::path p = csv_path;
    p.replace_extension(".json");
    return p;
}

void write_dataset(const DomainDataset& data, const std::optional<SyntheticSpec>& spec,
                   const std::filesystem::path& csv_path) {
    data.validate();
    std::string csv = "domain,split,label";
    for (std::size_t k = 0; k < data.dim; ++k) csv += ",f_" + std::to_string(k);
    csv += '\n';
    for (std::size_t t = 0; t < data.num_domains(); ++t) {
        const auto& d = data.domains[t];
        for (std::size_t i = 0; i < d.size(); ++i) {
            csv += std::to_string(t);
            csv += ',';
            csv += split_name(d.splits[i]);
            csv += ',';
            csv += std::to_string(d.labels[i]);
            for (std::size_t k = 0; k < data.dim; ++k) {
                csv += ',';
                csv += io::format_double(d.features[i * data.dim + k]);
            }
            csv += '\n';
        }
    }
    nlohmann::json side;
    side["format_version"] = 1;
    side["num_domains"] = data.num_domains();
    side["dim"] = data.dim;
    side["num_classes"] = data.num_classes;
    side["metric"] = data.metric == Metric::Auc ? "auc" : "accuracy";
    side["categorical"] = data.categorical;
    std::vector<std::size_t> counts;
    for (const auto& d : data.domains) counts.push_back(d.size());
    side["counts"] = counts;
    side["generator"] = spec ? spec_to_json(*spec) : nlohmann::json(nullptr);
    io::write_file_atomic(csv_path, csv);
    io::write_file_atomic(sidecar_path(csv_path), side.dump(2) + "\n");
}

DomainDataset read_dataset(const std::filesystem::path& csv_path) {
    nlohmann::json side;
    try {
        side = nlohmann::json::parse(io::read_file(sidecar_path(csv_path)));
    } catch (const nlohmann::json::exception& e) {
        throw DataError("dataset sidecar: " + std::string(e.what()));
    }
    DomainDataset ds;
    std::size_t num_domains = 0;
    try {
        num_domains = side.at("num_domains").get<std::size_t>();
        ds.dim = side.at("dim").get<std::size_t>();
        ds.num_classes = side.at("num_classes").get<std::size_t>();
        ds.metric = side.at("metric").get<std::string>() == "auc" ? Metric::Auc : Metric::Accuracy;
        ds.categorical = side.at("categorical").get<std::vector<std::size_t>>();
    } catch (const nlohmann::json::exception& e) {
        throw DataError("dataset sidecar: " + std::string(e.what()));
    }
    ds.domains.resize(num_domains);

    std::istringstream in(io::read_file(csv_path));
    std::string line;
    if (!std::getline(in, line)) throw DataError("dataset: missing header");
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ',')) cells.push_back(cell);
        if (cells.size() != 3 + ds.dim) throw DataError("dataset: wrong column count on line " + std::to_string(lineno));
        try {
            const std::size_t t = std::stoul(cells[0]);
            if (t >= num_domains) throw DataError("dataset: domain out of range on line " + std::to_string(lineno));
            auto& d = ds.domains[t];
            if (cells[1] == "train") d.splits.push_back(Split::Train);
            else if (cells[1] == "test") d.splits.push_back(Split::Test);
            else throw DataError("dataset: bad split on line " + std::to_string(lineno));
            d.labels.push_back(std::stoi(cells[2]));
            for (std::size_t k = 0; k < ds.dim; ++k) d.features.push_back(std::stod(cells[3 + k]));
        } catch (const std::logic_error&) {
            throw DataError("dataset: unparsable value on line " + std::to_string(lineno));
        }
    }
    ds.validate();
    return ds;
}

}  // namespace mdl::data
