#pragma once

// Synthetic multi-domain datasets and the balanced per-domain batch sampler.
//
// All domains share the feature width and the label set. Every sample carries
// a train/test tag; the split is a fixed stratified 80/20 per domain and class.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "mdl/rng.hpp"
#include "mdl/tensor.hpp"

namespace mdl::data {

enum class Split : std::uint8_t { Train, Test };
enum class Metric : std::uint8_t { Accuracy, Auc };

const char* split_name(Split s);

struct DomainData {
    std::vector<double> features;  // n x dim, row-major
    std::vector<int> labels;
    std::vector<Split> splits;

    std::size_t size() const { return labels.size(); }
    std::vector<std::size_t> indices(Split s) const;
};

struct DomainDataset {
    std::size_t dim = 0;
    std::size_t num_classes = 2;  // cardinality of the shared label set
    Metric metric = Metric::Accuracy;
    // Non-empty when every feature column is a categorical id; entry k is the
    // cardinality of column k and the model sees the one-hot expansion.
    std::vector<std::size_t> categorical;
    std::vector<DomainData> domains;

    std::size_t num_domains() const { return domains.size(); }
    // Width of the model input after encoding.
    std::size_t input_dim() const;
    // Label-set size as the model sees it: 1 for binary-score (AUC) data.
    std::size_t model_classes() const { return metric == Metric::Auc ? 1 : num_classes; }

    // Throws DataError on an empty domain, ragged features, labels outside
    // the shared set or a domain without training samples.
    void validate() const;

    // Encoded model input for the given rows of domain t.
    ad::Tensor inputs(std::size_t domain, std::span<const std::size_t> rows) const;
    std::vector<int> labels(std::size_t domain, std::span<const std::size_t> rows) const;
};

struct Transform {
    double rotation_deg = 0.0;
    double scale = 1.0;
    double tx = 0.0;
    double ty = 0.0;
};

enum class GeneratorKind { TwoMoons, GaussianDomains, Ctr };

struct SyntheticSpec {
    GeneratorKind kind = GeneratorKind::TwoMoons;
    std::vector<std::size_t> counts;  // samples per domain
    std::uint64_t seed = 0;
    double noise = 0.0;               // Gaussian std (two_moons, gaussian_domains)
    double test_fraction = 0.2;

    // two_moons: one transform per domain (defaults to identity).
    std::vector<Transform> transforms;

    // gaussian_domains
    std::size_t dim = 2;
    std::size_t num_classes = 2;
    double class_separation = 4.0;  // distance between class means
    double domain_shift = 1.0;      // norm of each domain's mean offset
    std::optional<std::vector<std::vector<std::vector<double>>>> class_means;  // [domain][class][dim]

    // ctr
    std::size_t users = 0;
    std::size_t items = 0;
    std::size_t latent_dim = 8;
    std::vector<std::size_t> ranks;  // per-domain preference rank
    double interaction_scale = 2.0;  // std of the click logit
    double shared_fraction = 0.5;    // variance share of the interaction common to all domains

    void validate() const;
};

nlohmann::json spec_to_json(const SyntheticSpec& spec);
SyntheticSpec spec_from_json(const nlohmann::json& j);

DomainDataset gen_two_moons(const SyntheticSpec& spec);
DomainDataset gen_gaussian_domains(const SyntheticSpec& spec);
DomainDataset gen_ctr(const SyntheticSpec& spec);
DomainDataset generate(const SyntheticSpec& spec);

// Canonical centred half-circle loci used by gen_two_moons: the upper moon is
// (cos a - 0.5, sin a - 0.25), the lower moon its point reflection, a in [0, pi].
inline constexpr double kMoonCentreX = 0.5;
inline constexpr double kMoonCentreY = 0.25;

// Endless stream of mini-batches over one domain: walks a random permutation
// and reshuffles whenever it is exhausted.
class DomainStream {
public:
    DomainStream(std::size_t size, std::size_t batch, std::uint64_t seed);
    std::vector<std::size_t> next();

private:
    std::size_t size_;
    std::size_t batch_;
    Rng rng_;
    std::vector<std::size_t> order_;
    std::size_t pos_ = 0;
};

// Composite batches holding exactly batch[t] positions from every domain t.
// One epoch is ceil(max_t size[t] / batch[t]) steps; smaller domains recycle.
// Positions index each domain's own sample list. Every domain draws from its
// own stream, so one domain's batches never depend on another's contents.
class BalancedBatches {
public:
    BalancedBatches(std::vector<std::size_t> sizes, std::vector<std::size_t> batch, std::uint64_t seed);

    std::size_t steps_per_epoch() const { return steps_per_epoch_; }
    std::vector<std::vector<std::size_t>> next();

private:
    std::vector<DomainStream> streams_;
    std::size_t steps_per_epoch_ = 0;
};

std::size_t steps_per_epoch(std::span<const std::size_t> sizes, std::span<const std::size_t> batch);

// CSV: domain,split,label,f_0..f_{d-1}; sidecar JSON next to it with the
// generating spec and the dataset metadata.
void write_dataset(const DomainDataset& data, const std::optional<SyntheticSpec>& spec,
                   const std::filesystem::path& csv_path);
DomainDataset read_dataset(const std::filesystem::path& csv_path);
std::filesystem::path sidecar_path(const std::filesystem::path& csv_path);

}  // namespace mdl::data
