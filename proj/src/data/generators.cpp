#include <cmath>
#include <numbers>
#include <set>

#include "mdl/data.hpp"
#include "mdl/errors.hpp"
#include "mdl/io.hpp"

namespace mdl::data {

namespace {

// Seed-stream tags; each generator stage draws from derive_seed(seed, {tag, ...}).
enum : std::uint64_t { kMoonPoints = 1, kSplit = 2, kClassMeans = 3, kDomainShift = 4, kLatents = 5, kClicks = 6, kGaussPoints = 7 };

std::size_t class_count(std::size_t n, std::size_t classes, std::size_t c) {
    return n / classes + (c < n % classes ? 1 : 0);
}

// Stratified split: within each class, a shuffled round(test_fraction * n_c)
// samples go to test.
void assign_splits(DomainData& d, std::size_t classes, double test_fraction, std::uint64_t seed) {
    d.splits.assign(d.size(), Split::Train);
    Rng rng(seed);
    for (std::size_t c = 0; c < classes; ++c) {
        std::vector<std::size_t> members;
        for (std::size_t i = 0; i < d.size(); ++i)
            if (d.labels[i] == static_cast<int>(c)) members.push_back(i);
        rng.shuffle(members);
        const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(members.size())));
        for (std::size_t k = 0; k < n_test && k < members.size(); ++k) d.splits[members[k]] = Split::Test;
    }
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace

const char* split_name(Split s) { return s == Split::Train ? "train" : "test"; }

void SyntheticSpec::validate() const {
    if (counts.empty()) throw ConfigError("data: at least one domain is required");
    for (auto n : counts)
        if (n == 0) throw ConfigError("data: domain counts must be positive");
    if (!(noise >= 0.0)) throw ConfigError("data: noise std must be nonnegative");
    if (!(test_fraction >= 0.0 && test_fraction < 1.0)) throw ConfigError("data: test_fraction must lie in [0,1)");
    switch (kind) {
        case GeneratorKind::TwoMoons:
            if (!transforms.empty() && transforms.size() != counts.size())
                throw ConfigError("data: one transform per domain required");
            for (const auto& t : transforms)
                if (!(t.scale > 0.0)) throw ConfigError("data: transform scale must be positive");
            break;
        case GeneratorKind::GaussianDomains:
            if (dim == 0 || num_classes < 2) throw ConfigError("data: gaussian_domains needs dim >= 1 and >= 2 classes");
            if (class_means) {
                if (class_means->size() != counts.size()) throw ConfigError("data: class_means needs one entry per domain");
                for (const auto& dm : *class_means) {
                    if (dm.size() != num_classes) throw ConfigError("data: class_means needs one mean per class");
                    for (const auto& m : dm)
                        if (m.size() != dim) throw ConfigError("data: class mean has the wrong dimension");
                }
            } else if (num_classes > dim) {
                throw ConfigError("data: generated class means need num_classes <= dim");
            }
            if (!(domain_shift >= 0.0) || !(class_separation >= 0.0))
                throw ConfigError("data: class_separation and domain_shift must be nonnegative");
            break;
        case GeneratorKind::Ctr:
            if (users == 0 || items == 0) throw ConfigError("data: ctr needs positive user and item counts");
            if (latent_dim == 0) throw ConfigError("data: latent_dim must be positive");
            if (!ranks.empty() && ranks.size() != counts.size()) throw ConfigError("data: one rank per domain required");
            for (auto r : ranks)
                if (r == 0 || r > latent_dim) throw ConfigError("data: ranks must lie in [1, latent_dim]");
            if (!(interaction_scale >= 0.0)) throw ConfigError("data: interaction_scale must be nonnegative");
            if (!(shared_fraction >= 0.0 && shared_fraction <= 1.0))
                throw ConfigError("data: shared_fraction must lie in [0,1]");
            break;
    }
}

DomainDataset gen_two_moons(const SyntheticSpec& spec) {
    spec.validate();
    if (spec.kind != GeneratorKind::TwoMoons) throw ConfigError("gen_two_moons: wrong generator kind");
    DomainDataset ds;
    ds.dim = 2;
    ds.num_classes = 2;
    for (std::size_t t = 0; t < spec.counts.size(); ++t) {
        const std::size_t n = spec.counts[t];
        const Transform tf = spec.transforms.empty() ? Transform{} : spec.transforms[t];
        const double theta = tf.rotation_deg * std::numbers::pi / 180.0;
        const double c = std::cos(theta), s = std::sin(theta);
        Rng rng(derive_seed(spec.seed, {kMoonPoints, t}));
        DomainData d;
        for (int label = 0; label < 2; ++label) {
            for (std::size_t k = 0; k < class_count(n, 2, static_cast<std::size_t>(label)); ++k) {
                const double a = std::numbers::pi * rng.uniform();
                double x = std::cos(a) - kMoonCentreX;
                double y = std::sin(a) - kMoonCentreY;
                if (label == 1) {
                    x = -x;
                    y = -y;
                }
                x += spec.noise * rng.normal();
                y += spec.noise * rng.normal();
                d.features.push_back(tf.scale * (c * x - s * y) + tf.tx);
                d.features.push_back(tf.scale * (s * x + c * y) + tf.ty);
                d.labels.push_back(label);
            }
        }
        assign_splits(d, 2, spec.test_fraction, derive_seed(spec.seed, {kSplit, t}));
        ds.domains.push_back(std::move(d));
    }
    ds.validate();
    return ds;
}

DomainDataset gen_gaussian_domains(const SyntheticSpec& spec) {
    spec.validate();
    if (spec.kind != GeneratorKind::GaussianDomains) throw ConfigError("gen_gaussian_domains: wrong generator kind");
    const std::size_t C = spec.num_classes, D = spec.dim, T = spec.counts.size();
    std::vector<std::vector<std::vector<double>>> means;
    if (spec.class_means) {
        means = *spec.class_means;
    } else {
        // Class c sits on axis c at distance separation/sqrt(2) from the
        // origin, so every pair of classes is `class_separation` apart.
        std::vector<std::vector<double>> base(C, std::vector<double>(D, 0.0));
        for (std::size_t c = 0; c < C; ++c) base[c][c] = spec.class_separation / std::numbers::sqrt2;
        for (std::size_t t = 0; t < T; ++t) {
            Rng rng(derive_seed(spec.seed, {kDomainShift, t}));
            std::vector<double> dir(D);
            double norm = 0.0;
            for (auto& v : dir) {
                v = rng.normal();
                norm += v * v;
            }
            norm = std::sqrt(norm);
            auto dm = base;
            for (auto& m : dm)
                for (std::size_t k = 0; k < D; ++k) m[k] += norm > 0 ? spec.domain_shift * dir[k] / norm : 0.0;
            means.push_back(std::move(dm));
        }
    }
    DomainDataset ds;
    ds.dim = D;
    ds.num_classes = C;
    for (std::size_t t = 0; t < T; ++t) {
        Rng rng(derive_seed(spec.seed, {kGaussPoints, t}));
        DomainData d;
        for (std::size_t c = 0; c < C; ++c)
            for (std::size_t k = 0; k < class_count(spec.counts[t], C, c); ++k) {
                for (std::size_t j = 0; j < D; ++j) d.features.push_back(means[t][c][j] + spec.noise * rng.normal());
                d.labels.push_back(static_cast<int>(c));
            }
        assign_splits(d, C, spec.test_fraction, derive_seed(spec.seed, {kSplit, t}));
        ds.domains.push_back(std::move(d));
    }
    ds.validate();
    return ds;
}

DomainDataset gen_ctr(const SyntheticSpec& spec) {
    spec.validate();
    if (spec.kind != GeneratorKind::Ctr) throw ConfigError("gen_ctr: wrong generator kind");
    const std::size_t K = spec.latent_dim, T = spec.counts.size();
    Rng latent(derive_seed(spec.seed, {kLatents}));
    auto gaussian_rows = [&](std::size_t rows) {
        std::vector<double> m(rows * K);
        for (auto& v : m) v = latent.normal();
        return m;
    };
    const std::vector<double> user_vec = gaussian_rows(spec.users);
    const std::vector<double> item_vec = gaussian_rows(spec.items);

    // Low-rank K x K interaction with unit-variance logits for N(0, I) latents.
    auto interaction = [&](std::size_t rank) {
        const std::vector<double> a = gaussian_rows(rank);
        const std::vector<double> b = gaussian_rows(rank);
        std::vector<double> q(K * K, 0.0);
        const double norm = 1.0 / (static_cast<double>(K) * std::sqrt(static_cast<double>(rank)));
        for (std::size_t r = 0; r < rank; ++r)
            for (std::size_t i = 0; i < K; ++i)
                for (std::size_t j = 0; j < K; ++j) q[i * K + j] += norm * a[r * K + i] * b[r * K + j];
        return q;
    };
    const std::vector<double> shared = interaction(K);
    std::vector<std::vector<double>> q(T);
    const double ws = std::sqrt(spec.shared_fraction), wd = std::sqrt(1.0 - spec.shared_fraction);
    for (std::size_t t = 0; t < T; ++t) {
        const std::vector<double> own = interaction(spec.ranks.empty() ? K : spec.ranks[t]);
        q[t].resize(K * K);
        for (std::size_t i = 0; i < K * K; ++i) q[t][i] = spec.interaction_scale * (ws * shared[i] + wd * own[i]);
    }

    DomainDataset ds;
    ds.dim = 2;
    ds.num_classes = 2;
    ds.metric = Metric::Auc;
    ds.categorical = {spec.users, spec.items};
    for (std::size_t t = 0; t < T; ++t) {
        Rng rng(derive_seed(spec.seed, {kClicks, t}));
        DomainData d;
        for (std::size_t n = 0; n < spec.counts[t]; ++n) {
            const std::size_t u = rng.below(spec.users);
            const std::size_t v = rng.below(spec.items);
            double logit = 0.0;
            for (std::size_t i = 0; i < K; ++i) {
                double row = 0.0;
                for (std::size_t j = 0; j < K; ++j) row += q[t][i * K + j] * item_vec[v * K + j];
                logit += user_vec[u * K + i] * row;
            }
            d.features.push_back(static_cast<double>(u));
            d.features.push_back(static_cast<double>(v));
            d.labels.push_back(rng.uniform() < sigmoid(logit) ? 1 : 0);
        }
        assign_splits(d, 2, spec.test_fraction, derive_seed(spec.seed, {kSplit, t}));
        ds.domains.push_back(std::move(d));
    }
    ds.validate();
    return ds;
}

DomainDataset generate(const SyntheticSpec& spec) {
    switch (spec.kind) {
        case GeneratorKind::TwoMoons: return gen_two_moons(spec);
        case GeneratorKind::GaussianDomains: return gen_gaussian_domains(spec);
        case GeneratorKind::Ctr: return gen_ctr(spec);
    }
    throw ConfigError("unknown generator kind");
}

// ---- spec JSON --------------------------------------------------------------

namespace {

const char* generator_name(GeneratorKind k) {
    switch (k) {
        case GeneratorKind::TwoMoons: return "two_moons";
        case GeneratorKind::GaussianDomains: return "gaussian_domains";
        case GeneratorKind::Ctr: return "ctr";
    }
    return "?";
}

template <typename T>
T get_as(const nlohmann::json& j, const char* key) {
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw ConfigError(std::string("data: field '") + key + "' has the wrong type");
    }
}

}  // namespace

nlohmann::json spec_to_json(const SyntheticSpec& s) {
    nlohmann::json j;
    j["generator"] = generator_name(s.kind);
    j["counts"] = s.counts;
    j["seed"] = s.seed;
    j["test_fraction"] = s.test_fraction;
    switch (s.kind) {
        case GeneratorKind::TwoMoons: {
            j["noise"] = s.noise;
            nlohmann::json tfs = nlohmann::json::array();
            for (const auto& t : s.transforms)
                tfs.push_back({{"rotation_deg", t.rotation_deg}, {"scale", t.scale}, {"translation", {t.tx, t.ty}}});
            j["transforms"] = tfs;
            break;
        }
        case GeneratorKind::GaussianDomains:
            j["noise"] = s.noise;
            j["dim"] = s.dim;
            j["num_classes"] = s.num_classes;
            j["class_separation"] = s.class_separation;
            j["domain_shift"] = s.domain_shift;
            if (s.class_means) j["class_means"] = *s.class_means;
            break;
        case GeneratorKind::Ctr:
            j["users"] = s.users;
            j["items"] = s.items;
            j["latent_dim"] = s.latent_dim;
            j["ranks"] = s.ranks;
            j["interaction_scale"] = s.interaction_scale;
            j["shared_fraction"] = s.shared_fraction;
            break;
    }
    return j;
}

SyntheticSpec spec_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ConfigError("data: generator spec must be an object");
    SyntheticSpec s;
    const std::string kind = j.contains("generator") ? get_as<std::string>(j, "generator") : "";
    std::set<std::string> known = {"generator", "counts", "seed", "test_fraction"};
    if (kind == "two_moons") {
        s.kind = GeneratorKind::TwoMoons;
        known.insert({"noise", "transforms"});
    } else if (kind == "gaussian_domains") {
        s.kind = GeneratorKind::GaussianDomains;
        known.insert({"noise", "dim", "num_classes", "class_separation", "domain_shift", "class_means"});
    } else if (kind == "ctr") {
        s.kind = GeneratorKind::Ctr;
        known.insert({"users", "items", "latent_dim", "ranks", "interaction_scale", "shared_fraction"});
    } else {
        throw ConfigError("data: unknown generator '" + kind + "'");
    }
    io::reject_unknown_keys(j, known, "data");
    if (!j.contains("counts")) throw ConfigError("data: 'counts' is required");
    s.counts = get_as<std::vector<std::size_t>>(j, "counts");
    if (j.contains("seed")) s.seed = get_as<std::uint64_t>(j, "seed");
    if (j.contains("test_fraction")) s.test_fraction = get_as<double>(j, "test_fraction");
    if (j.contains("noise")) s.noise = get_as<double>(j, "noise");
    if (j.contains("transforms")) {
        for (const auto& t : j["transforms"]) {
            io::reject_unknown_keys(t, {"rotation_deg", "scale", "translation"}, "data.transforms");
            Transform tf;
            if (t.contains("rotation_deg")) tf.rotation_deg = get_as<double>(t, "rotation_deg");
            if (t.contains("scale")) tf.scale = get_as<double>(t, "scale");
            if (t.contains("translation")) {
                const auto tr = get_as<std::vector<double>>(t, "translation");
                if (tr.size() != 2) throw ConfigError("data: translation must have two entries");
                tf.tx = tr[0];
                tf.ty = tr[1];
            }
            s.transforms.push_back(tf);
        }
    }
    if (j.contains("dim")) s.dim = get_as<std::size_t>(j, "dim");
    if (j.contains("num_classes")) s.num_classes = get_as<std::size_t>(j, "num_classes");
    if (j.contains("class_separation")) s.class_separation = get_as<double>(j, "class_separation");
    if (j.contains("domain_shift")) s.domain_shift = get_as<double>(j, "domain_shift");
    if (j.contains("class_means")) s.class_means = get_as<std::vector<std::vector<std::vector<double>>>>(j, "class_means");
    if (j.contains("users")) s.users = get_as<std::size_t>(j, "users");
    if (j.contains("items")) s.items = get_as<std::size_t>(j, "items");
    if (j.contains("latent_dim")) s.latent_dim = get_as<std::size_t>(j, "latent_dim");
    if (j.contains("ranks")) s.ranks = get_as<std::vector<std::size_t>>(j, "ranks");
    if (j.contains("interaction_scale")) s.interaction_scale = get_as<double>(j, "interaction_scale");
    if (j.contains("shared_fraction")) s.shared_fraction = get_as<double>(j, "shared_fraction");
    s.validate();
    return s;
}

}  // namespace mdl::data
