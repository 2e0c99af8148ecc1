#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include <gtest/gtest.h>

#include "mdl/data.hpp"
#include "mdl/errors.hpp"
#include "mdl/io.hpp"

using namespace mdl;
using namespace mdl::data;

namespace {

SyntheticSpec moons(std::vector<std::size_t> counts, double noise, std::uint64_t seed = 1) {
    SyntheticSpec s;
    s.kind = GeneratorKind::TwoMoons;
    s.counts = std::move(counts);
    s.noise = noise;
    s.seed = seed;
    return s;
}

SyntheticSpec conflict_suite() {
    SyntheticSpec s = moons({2000, 500, 200, 100}, 0.25, 7);
    for (double r : {0.0, 30.0, 60.0, 90.0}) s.transforms.push_back({r, 1.0, 0.0, 0.0});
    return s;
}

SyntheticSpec ctr(std::vector<std::size_t> counts, double scale, double shared = 0.5) {
    SyntheticSpec s;
    s.kind = GeneratorKind::Ctr;
    s.counts = std::move(counts);
    s.users = 20;
    s.items = 15;
    s.interaction_scale = scale;
    s.shared_fraction = shared;
    s.seed = 5;
    return s;
}

std::filesystem::path scratch(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("mdl_test_data_" + name);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

std::size_t count_label(const DomainData& d, int label) {
    return static_cast<std::size_t>(std::count(d.labels.begin(), d.labels.end(), label));
}

}  // namespace

TEST(TwoMoons, NoiselessPointsLieOnTheHalfCircles) {
    const auto ds = gen_two_moons(moons({300, 51}, 0.0));
    for (const auto& d : ds.domains)
        for (std::size_t i = 0; i < d.size(); ++i) {
            double x = d.features[2 * i], y = d.features[2 * i + 1];
            if (d.labels[i] == 1) {
                x = -x;
                y = -y;
            }
            const double cx = x + kMoonCentreX, cy = y + kMoonCentreY;
            EXPECT_NEAR(cx * cx + cy * cy, 1.0, 1e-12);
            EXPECT_GE(cy, -1e-12);
        }
}

TEST(TwoMoons, ScaleTwoDoublesEveryCoordinate) {
    SyntheticSpec a = moons({120, 80}, 0.2, 9);
    SyntheticSpec b = a;
    b.transforms = {{0.0, 2.0, 0.0, 0.0}, {0.0, 2.0, 0.0, 0.0}};
    const auto da = gen_two_moons(a), db = gen_two_moons(b);
    for (std::size_t t = 0; t < 2; ++t) {
        ASSERT_EQ(da.domains[t].features.size(), db.domains[t].features.size());
        for (std::size_t k = 0; k < da.domains[t].features.size(); ++k)
            EXPECT_EQ(db.domains[t].features[k], 2.0 * da.domains[t].features[k]);
        EXPECT_EQ(da.domains[t].labels, db.domains[t].labels);
    }
}

TEST(TwoMoons, ConflictSuiteCountsAndClassBalance) {
    const auto ds = gen_two_moons(conflict_suite());
    ASSERT_EQ(ds.num_domains(), 4u);
    const std::size_t expected[] = {2000, 500, 200, 100};
    for (std::size_t t = 0; t < 4; ++t) {
        EXPECT_EQ(ds.domains[t].size(), expected[t]);
        EXPECT_EQ(count_label(ds.domains[t], 0), expected[t] / 2);
        EXPECT_EQ(count_label(ds.domains[t], 1), expected[t] / 2);
    }
}

TEST(TwoMoons, RotationTurnsTheSeedMatchedSet) {
    SyntheticSpec a = moons({60}, 0.1, 4);
    SyntheticSpec b = a;
    b.transforms = {{90.0, 1.0, 0.0, 0.0}};
    const auto da = gen_two_moons(a), db = gen_two_moons(b);
    for (std::size_t i = 0; i < 60; ++i) {
        EXPECT_NEAR(db.domains[0].features[2 * i], -da.domains[0].features[2 * i + 1], 1e-12);
        EXPECT_NEAR(db.domains[0].features[2 * i + 1], da.domains[0].features[2 * i], 1e-12);
    }
}

TEST(Generators, AreBitReproducible) {
    for (const auto& spec : {conflict_suite(), ctr({300, 40}, 2.0)}) {
        const auto a = generate(spec), b = generate(spec);
        for (std::size_t t = 0; t < a.num_domains(); ++t) {
            EXPECT_EQ(a.domains[t].features, b.domains[t].features);
            EXPECT_EQ(a.domains[t].labels, b.domains[t].labels);
            EXPECT_EQ(a.domains[t].splits, b.domains[t].splits);
        }
    }
}

TEST(Generators, StratifiedEightyTwentySplit) {
    const auto ds = gen_two_moons(conflict_suite());
    for (const auto& d : ds.domains) {
        EXPECT_EQ(d.indices(Split::Train).size() + d.indices(Split::Test).size(), d.size());
        for (int c = 0; c < 2; ++c) {
            std::size_t test = 0;
            for (std::size_t i = 0; i < d.size(); ++i) test += d.labels[i] == c && d.splits[i] == Split::Test;
            EXPECT_EQ(test, static_cast<std::size_t>(std::llround(0.2 * static_cast<double>(count_label(d, c)))));
        }
    }
}

TEST(GaussianDomains, LongTailedCountsAreExact) {
    SyntheticSpec s;
    s.kind = GeneratorKind::GaussianDomains;
    s.counts = {10000, 1000, 100};
    s.noise = 1.0;
    const auto ds = gen_gaussian_domains(s);
    EXPECT_EQ(ds.domains[0].size(), 10000u);
    EXPECT_EQ(ds.domains[1].size(), 1000u);
    EXPECT_EQ(ds.domains[2].size(), 100u);
}

TEST(GaussianDomains, ClassMeansAreSeparationApart) {
    SyntheticSpec s;
    s.kind = GeneratorKind::GaussianDomains;
    s.counts = {4000};
    s.dim = 3;
    s.num_classes = 3;
    s.class_separation = 5.0;
    s.domain_shift = 0.0;
    s.noise = 0.0;
    const auto ds = gen_gaussian_domains(s);
    const auto& d = ds.domains[0];
    std::vector<std::vector<double>> first(3);
    for (std::size_t i = 0; i < d.size(); ++i) {
        auto& m = first[static_cast<std::size_t>(d.labels[i])];
        if (m.empty()) m.assign(d.features.begin() + 3 * i, d.features.begin() + 3 * i + 3);
    }
    for (std::size_t a = 0; a < 3; ++a)
        for (std::size_t b = a + 1; b < 3; ++b) {
            double s2 = 0.0;
            for (std::size_t k = 0; k < 3; ++k) s2 += (first[a][k] - first[b][k]) * (first[a][k] - first[b][k]);
            EXPECT_NEAR(std::sqrt(s2), 5.0, 1e-12);
        }
}

TEST(GaussianDomains, ExplicitMeansAreUsed) {
    SyntheticSpec s;
    s.kind = GeneratorKind::GaussianDomains;
    s.counts = {10, 10};
    s.dim = 1;
    s.class_means = std::vector<std::vector<std::vector<double>>>{{{-1.0}, {1.0}}, {{5.0}, {7.0}}};
    const auto ds = gen_gaussian_domains(s);
    for (std::size_t i = 0; i < 10; ++i) {
        EXPECT_EQ(ds.domains[0].features[i], ds.domains[0].labels[i] == 0 ? -1.0 : 1.0);
        EXPECT_EQ(ds.domains[1].features[i], ds.domains[1].labels[i] == 0 ? 5.0 : 7.0);
    }
}

TEST(Ctr, ZeroInteractionGivesCoinFlips) {
    const auto ds = gen_ctr(ctr({10000}, 0.0));
    const double rate = static_cast<double>(count_label(ds.domains[0], 1)) / 10000.0;
    EXPECT_NEAR(rate, 0.5, 0.02);
}

TEST(Ctr, IdsAreTheOnlyFeaturesAndEncodeOneHot) {
    const auto ds = gen_ctr(ctr({50000, 1000}, 2.0));
    EXPECT_EQ(ds.metric, Metric::Auc);
    EXPECT_EQ(ds.dim, 2u);
    EXPECT_EQ(ds.input_dim(), 35u);
    EXPECT_EQ(ds.model_classes(), 1u);
    EXPECT_EQ(ds.domains[0].size(), 50000u);
    EXPECT_EQ(ds.domains[1].size(), 1000u);
    const std::vector<std::size_t> rows{0, 1, 2};
    const auto x = ds.inputs(1, rows);
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const auto u = static_cast<std::size_t>(ds.domains[1].features[2 * r]);
        const auto v = static_cast<std::size_t>(ds.domains[1].features[2 * r + 1]);
        double total = 0.0;
        for (std::size_t k = 0; k < 35; ++k) total += x.data[r * 35 + k];
        EXPECT_EQ(total, 2.0);
        EXPECT_EQ(x.data[r * 35 + u], 1.0);
        EXPECT_EQ(x.data[r * 35 + 20 + v], 1.0);
    }
}

TEST(Ctr, ClickRateDependsOnThePair) {
    // With a strong interaction, pairs differ: the per-user click rate is far
    // from uniform.
    const auto ds = gen_ctr(ctr({20000}, 4.0));
    const auto& d = ds.domains[0];
    std::vector<double> clicks(20, 0.0), shows(20, 0.0);
    for (std::size_t i = 0; i < d.size(); ++i) {
        const auto u = static_cast<std::size_t>(d.features[2 * i]);
        shows[u] += 1.0;
        clicks[u] += d.labels[i];
    }
    double lo = 1.0, hi = 0.0;
    for (std::size_t u = 0; u < 20; ++u) {
        lo = std::min(lo, clicks[u] / shows[u]);
        hi = std::max(hi, clicks[u] / shows[u]);
    }
    EXPECT_GT(hi - lo, 0.2);
}

TEST(SyntheticSpec, ValidationRejectsBadSpecs) {
    EXPECT_THROW(moons({}, 0.1).validate(), ConfigError);
    EXPECT_THROW(moons({10, 0}, 0.1).validate(), ConfigError);
    EXPECT_THROW(moons({10}, -0.1).validate(), ConfigError);
    SyntheticSpec s = moons({10}, 0.1);
    s.transforms = {{0.0, 0.0, 0.0, 0.0}};
    EXPECT_THROW(s.validate(), ConfigError);
    s.transforms = {{0.0, 1.0, 0.0, 0.0}, {0.0, 1.0, 0.0, 0.0}};
    EXPECT_THROW(s.validate(), ConfigError);
    SyntheticSpec c = ctr({10}, 1.0);
    c.users = 0;
    EXPECT_THROW(c.validate(), ConfigError);
}

TEST(SyntheticSpec, JsonRoundTrip) {
    SyntheticSpec s = conflict_suite();
    s.transforms[2].scale = 1.5;
    s.transforms[3].tx = -0.25;
    const auto back = spec_from_json(spec_to_json(s));
    EXPECT_EQ(spec_to_json(back), spec_to_json(s));
    const auto a = generate(s), b = generate(back);
    EXPECT_EQ(a.domains[3].features, b.domains[3].features);
    EXPECT_THROW(spec_from_json(nlohmann::json::parse(R"({"generator":"two_moons","counts":[4],"bogus":1})")),
                 ConfigError);
}

TEST(BalancedBatches, FourDomainsOfTwentyMakeEighty) {
    BalancedBatches batches({2000, 500, 200, 100}, {20, 20, 20, 20}, 3);
    EXPECT_EQ(batches.steps_per_epoch(), 100u);
    for (int step = 0; step < 300; ++step) {
        const auto b = batches.next();
        ASSERT_EQ(b.size(), 4u);
        std::size_t total = 0;
        for (const auto& part : b) {
            EXPECT_EQ(part.size(), 20u);
            total += part.size();
        }
        EXPECT_EQ(total, 80u);
    }
}

TEST(BalancedBatches, SmallDomainReusesEverySample) {
    BalancedBatches batches({40, 5}, {8, 5}, 11);
    for (int step = 0; step < 20; ++step) {
        auto small = batches.next()[1];
        std::sort(small.begin(), small.end());
        EXPECT_EQ(small, (std::vector<std::size_t>{0, 1, 2, 3, 4}));
    }
}

TEST(BalancedBatches, OneEpochCoversTheLargestDomainOnce) {
    Rng rng(21);
    for (int trial = 0; trial < 30; ++trial) {
        const std::size_t n = 50 + rng.below(300);
        const std::size_t b = 1 + rng.below(40);
        BalancedBatches batches({n, 10}, {b, std::min<std::size_t>(b, 10)}, trial);
        const std::size_t steps = batches.steps_per_epoch();
        EXPECT_EQ(steps, (n + b - 1) / b);
        std::vector<std::size_t> seen;
        for (std::size_t s = 0; s < steps; ++s) {
            const auto part = batches.next()[0];
            seen.insert(seen.end(), part.begin(), part.end());
        }
        seen.resize(n);
        std::sort(seen.begin(), seen.end());
        std::vector<std::size_t> all(n);
        std::iota(all.begin(), all.end(), std::size_t{0});
        EXPECT_EQ(seen, all);
    }
}

TEST(BalancedBatches, DomainStreamsAreIndependent) {
    BalancedBatches a({100, 30, 20}, {10, 5, 4}, 8);
    BalancedBatches b({100, 77, 20}, {10, 9, 4}, 8);
    for (int step = 0; step < 50; ++step) {
        const auto ba = a.next(), bb = b.next();
        EXPECT_EQ(ba[0], bb[0]);
        EXPECT_EQ(ba[2], bb[2]);
    }
}

TEST(BalancedBatches, RejectsImpossibleBatchSizes) {
    EXPECT_THROW(DomainStream(0, 1, 0), DataError);
    EXPECT_THROW(DomainStream(4, 5, 0), DataError);
    EXPECT_THROW(DomainStream(4, 0, 0), DataError);
    EXPECT_THROW(BalancedBatches({10, 3}, {4, 4}, 0), DataError);
    EXPECT_THROW(BalancedBatches({10}, {4, 4}, 0), DataError);
}

TEST(DatasetIo, CsvRoundTripIsExact) {
    const auto dir = scratch("roundtrip");
    for (const auto& spec : {conflict_suite(), ctr({200, 30}, 2.0)}) {
        const auto ds = generate(spec);
        const auto path = dir / "d.csv";
        write_dataset(ds, spec, path);
        EXPECT_TRUE(std::filesystem::exists(sidecar_path(path)));
        const auto back = read_dataset(path);
        EXPECT_EQ(back.dim, ds.dim);
        EXPECT_EQ(back.num_classes, ds.num_classes);
        EXPECT_EQ(back.metric, ds.metric);
        EXPECT_EQ(back.categorical, ds.categorical);
        ASSERT_EQ(back.num_domains(), ds.num_domains());
        for (std::size_t t = 0; t < ds.num_domains(); ++t) {
            EXPECT_EQ(back.domains[t].features, ds.domains[t].features);
            EXPECT_EQ(back.domains[t].labels, ds.domains[t].labels);
            EXPECT_EQ(back.domains[t].splits, ds.domains[t].splits);
        }
    }
}

TEST(DatasetIo, CorruptFilesRaiseDataError) {
    const auto dir = scratch("corrupt");
    const auto ds = gen_two_moons(moons({20, 20}, 0.1));
    const auto path = dir / "d.csv";
    write_dataset(ds, std::nullopt, path);
    std::string text = io::read_file(path);
    const auto cut = text.find('\n', text.size() / 2);
    std::ofstream(path) << text.substr(0, cut) << "\n1,train,0,not_a_number,2\n";
    EXPECT_THROW(read_dataset(path), DataError);
    EXPECT_THROW(read_dataset(dir / "missing.csv"), DataError);
    write_dataset(ds, std::nullopt, path);
    std::filesystem::remove(sidecar_path(path));
    EXPECT_THROW(read_dataset(path), DataError);
}

TEST(DomainDataset, ValidateCatchesBrokenInvariants) {
    auto ds = gen_two_moons(moons({10, 10}, 0.1));
    ds.domains[1].labels[0] = 2;
    EXPECT_THROW(ds.validate(), DataError);
    ds = gen_two_moons(moons({10, 10}, 0.1));
    ds.domains[0].features.pop_back();
    EXPECT_THROW(ds.validate(), DataError);
    ds = gen_two_moons(moons({10, 10}, 0.1));
    for (auto& s : ds.domains[0].splits) s = Split::Test;
    EXPECT_THROW(ds.validate(), DataError);
}
