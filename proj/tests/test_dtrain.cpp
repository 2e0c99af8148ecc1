#include <algorithm>
#include <cmath>
#include <numeric>

#include <gtest/gtest.h>

#include "mdl/dtrain.hpp"
#include "mdl/errors.hpp"

using namespace mdl;
using namespace mdl::dtrain;

namespace {

data::DomainDataset small_moons(std::uint64_t seed = 3) {
    data::SyntheticSpec s;
    s.kind = data::GeneratorKind::TwoMoons;
    s.counts = {200, 100, 60};
    s.noise = 0.2;
    s.seed = seed;
    s.transforms = {{0.0, 1.0, 0.0, 0.0}, {45.0, 1.0, 0.0, 0.0}, {90.0, 1.0, 0.0, 0.0}};
    return data::generate(s);
}

data::DomainDataset gaussian(std::vector<std::size_t> counts, double sep, double shift, double noise,
                             std::uint64_t seed = 2) {
    data::SyntheticSpec s;
    s.kind = data::GeneratorKind::GaussianDomains;
    s.counts = std::move(counts);
    s.class_separation = sep;
    s.domain_shift = shift;
    s.noise = noise;
    s.seed = seed;
    return data::generate(s);
}

PhaseConfig sgd(std::size_t epochs, std::size_t batch = 10, double lr = 0.05) {
    PhaseConfig c;
    c.epochs = epochs;
    c.batch_size = {batch};
    c.eval_every = 5;
    c.optimizer.kind = ad::OptimizerKind::SgdMomentum;
    c.optimizer.learning_rate = lr;
    c.optimizer.momentum = 0.9;
    return c;
}

models::ArchSpec arch(models::ArchKind kind, const data::DomainDataset& d) {
    models::ArchSpec a;
    a.kind = kind;
    a.input_dim = d.input_dim();
    a.num_domains = d.num_domains();
    a.num_classes = d.model_classes();
    a.backbone_layers = {8};
    a.head_layers = {};
    if (kind == models::ArchKind::MMoE || kind == models::ArchKind::MoE) a.expert_count = 3;
    if (kind == models::ArchKind::PLE) {
        a.shared_experts = 1;
        a.specific_experts = std::vector<std::size_t>(d.num_domains(), 1);
    }
    return a;
}

PipelineConfig pipeline(std::size_t pre = 2, std::size_t post = 2, std::size_t ft = 2) {
    PipelineConfig c;
    c.arch.backbone_layers = {8};
    c.pretrain = sgd(pre);
    c.posttrain = sgd(post);
    c.finetune = sgd(ft);
    return c;
}

models::Model posttrained(const data::DomainDataset& d, std::uint64_t seed = 1) {
    auto joint = pretrain(arch(models::ArchKind::Joint, d), d, sgd(1), seed);
    auto m = split_into_heads(joint, d.num_domains());
    posttrain(m, d, sgd(1), seed + 1);
    return m;
}

double mean(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size()); }

}  // namespace

TEST(PhaseConfig, Validation) {
    PhaseConfig c = sgd(1);
    EXPECT_NO_THROW(c.validate());
    c.epochs = 0;
    EXPECT_THROW(c.validate(), ConfigError);
    c = sgd(1);
    c.eval_every = 0;
    EXPECT_THROW(c.validate(), ConfigError);
    c = sgd(1);
    c.batch_size = {4, 0};
    EXPECT_THROW(c.validate(), ConfigError);
    c = sgd(1);
    c.optimizer.learning_rate = -1.0;
    EXPECT_THROW(c.validate(), ConfigError);
    c = sgd(1, 7);
    EXPECT_EQ(c.batch_for(3), (std::vector<std::size_t>{7, 7, 7}));
    c.batch_size = {1, 2, 3};
    EXPECT_EQ(c.batch_for(3), (std::vector<std::size_t>{1, 2, 3}));
    EXPECT_THROW(c.batch_for(2), ConfigError);
}

TEST(PhaseNames, RoundTrip) {
    for (Phase p : {Phase::Pretrain, Phase::Posttrain, Phase::Finetune, Phase::Plugin, Phase::Train})
        EXPECT_EQ(parse_phase(phase_name(p)), p);
    EXPECT_THROW(parse_phase("warmup"), ConfigError);
    for (Variant v : {Variant::Full, Variant::NoPretrain, Variant::NoPosttrain, Variant::NoFinetune})
        EXPECT_EQ(parse_variant(variant_name(v)), v);
    EXPECT_THROW(parse_variant("no_everything"), ConfigError);
}

TEST(TrainPhase, CurveCoversStartEveryIntervalAndEnd) {
    const auto d = small_moons();
    auto m = models::build_model(arch(models::ArchKind::SharedBottom, d), 1);
    const auto r = train_phase(m, d, sgd(2, 7), 5);
    // Largest domain has 160 training rows: ceil(160 / 7) = 23 steps per epoch.
    EXPECT_EQ(r.steps, 46u);
    std::vector<std::size_t> steps;
    for (const auto& p : r.curve) steps.push_back(p.step);
    EXPECT_EQ(steps, (std::vector<std::size_t>{0, 5, 10, 15, 20, 25, 30, 35, 40, 45, 46}));
    for (const auto& p : r.curve) {
        EXPECT_EQ(p.test.size(), 3u);
        EXPECT_EQ(p.train_loss.size(), 3u);
        EXPECT_DOUBLE_EQ(p.test_average, mean(p.test));
    }
    ASSERT_EQ(r.best_step.size(), 3u);
    EXPECT_LT(r.curve.back().train_loss[0], r.curve.front().train_loss[0]);
}

TEST(TrainPhase, WellSeparatedClassesAreLearned) {
    const auto d = gaussian({1000, 500}, 6.0, 1.0, 1.0);
    auto m = models::build_model(arch(models::ArchKind::Joint, d), 4);
    train_phase(m, d, sgd(3, 20), 1);
    const auto ev = metrics::evaluate(m, d, data::Split::Test);
    for (double a : ev.record.per_domain) EXPECT_GE(a, 0.99);
}

TEST(TrainPhase, RejectsMismatchedData) {
    const auto d = small_moons();
    auto spec = arch(models::ArchKind::SharedBottom, d);
    spec.num_domains = 2;
    auto m = models::build_model(spec, 1);
    EXPECT_THROW(train_phase(m, d, sgd(1), 1), ConfigError);
    spec = arch(models::ArchKind::SharedBottom, d);
    spec.input_dim = 3;
    m = models::build_model(spec, 1);
    EXPECT_THROW(train_phase(m, d, sgd(1), 1), ConfigError);
}

TEST(TrainPhase, SeparateKindSumsIndependentDomainLosses) {
    // Each separate tower sees exactly the gradient of its own domain's loss,
    // so tower 0 trains identically whether or not other domains exist.
    const auto both = small_moons();
    data::DomainDataset first = both;
    first.domains.resize(1);
    auto m2 = models::build_model(arch(models::ArchKind::Separate, both), 9);
    auto m1 = models::build_model(arch(models::ArchKind::Separate, first), 9);
    train_phase(m2, both, sgd(1), 2);
    train_phase(m1, first, sgd(1), 2);
    EXPECT_TRUE(models::bit_equal(m1.group("backbone.0"), m2.group("backbone.0")));
    EXPECT_TRUE(models::bit_equal(m1.group("head.0"), m2.group("head.0")));
}

TEST(SplitIntoHeads, CopiesBackboneAndHead) {
    const auto d = small_moons();
    auto joint = pretrain(arch(models::ArchKind::Joint, d), d, sgd(1), 1);
    const auto m = split_into_heads(joint, 3);
    EXPECT_EQ(m.spec().kind, models::ArchKind::SharedBottom);
    EXPECT_TRUE(models::bit_equal(m.group("backbone"), joint.group("backbone")));
    for (const auto& h : m.head_names()) {
        const models::Group& g = m.group(h);
        ASSERT_EQ(g.layers.size(), joint.group("head").layers.size());
        for (std::size_t l = 0; l < g.layers.size(); ++l) {
            EXPECT_TRUE(ad::bit_equal(g.layers[l].weight, joint.group("head").layers[l].weight));
            EXPECT_TRUE(ad::bit_equal(g.layers[l].bias, joint.group("head").layers[l].bias));
        }
    }
    const auto x = d.inputs(1, d.domains[1].indices(data::Split::Test));
    for (std::size_t t = 0; t < 3; ++t)
        EXPECT_TRUE(ad::bit_equal(models::predict_logits(m, x, t), models::predict_logits(joint, x, 0)));
    EXPECT_THROW(split_into_heads(m, 3), ConfigError);
}

TEST(FinetuneHeads, BackboneIsBitIdenticalAndHeadsMove) {
    const auto d = small_moons();
    auto m = posttrained(d);
    const auto before = m;
    const auto r = finetune_heads(m, d, sgd(2), 7);
    EXPECT_EQ(r.phase, Phase::Train);
    EXPECT_TRUE(models::bit_equal(m.group("backbone"), before.group("backbone")));
    EXPECT_FALSE(m.group("backbone").trainable);
    for (const auto& h : m.head_names()) EXPECT_FALSE(models::bit_equal(m.group(h), before.group(h)));
}

TEST(FinetuneHeads, OrderDoesNotMatter) {
    const auto d = small_moons();
    const auto base = posttrained(d);
    auto a = base, b = base;
    finetune_heads(a, d, sgd(2), 7, {0, 1, 2});
    finetune_heads(b, d, sgd(2), 7, {2, 0, 1});
    EXPECT_TRUE(models::bit_equal(a, b));
    auto c = base;
    EXPECT_THROW(finetune_heads(c, d, sgd(1), 7, {0, 0, 1}), ConfigError);
}

TEST(FinetuneHeads, CorruptingOneDomainLeavesOtherHeadsAlone) {
    const auto d = small_moons();
    const auto base = posttrained(d);
    auto bad = d;
    for (auto& y : bad.domains[1].labels) y = 1 - y;
    for (auto& v : bad.domains[1].features) v *= -3.0;
    auto a = base, b = base;
    finetune_heads(a, d, sgd(2), 7);
    finetune_heads(b, bad, sgd(2), 7);
    EXPECT_TRUE(models::bit_equal(a.group("head.0"), b.group("head.0")));
    EXPECT_TRUE(models::bit_equal(a.group("head.2"), b.group("head.2")));
    EXPECT_FALSE(models::bit_equal(a.group("head.1"), b.group("head.1")));
}

TEST(FinetuneHeads, NeedsOneHeadPerDomain) {
    const auto d = small_moons();
    auto joint = models::build_model(arch(models::ArchKind::Joint, d), 1);
    EXPECT_THROW(finetune_heads(joint, d, sgd(1), 1), ConfigError);
}

TEST(Plugin, OnSharedBottomEqualsFinetune) {
    const auto d = small_moons();
    const auto base = posttrained(d);
    auto a = base, b = base;
    finetune_heads(a, d, sgd(2), 3);
    plugin_finetune(b, d, sgd(2), 3);
    EXPECT_TRUE(models::bit_equal(a, b));
}

TEST(Plugin, LeavesExpertsAndGatesUnchanged) {
    const auto d = small_moons();
    for (auto kind : {models::ArchKind::MMoE, models::ArchKind::PLE}) {
        auto m = models::build_model(arch(kind, d), 2);
        train_phase(m, d, sgd(1), 1);
        const auto before = m;
        plugin_finetune(m, d, sgd(1), 4);
        for (const auto& g : m.trunk_group_names()) EXPECT_TRUE(models::bit_equal(m.group(g), before.group(g))) << g;
        for (const auto& h : m.head_names()) EXPECT_FALSE(models::bit_equal(m.group(h), before.group(h))) << h;
    }
}

TEST(Plugin, RejectsKindsWithoutPerDomainHeads) {
    const auto d = small_moons();
    for (auto kind : {models::ArchKind::Joint, models::ArchKind::MoE}) {
        auto m = models::build_model(arch(kind, d), 2);
        EXPECT_THROW(plugin_finetune(m, d, sgd(1), 1), ConfigError);
    }
}

TEST(Pipeline, FullRunHasThreePhasesAndNorms) {
    const auto d = small_moons();
    const auto r = run_pipeline(pipeline(), d, Variant::Full, 11);
    EXPECT_EQ(r.method, "dtrain");
    ASSERT_EQ(r.phases.size(), 3u);
    EXPECT_EQ(r.phases[0].phase, Phase::Pretrain);
    EXPECT_EQ(r.phases[1].phase, Phase::Posttrain);
    EXPECT_EQ(r.phases[2].phase, Phase::Finetune);
    EXPECT_EQ(r.snapshots[0].model.spec().kind, models::ArchKind::Joint);
    EXPECT_TRUE(models::bit_equal(r.snapshots[1].model.group("backbone"), r.snapshots[2].model.group("backbone")));
    for (const char* key : {"posttrain_vs_pretrain", "finetune_vs_pretrain", "finetune_vs_posttrain"}) {
        ASSERT_TRUE(r.head_update_norms.count(key)) << key;
        EXPECT_EQ(r.head_update_norms.at(key).size(), 3u);
    }
    const auto ev = metrics::evaluate(r.final_model(), d, data::Split::Test);
    EXPECT_EQ(ev.record.per_domain, r.test.per_domain);
}

TEST(Pipeline, VariantsDropTheirPhase) {
    const auto d = small_moons();
    const auto full = run_pipeline(pipeline(), d, Variant::Full, 11);
    const auto nf = run_pipeline(pipeline(), d, Variant::NoFinetune, 11);
    ASSERT_EQ(nf.phases.size(), 2u);
    EXPECT_EQ(nf.method, "dtrain_ablation:no_finetune");
    EXPECT_TRUE(models::bit_equal(nf.final_model(), full.snapshots[1].model));
    EXPECT_EQ(nf.head_update_norms.at("posttrain_vs_pretrain"), full.head_update_norms.at("posttrain_vs_pretrain"));

    const auto np = run_pipeline(pipeline(), d, Variant::NoPretrain, 11);
    ASSERT_EQ(np.phases.size(), 2u);
    EXPECT_EQ(np.phases[0].phase, Phase::Posttrain);
    EXPECT_TRUE(np.head_update_norms.count("finetune_vs_posttrain"));
    EXPECT_FALSE(np.head_update_norms.count("posttrain_vs_pretrain"));

    const auto npt = run_pipeline(pipeline(), d, Variant::NoPosttrain, 11);
    ASSERT_EQ(npt.phases.size(), 2u);
    EXPECT_EQ(npt.phases[1].phase, Phase::Finetune);
    EXPECT_TRUE(models::bit_equal(npt.snapshots[0].model, full.snapshots[0].model));
    EXPECT_TRUE(models::bit_equal(npt.final_model().group("backbone"), full.snapshots[0].model.group("backbone")));
}

TEST(Pipeline, IsDeterministicPerSeed) {
    const auto d = small_moons();
    const auto a = run_pipeline(pipeline(), d, Variant::Full, 5);
    const auto b = run_pipeline(pipeline(), d, Variant::Full, 5);
    const auto c = run_pipeline(pipeline(), d, Variant::Full, 6);
    EXPECT_EQ(report_to_json(a).dump(), report_to_json(b).dump());
    EXPECT_EQ(curves_csv(a), curves_csv(b));
    EXPECT_TRUE(models::bit_equal(a.final_model(), b.final_model()));
    EXPECT_FALSE(models::bit_equal(a.final_model(), c.final_model()));
}

TEST(Baselines, PluginExtendsTheBaselineRun) {
    const auto d = small_moons();
    const auto spec = arch(models::ArchKind::MMoE, d);
    const auto base = run_baseline(spec, d, sgd(1), 4);
    const auto plug = run_plugin(spec, d, sgd(1), sgd(1), 4);
    EXPECT_EQ(base.method, "mmoe");
    EXPECT_EQ(plug.method, "plugin:mmoe");
    ASSERT_EQ(plug.snapshots.size(), 2u);
    EXPECT_TRUE(models::bit_equal(plug.snapshots[0].model, base.final_model()));
    for (const auto& g : base.final_model().trunk_group_names())
        EXPECT_TRUE(models::bit_equal(plug.final_model().group(g), base.final_model().group(g)));
    EXPECT_EQ(plug.head_update_norms.at("plugin_vs_train").size(), 3u);
}

TEST(Reports, JsonAndCsvLayouts) {
    const auto d = small_moons();
    const auto r = run_pipeline(pipeline(1, 1, 1), d, Variant::Full, 2);
    const auto j = report_to_json(r);
    EXPECT_EQ(j.at("method"), "dtrain");
    EXPECT_EQ(j.at("seed"), 2);
    EXPECT_EQ(j.at("metric"), "accuracy");
    EXPECT_EQ(j.at("phases").size(), 3u);
    EXPECT_EQ(j.at("final").at("test").at("per_domain").size(), 3u);
    const auto curves = curves_csv(r);
    EXPECT_EQ(curves.substr(0, curves.find('\n')), "phase,step,domain,split,accuracy_or_auc,loss");
    EXPECT_NE(curves.find("\nfinetune,0,2,test,"), std::string::npos);
    const auto m = metrics_csv(r);
    EXPECT_EQ(m.substr(0, m.find('\n')), "split,domain,value");
    EXPECT_NE(m.find("\ntest,average,"), std::string::npos);
    EXPECT_NE(m.find("\ntrain,2,"), std::string::npos);
}

TEST(Equivalence, IdenticalDomainsMakeJointMatchSharedBottom) {
    const auto d = gaussian({600, 600, 600}, 2.0, 0.0, 1.0, 8);
    std::vector<double> joint, sb;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        joint.push_back(run_baseline(arch(models::ArchKind::Joint, d), d, sgd(4, 20), seed).test.average);
        sb.push_back(run_baseline(arch(models::ArchKind::SharedBottom, d), d, sgd(4, 20), seed).test.average);
    }
    EXPECT_NEAR(mean(joint), mean(sb), 0.01);
}

TEST(Equivalence, IdenticalPreferencesGiveAgreeingDomainAucs) {
    data::SyntheticSpec s;
    s.kind = data::GeneratorKind::Ctr;
    s.counts = {8000, 8000};
    s.users = 20;
    s.items = 20;
    s.shared_fraction = 1.0;
    s.interaction_scale = 3.0;
    s.seed = 4;
    const auto d = data::generate(s);
    PhaseConfig c = sgd(3, 64);
    c.optimizer.kind = ad::OptimizerKind::Adam;
    c.optimizer.learning_rate = 0.01;
    auto spec = arch(models::ArchKind::Joint, d);
    spec.backbone_layers = {16};
    std::vector<double> gap;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto r = run_baseline(spec, d, c, seed);
        gap.push_back(r.test.per_domain[0] - r.test.per_domain[1]);
    }
    EXPECT_LE(std::abs(mean(gap)), 0.02);
}
