#include <cmath>

#include <gtest/gtest.h>
#include <json.hpp>

#include "ser/metrics.hpp"
#include "ser/rng.hpp"

using namespace ser;

TEST(Uar, PerfectAndWorst)
{
    ConfusionMatrix cm;
    for (int k = 0; k < 3; ++k) {
        cm.add(k, k);
    }
    EXPECT_EQ(uar(cm), 1.0);
    ConfusionMatrix wrong;
    wrong.add(0, 1);
    wrong.add(1, 2);
    wrong.add(2, 0);
    EXPECT_EQ(uar(wrong), 0.0);
}

TEST(Uar, HandComputedExample)
{
    ConfusionMatrix cm;
    cm.counts = {{{8, 2, 0}, {1, 1, 2}, {0, 0, 10}}};
    EXPECT_NEAR(uar(cm), (0.8 + 0.25 + 1.0) / 3.0, 1e-15);
    EXPECT_EQ(cm.total(), 24u);
    EXPECT_EQ(cm.support(1), 4u);
}

TEST(Uar, ZeroSupportRowsAreExcluded)
{
    ConfusionMatrix cm;
    cm.add(1, 1);
    cm.add(1, 0);
    EXPECT_EQ(uar(cm), 0.5);
    EXPECT_THROW(uar(ConfusionMatrix{}), std::invalid_argument);
}

TEST(Uar, InvariantToPositiveScaling)
{
    Rng rng(2);
    for (int trial = 0; trial < 100; ++trial) {
        ConfusionMatrix cm;
        for (auto& row : cm.counts) {
            for (auto& c : row) {
                c = rng.index(20);
            }
        }
        cm.counts[0][0] += 1;
        ConfusionMatrix scaled = cm;
        const auto k = 1 + rng.index(9);
        for (auto& row : scaled.counts) {
            for (auto& c : row) {
                c *= k;
            }
        }
        EXPECT_NEAR(uar(cm), uar(scaled), 1e-15);
    }
}

TEST(Uar, RandomPredictorOnBalancedTruthIsOneThird)
{
    Rng rng(3);
    ConfusionMatrix cm;
    for (int i = 0; i < 100000; ++i) {
        cm.add(i % 3, static_cast<int>(rng.index(3)));
    }
    EXPECT_NEAR(uar(cm), 1.0 / 3.0, 0.02);
}

TEST(ZTest, ReproducesPublishedComparisons)
{
    const auto sig = z_test_uar(0.485, 0.451, 1819);
    EXPECT_NEAR(sig.z, 2.05, 0.01);
    EXPECT_TRUE(sig.significant);
    EXPECT_LT(sig.p, 0.05);
    const auto ns = z_test_uar(0.454, 0.451, 1819);
    EXPECT_FALSE(ns.significant);
    EXPECT_NEAR(ns.z, 0.18, 0.01);
    EXPECT_NEAR(ns.p, 0.43, 0.01);
}

TEST(ZTest, MatchesPooledFormula)
{
    const double a = 0.6, b = 0.5;
    const std::size_t n = 400;
    const double pbar = 0.55;
    const double z = (a - b) / std::sqrt(pbar * (1 - pbar) * 2.0 / n);
    const auto r = z_test_uar(a, b, n);
    EXPECT_NEAR(r.z, z, 1e-12);
    EXPECT_NEAR(r.p, 0.5 * std::erfc(z / std::sqrt(2.0)), 1e-15);
}

TEST(ZTest, AntisymmetricInArguments)
{
    Rng rng(4);
    for (int i = 0; i < 100; ++i) {
        const double a = rng.uniform(0.2, 0.8);
        const double b = rng.uniform(0.2, 0.8);
        const auto n = 10 + rng.index(3000);
        const auto ab = z_test_uar(a, b, n);
        const auto ba = z_test_uar(b, a, n);
        EXPECT_NEAR(ab.z, -ba.z, 1e-12);
        EXPECT_NEAR(ab.p, 1.0 - ba.p, 1e-12);
    }
}

TEST(ZTest, RejectsDegenerateInput)
{
    EXPECT_THROW(z_test_uar(0.5, 0.4, 1), std::invalid_argument);
    EXPECT_THROW(z_test_uar(1.2, 0.4, 100), std::invalid_argument);
    EXPECT_THROW(z_test_uar(0.0, 0.0, 100), std::invalid_argument);
    EXPECT_THROW(z_test_uar(1.0, 1.0, 100), std::invalid_argument);
}

namespace {

ModelParams<float> tiny_model()
{
    ModelConfig c;
    c.hidden = 4;
    c.conv_filters = 2;
    c.conv_width = 3;
    c.channel_pool = 2;
    return build_model<float>(c);
}

Utterance utt(const std::string& id, std::size_t n, double rating, std::uint64_t seed)
{
    Rng rng(seed);
    Utterance u;
    u.id = id;
    u.samples.resize(n);
    for (float& x : u.samples) {
        x = static_cast<float>(0.1 * rng.normal());
    }
    u.ratings = {rating, rating, rating};
    return u;
}

} // namespace

TEST(Evaluate, CountsScoredAndSkipped)
{
    const auto params = tiny_model();
    Corpus part = {utt("a", 900, 1.0, 1), utt("b", 100, 3.0, 2), utt("c", 700, 5.0, 3)};
    const auto report = evaluate(params, std::span<const Utterance>(part), CorpusStats{0.0, 0.1, 0});
    EXPECT_EQ(report.n_scored, 2u);
    EXPECT_EQ(report.skipped, 1u);
    for (const auto& t : report.tasks) {
        EXPECT_EQ(t.confusion.total(), part.size() - report.skipped);
    }
    EXPECT_THROW(evaluate(params, std::span<const Utterance>(), CorpusStats{}), std::invalid_argument);
}

TEST(Evaluate, SingleUtteranceUsesOnlyItsRow)
{
    const auto params = tiny_model();
    Corpus part = {utt("a", 900, 4.5, 1)};
    const auto report = evaluate(params, std::span<const Utterance>(part), CorpusStats{0.0, 0.1, 0});
    for (const auto& t : report.tasks) {
        EXPECT_EQ(t.confusion.support(2), 1u);
        EXPECT_EQ(t.uar, t.confusion.counts[2][2] == 1 ? 1.0 : 0.0);
    }
}

TEST(Evaluate, RepeatableAndSerializable)
{
    const auto params = tiny_model();
    Corpus part = {utt("a", 900, 1.0, 1), utt("b", 1500, 3.0, 2), utt("c", 700, 5.0, 3)};
    EvalOptions opts;
    opts.checkpoint_id = "x@1";
    const auto r1 = evaluate(params, std::span<const Utterance>(part), CorpusStats{0.0, 0.1, 0}, opts);
    const auto r2 = evaluate(params, std::span<const Utterance>(part), CorpusStats{0.0, 0.1, 0}, opts);
    EXPECT_EQ(eval_report_json(r1), eval_report_json(r2));
    const auto doc = nlohmann::json::parse(eval_report_json(r1));
    EXPECT_EQ(doc["checkpoint_id"], "x@1");
    EXPECT_EQ(doc["n_scored"], 3);
    EXPECT_EQ(doc["skipped"], 0);
    EXPECT_TRUE(doc["tasks"].contains("valence"));
    EXPECT_EQ(doc["tasks"]["arousal"]["confusion"].size(), 3u);
}
