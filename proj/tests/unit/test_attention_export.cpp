#include <fstream>
#include <string>

#include <gtest/gtest.h>

#include "ser/attention_export.hpp"
#include "ser/rng.hpp"
#include "test_util.hpp"

using namespace ser;

namespace {

ModelConfig small(Variant v = Variant::MTL_ATT)
{
    ModelConfig c;
    c.variant = v;
    if (v == Variant::STL || v == Variant::STL_ATT) {
        c.tasks = {Task::Arousal};
    }
    c.hidden = 5;
    c.conv_filters = 4;
    c.conv_width = 5;
    c.channel_pool = 2;
    return c;
}

Corpus corpus()
{
    Rng rng(8);
    Corpus out;
    for (std::size_t n : {640u, 1000u, 3000u}) {
        Utterance u;
        u.id = "u" + std::to_string(n);
        u.samples.resize(n);
        for (float& x : u.samples) {
            x = static_cast<float>(0.2 * rng.normal());
        }
        out.push_back(u);
    }
    return out;
}

std::vector<std::string> lines(const std::filesystem::path& p)
{
    std::ifstream in(p);
    std::vector<std::string> out;
    for (std::string l; std::getline(in, l);) {
        out.push_back(l);
    }
    return out;
}

} // namespace

TEST(AttentionExport, OneRecordPerUtteranceAndTask)
{
    const auto dir = test::scratch_dir();
    const auto params = build_model<float>(small());
    const Corpus c = corpus();
    const auto n = export_attention(params, std::span<const Utterance>(c), CorpusStats{0.0, 0.2, 0}, dir / "a.jsonl");
    EXPECT_EQ(n, 9u);
    const auto rows = lines(dir / "a.jsonl");
    ASSERT_EQ(rows.size(), 9u);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto rec = parse_attention_record(rows[i]);
        const auto& u = c[i / 3];
        EXPECT_EQ(rec.utterance_id, u.id);
        EXPECT_EQ(rec.task, kAllTasks[i % 3]);
        ASSERT_EQ(rec.alphas.size(), segment_count(u.samples.size()));
        ASSERT_EQ(rec.window_start_samples.size(), rec.alphas.size());
        double sum = 0.0;
        for (std::size_t k = 0; k < rec.alphas.size(); ++k) {
            EXPECT_EQ(rec.window_start_samples[k], 160 * k);
            // Fresh model: zero attention vectors, exactly uniform weights.
            EXPECT_EQ(rec.alphas[k], static_cast<double>(1.0f / static_cast<float>(rec.alphas.size())));
            sum += rec.alphas[k];
        }
        EXPECT_NEAR(sum, 1.0, 1e-6);
    }
    EXPECT_NE(rows[0].find("\"utterance_id\""), std::string::npos);
    EXPECT_NE(rows[0].find("\"window_start_samples\""), std::string::npos);
}

TEST(AttentionExport, ReExportIsBitwiseIdentical)
{
    const auto dir = test::scratch_dir();
    auto params = build_model<float>(small());
    Rng rng(2);
    for (auto& b : params.branches) {
        for (float& w : b.attention->w.values()) {
            w = static_cast<float>(rng.normal());
        }
    }
    const Corpus c = corpus();
    export_attention(params, std::span<const Utterance>(c), CorpusStats{0.0, 0.2, 0}, dir / "a.jsonl");
    export_attention(params, std::span<const Utterance>(c), CorpusStats{0.0, 0.2, 0}, dir / "b.jsonl");
    EXPECT_EQ(lines(dir / "a.jsonl"), lines(dir / "b.jsonl"));

    // Distinct per-task attention vectors give distinct distributions.
    const auto rows = lines(dir / "a.jsonl");
    const auto ar = parse_attention_record(rows[6]);
    const auto va = parse_attention_record(rows[7]);
    EXPECT_NE(ar.alphas, va.alphas);
}

TEST(AttentionExport, RejectsNonAttentionModel)
{
    const auto dir = test::scratch_dir();
    const auto params = build_model<float>(small(Variant::MTL));
    const Corpus c = corpus();
    try {
        export_attention(params, std::span<const Utterance>(c), CorpusStats{}, dir / "a.jsonl");
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("MTL"), std::string::npos);
    }
}

TEST(AttentionExport, RecordJsonRoundTrip)
{
    AttentionRecord r{"x", Task::Dominance, {0, 160}, {0.25, 0.75}};
    const auto back = parse_attention_record(attention_record_json(r));
    EXPECT_EQ(back.utterance_id, "x");
    EXPECT_EQ(back.task, Task::Dominance);
    EXPECT_EQ(back.window_start_samples, r.window_start_samples);
    EXPECT_EQ(back.alphas, r.alphas);
    EXPECT_EQ(attention_record_json(r),
              R"({"utterance_id":"x","task":"dominance","window_start_samples":[0,160],"alphas":[0.25,0.75]})");
}
