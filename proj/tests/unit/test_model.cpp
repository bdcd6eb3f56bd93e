#include <cmath>

#include <gtest/gtest.h>

#include "ser/model.hpp"
#include "ser/model_gradcheck.hpp"
#include "ser/rng.hpp"

using namespace ser;

namespace {

ModelConfig small_config(Variant variant, std::vector<Task> tasks)
{
    ModelConfig c;
    c.variant = variant;
    c.tasks = std::move(tasks);
    c.hidden = 6;
    c.conv_filters = 4;
    c.conv_width = 5;
    c.channel_pool = 2;
    c.seed = 3;
    return c;
}

Tensor random_segments(std::size_t L, std::uint64_t seed)
{
    Rng rng(seed);
    Tensor x({L, kWindowSamples});
    for (float& v : x.values()) {
        v = static_cast<float>(rng.normal());
    }
    return x;
}

} // namespace

TEST(ModelConfig, VariantTaskRules)
{
    ModelConfig c;
    c.variant = Variant::STL;
    c.tasks = {Task::Arousal, Task::Valence, Task::Dominance};
    EXPECT_THROW(c.validate(), ConfigError);
    c.tasks = {Task::Valence};
    EXPECT_NO_THROW(c.validate());
    c.variant = Variant::MTL_ATT;
    EXPECT_THROW(c.validate(), ConfigError);
    c.tasks = {Task::Valence, Task::Valence};
    EXPECT_THROW(c.validate(), ConfigError);
    c.tasks = {Task::Arousal, Task::Valence};
    EXPECT_NO_THROW(c.validate());
    c.channel_pool = 7;
    EXPECT_THROW(c.validate(), ConfigError);
    c.channel_pool = 10;
    c.keep_prob = 0.0;
    EXPECT_THROW(c.validate(), ConfigError);
}

TEST(ModelConfig, VariantNames)
{
    EXPECT_EQ(parse_variant("MTL_ATT"), Variant::MTL_ATT);
    EXPECT_EQ(parse_variant("STL+att"), Variant::STL_ATT);
    EXPECT_EQ(parse_variant("MTL"), Variant::MTL);
    EXPECT_THROW(parse_variant("LSTM"), ConfigError);
    EXPECT_EQ(ModelConfig{}.segment_feature_size(), 1280u);
}

TEST(Model, TrunkShapesForOneSegment)
{
    const auto params = build_model<float>(ModelConfig{});
    const auto out = forward(params, random_segments(1, 1), ForwardOptions{nn::Mode::Eval, true, false});
    const auto& seg = out.cache.segments.at(0);
    EXPECT_EQ(seg.input.shape(), (Shape{1, 640}));
    EXPECT_EQ(seg.conv1_pre.shape(), (Shape{40, 640}));
    EXPECT_EQ(seg.pool1.output.shape(), (Shape{40, 320}));
    EXPECT_EQ(seg.conv2_pre.shape(), (Shape{40, 320}));
    EXPECT_EQ(seg.pool2_winners.size(), 4u * 320u);
    EXPECT_EQ(out.cache.features.shape(), (Shape{1, 1280}));
    EXPECT_EQ(out.cache.hidden1.shape(), (Shape{1, 128}));
    EXPECT_EQ(out.cache.hidden2.shape(), (Shape{1, 128}));
    EXPECT_EQ(out.probs.size(), 3u);
    EXPECT_EQ(params.conv1.kernels.shape(), (Shape{40, 1, 40}));
    EXPECT_EQ(params.conv2.kernels.shape(), (Shape{40, 40, 40}));
    EXPECT_EQ(params.gru1.W_z.shape(), (Shape{128, 1280}));
}

TEST(Model, ParameterCounts)
{
    const auto mtl = build_model<float>(ModelConfig{});
    // conv1 40*40+40, conv2 40*40*40+40, gru1 3*(128*1280+128*128+128), gru2 3*(128*128*2+128)
    const std::size_t trunk = 1640 + 64040 + 3 * (163840 + 16384 + 128) + 3 * (32768 + 128);
    EXPECT_EQ(mtl.trunk_parameter_count(), trunk);
    EXPECT_EQ(mtl.parameter_count(), trunk + 3 * (128 + 3 * 128 + 3));
    ModelConfig stl;
    stl.variant = Variant::STL;
    stl.tasks = {Task::Arousal};
    EXPECT_EQ(build_model<float>(stl).parameter_count(), trunk + 3 * 128 + 3);
}

TEST(Model, SameSeedSharesTrunkAndHeadsAcrossVariants)
{
    ModelConfig mtl = small_config(Variant::MTL_ATT, {Task::Arousal, Task::Valence, Task::Dominance});
    ModelConfig stl = small_config(Variant::STL_ATT, {Task::Valence});
    const auto a = build_model<float>(mtl);
    const auto b = build_model<float>(stl);
    EXPECT_EQ(a.conv1.kernels, b.conv1.kernels);
    EXPECT_EQ(a.conv2.kernels, b.conv2.kernels);
    EXPECT_EQ(a.gru1.U_h, b.gru1.U_h);
    EXPECT_EQ(a.gru2.W_r, b.gru2.W_r);
    EXPECT_EQ(a.branch(Task::Valence).head.W, b.branch(Task::Valence).head.W);
    EXPECT_NE(a.branch(Task::Arousal).head.W, a.branch(Task::Valence).head.W);
    for (const auto& br : a.branches) {
        for (float w : br.attention->w.values()) {
            EXPECT_EQ(w, 0.0f);
        }
    }
    mtl.seed = 4;
    EXPECT_NE(build_model<float>(mtl).conv1.kernels, a.conv1.kernels);
}

TEST(Model, AttentionOnlyInAttentionVariants)
{
    const auto plain = build_model<float>(small_config(Variant::MTL, {Task::Arousal, Task::Dominance}));
    for (const auto& br : plain.branches) {
        EXPECT_FALSE(br.attention.has_value());
    }
    const auto out = forward(plain, random_segments(4, 2), ForwardOptions{});
    EXPECT_TRUE(out.alphas.empty());
    EXPECT_EQ(out.tasks, (std::vector<Task>{Task::Arousal, Task::Dominance}));
}

TEST(Model, EvalIsDeterministicTrainDropoutIsSeeded)
{
    const auto params = build_model<float>(small_config(Variant::MTL_ATT, {Task::Arousal, Task::Valence}));
    const auto x = random_segments(5, 3);
    const auto a = forward(params, x, ForwardOptions{});
    const auto b = forward(params, x, ForwardOptions{});
    EXPECT_EQ(a.probs, b.probs);

    Rng r1(9);
    Rng r2(9);
    Rng r3(10);
    const ForwardOptions train{nn::Mode::Train, false, false};
    const auto t1 = forward(params, x, train, &r1);
    const auto t2 = forward(params, x, train, &r2);
    const auto t3 = forward(params, x, train, &r3);
    EXPECT_EQ(t1.probs, t2.probs);
    EXPECT_NE(t1.probs, t3.probs);
    EXPECT_THROW(forward(params, x, train), std::invalid_argument);
}

TEST(Model, ProbabilitiesAndAlphasAreDistributions)
{
    auto params = build_model<double>(small_config(Variant::MTL_ATT, {Task::Arousal, Task::Valence, Task::Dominance}));
    Rng rng(5);
    for (auto& br : params.branches) {
        for (double& w : br.attention->w.values()) {
            w = rng.normal();
        }
    }
    for (std::size_t L : {1u, 2u, 9u}) {
        const auto out = forward(params, random_segments(L, L).cast<double>(), ForwardOptions{});
        for (std::size_t b = 0; b < out.tasks.size(); ++b) {
            double ps = 0.0;
            for (double p : out.probs[b]) {
                ps += p;
            }
            EXPECT_NEAR(ps, 1.0, 1e-12);
            ASSERT_EQ(out.alphas[b].size(), L);
            double as = 0.0;
            for (double a : out.alphas[b]) {
                EXPECT_GE(a, 0.0);
                as += a;
            }
            EXPECT_NEAR(as, 1.0, 1e-12);
        }
    }
}

TEST(Model, RejectsBadSegmentShape)
{
    const auto params = build_model<float>(small_config(Variant::STL, {Task::Arousal}));
    EXPECT_THROW(forward(params, Tensor({2, 320}), ForwardOptions{}), DataError);
}

TEST(Model, GradientsOfEveryVariantMatchFiniteDifferences)
{
    const std::vector<std::pair<Variant, std::vector<Task>>> cases = {
        {Variant::STL, {Task::Valence}},
        {Variant::STL_ATT, {Task::Dominance}},
        {Variant::MTL, {Task::Arousal, Task::Valence, Task::Dominance}},
        {Variant::MTL_ATT, {Task::Arousal, Task::Valence, Task::Dominance}},
    };
    for (const auto& [variant, tasks] : cases) {
        const ModelConfig cfg = small_config(variant, tasks);
        MtlLossConfig loss;
        loss.task_weights.assign(tasks.size(), 0.7);
        loss.lambda = 1e-3;
        ModelGradcheckOptions opts;
        const auto report = model_gradcheck(cfg, loss, opts);
        for (const auto& t : report.tensors) {
            EXPECT_LT(t.max_relative_error, kGradcheckThreshold) << variant_name(variant) << " " << t.name;
            EXPECT_GT(t.checked, 0u) << t.name;
        }
    }
}

TEST(Model, GradcheckFlagsACorruptedTensor)
{
    const ModelConfig cfg = small_config(Variant::MTL_ATT, {Task::Arousal, Task::Valence});
    MtlLossConfig loss;
    loss.task_weights = {1.0, 1.0};
    ModelGradcheckOptions opts;
    opts.corrupt_tensor = "gru2.U_h";
    const auto report = model_gradcheck(cfg, loss, opts);
    for (const auto& t : report.tensors) {
        if (t.name == "gru2.U_h") {
            EXPECT_GT(t.max_relative_error, kGradcheckThreshold);
        } else {
            EXPECT_LT(t.max_relative_error, kGradcheckThreshold) << t.name;
        }
    }
    opts.corrupt_tensor = "nope";
    EXPECT_THROW(model_gradcheck(cfg, loss, opts), ConfigError);
    opts.corrupt_tensor.reset();
    opts.segments = 4;
    EXPECT_THROW(model_gradcheck(cfg, loss, opts), ConfigError);
}

TEST(Model, FrozenRegimeReproducesForwardAndBlocksBackward)
{
    auto params = build_model<double>(small_config(Variant::MTL_ATT, {Task::Arousal, Task::Valence}));
    const TensorD x = random_segments(2, 21).cast<double>();
    const ForwardOptions live{nn::Mode::Eval, true, true};
    const auto base = forward(params, x, live);
    const Regime regime = regime_of(base.cache);
    ASSERT_EQ(regime.segments.size(), 2u);

    ForwardOptions frozen{nn::Mode::Eval, true, true};
    frozen.frozen = &regime;
    const auto same = forward(params, x, frozen);
    EXPECT_EQ(same.probs, base.probs);
    auto grads = params.zeros_like();
    EXPECT_THROW(backward(params, same, {{0, 0, 0}, {0, 0, 0}}, grads), std::logic_error);

    // A large bias shift flips ReLUs: the live pass changes regime, the frozen one does not follow.
    params.conv1.bias[0] += 2.0;
    const auto moved = forward(params, x, live);
    ASSERT_NE(moved.pattern, base.pattern);
    EXPECT_NE(forward(params, x, frozen).probs, moved.probs);

    const TensorD one = random_segments(1, 22).cast<double>();
    EXPECT_THROW(forward(params, one, frozen), std::invalid_argument);
}

TEST(Model, GradcheckFlagsCorruptedConvTensorsDespiteFrozenProbes)
{
    const ModelConfig cfg = small_config(Variant::MTL_ATT, {Task::Arousal, Task::Valence});
    MtlLossConfig loss;
    loss.task_weights = {1.0, 1.0};
    for (const char* name : {"conv1.kernels", "conv1.bias", "conv2.bias"}) {
        ModelGradcheckOptions opts;
        opts.corrupt_tensor = name;
        const auto report = model_gradcheck(cfg, loss, opts);
        for (const auto& t : report.tensors) {
            if (t.name == name) {
                EXPECT_GT(t.max_relative_error, kGradcheckThreshold) << name;
            }
        }
    }
}
