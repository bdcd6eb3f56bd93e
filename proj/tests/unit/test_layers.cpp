#include <algorithm>
#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "ser/gradcheck.hpp"
#include "ser/layers.hpp"
#include "ser/numeric.hpp"
#include "ser/rng.hpp"

using namespace ser;
using namespace ser::nn;

namespace {

std::vector<double> flat(const TensorD& t)
{
    return {t.values().begin(), t.values().end()};
}

void randomize(TensorD& t, Rng& rng, double scale = 1.0)
{
    for (double& v : t.values()) {
        v = scale * rng.normal();
    }
}

double sigmoid(double x)
{
    return 1.0 / (1.0 + std::exp(-x));
}

// Direct "same" convolution, left pad (K - 1) / 2.
TensorD naive_conv(const TensorD& x, const Conv1DParams<double>& p)
{
    const std::size_t O = p.out_channels(), C = p.in_channels(), K = p.width(), T = x.dim(1);
    const std::ptrdiff_t left = static_cast<std::ptrdiff_t>((K - 1) / 2);
    TensorD y({O, T});
    for (std::size_t o = 0; o < O; ++o) {
        for (std::size_t t = 0; t < T; ++t) {
            double s = p.bias[o];
            for (std::size_t c = 0; c < C; ++c) {
                for (std::size_t k = 0; k < K; ++k) {
                    const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t + k) - left;
                    if (src >= 0 && src < static_cast<std::ptrdiff_t>(T)) {
                        s += p.kernels(o, c, k) * x(c, static_cast<std::size_t>(src));
                    }
                }
            }
            y(o, t) = s;
        }
    }
    return y;
}

// Weighted sum of outputs; the weights make every output coordinate matter.
double dot(const TensorD& a, const TensorD& w)
{
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        s += a[i] * w[i];
    }
    return s;
}

// Copies in place: gradcheck slots hold spans into the destination buffer.
void assign(TensorD& dst, const TensorD& src)
{
    std::copy(src.values().begin(), src.values().end(), dst.values().begin());
}

GradcheckSlot slot(const std::string& name, TensorD& value, const TensorD& grad)
{
    return GradcheckSlot{name, value.span(), grad.span()};
}

} // namespace

TEST(Conv1D, MatchesNaiveOracle)
{
    Rng rng(1);
    for (auto [C, O, K, T] : std::vector<std::array<std::size_t, 4>>{{1, 4, 5, 17}, {3, 2, 4, 9}, {2, 3, 1, 6}, {2, 2, 8, 5}}) {
        auto p = Conv1DParams<double>::zeros(O, C, K);
        randomize(p.kernels, rng);
        randomize(p.bias, rng);
        TensorD x({C, T});
        randomize(x, rng);
        const auto y = conv1d_forward(x, p);
        const auto ref = naive_conv(x, p);
        ASSERT_EQ(y.shape(), ref.shape());
        for (std::size_t i = 0; i < y.size(); ++i) {
            EXPECT_NEAR(y[i], ref[i], 1e-12);
        }
    }
}

TEST(Conv1D, FloatAgreesWithDouble)
{
    Rng rng(2);
    auto p = Conv1DParams<double>::zeros(4, 2, 6);
    randomize(p.kernels, rng);
    TensorD x({2, 30});
    randomize(x, rng);
    const auto yd = conv1d_forward(x, p);
    const auto yf = conv1d_forward(x.cast<float>(), Conv1DParams<float>{p.kernels.cast<float>(), p.bias.cast<float>()});
    for (std::size_t i = 0; i < yd.size(); ++i) {
        EXPECT_NEAR(yf[i], yd[i], 1e-5);
    }
}

TEST(Conv1D, RejectsChannelMismatch)
{
    const auto p = Conv1DParams<double>::zeros(2, 3, 4);
    EXPECT_THROW(conv1d_forward(TensorD({2, 10}), p), ShapeError);
}

TEST(Conv1D, GradientsMatchFiniteDifferences)
{
    Rng rng(3);
    auto p = Conv1DParams<double>::zeros(3, 2, 5);
    randomize(p.kernels, rng);
    randomize(p.bias, rng);
    TensorD x({2, 11});
    randomize(x, rng);
    TensorD w({3, 11});
    randomize(w, rng);
    auto g = Conv1DParams<double>::zeros(3, 2, 5);
    TensorD gx({2, 11});
    auto objective = [&](bool with_gradient) {
        const auto y = conv1d_forward(x, p);
        if (with_gradient) {
            g.kernels.fill(0.0);
            g.bias.fill(0.0);
            assign(gx, conv1d_backward(x, p, w, g));
        }
        return Probe{dot(y, w), 0};
    };
    const auto report = finite_difference_gradcheck(
        objective, {slot("kernels", p.kernels, g.kernels), slot("bias", p.bias, g.bias), slot("input", x, gx)});
    EXPECT_LT(report.worst(), 1e-7);
}

TEST(Relu, ForwardAndBackward)
{
    const auto x = TensorD::vector({-1.0, 0.0, 2.0});
    const auto y = relu_forward(x);
    EXPECT_EQ(y, TensorD::vector({0.0, 0.0, 2.0}));
    const auto g = relu_backward(x, TensorD::vector({5.0, 5.0, 5.0}));
    EXPECT_EQ(g, TensorD::vector({0.0, 0.0, 5.0}));
}

TEST(MaxPoolTime, MatchesBruteForceIncludingOddPadding)
{
    Rng rng(4);
    for (std::size_t T : {8u, 9u, 1u}) {
        TensorD x({3, T});
        randomize(x, rng);
        const auto r = maxpool_time_forward(x);
        const std::size_t out_t = (T + 1) / 2;
        ASSERT_EQ(r.output.shape(), (Shape{3, out_t}));
        for (std::size_t c = 0; c < 3; ++c) {
            for (std::size_t t = 0; t < out_t; ++t) {
                const double a = x(c, 2 * t);
                const double b = 2 * t + 1 < T ? x(c, 2 * t + 1) : 0.0;
                EXPECT_EQ(r.output(c, t), std::max(a, b));
            }
        }
    }
}

TEST(MaxPoolTime, TiesGoToEarliestAndPadWinsWhenLarger)
{
    TensorD x({1, 3}, std::vector<double>{2.0, 2.0, -1.0});
    const auto r = maxpool_time_forward(x);
    EXPECT_EQ(r.winners[0], 0u);
    EXPECT_EQ(r.winners[1], kPadWinner);
    EXPECT_EQ(r.output(0, 1), 0.0);
    const auto g = maxpool_backward(TensorD({1, 2}, std::vector<double>{3.0, 4.0}), r.winners, x.shape());
    EXPECT_EQ(flat(g), (std::vector<double>{3.0, 0.0, 0.0}));
}

TEST(MaxPoolChannels, MatchesBruteForce)
{
    Rng rng(5);
    TensorD x({40, 7});
    randomize(x, rng);
    const auto r = maxpool_channels_forward(x, 10);
    ASSERT_EQ(r.output.shape(), (Shape{4, 7}));
    for (std::size_t g = 0; g < 4; ++g) {
        for (std::size_t t = 0; t < 7; ++t) {
            double best = -1e300;
            for (std::size_t c = 10 * g; c < 10 * g + 10; ++c) {
                best = std::max(best, x(c, t));
            }
            EXPECT_EQ(r.output(g, t), best);
        }
    }
    TensorD dy({4, 7}, 1.0);
    const auto dx = maxpool_backward(dy, r.winners, x.shape());
    double total = 0.0;
    for (double v : dx.values()) {
        total += v;
    }
    EXPECT_EQ(total, 28.0);
    EXPECT_THROW(maxpool_channels_forward(x, 7), ShapeError);
}

TEST(Flatten, RowMajorOrder)
{
    TensorD x({2, 3}, std::vector<double>{1, 2, 3, 4, 5, 6});
    const auto f = flatten(x);
    EXPECT_EQ(f.shape(), (Shape{6}));
    EXPECT_EQ(f[4], x(1, 1));
}

TEST(Dropout, EvalIsIdentityTrainIsInverted)
{
    Rng rng(6);
    TensorD x({100, 100}, 1.0);
    const auto eval = dropout_forward(x, 0.9, Mode::Eval, rng);
    EXPECT_EQ(eval.output, x);
    EXPECT_TRUE(eval.mask.empty());

    const auto train = dropout_forward(x, 0.9, Mode::Train, rng);
    double sum = 0.0;
    std::size_t zeros = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double v = train.output[i];
        EXPECT_TRUE(v == 0.0 || std::abs(v - 1.0 / 0.9) < 1e-12);
        zeros += v == 0.0;
        sum += v;
    }
    EXPECT_NEAR(static_cast<double>(zeros) / x.size(), 0.1, 0.01);
    EXPECT_NEAR(sum / x.size(), 1.0, 0.015);
    const auto g = dropout_backward(TensorD({100, 100}, 2.0), train.mask);
    for (std::size_t i = 0; i < x.size(); ++i) {
        EXPECT_EQ(g[i], 2.0 * train.mask[i]);
    }
}

TEST(Gru, MatchesHandWrittenRecurrence)
{
    Rng rng(7);
    const std::size_t D = 4, H = 3, L = 5;
    auto p = GRUParams<double>::zeros(D, H);
    for (auto* t : {&p.W_z, &p.W_r, &p.W_h, &p.U_z, &p.U_r, &p.U_h, &p.b_z, &p.b_r, &p.b_h}) {
        randomize(*t, rng, 0.5);
    }
    TensorD x({L, D});
    randomize(x, rng);
    const auto cache = gru_forward(x, p);
    const auto out = cache.outputs();

    std::vector<double> h(H, 0.0);
    for (std::size_t t = 0; t < L; ++t) {
        std::vector<double> z(H), r(H), c(H);
        for (std::size_t i = 0; i < H; ++i) {
            double az = p.b_z[i], ar = p.b_r[i];
            for (std::size_t j = 0; j < D; ++j) {
                az += p.W_z(i, j) * x(t, j);
                ar += p.W_r(i, j) * x(t, j);
            }
            for (std::size_t j = 0; j < H; ++j) {
                az += p.U_z(i, j) * h[j];
                ar += p.U_r(i, j) * h[j];
            }
            z[i] = sigmoid(az);
            r[i] = sigmoid(ar);
        }
        for (std::size_t i = 0; i < H; ++i) {
            double ac = p.b_h[i];
            for (std::size_t j = 0; j < D; ++j) {
                ac += p.W_h(i, j) * x(t, j);
            }
            for (std::size_t j = 0; j < H; ++j) {
                ac += p.U_h(i, j) * (r[j] * h[j]);
            }
            c[i] = std::tanh(ac);
        }
        for (std::size_t i = 0; i < H; ++i) {
            h[i] = (1.0 - z[i]) * h[i] + z[i] * c[i];
            EXPECT_NEAR(out(t, i), h[i], 1e-13) << "t=" << t << " i=" << i;
        }
    }
}

TEST(Gru, BackpropThroughTimeMatchesFiniteDifferences)
{
    Rng rng(8);
    const std::size_t D = 5, H = 4, L = 6;
    auto p = GRUParams<double>::zeros(D, H);
    for (auto* t : {&p.W_z, &p.W_r, &p.W_h, &p.U_z, &p.U_r, &p.U_h, &p.b_z, &p.b_r, &p.b_h}) {
        randomize(*t, rng, 0.5);
    }
    TensorD x({L, D});
    randomize(x, rng);
    TensorD w({L, H});
    randomize(w, rng);
    auto g = GRUParams<double>::zeros(D, H);
    TensorD gx({L, D});
    auto objective = [&](bool with_gradient) {
        const auto cache = gru_forward(x, p);
        if (with_gradient) {
            for (auto* t : {&g.W_z, &g.W_r, &g.W_h, &g.U_z, &g.U_r, &g.U_h, &g.b_z, &g.b_r, &g.b_h}) {
                t->fill(0.0);
            }
            assign(gx, gru_backward(x, p, cache, w, g));
        }
        return Probe{dot(cache.outputs(), w), 0};
    };
    const auto report = finite_difference_gradcheck(
        objective, {slot("W_z", p.W_z, g.W_z), slot("W_r", p.W_r, g.W_r), slot("W_h", p.W_h, g.W_h),
                    slot("U_z", p.U_z, g.U_z), slot("U_r", p.U_r, g.U_r), slot("U_h", p.U_h, g.U_h),
                    slot("b_z", p.b_z, g.b_z), slot("b_r", p.b_r, g.b_r), slot("b_h", p.b_h, g.b_h),
                    slot("x", x, gx)});
    for (const auto& t : report.tensors) {
        EXPECT_LT(t.max_relative_error, 1e-6) << t.name;
    }
}

TEST(Attention, MatchesDirectFormulaAndGradients)
{
    Rng rng(9);
    const std::size_t L = 7, H = 4;
    TensorD h({L, H});
    randomize(h, rng);
    AttentionParams<double> p{TensorD({H})};
    randomize(p.w, rng);

    const auto res = attention_pool_forward(h, p);
    std::vector<double> scores(L);
    for (std::size_t i = 0; i < L; ++i) {
        for (std::size_t k = 0; k < H; ++k) {
            scores[i] += p.w[k] * h(i, k);
        }
    }
    const auto alpha = softmax_stable<double>(scores);
    for (std::size_t k = 0; k < H; ++k) {
        double r = 0.0;
        for (std::size_t i = 0; i < L; ++i) {
            r += alpha[i] * h(i, k);
        }
        EXPECT_NEAR(res.pooled[k], r, 1e-14);
    }

    TensorD c({H});
    randomize(c, rng);
    AttentionParams<double> g{TensorD({H})};
    TensorD gh({L, H});
    auto objective = [&](bool with_gradient) {
        const auto out = attention_pool_forward(h, p);
        if (with_gradient) {
            g.w.fill(0.0);
            assign(gh, attention_pool_backward(h, p, out.alphas, c, g));
        }
        return Probe{dot(out.pooled, c), 0};
    };
    const auto report = finite_difference_gradcheck(objective, {slot("w", p.w, g.w), slot("h", h, gh)});
    EXPECT_LT(report.worst(), 1e-7);
}

TEST(Attention, ZeroVectorGivesExactlyUniformWeights)
{
    Rng rng(10);
    for (std::size_t L : {1u, 3u, 7u, 50u}) {
        TensorD h({L, 5});
        randomize(h, rng);
        const auto res = attention_pool_forward(h, AttentionParams<double>{TensorD({5})});
        for (double a : res.alphas) {
            EXPECT_EQ(a, 1.0 / static_cast<double>(L));
        }
    }
}

TEST(LastPool, PicksFinalRowAndRoutesGradient)
{
    TensorD h({3, 2}, std::vector<double>{1, 2, 3, 4, 5, 6});
    EXPECT_EQ(last_pool_forward(h), TensorD::vector({5, 6}));
    const auto g = last_pool_backward(TensorD::vector({7.0, 8.0}), 3);
    EXPECT_EQ(flat(g), (std::vector<double>{0, 0, 0, 0, 7, 8}));
}

TEST(DenseSoftmax, MatchesDirectFormulaAndGradients)
{
    Rng rng(11);
    HeadParams<double> p{TensorD({3, 6}), TensorD({3})};
    randomize(p.W, rng);
    randomize(p.b, rng);
    TensorD r({6});
    randomize(r, rng);
    const auto probs = dense_softmax_forward(r, p);
    std::vector<double> logits(3);
    for (std::size_t k = 0; k < 3; ++k) {
        logits[k] = p.b[k];
        for (std::size_t j = 0; j < 6; ++j) {
            logits[k] += p.W(k, j) * r[j];
        }
    }
    const auto ref = softmax_stable<double>(logits);
    for (std::size_t k = 0; k < 3; ++k) {
        EXPECT_NEAR(probs[k], ref[k], 1e-15);
    }

    HeadParams<double> g{TensorD({3, 6}), TensorD({3})};
    TensorD gr({6});
    auto objective = [&](bool with_gradient) {
        const auto pr = dense_softmax_forward(r, p);
        if (with_gradient) {
            g.W.fill(0.0);
            g.b.fill(0.0);
            const auto dp = cross_entropy_grad<double>(pr, 2);
            assign(gr, dense_softmax_backward(r, p, pr, dp, g));
        }
        return Probe{cross_entropy<double>(pr, 2), 0};
    };
    const auto report =
        finite_difference_gradcheck(objective, {slot("W", p.W, g.W), slot("b", p.b, g.b), slot("r", r, gr)});
    EXPECT_LT(report.worst(), 1e-7);
}

TEST(Glorot, WithinLimitAndSeeded)
{
    Rng a(12);
    Rng b(12);
    TensorD x({20, 30});
    TensorD y({20, 30});
    glorot_uniform(x, 30, 20, a);
    glorot_uniform(y, 30, 20, b);
    EXPECT_EQ(x, y);
    const double limit = std::sqrt(6.0 / 50.0);
    for (double v : x.values()) {
        EXPECT_LE(std::abs(v), limit);
    }
}

TEST(Gradcheck, DetectsWrongGradient)
{
    TensorD x = TensorD::vector({0.3, -0.7});
    TensorD g({2});
    auto objective = [&](bool with_gradient) {
        if (with_gradient) {
            g[0] = 2.0 * x[0];
            g[1] = 3.0 * x[1]; // wrong on purpose
        }
        return Probe{x[0] * x[0] + x[1] * x[1], 0};
    };
    const auto report = finite_difference_gradcheck(objective, {slot("x", x, g)});
    EXPECT_FALSE(report.passed(1e-4));
    EXPECT_EQ(report.tensors[0].worst_index, 1u);
}

TEST(Gradcheck, SkipsCoordinatesThatCrossAKink)
{
    // |x| at x = 1e-6 straddles the kink at 0 for eps = 1e-5.
    TensorD x = TensorD::vector({1e-6, 0.5});
    TensorD g({2});
    auto objective = [&](bool with_gradient) {
        if (with_gradient) {
            g[0] = x[0] > 0 ? 1.0 : -1.0;
            g[1] = x[1] > 0 ? 1.0 : -1.0;
        }
        std::uint64_t pattern = (x[0] > 0 ? 1u : 0u) | (x[1] > 0 ? 2u : 0u);
        return Probe{std::abs(x[0]) + std::abs(x[1]), pattern};
    };
    const auto report = finite_difference_gradcheck(objective, {slot("x", x, g)});
    EXPECT_EQ(report.tensors[0].skipped_kinks, 1u);
    EXPECT_EQ(report.tensors[0].checked, 1u);
    EXPECT_TRUE(report.passed(1e-8));
}

TEST(Gradcheck, ReprobesKinkedCoordinatesOnTheBasePiece)
{
    TensorD x = TensorD::vector({1e-6, 0.5});
    TensorD g({2});
    std::vector<double> base_sign(2);
    auto objective = [&](bool with_gradient) {
        if (with_gradient) {
            for (std::size_t i = 0; i < 2; ++i) {
                base_sign[i] = x[i] > 0 ? 1.0 : -1.0;
                g[i] = base_sign[i];
            }
        }
        std::uint64_t pattern = (x[0] > 0 ? 1u : 0u) | (x[1] > 0 ? 2u : 0u);
        return Probe{std::abs(x[0]) + std::abs(x[1]), pattern};
    };
    auto frozen = [&]() { return static_cast<long double>(base_sign[0] * x[0] + base_sign[1] * x[1]); };
    const auto report = finite_difference_gradcheck(objective, {slot("x", x, g)}, {}, frozen);
    EXPECT_EQ(report.tensors[0].checked, 2u);
    EXPECT_EQ(report.tensors[0].frozen, 1u);
    EXPECT_EQ(report.tensors[0].skipped_kinks, 0u);
    EXPECT_TRUE(report.passed(1e-8));

    // A frozen piece that misses the gradient is caught, not excused.
    g[0] = 0.5;
    auto wrong = [&](bool) {
        std::uint64_t pattern = (x[0] > 0 ? 1u : 0u) | (x[1] > 0 ? 2u : 0u);
        return Probe{std::abs(x[0]) + std::abs(x[1]), pattern};
    };
    const auto caught = finite_difference_gradcheck(wrong, {slot("x", x, g)}, {}, frozen);
    EXPECT_FALSE(caught.passed(1e-4));

    auto off = [&]() { return frozen() + 1.0L; };
    EXPECT_THROW(finite_difference_gradcheck(objective, {slot("x", x, g)}, {}, off), std::invalid_argument);
}

TEST(ReluFrozen, FollowsTheGivenMask)
{
    const auto x = TensorD::vector({-1.0, 2.0, 3.0, 0.0});
    EXPECT_EQ(relu_mask(x), (std::vector<std::uint8_t>{0, 1, 1, 0}));
    EXPECT_EQ(relu_frozen(x, {1, 0, 1, 1}), TensorD::vector({-1.0, 0.0, 3.0, 0.0}));
    EXPECT_THROW(relu_frozen(x, {1, 0}), std::invalid_argument);
}

TEST(MaxPoolGather, ReproducesForwardFromItsWinners)
{
    Rng rng(5);
    TensorD x({4, 7});
    randomize(x, rng);
    const auto time = maxpool_time_forward(x);
    EXPECT_EQ(maxpool_gather(x, time.winners, time.output.shape()), time.output);
    const auto channels = maxpool_channels_forward(x, 2);
    EXPECT_EQ(maxpool_gather(x, channels.winners, channels.output.shape()), channels.output);
    EXPECT_EQ(maxpool_gather(x, {3, kPadWinner}, {2}), TensorD::vector({x[3], 0.0}));
}

TEST(Gradcheck, RejectsNondeterministicObjective)
{
    TensorD x = TensorD::vector({1.0});
    TensorD g({1});
    int calls = 0;
    auto objective = [&](bool) { return Probe{static_cast<long double>(++calls), 0}; };
    EXPECT_THROW(finite_difference_gradcheck(objective, {slot("x", x, g)}), std::invalid_argument);
}
