#include "ser/model.hpp"

#include <algorithm>
#include <set>

#include "ser/numeric.hpp"

namespace ser {

std::string variant_name(Variant variant)
{
    switch (variant) {
    case Variant::STL:
        return "STL";
    case Variant::STL_ATT:
        return "STL_ATT";
    case Variant::MTL:
        return "MTL";
    case Variant::MTL_ATT:
        return "MTL_ATT";
    }
    return "unknown";
}

Variant parse_variant(const std::string& name)
{
    for (Variant v : {Variant::STL, Variant::STL_ATT, Variant::MTL, Variant::MTL_ATT}) {
        std::string alias = variant_name(v);
        if (const auto pos = alias.find("_ATT"); pos != std::string::npos) {
            alias.replace(pos, 4, "+att");
        }
        if (variant_name(v) == name || alias == name) {
            return v;
        }
    }
    throw ConfigError("unknown model variant '" + name + "' (expected STL, STL_ATT, MTL or MTL_ATT; STL+att and MTL+att are accepted too)");
}

bool uses_attention(Variant variant)
{
    return variant == Variant::STL_ATT || variant == Variant::MTL_ATT;
}

void ModelConfig::validate() const
{
    if (tasks.empty()) {
        throw ConfigError("model needs at least one task");
    }
    std::set<Task> unique(tasks.begin(), tasks.end());
    if (unique.size() != tasks.size()) {
        throw ConfigError("model task list contains duplicates");
    }
    const bool single = variant == Variant::STL || variant == Variant::STL_ATT;
    if (single && tasks.size() != 1) {
        throw ConfigError("variant " + variant_name(variant) + " needs exactly 1 task, got " +
                          std::to_string(tasks.size()));
    }
    if (!single && tasks.size() < 2) {
        throw ConfigError("variant " + variant_name(variant) + " needs at least 2 tasks, got " +
                          std::to_string(tasks.size()));
    }
    if (hidden == 0 || conv_filters == 0 || conv_width == 0 || channel_pool == 0) {
        throw ConfigError("model sizes must be positive");
    }
    if (conv_filters % channel_pool != 0) {
        throw ConfigError("conv_filters (" + std::to_string(conv_filters) + ") must be divisible by channel_pool (" +
                          std::to_string(channel_pool) + ")");
    }
    if (!(keep_prob > 0.0 && keep_prob <= 1.0)) {
        throw ConfigError("keep_prob must be in (0, 1]");
    }
}

std::size_t ModelConfig::segment_feature_size() const
{
    return (conv_filters / channel_pool) * ((kWindowSamples + 1) / 2);
}

template <typename T>
ModelParams<T> ModelParams<T>::zeros_like() const
{
    ModelParams out = *this;
    out.for_each([](const std::string&, BasicTensor<T>& t, bool) { t.fill(T{0}); });
    return out;
}

template <typename T>
std::size_t ModelParams<T>::parameter_count() const
{
    std::size_t total = 0;
    for_each([&total](const std::string&, const BasicTensor<T>& t, bool) { total += t.size(); });
    return total;
}

template <typename T>
std::size_t ModelParams<T>::trunk_parameter_count() const
{
    std::size_t total = 0;
    for_each([&total](const std::string& name, const BasicTensor<T>& t, bool) {
        if (name.starts_with("conv") || name.starts_with("gru")) {
            total += t.size();
        }
    });
    return total;
}

template <typename T>
const TaskBranch<T>& ModelParams<T>::branch(Task task) const
{
    for (const auto& b : branches) {
        if (b.task == task) {
            return b;
        }
    }
    throw ConfigError("model has no branch for task " + task_name(task));
}

template <typename T>
TaskBranch<T>& ModelParams<T>::branch(Task task)
{
    return const_cast<TaskBranch<T>&>(std::as_const(*this).branch(task));
}

namespace {

constexpr std::uint64_t kTrunkStream = 0x7472756e6bULL;
constexpr std::uint64_t kBranchStream = 0x6272616e6368ULL;

template <typename T>
void init_gru(nn::GRUParams<T>& gru, Rng& rng)
{
    const std::size_t in = gru.input_size();
    const std::size_t hidden = gru.hidden_size();
    for (auto* w : {&gru.W_z, &gru.W_r, &gru.W_h}) {
        nn::glorot_uniform(*w, in, hidden, rng);
    }
    for (auto* u : {&gru.U_z, &gru.U_r, &gru.U_h}) {
        nn::glorot_uniform(*u, hidden, hidden, rng);
    }
}

} // namespace

template <typename T>
ModelParams<T> build_model(const ModelConfig& config)
{
    config.validate();
    ModelParams<T> params;
    params.config = config;
    const std::size_t filters = config.conv_filters;
    const std::size_t width = config.conv_width;
    params.conv1 = nn::Conv1DParams<T>::zeros(filters, 1, width);
    params.conv2 = nn::Conv1DParams<T>::zeros(filters, filters, width);
    params.gru1 = nn::GRUParams<T>::zeros(config.segment_feature_size(), config.hidden);
    params.gru2 = nn::GRUParams<T>::zeros(config.hidden, config.hidden);

    Rng trunk(config.seed, {kTrunkStream});
    nn::glorot_uniform(params.conv1.kernels, width, filters * width, trunk);
    nn::glorot_uniform(params.conv2.kernels, filters * width, filters * width, trunk);
    init_gru(params.gru1, trunk);
    init_gru(params.gru2, trunk);

    for (Task task : config.tasks) {
        TaskBranch<T> branch;
        branch.task = task;
        if (uses_attention(config.variant)) {
            branch.attention = nn::AttentionParams<T>{BasicTensor<T>({config.hidden})};
        }
        branch.head.W = BasicTensor<T>({static_cast<std::size_t>(kNumClasses), config.hidden});
        branch.head.b = BasicTensor<T>({static_cast<std::size_t>(kNumClasses)});
        Rng rng(config.seed, {kBranchStream, static_cast<std::uint64_t>(task)});
        nn::glorot_uniform(branch.head.W, config.hidden, kNumClasses, rng);
        params.branches.push_back(std::move(branch));
    }
    return params;
}

namespace {

void mix_mask(std::uint64_t& hash, const auto& values)
{
    std::uint64_t word = 0;
    std::size_t bits = 0;
    for (const auto v : values) {
        word = (word << 1) | (v > 0 ? 1u : 0u);
        if (++bits == 64) {
            hash = fnv1a64(&word, sizeof(word), hash);
            word = 0;
            bits = 0;
        }
    }
    hash = fnv1a64(&word, sizeof(word), hash);
}

void mix_winners(std::uint64_t& hash, const std::vector<std::uint32_t>& winners)
{
    hash = fnv1a64(winners.data(), winners.size() * sizeof(std::uint32_t), hash);
}

} // namespace

template <typename T>
ForwardOutput<T> forward(const ModelParams<T>& params, const BasicTensor<T>& segments, const ForwardOptions& options,
                         Rng* rng)
{
    const auto& config = params.config;
    if (segments.rank() != 2 || segments.dim(1) != kWindowSamples) {
        throw DataError("forward: segments must be L x " + std::to_string(kWindowSamples) + ", got " +
                        shape_to_string(segments.shape()));
    }
    const std::size_t length = segments.dim(0);
    const std::size_t features = config.segment_feature_size();

    ForwardOutput<T> out;
    out.length = length;
    std::uint64_t pattern = 14695981039346656037ULL;

    ForwardCache<T> cache;
    cache.features = BasicTensor<T>({length, features});
    if (options.keep_cache) {
        cache.segments.reserve(length);
    }
    if (options.frozen != nullptr) {
        cache.frozen = true;
        if (options.frozen->segments.size() != length) {
            throw std::invalid_argument("forward: frozen regime has " +
                                        std::to_string(options.frozen->segments.size()) + " segments, input " +
                                        std::to_string(length));
        }
    }
    for (std::size_t i = 0; i < length; ++i) {
        const auto row = segments.row(i);
        BasicTensor<T> input({1, kWindowSamples}, std::vector<T>(row.begin(), row.end()));
        const Regime::Segment* fixed = options.frozen ? &options.frozen->segments[i] : nullptr;
        BasicTensor<T> conv1_pre = nn::conv1d_forward(input, params.conv1);
        nn::PoolResult<T> pool1;
        if (fixed) {
            const Shape shape{conv1_pre.dim(0), (conv1_pre.dim(1) + 1) / 2};
            pool1 = {nn::maxpool_gather(nn::relu_frozen(conv1_pre, fixed->conv1_on), fixed->pool1_winners, shape),
                     fixed->pool1_winners};
        } else {
            pool1 = nn::maxpool_time_forward(nn::relu_forward(conv1_pre));
        }
        BasicTensor<T> conv2_pre = nn::conv1d_forward(pool1.output, params.conv2);
        nn::PoolResult<T> pool2;
        if (fixed) {
            const Shape shape{conv2_pre.dim(0) / config.channel_pool, conv2_pre.dim(1)};
            pool2 = {nn::maxpool_gather(nn::relu_frozen(conv2_pre, fixed->conv2_on), fixed->pool2_winners, shape),
                     fixed->pool2_winners};
        } else {
            pool2 = nn::maxpool_channels_forward(nn::relu_forward(conv2_pre), config.channel_pool);
        }
        std::copy(pool2.output.values().begin(), pool2.output.values().end(), cache.features.row(i).begin());

        if (options.fingerprint) {
            mix_mask(pattern, conv1_pre.values());
            mix_winners(pattern, pool1.winners);
            mix_mask(pattern, conv2_pre.values());
            mix_winners(pattern, pool2.winners);
        }
        if (options.keep_cache) {
            cache.segments.push_back(SegmentCache<T>{std::move(input), std::move(conv1_pre), std::move(pool1),
                                                     std::move(conv2_pre), std::move(pool2.winners)});
        }
    }

    if (options.mode == nn::Mode::Train && rng == nullptr && config.keep_prob < 1.0) {
        throw std::invalid_argument("forward: train mode needs a random stream for dropout");
    }
    Rng unused(0);
    auto dropped = nn::dropout_forward(cache.features, config.keep_prob, options.mode, rng ? *rng : unused);
    cache.dropped = std::move(dropped.output);
    cache.dropout_mask = std::move(dropped.mask);

    cache.gru1 = nn::gru_forward(cache.dropped, params.gru1);
    cache.hidden1 = cache.gru1.outputs();
    cache.gru2 = nn::gru_forward(cache.hidden1, params.gru2);
    cache.hidden2 = cache.gru2.outputs();

    for (const auto& branch : params.branches) {
        out.tasks.push_back(branch.task);
        BasicTensor<T> pooled;
        if (branch.attention) {
            auto att = nn::attention_pool_forward(cache.hidden2, *branch.attention);
            pooled = std::move(att.pooled);
            out.alphas.push_back(std::move(att.alphas));
        } else {
            pooled = nn::last_pool_forward(cache.hidden2);
        }
        out.probs.push_back(nn::dense_softmax_forward(pooled, branch.head));
        cache.pooled.push_back(std::move(pooled));
    }

    out.pattern = options.fingerprint ? pattern : 0;
    if (options.keep_cache) {
        out.cache = std::move(cache);
    }
    return out;
}

template <typename T>
void backward(const ModelParams<T>& params, const ForwardOutput<T>& out,
              const std::vector<std::vector<T>>& grad_probs, ModelParams<T>& grads)
{
    const auto& cache = out.cache;
    if (cache.segments.size() != out.length) {
        throw std::logic_error("backward: forward output was produced without keep_cache");
    }
    if (cache.frozen) {
        throw std::logic_error("backward: forward output was produced on a frozen regime");
    }
    if (grad_probs.size() != params.branches.size()) {
        throw std::invalid_argument("backward: expected one probability gradient per task branch");
    }
    const auto& config = params.config;
    const std::size_t length = out.length;
    const std::size_t hidden = config.hidden;

    BasicTensor<T> d_hidden2({length, hidden});
    for (std::size_t b = 0; b < params.branches.size(); ++b) {
        const auto& branch = params.branches[b];
        auto& gbranch = grads.branches[b];
        const BasicTensor<T> d_pooled =
            nn::dense_softmax_backward(cache.pooled[b], branch.head, out.probs[b], grad_probs[b], gbranch.head);
        BasicTensor<T> d_seq;
        if (branch.attention) {
            d_seq = nn::attention_pool_backward(cache.hidden2, *branch.attention, out.alphas[b], d_pooled,
                                                *gbranch.attention);
        } else {
            d_seq = nn::last_pool_backward(d_pooled, length);
        }
        for (std::size_t i = 0; i < d_seq.size(); ++i) {
            d_hidden2[i] += d_seq[i];
        }
    }

    const BasicTensor<T> d_hidden1 = nn::gru_backward(cache.hidden1, params.gru2, cache.gru2, d_hidden2, grads.gru2);
    const BasicTensor<T> d_dropped = nn::gru_backward(cache.dropped, params.gru1, cache.gru1, d_hidden1, grads.gru1);
    const BasicTensor<T> d_features = nn::dropout_backward(d_dropped, cache.dropout_mask);

    const std::size_t groups = config.conv_filters / config.channel_pool;
    const std::size_t pooled_len = (kWindowSamples + 1) / 2;
    for (std::size_t i = 0; i < length; ++i) {
        const auto& seg = cache.segments[i];
        const auto row = d_features.row(i);
        const BasicTensor<T> d_pool2({groups, pooled_len}, std::vector<T>(row.begin(), row.end()));
        const BasicTensor<T> d_relu2 = nn::maxpool_backward(d_pool2, seg.pool2_winners, seg.conv2_pre.shape());
        const BasicTensor<T> d_conv2 = nn::relu_backward(seg.conv2_pre, d_relu2);
        const BasicTensor<T> d_pool1 =
            nn::conv1d_backward(seg.pool1.output, params.conv2, d_conv2, grads.conv2, true);
        const BasicTensor<T> d_relu1 = nn::maxpool_backward(d_pool1, seg.pool1.winners, seg.conv1_pre.shape());
        const BasicTensor<T> d_conv1 = nn::relu_backward(seg.conv1_pre, d_relu1);
        nn::conv1d_backward(seg.input, params.conv1, d_conv1, grads.conv1, false);
    }
}

template <typename T>
void require_tasks(const ModelParams<T>& params, const std::vector<Task>& tasks)
{
    std::vector<Task> have;
    for (const auto& b : params.branches) {
        have.push_back(b.task);
    }
    if (have != tasks) {
        auto join = [](const std::vector<Task>& list) {
            std::string s;
            for (Task t : list) {
                s += (s.empty() ? "" : ",") + task_name(t);
            }
            return s;
        };
        throw CheckpointError(CheckpointError::Kind::TaskMismatch,
                              "checkpoint predicts tasks [" + join(have) + "] but [" + join(tasks) + "] were requested");
    }
}

template <typename T>
Regime regime_of(const ForwardCache<T>& cache)
{
    Regime regime;
    for (const auto& seg : cache.segments) {
        regime.segments.push_back(
            {nn::relu_mask(seg.conv1_pre), seg.pool1.winners, nn::relu_mask(seg.conv2_pre), seg.pool2_winners});
    }
    return regime;
}

#define SER_INSTANTIATE_MODEL(T)                                                                               \
    template struct ModelParams<T>;                                                                            \
    template ModelParams<T> build_model<T>(const ModelConfig&);                                                \
    template ForwardOutput<T> forward(const ModelParams<T>&, const BasicTensor<T>&, const ForwardOptions&, Rng*); \
    template Regime regime_of(const ForwardCache<T>&);                                                          \
    template void backward(const ModelParams<T>&, const ForwardOutput<T>&, const std::vector<std::vector<T>>&, \
                           ModelParams<T>&);                                                                   \
    template void require_tasks(const ModelParams<T>&, const std::vector<Task>&);

SER_INSTANTIATE_MODEL(float)
SER_INSTANTIATE_MODEL(double)

#undef SER_INSTANTIATE_MODEL

} // namespace ser
