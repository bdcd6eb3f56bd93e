#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ser/data.hpp"
#include "ser/layers.hpp"

namespace ser {

enum class Variant { STL, STL_ATT, MTL, MTL_ATT };

std::string variant_name(Variant variant);
Variant parse_variant(const std::string& name);
bool uses_attention(Variant variant);

class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct ModelConfig {
    Variant variant = Variant::MTL_ATT;
    std::vector<Task> tasks{Task::Arousal, Task::Valence, Task::Dominance};
    std::size_t hidden = 128;
    std::size_t conv_filters = 40;
    std::size_t conv_width = 40;
    std::size_t channel_pool = 10;
    double keep_prob = 0.9;
    std::uint64_t seed = 1;

    // Throws ConfigError when the variant/task combination or a size is invalid.
    void validate() const;

    // Length of the per-segment representation fed to the first GRU
    // (1280 for the default sizes: 4 maps x 320 frames).
    std::size_t segment_feature_size() const;

    bool operator==(const ModelConfig&) const = default;
};

template <typename T>
struct TaskBranch {
    Task task = Task::Arousal;
    std::optional<nn::AttentionParams<T>> attention;
    nn::HeadParams<T> head;
};

// Shared trunk (conv1, conv2, gru1, gru2) plus one branch per task.
template <typename T>
struct ModelParams {
    ModelConfig config;
    nn::Conv1DParams<T> conv1;
    nn::Conv1DParams<T> conv2;
    nn::GRUParams<T> gru1;
    nn::GRUParams<T> gru2;
    std::vector<TaskBranch<T>> branches;

    // Visits every tensor in a fixed order as f(name, tensor, is_bias).
    template <typename F>
    void for_each(F&& f)
    {
        visit(*this, f);
    }
    template <typename F>
    void for_each(F&& f) const
    {
        visit(*this, f);
    }

    // Same structure with every entry zero.
    ModelParams zeros_like() const;

    template <typename U>
    ModelParams<U> cast() const;

    std::size_t parameter_count() const;
    std::size_t trunk_parameter_count() const;
    const TaskBranch<T>& branch(Task task) const;
    TaskBranch<T>& branch(Task task);

private:
    template <typename Self, typename F>
    static void visit(Self& self, F& f)
    {
        auto conv = [&f](const std::string& prefix, auto& c) {
            f(prefix + ".kernels", c.kernels, false);
            f(prefix + ".bias", c.bias, true);
        };
        auto gru = [&f](const std::string& prefix, auto& g) {
            f(prefix + ".W_z", g.W_z, false);
            f(prefix + ".W_r", g.W_r, false);
            f(prefix + ".W_h", g.W_h, false);
            f(prefix + ".U_z", g.U_z, false);
            f(prefix + ".U_r", g.U_r, false);
            f(prefix + ".U_h", g.U_h, false);
            f(prefix + ".b_z", g.b_z, true);
            f(prefix + ".b_r", g.b_r, true);
            f(prefix + ".b_h", g.b_h, true);
        };
        conv("conv1", self.conv1);
        conv("conv2", self.conv2);
        gru("gru1", self.gru1);
        gru("gru2", self.gru2);
        for (auto& branch : self.branches) {
            const std::string task = task_name(branch.task);
            if (branch.attention) {
                f("attention." + task + ".w", branch.attention->w, false);
            }
            f("head." + task + ".W", branch.head.W, false);
            f("head." + task + ".b", branch.head.b, true);
        }
    }
};

// Glorot-uniform matrices and kernels, zero biases, zero attention vectors.
// The trunk draws from a stream that depends only on the seed, each branch
// from a stream keyed by (seed, task), so single- and multi-task models with
// the same seed start from the same trunk and the same per-task heads.
template <typename T>
ModelParams<T> build_model(const ModelConfig& config);

// Per-segment activations kept for the backward pass.
template <typename T>
struct SegmentCache {
    BasicTensor<T> input;       // 1 x 640
    BasicTensor<T> conv1_pre;   // F x 640
    nn::PoolResult<T> pool1;    // F x 320
    BasicTensor<T> conv2_pre;   // F x 320
    std::vector<std::uint32_t> pool2_winners;
};

template <typename T>
struct ForwardCache {
    std::vector<SegmentCache<T>> segments;
    BasicTensor<T> features;    // L x D before dropout
    BasicTensor<T> dropped;     // L x D after dropout
    std::vector<T> dropout_mask;
    nn::GRUCache<T> gru1;
    BasicTensor<T> hidden1;     // L x H
    nn::GRUCache<T> gru2;
    BasicTensor<T> hidden2;     // L x H
    std::vector<BasicTensor<T>> pooled; // per branch
    bool frozen = false;
};

template <typename T>
struct ForwardOutput {
    std::vector<Task> tasks;
    std::vector<std::vector<T>> probs;   // per task, 3 classes
    std::vector<std::vector<T>> alphas;  // per task, length L (attention variants only)
    std::size_t length = 0;
    // Fingerprint of the ReLU masks and max-pool winners; set only on request.
    std::uint64_t pattern = 0;
    ForwardCache<T> cache;
};

// The piecewise-linear regime of a forward pass: per segment, the on/off
// pattern of both ReLUs and the winners of both max pools.
struct Regime {
    struct Segment {
        std::vector<std::uint8_t> conv1_on;
        std::vector<std::uint32_t> pool1_winners;
        std::vector<std::uint8_t> conv2_on;
        std::vector<std::uint32_t> pool2_winners;
    };
    std::vector<Segment> segments;
};

template <typename T>
Regime regime_of(const ForwardCache<T>& cache);

struct ForwardOptions {
    nn::Mode mode = nn::Mode::Eval;
    bool keep_cache = false;
    bool fingerprint = false;
    // Evaluate the smooth piece of this regime: ReLUs and pools follow the
    // stored pattern instead of the current values. Value-only: backward()
    // rejects the result.
    const Regime* frozen = nullptr;
};

// segments: L x 640 standardized windows. Throws DataError for L == 0.
template <typename T>
ForwardOutput<T> forward(const ModelParams<T>& params, const BasicTensor<T>& segments, const ForwardOptions& options,
                         Rng* rng = nullptr);

// Accumulates parameter gradients given dL/dprobs for every task branch.
// `out` must come from forward() with keep_cache set.
template <typename T>
void backward(const ModelParams<T>& params, const ForwardOutput<T>& out,
              const std::vector<std::vector<T>>& grad_probs, ModelParams<T>& grads);

// Checkpoint file: magic, format version, config as JSON, then a table of
// (name, dtype, shape, little-endian buffer) per tensor.
class CheckpointError : public std::runtime_error {
public:
    enum class Kind { Io, BadMagic, VersionMismatch, BadConfig, ShapeMismatch, Truncated, TaskMismatch };

    CheckpointError(Kind kind, const std::string& message) : std::runtime_error(message), kind_(kind) {}
    Kind kind() const { return kind_; }

private:
    Kind kind_;
};

inline constexpr char kCheckpointMagic[8] = {'S', 'E', 'R', 'C', 'K', 'P', 'T', '\0'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

template <typename T>
void save_checkpoint(const ModelParams<T>& params, const std::filesystem::path& path);

template <typename T>
ModelParams<T> load_checkpoint(const std::filesystem::path& path);

// Throws CheckpointError(TaskMismatch) unless the model predicts exactly `tasks`.
template <typename T>
void require_tasks(const ModelParams<T>& params, const std::vector<Task>& tasks);

template <typename T>
template <typename U>
ModelParams<U> ModelParams<T>::cast() const
{
    auto conv = [](const nn::Conv1DParams<T>& c) {
        return nn::Conv1DParams<U>{c.kernels.template cast<U>(), c.bias.template cast<U>()};
    };
    auto gru = [](const nn::GRUParams<T>& g) {
        nn::GRUParams<U> out;
        out.W_z = g.W_z.template cast<U>();
        out.W_r = g.W_r.template cast<U>();
        out.W_h = g.W_h.template cast<U>();
        out.U_z = g.U_z.template cast<U>();
        out.U_r = g.U_r.template cast<U>();
        out.U_h = g.U_h.template cast<U>();
        out.b_z = g.b_z.template cast<U>();
        out.b_r = g.b_r.template cast<U>();
        out.b_h = g.b_h.template cast<U>();
        return out;
    };
    ModelParams<U> out;
    out.config = config;
    out.conv1 = conv(conv1);
    out.conv2 = conv(conv2);
    out.gru1 = gru(gru1);
    out.gru2 = gru(gru2);
    for (const auto& branch : branches) {
        TaskBranch<U> b;
        b.task = branch.task;
        if (branch.attention) {
            b.attention = nn::AttentionParams<U>{branch.attention->w.template cast<U>()};
        }
        b.head = nn::HeadParams<U>{branch.head.W.template cast<U>(), branch.head.b.template cast<U>()};
        out.branches.push_back(std::move(b));
    }
    return out;
}

std::string config_to_json(const ModelConfig& config);
ModelConfig config_from_json(const std::string& text);

} // namespace ser
