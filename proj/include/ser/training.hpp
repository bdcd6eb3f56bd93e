#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <vector>

#include "ser/data.hpp"
#include "ser/metrics.hpp"
#include "ser/model.hpp"

namespace ser {

class TrainingError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct MtlLossConfig {
    std::vector<double> task_weights{1.0, 1.0, 1.0}; // one per model task, in model task order
    double lambda = 1e-5;
    // Test hook: admits w_m == 0 to isolate a task's contribution.
    bool allow_zero_weight = false;

    void validate(std::size_t n_tasks) const;
};

struct Target {
    Task task;
    int level;
};

std::vector<Target> targets_for(const LabelTriple& labels, const std::vector<Task>& tasks);

template <typename T>
struct MtlLoss {
    T value = 0;     // data + regularizer
    T data = 0;      // sum_m w_m * CE_m
    T regularizer = 0; // lambda * R(theta)
    std::vector<std::vector<T>> grad_probs; // dJ/dprobs per task, in `tasks` order
};

// J = sum_m w_m * cross_entropy(probs_m, target_m) + lambda * R(theta), with R
// the sum of squared non-bias parameters. Throws std::invalid_argument when
// the task sets of outputs and targets differ.
template <typename T>
MtlLoss<T> mtl_loss(const std::vector<Task>& tasks, const std::vector<std::vector<T>>& probs,
                    const std::vector<Target>& targets, const MtlLossConfig& config, const ModelParams<T>& params);

// grads += scale * dR/dtheta * lambda, i.e. 2 * lambda * theta on non-bias tensors.
template <typename T>
void add_l2_gradient(const ModelParams<T>& params, double lambda, ModelParams<T>& grads, double scale = 1.0);

template <typename T>
T l2_penalty(const ModelParams<T>& params);

struct AdamOptions {
    double learning_rate = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

template <typename T>
struct AdamState {
    AdamOptions options;
    ModelParams<T> first_moment;
    ModelParams<T> second_moment;
    std::uint64_t step = 0;

    static AdamState init(const ModelParams<T>& params, const AdamOptions& options = {});
};

// One bias-corrected Adam update. Throws TrainingError naming the tensor on a
// non-finite gradient; parameters are left untouched in that case.
template <typename T>
void adam_step(ModelParams<T>& params, const ModelParams<T>& grads, AdamState<T>& state);

struct Schedule {
    std::size_t max_epochs = 300;
    std::size_t patience = 10;
    std::size_t batch_size = 8;
    // Stop as soon as the task-averaged dev UAR reaches this value.
    std::optional<double> target_uar;
};

struct EpochRecord {
    std::size_t epoch = 0; // 1-based
    double train_loss = 0.0;
    std::vector<std::pair<Task, double>> dev_uar;
    double dev_uar_mean = 0.0;
    std::size_t best_epoch = 0;
};

std::string epoch_record_json(const EpochRecord& record, std::uint64_t seed);

struct TrainOptions {
    ModelConfig model;
    MtlLossConfig loss;
    AdamOptions adam;
    Schedule schedule;
    // When set, the best checkpoint, stats.json and report.jsonl go here.
    std::optional<std::filesystem::path> out_dir;
    std::function<void(const EpochRecord&)> on_epoch;
};

struct TrainReport {
    std::vector<EpochRecord> epochs;
    std::size_t best_epoch = 0;
    double best_dev_uar = 0.0;
    std::optional<std::filesystem::path> best_checkpoint;
    std::uint64_t seed = 0;
    CorpusStats stats;
    std::size_t skipped_train = 0;
    std::size_t skipped_dev = 0;
    ModelParams<float> best_params;
};

// Shuffled mini-batches of whole utterances (each at its own length),
// gradients averaged over the batch, Adam updates, dev evaluation after
// every epoch and early stopping on the task-averaged dev UAR. Deterministic
// given options.model.seed.
TrainReport train(const TrainOptions& options, const Corpus& train_set, const Corpus& dev_set);

struct SearchOptions {
    std::size_t n_trials = 8;
    double min_weight = 0.1;
    double max_weight = 10.0;
    std::uint64_t seed = 0;
    std::optional<Task> main_task; // defaults to the model's first task
};

struct SearchTrial {
    std::vector<double> weights;
    double main_dev_uar = 0.0;
};

struct SearchResult {
    MtlLossConfig best;
    std::size_t best_trial = 0;
    std::vector<SearchTrial> trials;
};

// Samples every w_m log-uniformly from [min_weight, max_weight].
std::vector<std::vector<double>> sample_task_weights(const SearchOptions& options, std::size_t n_tasks);

// Trains one model per sampled weight vector with the base options' budget and
// keeps the trial with the best main-task dev UAR (ties: lowest trial index).
SearchResult random_search_task_weights(const SearchOptions& options, const TrainOptions& base,
                                        const Corpus& train_set, const Corpus& dev_set);

} // namespace ser
