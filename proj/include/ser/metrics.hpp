#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "ser/data.hpp"
#include "ser/model.hpp"

namespace ser {

// Rows are the true class, columns the predicted class.
struct ConfusionMatrix {
    std::array<std::array<std::uint64_t, kNumClasses>, kNumClasses> counts{};

    void add(int truth, int predicted) { ++counts.at(truth).at(predicted); }
    std::uint64_t total() const;
    std::uint64_t support(int truth) const;
};

// Mean recall over the classes that have at least one true instance.
// Throws std::invalid_argument when every row is empty.
double uar(const ConfusionMatrix& cm);

struct ZTestResult {
    double z = 0.0;
    double p = 0.5;       // one-tailed, P(Z >= z)
    bool significant = false;
};

// Pooled two-proportion z-test treating each UAR as a proportion over n
// trials; significant when the one-tailed p is below alpha.
ZTestResult z_test_uar(double uar_a, double uar_b, std::size_t n, double alpha = 0.05);

struct TaskEval {
    Task task = Task::Arousal;
    ConfusionMatrix confusion;
    double uar = 0.0;
};

struct AttentionRecord {
    std::string utterance_id;
    Task task = Task::Arousal;
    std::vector<std::size_t> window_start_samples;
    std::vector<double> alphas;
};

struct EvalReport {
    std::vector<TaskEval> tasks;
    std::size_t n_scored = 0;
    std::size_t skipped = 0;
    std::string checkpoint_id;
    std::vector<AttentionRecord> attention;

    const TaskEval& task(Task t) const;
    double mean_uar() const;
};

struct EvalOptions {
    bool keep_attention = false;
    std::string checkpoint_id;
};

// Eval-mode forward per utterance, argmax prediction (ties to the lowest class).
template <typename T>
EvalReport evaluate(const ModelParams<T>& params, const std::vector<PreparedUtterance>& items,
                    const EvalOptions& options = {});

// Standardizes with `stats`, skips (and counts) utterances too short to window.
template <typename T>
EvalReport evaluate(const ModelParams<T>& params, std::span<const Utterance> partition, const CorpusStats& stats,
                    const EvalOptions& options = {});

// {"checkpoint_id", "n_scored", "skipped", "tasks": {name: {"confusion", "uar"}}}
std::string eval_report_json(const EvalReport& report);

} // namespace ser
