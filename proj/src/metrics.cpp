#include "ser/metrics.hpp"

#include <cmath>
#include <stdexcept>

#include <json.hpp>

#include "ser/numeric.hpp"

namespace ser {

std::uint64_t ConfusionMatrix::total() const
{
    std::uint64_t sum = 0;
    for (const auto& row : counts) {
        for (auto c : row) {
            sum += c;
        }
    }
    return sum;
}

std::uint64_t ConfusionMatrix::support(int truth) const
{
    std::uint64_t sum = 0;
    for (auto c : counts.at(truth)) {
        sum += c;
    }
    return sum;
}

double uar(const ConfusionMatrix& cm)
{
    double recall_sum = 0.0;
    int classes = 0;
    for (int k = 0; k < kNumClasses; ++k) {
        const std::uint64_t support = cm.support(k);
        if (support == 0) {
            continue;
        }
        recall_sum += static_cast<double>(cm.counts[k][k]) / static_cast<double>(support);
        ++classes;
    }
    if (classes == 0) {
        throw std::invalid_argument("uar: confusion matrix is empty");
    }
    return recall_sum / classes;
}

ZTestResult z_test_uar(double uar_a, double uar_b, std::size_t n, double alpha)
{
    if (n < 2) {
        throw std::invalid_argument("z_test_uar: need n >= 2");
    }
    if (!(uar_a >= 0.0 && uar_a <= 1.0 && uar_b >= 0.0 && uar_b <= 1.0)) {
        throw std::invalid_argument("z_test_uar: UAR values must lie in [0, 1]");
    }
    const double pooled = 0.5 * (uar_a + uar_b);
    if (pooled <= 0.0 || pooled >= 1.0) {
        throw std::invalid_argument("z_test_uar: pooled proportion is 0 or 1, the test has zero variance");
    }
    const double se = std::sqrt(pooled * (1.0 - pooled) * 2.0 / static_cast<double>(n));
    ZTestResult out;
    out.z = (uar_a - uar_b) / se;
    out.p = 0.5 * std::erfc(out.z / std::sqrt(2.0));
    out.significant = out.p < alpha;
    return out;
}

const TaskEval& EvalReport::task(Task t) const
{
    for (const auto& e : tasks) {
        if (e.task == t) {
            return e;
        }
    }
    throw std::out_of_range("evaluation report has no task " + task_name(t));
}

double EvalReport::mean_uar() const
{
    double sum = 0.0;
    for (const auto& e : tasks) {
        sum += e.uar;
    }
    return tasks.empty() ? 0.0 : sum / static_cast<double>(tasks.size());
}

template <typename T>
EvalReport evaluate(const ModelParams<T>& params, const std::vector<PreparedUtterance>& items,
                    const EvalOptions& options)
{
    EvalReport report;
    report.checkpoint_id = options.checkpoint_id;
    for (Task task : params.config.tasks) {
        report.tasks.push_back(TaskEval{task, {}, 0.0});
    }
    for (const auto& item : items) {
        const BasicTensor<T> segments = item.segments.template cast<T>();
        const auto out = forward(params, segments, ForwardOptions{});
        for (std::size_t b = 0; b < out.tasks.size(); ++b) {
            const int predicted = static_cast<int>(argmax(std::span<const T>(out.probs[b])));
            report.tasks[b].confusion.add(item.labels[out.tasks[b]], predicted);
            if (options.keep_attention && !out.alphas.empty()) {
                AttentionRecord rec;
                rec.utterance_id = item.id;
                rec.task = out.tasks[b];
                for (std::size_t i = 0; i < out.length; ++i) {
                    rec.window_start_samples.push_back(SegmentSequence::window_start(i));
                }
                rec.alphas.assign(out.alphas[b].begin(), out.alphas[b].end());
                report.attention.push_back(std::move(rec));
            }
        }
        ++report.n_scored;
    }
    if (report.n_scored > 0) {
        for (auto& e : report.tasks) {
            e.uar = uar(e.confusion);
        }
    }
    return report;
}

template <typename T>
EvalReport evaluate(const ModelParams<T>& params, std::span<const Utterance> partition, const CorpusStats& stats,
                    const EvalOptions& options)
{
    if (partition.empty()) {
        throw std::invalid_argument("evaluate: partition is empty");
    }
    const auto prepared = prepare_utterances(partition, stats);
    auto report = evaluate(params, prepared.items, options);
    report.skipped = prepared.skipped.size();
    return report;
}

std::string eval_report_json(const EvalReport& report)
{
    nlohmann::ordered_json doc;
    doc["checkpoint_id"] = report.checkpoint_id;
    doc["n_scored"] = report.n_scored;
    doc["skipped"] = report.skipped;
    nlohmann::ordered_json tasks = nlohmann::ordered_json::object();
    for (const auto& e : report.tasks) {
        nlohmann::ordered_json rows = nlohmann::ordered_json::array();
        for (const auto& row : e.confusion.counts) {
            rows.push_back(row);
        }
        tasks[task_name(e.task)] = {{"confusion", rows}, {"uar", e.uar}};
    }
    doc["tasks"] = tasks;
    return doc.dump();
}

template EvalReport evaluate(const ModelParams<float>&, const std::vector<PreparedUtterance>&, const EvalOptions&);
template EvalReport evaluate(const ModelParams<double>&, const std::vector<PreparedUtterance>&, const EvalOptions&);
template EvalReport evaluate(const ModelParams<float>&, std::span<const Utterance>, const CorpusStats&,
                             const EvalOptions&);
template EvalReport evaluate(const ModelParams<double>&, std::span<const Utterance>, const CorpusStats&,
                             const EvalOptions&);

} // namespace ser
