#include "ser/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include <json.hpp>

#include "ser/numeric.hpp"

namespace ser {

void MtlLossConfig::validate(std::size_t n_tasks) const
{
    if (task_weights.size() != n_tasks) {
        throw ConfigError("loss has " + std::to_string(task_weights.size()) + " task weights but the model has " +
                          std::to_string(n_tasks) + " tasks");
    }
    for (double w : task_weights) {
        if (!std::isfinite(w) || w < 0.0 || (w == 0.0 && !allow_zero_weight)) {
            throw ConfigError("task weights must be positive");
        }
    }
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
        throw ConfigError("loss lambda must be non-negative");
    }
}

std::vector<Target> targets_for(const LabelTriple& labels, const std::vector<Task>& tasks)
{
    std::vector<Target> out;
    for (Task t : tasks) {
        out.push_back({t, labels[t]});
    }
    return out;
}

template <typename T>
T l2_penalty(const ModelParams<T>& params)
{
    double sum = 0.0;
    params.for_each([&sum](const std::string&, const BasicTensor<T>& t, bool is_bias) {
        if (is_bias) {
            return;
        }
        for (T v : t.values()) {
            sum += static_cast<double>(v) * static_cast<double>(v);
        }
    });
    return static_cast<T>(sum);
}

template <typename T>
MtlLoss<T> mtl_loss(const std::vector<Task>& tasks, const std::vector<std::vector<T>>& probs,
                    const std::vector<Target>& targets, const MtlLossConfig& config, const ModelParams<T>& params)
{
    config.validate(tasks.size());
    if (probs.size() != tasks.size()) {
        throw std::invalid_argument("mtl_loss: " + std::to_string(probs.size()) + " outputs for " +
                                    std::to_string(tasks.size()) + " tasks");
    }
    std::map<Task, int> by_task;
    for (const auto& t : targets) {
        by_task[t.task] = t.level;
    }
    if (by_task.size() != targets.size() || by_task.size() != tasks.size()) {
        throw std::invalid_argument("mtl_loss: outputs and targets cover different task sets");
    }

    MtlLoss<T> loss;
    for (std::size_t m = 0; m < tasks.size(); ++m) {
        const auto it = by_task.find(tasks[m]);
        if (it == by_task.end()) {
            throw std::invalid_argument("mtl_loss: no target for task " + task_name(tasks[m]));
        }
        const auto weight = static_cast<T>(config.task_weights[m]);
        const auto target = static_cast<std::size_t>(it->second);
        loss.data += weight * cross_entropy<T>(probs[m], target);
        loss.grad_probs.push_back(cross_entropy_grad<T>(probs[m], target, weight));
    }
    if (config.lambda != 0.0) {
        loss.regularizer = static_cast<T>(config.lambda) * l2_penalty(params);
    }
    loss.value = loss.data + loss.regularizer;
    return loss;
}

template <typename T>
void add_l2_gradient(const ModelParams<T>& params, double lambda, ModelParams<T>& grads, double scale)
{
    if (lambda == 0.0) {
        return;
    }
    std::vector<const BasicTensor<T>*> sources;
    params.for_each([&sources](const std::string&, const BasicTensor<T>& t, bool) { sources.push_back(&t); });
    std::size_t i = 0;
    const auto factor = static_cast<T>(2.0 * lambda * scale);
    grads.for_each([&](const std::string&, BasicTensor<T>& g, bool is_bias) {
        const BasicTensor<T>& theta = *sources[i++];
        if (is_bias) {
            return;
        }
        for (std::size_t k = 0; k < g.size(); ++k) {
            g[k] += factor * theta[k];
        }
    });
}

template <typename T>
AdamState<T> AdamState<T>::init(const ModelParams<T>& params, const AdamOptions& options)
{
    return AdamState{options, params.zeros_like(), params.zeros_like(), 0};
}

template <typename T>
void adam_step(ModelParams<T>& params, const ModelParams<T>& grads, AdamState<T>& state)
{
    std::vector<std::pair<std::string, const BasicTensor<T>*>> g;
    grads.for_each([&g](const std::string& name, const BasicTensor<T>& t, bool) { g.emplace_back(name, &t); });
    for (const auto& [name, tensor] : g) {
        for (T v : tensor->values()) {
            if (!std::isfinite(v)) {
                throw TrainingError("non-finite gradient in tensor " + name);
            }
        }
    }

    std::vector<BasicTensor<T>*> m;
    std::vector<BasicTensor<T>*> v;
    state.first_moment.for_each([&m](const std::string&, BasicTensor<T>& t, bool) { m.push_back(&t); });
    state.second_moment.for_each([&v](const std::string&, BasicTensor<T>& t, bool) { v.push_back(&t); });

    ++state.step;
    const auto& opt = state.options;
    const double correction1 = 1.0 - std::pow(opt.beta1, static_cast<double>(state.step));
    const double correction2 = 1.0 - std::pow(opt.beta2, static_cast<double>(state.step));
    std::size_t i = 0;
    params.for_each([&](const std::string&, BasicTensor<T>& theta, bool) {
        const BasicTensor<T>& grad = *g[i].second;
        BasicTensor<T>& m1 = *m[i];
        BasicTensor<T>& m2 = *v[i];
        ++i;
        for (std::size_t k = 0; k < theta.size(); ++k) {
            const double gk = grad[k];
            const double mk = opt.beta1 * m1[k] + (1.0 - opt.beta1) * gk;
            const double vk = opt.beta2 * m2[k] + (1.0 - opt.beta2) * gk * gk;
            m1[k] = static_cast<T>(mk);
            m2[k] = static_cast<T>(vk);
            const double update = opt.learning_rate * (mk / correction1) / (std::sqrt(vk / correction2) + opt.epsilon);
            theta[k] = static_cast<T>(theta[k] - update);
        }
    });
}

std::string epoch_record_json(const EpochRecord& record, std::uint64_t seed)
{
    nlohmann::ordered_json doc;
    doc["epoch"] = record.epoch;
    doc["train_loss"] = record.train_loss;
    nlohmann::ordered_json uars = nlohmann::ordered_json::object();
    for (const auto& [task, value] : record.dev_uar) {
        uars[task_name(task)] = value;
    }
    doc["dev_uar"] = uars;
    doc["dev_uar_mean"] = record.dev_uar_mean;
    doc["best_epoch"] = record.best_epoch;
    doc["seed"] = seed;
    return doc.dump();
}

namespace {

constexpr std::uint64_t kShuffleStream = 0x73687566ULL;
constexpr std::uint64_t kDropoutStream = 0x64726f70ULL;

} // namespace

TrainReport train(const TrainOptions& options, const Corpus& train_set, const Corpus& dev_set)
{
    const ModelConfig& model = options.model;
    model.validate();
    options.loss.validate(model.tasks.size());
    if (train_set.empty() || dev_set.empty()) {
        throw TrainingError("train: training and development partitions must be non-empty");
    }
    if (options.schedule.batch_size == 0 || options.schedule.max_epochs == 0) {
        throw TrainingError("train: batch size and max epochs must be positive");
    }

    TrainReport report;
    report.seed = model.seed;
    report.stats = compute_stats(train_set);
    const PreparedSet train_data = prepare_utterances(train_set, report.stats);
    const PreparedSet dev_data = prepare_utterances(dev_set, report.stats);
    report.skipped_train = train_data.skipped.size();
    report.skipped_dev = dev_data.skipped.size();
    if (train_data.items.empty() || dev_data.items.empty()) {
        throw TrainingError("train: no utterance long enough to window in the training or development set");
    }

    std::optional<std::ofstream> jsonl;
    if (options.out_dir) {
        std::filesystem::create_directories(*options.out_dir);
        save_stats(report.stats, *options.out_dir / "stats.json");
        jsonl.emplace(*options.out_dir / "report.jsonl", std::ios::trunc);
        if (!*jsonl) {
            throw TrainingError("cannot write " + (*options.out_dir / "report.jsonl").string());
        }
        report.best_checkpoint = *options.out_dir / "best.ckpt";
    }

    ModelParams<float> params = build_model<float>(model);
    ModelParams<float> grads = params.zeros_like();
    auto adam = AdamState<float>::init(params, options.adam);
    report.best_params = params;

    MtlLossConfig data_loss = options.loss;
    data_loss.lambda = 0.0;
    const double lambda = options.loss.lambda;

    std::vector<std::size_t> order(train_data.items.size());
    double best = -1.0;
    std::size_t since_best = 0;
    const std::size_t batch_size = options.schedule.batch_size;

    for (std::size_t epoch = 1; epoch <= options.schedule.max_epochs; ++epoch) {
        for (std::size_t i = 0; i < order.size(); ++i) {
            order[i] = i;
        }
        Rng shuffle(model.seed, {kShuffleStream, epoch});
        shuffle.shuffle(order);

        double loss_sum = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < order.size(); start += batch_size) {
            const std::size_t end = std::min(order.size(), start + batch_size);
            const auto scale = static_cast<float>(1.0 / static_cast<double>(end - start));
            grads.for_each([](const std::string&, BasicTensor<float>& t, bool) { t.fill(0.0f); });

            double batch_data = 0.0;
            for (std::size_t k = start; k < end; ++k) {
                const auto& item = train_data.items[order[k]];
                Rng dropout(model.seed, {kDropoutStream, epoch, order[k]});
                const auto out =
                    forward(params, item.segments, ForwardOptions{nn::Mode::Train, true, false}, &dropout);
                auto loss = mtl_loss(out.tasks, out.probs, targets_for(item.labels, out.tasks), data_loss, params);
                if (!std::isfinite(loss.value)) {
                    throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                                        std::to_string(batches + 1) + " (utterance " + item.id + ")");
                }
                batch_data += loss.value;
                for (auto& g : loss.grad_probs) {
                    for (float& x : g) {
                        x *= scale;
                    }
                }
                backward(params, out, loss.grad_probs, grads);
            }
            const double objective = batch_data / static_cast<double>(end - start) +
                                     (lambda != 0.0 ? lambda * static_cast<double>(l2_penalty(params)) : 0.0);
            if (!std::isfinite(objective)) {
                throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                                    std::to_string(batches + 1));
            }
            add_l2_gradient(params, lambda, grads);
            try {
                adam_step(params, grads, adam);
            } catch (const TrainingError& e) {
                throw TrainingError(std::string(e.what()) + " at epoch " + std::to_string(epoch) + ", batch " +
                                    std::to_string(batches + 1));
            }
            loss_sum += objective;
            ++batches;
        }

        const EvalReport dev = evaluate(params, dev_data.items);
        EpochRecord record;
        record.epoch = epoch;
        record.train_loss = loss_sum / static_cast<double>(batches);
        for (const auto& t : dev.tasks) {
            record.dev_uar.emplace_back(t.task, t.uar);
        }
        record.dev_uar_mean = dev.mean_uar();

        if (record.dev_uar_mean > best) {
            best = record.dev_uar_mean;
            since_best = 0;
            report.best_epoch = epoch;
            report.best_dev_uar = best;
            report.best_params = params;
            if (report.best_checkpoint) {
                save_checkpoint(params, *report.best_checkpoint);
            }
        } else {
            ++since_best;
        }
        record.best_epoch = report.best_epoch;
        report.epochs.push_back(record);
        if (jsonl) {
            *jsonl << epoch_record_json(record, model.seed) << "\n";
            jsonl->flush();
        }
        if (options.on_epoch) {
            options.on_epoch(record);
        }

        if (options.schedule.target_uar && best >= *options.schedule.target_uar) {
            break;
        }
        if (since_best >= options.schedule.patience) {
            break;
        }
    }
    return report;
}

std::vector<std::vector<double>> sample_task_weights(const SearchOptions& options, std::size_t n_tasks)
{
    if (!(options.min_weight > 0.0) || options.max_weight < options.min_weight) {
        throw ConfigError("search weight range must satisfy 0 < min <= max");
    }
    Rng rng(options.seed, {0x7365617263ULL});
    const double lo = std::log(options.min_weight);
    const double hi = std::log(options.max_weight);
    std::vector<std::vector<double>> out(options.n_trials, std::vector<double>(n_tasks));
    for (auto& weights : out) {
        for (double& w : weights) {
            const double u = rng.uniform();
            w = options.min_weight == options.max_weight ? options.min_weight : std::exp(lo + (hi - lo) * u);
        }
    }
    return out;
}

SearchResult random_search_task_weights(const SearchOptions& options, const TrainOptions& base,
                                        const Corpus& train_set, const Corpus& dev_set)
{
    if (options.n_trials < 1) {
        throw ConfigError("random search needs at least one trial");
    }
    const Task main = options.main_task.value_or(base.model.tasks.front());
    if (std::find(base.model.tasks.begin(), base.model.tasks.end(), main) == base.model.tasks.end()) {
        throw ConfigError("main task " + task_name(main) + " is not one of the model's tasks");
    }

    SearchResult result;
    const auto samples = sample_task_weights(options, base.model.tasks.size());
    double best = -1.0;
    for (std::size_t trial = 0; trial < samples.size(); ++trial) {
        TrainOptions opts = base;
        opts.loss.task_weights = samples[trial];
        opts.out_dir.reset();
        opts.on_epoch = nullptr;
        const TrainReport rep = train(opts, train_set, dev_set);
        const EpochRecord& at_best = rep.epochs.at(rep.best_epoch - 1);
        double main_uar = 0.0;
        for (const auto& [task, value] : at_best.dev_uar) {
            if (task == main) {
                main_uar = value;
            }
        }
        result.trials.push_back({samples[trial], main_uar});
        if (main_uar > best) {
            best = main_uar;
            result.best_trial = trial;
            result.best = opts.loss;
        }
    }
    return result;
}

#define SER_INSTANTIATE_TRAINING(T)                                                                              \
    template T l2_penalty(const ModelParams<T>&);                                                               \
    template MtlLoss<T> mtl_loss(const std::vector<Task>&, const std::vector<std::vector<T>>&,                  \
                                 const std::vector<Target>&, const MtlLossConfig&, const ModelParams<T>&);      \
    template void add_l2_gradient(const ModelParams<T>&, double, ModelParams<T>&, double);                       \
    template struct AdamState<T>;                                                                               \
    template void adam_step(ModelParams<T>&, const ModelParams<T>&, AdamState<T>&);

SER_INSTANTIATE_TRAINING(float)
SER_INSTANTIATE_TRAINING(double)

#undef SER_INSTANTIATE_TRAINING

} // namespace ser
