#include "ser/commands.hpp"

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "ser/attention_export.hpp"
#include "ser/config.hpp"
#include "ser/metrics.hpp"
#include "ser/model_gradcheck.hpp"
#include "ser/synth.hpp"
#include "ser/training.hpp"
#include "ser/wav.hpp"

namespace ser {

namespace {

struct SynthArgs {
    std::size_t n = 30;
    std::uint64_t seed = 7;
    std::string out;
    double min_duration = 0.1;
    double max_duration = 0.25;
};

struct TrainArgs {
    std::string config;
};

struct EvaluateArgs {
    std::string checkpoint;
    std::string manifest;
    std::string partition = "test";
    std::string stats;
    std::string tasks;
    std::optional<double> compare;
    std::optional<double> uar;
    std::optional<std::size_t> n;
    std::string task;
};

struct GradcheckArgs {
    std::string config;
    std::string corrupt;
};

struct ExportArgs {
    std::string checkpoint;
    std::string manifest;
    std::string ids;
    std::string partition = "all";
    std::string out;
    std::string stats;
};

std::vector<std::string> comma_list(const std::string& text)
{
    std::vector<std::string> out;
    std::stringstream in(text);
    std::string item;
    while (std::getline(in, item, ',')) {
        if (!item.empty()) {
            out.push_back(item);
        }
    }
    return out;
}

std::string checkpoint_id(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    std::stringstream buffer;
    buffer << in.rdbuf();
    const std::string bytes = buffer.str();
    char hex[17];
    std::snprintf(hex, sizeof hex, "%016llx",
                  static_cast<unsigned long long>(fnv1a64(bytes.data(), bytes.size())));
    return path.filename().string() + "@" + hex;
}

std::filesystem::path stats_path(const std::string& flag, const std::filesystem::path& checkpoint)
{
    return flag.empty() ? checkpoint.parent_path() / "stats.json" : std::filesystem::path(flag);
}

nlohmann::ordered_json comparison_json(const std::string& task, double ours, double other, std::size_t n)
{
    const ZTestResult z = z_test_uar(ours, other, n);
    nlohmann::ordered_json doc;
    if (!task.empty()) {
        doc["task"] = task;
    }
    doc["uar"] = ours;
    doc["other_uar"] = other;
    doc["n"] = n;
    doc["z"] = z.z;
    doc["p"] = z.p;
    doc["significant"] = z.significant;
    return doc;
}

int cmd_synth(const SynthArgs& args, std::ostream& out)
{
    SynthOptions options;
    options.n_utterances = args.n;
    options.seed = args.seed;
    options.min_duration_s = args.min_duration;
    options.max_duration_s = args.max_duration;
    const auto corpus = generate_synthetic_corpus(options, args.out);
    out << corpus.manifest.string() << "\n";
    return kExitOk;
}

int cmd_train(const TrainArgs& args, std::ostream& out)
{
    const RunConfig cfg = load_run_config(args.config);
    const RunData data = load_run_data(cfg);

    TrainOptions options;
    options.model = cfg.model;
    options.loss = cfg.loss;
    options.adam = cfg.adam;
    options.schedule = cfg.schedule;

    if (cfg.search) {
        const SearchResult search = random_search_task_weights(*cfg.search, options, data.train, data.dev);
        for (std::size_t i = 0; i < search.trials.size(); ++i) {
            nlohmann::ordered_json trial;
            trial["trial"] = i;
            trial["weights"] = search.trials[i].weights;
            trial["main_dev_uar"] = search.trials[i].main_dev_uar;
            out << trial.dump() << "\n";
        }
        options.loss = search.best;
    }

    options.out_dir = cfg.output_dir;
    options.on_epoch = [&out, &cfg](const EpochRecord& record) {
        out << epoch_record_json(record, cfg.model.seed) << "\n";
    };
    const TrainReport report = train(options, data.train, data.dev);

    nlohmann::ordered_json summary;
    summary["checkpoint"] = report.best_checkpoint->string();
    summary["best_epoch"] = report.best_epoch;
    summary["best_dev_uar"] = report.best_dev_uar;
    summary["epochs"] = report.epochs.size();
    summary["task_weights"] = options.loss.task_weights;
    summary["skipped_train"] = report.skipped_train;
    summary["skipped_dev"] = report.skipped_dev;
    out << summary.dump() << "\n";
    return kExitOk;
}

int cmd_evaluate(const EvaluateArgs& args, std::ostream& out)
{
    if (args.checkpoint.empty()) {
        if (!args.uar || !args.compare || !args.n) {
            throw CLI::ValidationError("evaluate", "without --checkpoint, give --uar, --compare and --n");
        }
        out << comparison_json(args.task, *args.uar, *args.compare, *args.n).dump() << "\n";
        return kExitOk;
    }
    if (args.manifest.empty()) {
        throw CLI::ValidationError("evaluate", "--manifest is required with --checkpoint");
    }
    if (args.uar) {
        throw CLI::ValidationError("evaluate", "--uar replaces the checkpoint's own UAR; drop one of them");
    }

    const std::filesystem::path ckpt(args.checkpoint);
    const auto params = load_checkpoint<float>(ckpt);
    if (!args.tasks.empty()) {
        std::vector<Task> tasks;
        for (const auto& name : comma_list(args.tasks)) {
            tasks.push_back(parse_task(name));
        }
        require_tasks(params, tasks);
    }
    const CorpusStats stats = load_stats(stats_path(args.stats, ckpt));
    const Corpus corpus = load_manifest(args.manifest);
    const Corpus part = select_partition(corpus, parse_partition(args.partition));

    EvalOptions options;
    options.checkpoint_id = checkpoint_id(ckpt);
    const EvalReport report = evaluate(params, std::span<const Utterance>(part), stats, options);
    auto doc = nlohmann::ordered_json::parse(eval_report_json(report));
    doc["partition"] = args.partition;
    if (args.compare) {
        const Task task = args.task.empty() ? params.config.tasks.front() : parse_task(args.task);
        const double ours = report.task(task).uar;
        doc["comparison"] = comparison_json(task_name(task), ours, *args.compare, args.n.value_or(report.n_scored));
    }
    out << doc.dump() << "\n";
    return kExitOk;
}

int cmd_gradcheck(const GradcheckArgs& args, std::ostream& out)
{
    const RunConfig cfg = load_run_config(args.config);
    ModelGradcheckOptions options;
    options.segments = cfg.gradcheck_segments;
    options.check.subsample = cfg.gradcheck_coords;
    options.check.eps = cfg.gradcheck_eps;
    options.check.seed = cfg.model.seed;
    if (!args.corrupt.empty()) {
        options.corrupt_tensor = args.corrupt;
    }
    const GradcheckReport report = model_gradcheck(cfg.model, cfg.loss, options);

    bool ok = true;
    for (const auto& t : report.tensors) {
        const bool pass = t.max_relative_error < kGradcheckThreshold;
        ok = ok && pass;
        out << std::left << std::setw(24) << t.name << " max_rel_err " << std::scientific << std::setprecision(3)
            << t.max_relative_error << std::defaultfloat << "  checked " << t.checked << "  frozen "
            << t.frozen << "  skipped_kinks " << t.skipped_kinks << "  " << (pass ? "ok" : "FAIL") << "\n";
    }
    out << (ok ? "gradcheck passed" : "gradcheck FAILED") << ": worst " << std::scientific << std::setprecision(3)
        << report.worst() << std::defaultfloat << " (threshold " << kGradcheckThreshold << ")\n";
    return ok ? kExitOk : kExitFailure;
}

int cmd_export(const ExportArgs& args, std::ostream& out)
{
    const std::filesystem::path ckpt(args.checkpoint);
    const auto params = load_checkpoint<float>(ckpt);
    if (!uses_attention(params.config.variant)) {
        throw ConfigError("checkpoint variant " + variant_name(params.config.variant) +
                          " has no attention pooling; export-attention needs STL_ATT or MTL_ATT");
    }
    const CorpusStats stats = load_stats(stats_path(args.stats, ckpt));
    const Corpus corpus = load_manifest(args.manifest);

    Corpus selected;
    if (args.ids.empty()) {
        selected = select_partition(corpus, parse_partition(args.partition));
    } else {
        for (const auto& id : comma_list(args.ids)) {
            const auto it = std::find_if(corpus.begin(), corpus.end(), [&id](const Utterance& u) { return u.id == id; });
            if (it == corpus.end()) {
                throw DataError("utterance id '" + id + "' is not in " + args.manifest);
            }
            selected.push_back(*it);
        }
    }
    const std::size_t n = export_attention(params, std::span<const Utterance>(selected), stats, args.out);
    out << n << " records written to " << args.out << "\n";
    return kExitOk;
}

} // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err)
{
    CLI::App app{"Multi-task speech emotion recognition from raw waveforms"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "Show help for every subcommand");

    SynthArgs synth;
    auto* synth_cmd = app.add_subcommand("synth-data", "Write a synthetic labelled corpus (WAVs + manifest.csv)");
    synth_cmd->add_option("--n", synth.n, "Number of utterances")->check(CLI::PositiveNumber)->capture_default_str();
    synth_cmd->add_option("--seed", synth.seed, "Generator seed")->capture_default_str();
    synth_cmd->add_option("--out", synth.out, "Output directory")->required();
    synth_cmd->add_option("--min-duration", synth.min_duration, "Shortest utterance in seconds")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    synth_cmd->add_option("--max-duration", synth.max_duration, "Longest utterance in seconds")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();

    TrainArgs train_args;
    auto* train_cmd = app.add_subcommand("train", "Train a model from a run config; writes checkpoint, stats, report");
    train_cmd->add_option("--config", train_args.config, "Run config file (key = value)")
        ->required()
        ->check(CLI::ExistingFile);

    EvaluateArgs eval;
    auto* eval_cmd = app.add_subcommand("evaluate", "Per-task UAR of a checkpoint, optionally z-tested against another UAR");
    eval_cmd->add_option("--checkpoint", eval.checkpoint, "Checkpoint file");
    eval_cmd->add_option("--manifest", eval.manifest, "Manifest CSV to evaluate on");
    eval_cmd->add_option("--partition", eval.partition, "train | dev | test | all (sessions 1-3 | 4 | 5 | any)")
        ->capture_default_str();
    eval_cmd->add_option("--stats", eval.stats, "Standardization stats JSON (default: next to the checkpoint)");
    eval_cmd->add_option("--tasks", eval.tasks, "Comma list of tasks the checkpoint must predict");
    eval_cmd->add_option("--compare", eval.compare, "Other system's UAR for a one-tailed z-test");
    eval_cmd->add_option("--task", eval.task, "Task whose UAR is compared (default: first model task)");
    eval_cmd->add_option("--uar", eval.uar, "Our UAR, for a z-test without a checkpoint");
    eval_cmd->add_option("--n", eval.n, "Test-set size for the z-test (default: utterances scored)");

    GradcheckArgs grad;
    auto* grad_cmd = app.add_subcommand("gradcheck", "Finite-difference check of every model gradient in float64");
    grad_cmd->add_option("--config", grad.config, "Run config file (model, loss and gradcheck.* keys)")
        ->required()
        ->check(CLI::ExistingFile);
    grad_cmd->add_option("--corrupt-grad", grad.corrupt, "Perturb the analytic gradient of this tensor")
        ->group("");

    ExportArgs exp;
    auto* exp_cmd = app.add_subcommand("export-attention", "Write per-utterance, per-task attention weights as JSONL");
    exp_cmd->add_option("--checkpoint", exp.checkpoint, "Checkpoint of an attention model")->required();
    exp_cmd->add_option("--manifest", exp.manifest, "Manifest CSV holding the utterances")->required();
    exp_cmd->add_option("--ids", exp.ids, "Comma list of utterance ids (default: whole partition)");
    exp_cmd->add_option("--partition", exp.partition, "Partition used when --ids is absent")->capture_default_str();
    exp_cmd->add_option("--out", exp.out, "Output JSONL path")->required();
    exp_cmd->add_option("--stats", exp.stats, "Standardization stats JSON (default: next to the checkpoint)");

    try {
        app.parse(argc, argv);
        if (synth_cmd->parsed()) {
            if (synth.max_duration < synth.min_duration) {
                throw CLI::ValidationError("--max-duration", "must not be below --min-duration");
            }
            return cmd_synth(synth, out);
        }
        if (train_cmd->parsed()) {
            return cmd_train(train_args, out);
        }
        if (eval_cmd->parsed()) {
            return cmd_evaluate(eval, out);
        }
        if (grad_cmd->parsed()) {
            return cmd_gradcheck(grad, out);
        }
        if (exp_cmd->parsed()) {
            return cmd_export(exp, out);
        }
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        app.exit(e, out, err);
        return kExitUsage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitFailure;
    }
    return kExitUsage;
}

} // namespace ser
