#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "ser/model.hpp"
#include "ser/synth.hpp"
#include "ser/training.hpp"

namespace ser {

enum class SplitMode { Session, All };

// Flat `key = value` run description; `#` starts a comment. Keys:
//   data.manifest | data.synth.n, data.synth.min_duration, data.synth.max_duration, data.synth.dir
//   data.seed, data.split (session | all)
//   model.variant, model.tasks, model.hidden, model.conv_filters, model.conv_width,
//   model.channel_pool, model.keep_prob, model.seed
//   loss.weights, loss.lambda
//   train.lr, train.batch_size, train.max_epochs, train.patience, train.target_uar
//   search.trials, search.min_weight, search.max_weight, search.seed, search.main_task
//   gradcheck.segments, gradcheck.coords, gradcheck.eps
//   output.dir
// Relative paths resolve against the config file's directory.
struct RunConfig {
    std::optional<std::filesystem::path> manifest;
    std::optional<SynthOptions> synth;
    std::filesystem::path synth_dir;
    SplitMode split = SplitMode::Session;

    ModelConfig model;
    MtlLossConfig loss;
    AdamOptions adam;
    Schedule schedule;
    std::optional<SearchOptions> search;

    std::size_t gradcheck_segments = 3;
    std::size_t gradcheck_coords = 20;
    double gradcheck_eps = 1e-5;

    std::filesystem::path output_dir = "run";
};

// Throws ConfigError with "<source>:<line>: ..." context.
RunConfig parse_run_config(const std::string& text, const std::string& source = "<config>",
                           const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path);

struct RunData {
    Corpus train;
    Corpus dev;
};

// Loads the manifest or generates the synthetic corpus, then splits it.
RunData load_run_data(const RunConfig& config);

} // namespace ser
