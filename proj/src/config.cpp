#include "ser/config.hpp"

#include <charconv>
#include <fstream>
#include <map>
#include <sstream>

namespace ser {

namespace {

std::string trim(const std::string& s)
{
    const auto begin = s.find_first_not_of(" \t\r");
    if (begin == std::string::npos) {
        return "";
    }
    const auto end = s.find_last_not_of(" \t\r");
    return s.substr(begin, end - begin + 1);
}

std::vector<std::string> split_list(const std::string& value)
{
    std::vector<std::string> out;
    std::stringstream in(value);
    std::string item;
    while (std::getline(in, item, ',')) {
        out.push_back(trim(item));
    }
    return out;
}

class Parser {
public:
    Parser(std::string source, std::filesystem::path base) : source_(std::move(source)), base_(std::move(base)) {}

    [[noreturn]] void fail(std::size_t line, const std::string& message) const
    {
        throw ConfigError(source_ + ":" + std::to_string(line) + ": " + message);
    }

    double number(std::size_t line, const std::string& key, const std::string& value) const
    {
        double out = 0.0;
        const auto* end = value.data() + value.size();
        const auto [ptr, ec] = std::from_chars(value.data(), end, out);
        if (ec != std::errc() || ptr != end) {
            fail(line, key + " expects a number, got '" + value + "'");
        }
        return out;
    }

    std::uint64_t count(std::size_t line, const std::string& key, const std::string& value) const
    {
        std::uint64_t out = 0;
        const auto* end = value.data() + value.size();
        const auto [ptr, ec] = std::from_chars(value.data(), end, out);
        if (ec != std::errc() || ptr != end) {
            fail(line, key + " expects a non-negative integer, got '" + value + "'");
        }
        return out;
    }

    std::filesystem::path path(const std::string& value) const
    {
        std::filesystem::path p(value);
        return p.is_absolute() || base_.empty() ? p : base_ / p;
    }

private:
    std::string source_;
    std::filesystem::path base_;
};

SearchOptions& search_of(RunConfig& cfg)
{
    if (!cfg.search) {
        cfg.search = SearchOptions{};
    }
    return *cfg.search;
}

SynthOptions& synth_of(RunConfig& cfg)
{
    if (!cfg.synth) {
        cfg.synth = SynthOptions{};
    }
    return *cfg.synth;
}

} // namespace

RunConfig parse_run_config(const std::string& text, const std::string& source, const std::filesystem::path& base_dir)
{
    const Parser p(source, base_dir);
    RunConfig cfg;
    std::map<std::string, std::size_t> seen;
    std::optional<std::uint64_t> data_seed;
    std::optional<std::uint64_t> search_seed;
    bool weights_given = false;
    bool synth_dir_given = false;
    std::size_t synth_line = 0;
    std::size_t manifest_line = 0;

    std::stringstream in(text);
    std::string raw;
    std::size_t line = 0;
    while (std::getline(in, raw)) {
        ++line;
        const auto hash = raw.find('#');
        const std::string content = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
        if (content.empty()) {
            continue;
        }
        const auto eq = content.find('=');
        if (eq == std::string::npos) {
            p.fail(line, "expected 'key = value', got '" + content + "'");
        }
        const std::string key = trim(content.substr(0, eq));
        const std::string value = trim(content.substr(eq + 1));
        if (value.empty()) {
            p.fail(line, "missing value for " + key);
        }
        if (const auto it = seen.find(key); it != seen.end()) {
            p.fail(line, key + " repeats line " + std::to_string(it->second));
        }
        seen[key] = line;

        try {
            if (key == "data.manifest") {
                cfg.manifest = p.path(value);
                manifest_line = line;
            } else if (key == "data.synth.n") {
                synth_of(cfg).n_utterances = p.count(line, key, value);
                synth_line = line;
            } else if (key == "data.synth.min_duration") {
                synth_of(cfg).min_duration_s = p.number(line, key, value);
                synth_line = synth_line ? synth_line : line;
            } else if (key == "data.synth.max_duration") {
                synth_of(cfg).max_duration_s = p.number(line, key, value);
                synth_line = synth_line ? synth_line : line;
            } else if (key == "data.synth.dir") {
                cfg.synth_dir = p.path(value);
                synth_dir_given = true;
            } else if (key == "data.seed") {
                data_seed = p.count(line, key, value);
            } else if (key == "data.split") {
                if (value == "session") {
                    cfg.split = SplitMode::Session;
                } else if (value == "all") {
                    cfg.split = SplitMode::All;
                } else {
                    p.fail(line, "data.split must be 'session' or 'all', got '" + value + "'");
                }
            } else if (key == "model.variant") {
                cfg.model.variant = parse_variant(value);
            } else if (key == "model.tasks") {
                cfg.model.tasks.clear();
                for (const auto& name : split_list(value)) {
                    cfg.model.tasks.push_back(parse_task(name));
                }
            } else if (key == "model.hidden") {
                cfg.model.hidden = p.count(line, key, value);
            } else if (key == "model.conv_filters") {
                cfg.model.conv_filters = p.count(line, key, value);
            } else if (key == "model.conv_width") {
                cfg.model.conv_width = p.count(line, key, value);
            } else if (key == "model.channel_pool") {
                cfg.model.channel_pool = p.count(line, key, value);
            } else if (key == "model.keep_prob") {
                cfg.model.keep_prob = p.number(line, key, value);
            } else if (key == "model.seed") {
                cfg.model.seed = p.count(line, key, value);
            } else if (key == "loss.weights") {
                cfg.loss.task_weights.clear();
                for (const auto& w : split_list(value)) {
                    cfg.loss.task_weights.push_back(p.number(line, key, w));
                }
                weights_given = true;
            } else if (key == "loss.lambda") {
                cfg.loss.lambda = p.number(line, key, value);
            } else if (key == "train.lr") {
                cfg.adam.learning_rate = p.number(line, key, value);
            } else if (key == "train.batch_size") {
                cfg.schedule.batch_size = p.count(line, key, value);
            } else if (key == "train.max_epochs") {
                cfg.schedule.max_epochs = p.count(line, key, value);
            } else if (key == "train.patience") {
                cfg.schedule.patience = p.count(line, key, value);
            } else if (key == "train.target_uar") {
                cfg.schedule.target_uar = p.number(line, key, value);
            } else if (key == "search.trials") {
                search_of(cfg).n_trials = p.count(line, key, value);
            } else if (key == "search.min_weight") {
                search_of(cfg).min_weight = p.number(line, key, value);
            } else if (key == "search.max_weight") {
                search_of(cfg).max_weight = p.number(line, key, value);
            } else if (key == "search.seed") {
                search_seed = p.count(line, key, value);
            } else if (key == "search.main_task") {
                search_of(cfg).main_task = parse_task(value);
            } else if (key == "gradcheck.segments") {
                cfg.gradcheck_segments = p.count(line, key, value);
            } else if (key == "gradcheck.coords") {
                cfg.gradcheck_coords = p.count(line, key, value);
            } else if (key == "gradcheck.eps") {
                cfg.gradcheck_eps = p.number(line, key, value);
            } else if (key == "output.dir") {
                cfg.output_dir = p.path(value);
            } else {
                p.fail(line, "unknown key '" + key + "'");
            }
        } catch (const ConfigError&) {
            throw;
        } catch (const std::exception& e) {
            p.fail(line, e.what());
        }
    }

    if (cfg.manifest && cfg.synth) {
        p.fail(std::max(manifest_line, synth_line), "give either data.manifest or data.synth.*, not both");
    }
    if (!cfg.manifest && !cfg.synth) {
        p.fail(line, "no data source: set data.manifest or data.synth.n");
    }
    if (cfg.synth) {
        if (cfg.synth->n_utterances == 0) {
            p.fail(synth_line, "data.synth.n must be positive");
        }
        cfg.synth->seed = data_seed.value_or(cfg.synth->seed);
        if (!synth_dir_given) {
            cfg.synth_dir = cfg.output_dir / "synth";
        }
    }
    if (!weights_given) {
        cfg.loss.task_weights.assign(cfg.model.tasks.size(), 1.0);
    }
    if (cfg.search) {
        cfg.search->seed = search_seed.value_or(cfg.model.seed);
    }

    const auto where = [&](const std::string& key) { return seen.count(key) ? seen[key] : line; };
    try {
        cfg.model.validate();
    } catch (const ConfigError& e) {
        p.fail(where("model.variant"), e.what());
    }
    try {
        cfg.loss.validate(cfg.model.tasks.size());
    } catch (const ConfigError& e) {
        p.fail(where("loss.weights"), e.what());
    }
    if (cfg.schedule.batch_size == 0) {
        p.fail(where("train.batch_size"), "train.batch_size must be positive");
    }
    if (cfg.schedule.max_epochs == 0) {
        p.fail(where("train.max_epochs"), "train.max_epochs must be positive");
    }
    if (!(cfg.adam.learning_rate > 0.0)) {
        p.fail(where("train.lr"), "train.lr must be positive");
    }
    return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot read config file " + path.string());
    }
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse_run_config(buffer.str(), path.string(), path.parent_path());
}

RunData load_run_data(const RunConfig& config)
{
    Corpus corpus;
    if (config.manifest) {
        corpus = load_manifest(*config.manifest);
    } else {
        corpus = generate_synthetic_corpus(*config.synth, config.synth_dir).corpus;
    }
    if (config.split == SplitMode::All) {
        return RunData{corpus, corpus};
    }
    auto parts = split_by_session(corpus);
    return RunData{std::move(parts.train), std::move(parts.dev)};
}

} // namespace ser
