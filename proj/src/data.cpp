#include "ser/data.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "ser/wav.hpp"

namespace ser {

std::string task_name(Task task)
{
    switch (task) {
    case Task::Arousal:
        return "arousal";
    case Task::Valence:
        return "valence";
    case Task::Dominance:
        return "dominance";
    }
    return "unknown";
}

Task parse_task(const std::string& name)
{
    for (Task task : kAllTasks) {
        if (task_name(task) == name) {
            return task;
        }
    }
    throw DataError("unknown task '" + name + "' (expected arousal, valence or dominance)");
}

Level bin_rating(double rating)
{
    if (!(rating >= 1.0 && rating <= 5.0)) {
        std::ostringstream msg;
        msg << "rating " << rating << " outside the 5-point scale [1, 5]";
        throw DataError(msg.str());
    }
    if (rating <= 2.0) {
        return Level::Low;
    }
    if (rating < 4.0) {
        return Level::Mid;
    }
    return Level::High;
}

LabelTriple Utterance::labels() const
{
    LabelTriple out;
    for (Task task : kAllTasks) {
        out[task] = static_cast<int>(bin_rating(rating(task)));
    }
    return out;
}

CorpusStats compute_stats(std::span<const Utterance> train)
{
    CorpusStats stats;
    double sum = 0.0;
    for (const auto& utt : train) {
        for (float s : utt.samples) {
            sum += s;
        }
        stats.n_samples += utt.samples.size();
    }
    if (stats.n_samples == 0) {
        throw DataError("compute_stats: training set has no samples");
    }
    stats.mean = sum / static_cast<double>(stats.n_samples);
    double sq = 0.0;
    for (const auto& utt : train) {
        for (float s : utt.samples) {
            const double d = s - stats.mean;
            sq += d * d;
        }
    }
    stats.std = std::max(std::sqrt(sq / static_cast<double>(stats.n_samples)), kStdFloor);
    return stats;
}

std::vector<float> standardize(std::span<const float> samples, const CorpusStats& stats)
{
    std::vector<float> out(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
        out[i] = static_cast<float>((samples[i] - stats.mean) / stats.std);
    }
    return out;
}

void save_stats(const CorpusStats& stats, const std::filesystem::path& path)
{
    nlohmann::json doc = {{"mean", stats.mean}, {"std", stats.std}, {"n_samples", stats.n_samples}};
    std::ofstream out(path);
    if (!out) {
        throw DataError("cannot write stats file " + path.string());
    }
    out << doc.dump(2) << "\n";
}

CorpusStats load_stats(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot open stats file " + path.string() +
                        "; it is written by `ser train` beside the checkpoint (pass --stats to point at it)");
    }
    try {
        const auto doc = nlohmann::json::parse(in);
        CorpusStats stats;
        stats.mean = doc.at("mean").get<double>();
        stats.std = doc.at("std").get<double>();
        stats.n_samples = doc.at("n_samples").get<std::size_t>();
        if (!(stats.std > 0.0)) {
            throw DataError("stats file " + path.string() + " has non-positive std");
        }
        return stats;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("malformed stats file " + path.string() + ": " + e.what());
    }
}

std::size_t segment_count(std::size_t n_samples)
{
    if (n_samples < kWindowSamples) {
        return 0;
    }
    return (n_samples - kWindowSamples) / kHopSamples + 1;
}

SegmentSequence segment_utterance(std::span<const float> samples)
{
    const std::size_t count = segment_count(samples.size());
    if (count == 0) {
        throw DataError("utterance too short: " + std::to_string(samples.size()) + " samples, need at least " +
                        std::to_string(kWindowSamples));
    }
    SegmentSequence seq{Tensor({count, kWindowSamples})};
    for (std::size_t i = 0; i < count; ++i) {
        auto row = seq.segments.row(i);
        std::copy_n(samples.begin() + static_cast<std::ptrdiff_t>(i * kHopSamples), kWindowSamples, row.begin());
    }
    return seq;
}

PreparedSet prepare_utterances(std::span<const Utterance> utterances, const CorpusStats& stats)
{
    PreparedSet set;
    for (const auto& utt : utterances) {
        if (segment_count(utt.samples.size()) == 0) {
            set.skipped.push_back(utt.id);
            continue;
        }
        const auto standardized = standardize(utt.samples, stats);
        set.items.push_back({utt.id, segment_utterance(standardized).segments, utt.labels()});
    }
    return set;
}

Partitions split_by_session(const Corpus& corpus)
{
    Partitions parts;
    for (const auto& utt : corpus) {
        switch (utt.session) {
        case 1:
        case 2:
        case 3:
            parts.train.push_back(utt);
            break;
        case 4:
            parts.dev.push_back(utt);
            break;
        case 5:
            parts.test.push_back(utt);
            break;
        default:
            throw DataError("utterance " + utt.id + " has unknown session " + std::to_string(utt.session));
        }
    }
    return parts;
}

Partition parse_partition(const std::string& name)
{
    if (name == "train") {
        return Partition::Train;
    }
    if (name == "dev") {
        return Partition::Dev;
    }
    if (name == "test") {
        return Partition::Test;
    }
    if (name == "all") {
        return Partition::All;
    }
    throw DataError("unknown partition '" + name + "' (expected train, dev, test or all)");
}

Corpus select_partition(const Corpus& corpus, Partition partition)
{
    if (partition == Partition::All) {
        return corpus;
    }
    auto parts = split_by_session(corpus);
    switch (partition) {
    case Partition::Train:
        return std::move(parts.train);
    case Partition::Dev:
        return std::move(parts.dev);
    default:
        return std::move(parts.test);
    }
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line)
{
    std::vector<std::string> fields;
    std::string field;
    std::istringstream stream(line);
    while (std::getline(stream, field, ',')) {
        fields.push_back(field);
    }
    if (!line.empty() && line.back() == ',') {
        fields.emplace_back();
    }
    return fields;
}

std::optional<double> parse_decimal(const std::string& text)
{
    double value = 0.0;
    const char* end = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(text.data(), end, value);
    if (ec != std::errc{} || ptr != end || text.empty()) {
        return std::nullopt;
    }
    return value;
}

} // namespace

Corpus load_manifest(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot open manifest " + path.string());
    }
    const auto base = std::filesystem::absolute(path).parent_path();

    std::string line;
    if (!std::getline(in, line)) {
        throw DataError(path.string() + ": empty manifest");
    }
    if (!line.empty() && line.back() == '\r') {
        line.pop_back();
    }
    if (line != kManifestHeader) {
        throw DataError(path.string() + ":1: header must be exactly '" + std::string(kManifestHeader) + "', got '" +
                        line + "'");
    }

    Corpus corpus;
    std::vector<std::string> errors;
    std::size_t line_no = 1;
    const char* rating_fields[] = {"arousal", "valence", "dominance"};
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty()) {
            continue;
        }
        const std::string where = path.string() + ":" + std::to_string(line_no);
        const auto fields = split_csv_line(line);
        if (fields.size() != 7) {
            errors.push_back(where + ": expected 7 columns, got " + std::to_string(fields.size()));
            continue;
        }

        Utterance utt;
        utt.id = fields[0];
        utt.speaker = fields[5];
        bool ok = true;
        for (int k = 0; k < 3; ++k) {
            const auto value = parse_decimal(fields[2 + k]);
            if (!value) {
                errors.push_back(where + ": field " + rating_fields[k] + " is not a number: '" + fields[2 + k] + "'");
                ok = false;
            } else if (!(*value >= 1.0 && *value <= 5.0)) {
                errors.push_back(where + ": field " + rating_fields[k] + " = " + fields[2 + k] +
                                 " outside the 5-point scale [1, 5]");
                ok = false;
            } else {
                utt.ratings[k] = *value;
            }
        }
        const auto session = parse_decimal(fields[6]);
        if (!session || *session != std::floor(*session) || *session < 1 || *session > 5) {
            errors.push_back(where + ": field session must be an integer in 1..5, got '" + fields[6] + "'");
            ok = false;
        } else {
            utt.session = static_cast<int>(*session);
        }

        std::filesystem::path wav = fields[1];
        if (wav.is_relative()) {
            wav = base / wav;
        }
        wav = wav.lexically_normal();
        if (!std::filesystem::exists(wav)) {
            errors.push_back(where + ": wav file not found: " + wav.string());
            continue;
        }
        if (!ok) {
            continue;
        }
        try {
            auto audio = read_wav(wav);
            utt.samples = std::move(audio.samples);
            utt.sample_rate = audio.sample_rate;
            if (utt.samples.empty()) {
                errors.push_back(where + ": wav file has no samples: " + wav.string());
                continue;
            }
        } catch (const WavError& e) {
            errors.push_back(where + ": " + e.what());
            continue;
        }
        corpus.push_back(std::move(utt));
    }

    if (!errors.empty()) {
        std::string message = "manifest " + path.string() + " has " + std::to_string(errors.size()) + " error(s):";
        for (const auto& e : errors) {
            message += "\n  " + e;
        }
        throw DataError(message);
    }
    return corpus;
}

} // namespace ser
