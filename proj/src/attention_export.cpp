#include "ser/attention_export.hpp"

#include <fstream>

#include <json.hpp>

namespace ser {

std::string attention_record_json(const AttentionRecord& record)
{
    nlohmann::ordered_json doc;
    doc["utterance_id"] = record.utterance_id;
    doc["task"] = task_name(record.task);
    doc["window_start_samples"] = record.window_start_samples;
    doc["alphas"] = record.alphas;
    return doc.dump();
}

AttentionRecord parse_attention_record(const std::string& line)
{
    const auto doc = nlohmann::json::parse(line);
    AttentionRecord record;
    record.utterance_id = doc.at("utterance_id").get<std::string>();
    record.task = parse_task(doc.at("task").get<std::string>());
    record.window_start_samples = doc.at("window_start_samples").get<std::vector<std::size_t>>();
    record.alphas = doc.at("alphas").get<std::vector<double>>();
    return record;
}

template <typename T>
std::size_t export_attention(const ModelParams<T>& params, std::span<const Utterance> utterances,
                             const CorpusStats& stats, const std::filesystem::path& out)
{
    if (!uses_attention(params.config.variant)) {
        throw ConfigError("export-attention needs an attention model, checkpoint variant is " +
                          variant_name(params.config.variant));
    }
    std::vector<AttentionRecord> records;
    for (const auto& utt : utterances) {
        const auto standardized = standardize(utt.samples, stats);
        const auto seq = segment_utterance(standardized);
        const auto result = forward(params, seq.segments.template cast<T>(), ForwardOptions{});
        for (std::size_t b = 0; b < result.tasks.size(); ++b) {
            AttentionRecord rec;
            rec.utterance_id = utt.id;
            rec.task = result.tasks[b];
            for (std::size_t i = 0; i < result.length; ++i) {
                rec.window_start_samples.push_back(SegmentSequence::window_start(i));
            }
            rec.alphas.assign(result.alphas[b].begin(), result.alphas[b].end());
            records.push_back(std::move(rec));
        }
    }

    if (out.has_parent_path()) {
        std::filesystem::create_directories(out.parent_path());
    }
    std::ofstream file(out, std::ios::trunc);
    if (!file) {
        throw DataError("cannot write " + out.string());
    }
    for (const auto& rec : records) {
        file << attention_record_json(rec) << "\n";
    }
    if (!file) {
        throw DataError("failed writing " + out.string());
    }
    return records.size();
}

template std::size_t export_attention(const ModelParams<float>&, std::span<const Utterance>, const CorpusStats&,
                                      const std::filesystem::path&);
template std::size_t export_attention(const ModelParams<double>&, std::span<const Utterance>, const CorpusStats&,
                                      const std::filesystem::path&);

} // namespace ser
