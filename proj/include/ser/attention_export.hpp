#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>

#include "ser/data.hpp"
#include "ser/metrics.hpp"
#include "ser/model.hpp"

namespace ser {

// {"utterance_id", "task", "window_start_samples", "alphas"}; alpha_i covers
// samples [160 i, 160 i + 640).
std::string attention_record_json(const AttentionRecord& record);
AttentionRecord parse_attention_record(const std::string& line);

// One JSON line per (utterance, task), utterances in input order and tasks in
// model order. Throws ConfigError for a model without attention pooling and
// DataError if an utterance is too short to window.
template <typename T>
std::size_t export_attention(const ModelParams<T>& params, std::span<const Utterance> utterances,
                             const CorpusStats& stats, const std::filesystem::path& out);

} // namespace ser
