#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ser/tensor.hpp"

namespace ser {

// Raw-signal window geometry: 40 ms windows at a 10 ms hop, 16 kHz.
inline constexpr std::size_t kWindowSamples = 640;
inline constexpr std::size_t kHopSamples = 160;
inline constexpr double kStdFloor = 1e-8;

enum class Task : int { Arousal = 0, Valence = 1, Dominance = 2 };
inline constexpr std::array<Task, 3> kAllTasks = {Task::Arousal, Task::Valence, Task::Dominance};

std::string task_name(Task task);
Task parse_task(const std::string& name);

enum class Level : int { Low = 0, Mid = 1, High = 2 };
inline constexpr int kNumClasses = 3;

struct LabelTriple {
    std::array<int, 3> classes{}; // indexed by Task

    int operator[](Task task) const { return classes[static_cast<int>(task)]; }
    int& operator[](Task task) { return classes[static_cast<int>(task)]; }
};

struct Utterance {
    std::string id;
    std::vector<float> samples;
    std::uint32_t sample_rate = 16000;
    std::array<double, 3> ratings{3.0, 3.0, 3.0}; // arousal, valence, dominance on the 5-point scale
    std::string speaker;
    int session = 1;

    double rating(Task task) const { return ratings[static_cast<int>(task)]; }
    LabelTriple labels() const;
};

using Corpus = std::vector<Utterance>;

class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// [1,2] -> low, (2,4) -> mid, [4,5] -> high. Throws DataError outside [1,5].
Level bin_rating(double rating);

struct CorpusStats {
    double mean = 0.0;
    double std = 1.0;
    std::size_t n_samples = 0;
};

// Pooled population mean/std over every sample of every utterance; the std
// is floored at kStdFloor.
CorpusStats compute_stats(std::span<const Utterance> train);
std::vector<float> standardize(std::span<const float> samples, const CorpusStats& stats);

void save_stats(const CorpusStats& stats, const std::filesystem::path& path);
CorpusStats load_stats(const std::filesystem::path& path);

// L x 640 matrix of raw windows; row i starts at sample 160 * i.
struct SegmentSequence {
    Tensor segments;

    std::size_t length() const { return segments.dim(0); }
    static std::size_t window_start(std::size_t i) { return i * kHopSamples; }
};

std::size_t segment_count(std::size_t n_samples);
// Throws DataError if fewer than 640 samples; trailing partial windows are dropped.
SegmentSequence segment_utterance(std::span<const float> samples);

struct Partitions {
    Corpus train;
    Corpus dev;
    Corpus test;
};

// Sessions 1-3 train, 4 dev, 5 test.
Partitions split_by_session(const Corpus& corpus);

// Standardized, windowed utterance ready for the model.
struct PreparedUtterance {
    std::string id;
    Tensor segments; // L x 640
    LabelTriple labels;
};

struct PreparedSet {
    std::vector<PreparedUtterance> items;
    std::vector<std::string> skipped; // ids of utterances shorter than one window
};

PreparedSet prepare_utterances(std::span<const Utterance> utterances, const CorpusStats& stats);

enum class Partition { Train, Dev, Test, All };
Partition parse_partition(const std::string& name);
Corpus select_partition(const Corpus& corpus, Partition partition);

inline constexpr const char* kManifestHeader = "utterance_id,wav_path,arousal,valence,dominance,speaker,session";

// Loads a manifest CSV and every referenced WAV. Relative wav paths resolve
// against the manifest's directory. All row problems are collected and
// reported together in one DataError.
Corpus load_manifest(const std::filesystem::path& path);

} // namespace ser
