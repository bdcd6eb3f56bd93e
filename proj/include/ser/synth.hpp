#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "ser/data.hpp"

namespace ser {

struct SynthOptions {
    std::uint64_t seed = 7;
    std::size_t n_utterances = 30;
    double min_duration_s = 0.1;
    double max_duration_s = 0.25;
};

struct SynthCorpus {
    Corpus corpus;                     // as re-read from disk
    std::vector<LabelTriple> intended; // planted classes, one per utterance
    std::filesystem::path manifest;
};

// Writes `<out>/manifest.csv` and `<out>/wav/*.wav`.
//
// Each utterance is a harmonic tone plus a little noise. The planted classes
// live on separate acoustic axes:
//   arousal   -> overall amplitude level,
//   valence   -> fundamental frequency band,
//   dominance -> where the energy sits in time (front, centre, back).
// Classes are balanced per task and sessions are assigned round-robin.
SynthCorpus generate_synthetic_corpus(const SynthOptions& options, const std::filesystem::path& out_dir);

} // namespace ser
