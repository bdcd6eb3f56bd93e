#include "ser/synth.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>

#include "ser/rng.hpp"
#include "ser/wav.hpp"

namespace ser {

namespace {

constexpr std::array<double, 3> kAmplitude = {0.04, 0.12, 0.35};
constexpr std::array<std::array<double, 2>, 3> kPitchBand = {{{120.0, 180.0}, {300.0, 420.0}, {700.0, 950.0}}};
constexpr std::array<std::array<double, 3>, 3> kRatings = {{{1.0, 1.5, 2.0}, {2.5, 3.0, 3.5}, {4.0, 4.5, 5.0}}};
constexpr double kNoiseLevel = 0.02;

// Unit-mean envelopes over normalized time u in [0, 1].
double envelope(int dominance, double u)
{
    switch (dominance) {
    case 0:
        return 1.5 - u;
    case 1:
        return 0.5 + (1.0 - std::abs(2.0 * u - 1.0));
    default:
        return 0.5 + u;
    }
}

std::vector<int> balanced_classes(std::size_t n, Rng& rng)
{
    std::vector<int> classes(n);
    for (std::size_t i = 0; i < n; ++i) {
        classes[i] = static_cast<int>(i % 3);
    }
    rng.shuffle(classes);
    return classes;
}

std::string format_rating(double value)
{
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%.1f", value);
    return buf;
}

} // namespace

SynthCorpus generate_synthetic_corpus(const SynthOptions& options, const std::filesystem::path& out_dir)
{
    if (options.n_utterances < 1) {
        throw DataError("synthetic corpus needs at least one utterance");
    }
    if (!(options.min_duration_s > 0.0) || options.max_duration_s < options.min_duration_s) {
        throw DataError("synthetic corpus: invalid duration range");
    }

    std::error_code ec;
    std::filesystem::create_directories(out_dir / "wav", ec);
    if (ec) {
        throw DataError("cannot create output directory " + (out_dir / "wav").string() + ": " + ec.message());
    }
    const auto manifest_path = out_dir / "manifest.csv";
    std::ofstream manifest(manifest_path, std::ios::binary | std::ios::trunc);
    if (!manifest) {
        throw DataError("cannot write " + manifest_path.string());
    }
    manifest << kManifestHeader << "\n";

    const std::size_t n = options.n_utterances;
    std::array<std::vector<int>, 3> classes;
    for (int task = 0; task < 3; ++task) {
        Rng rng(options.seed, {0x6c6162ULL, static_cast<std::uint64_t>(task)});
        classes[task] = balanced_classes(n, rng);
    }

    SynthCorpus result;
    result.manifest = manifest_path;
    for (std::size_t i = 0; i < n; ++i) {
        Rng rng(options.seed, {0x757474ULL, i});
        LabelTriple planted;
        for (Task task : kAllTasks) {
            planted[task] = classes[static_cast<int>(task)][i];
        }

        const double duration = rng.uniform(options.min_duration_s, options.max_duration_s);
        const auto n_samples = std::max<std::size_t>(
            kWindowSamples, static_cast<std::size_t>(std::lround(duration * kSampleRate)));
        const double amplitude = kAmplitude[planted[Task::Arousal]] * rng.uniform(0.9, 1.1);
        const auto& band = kPitchBand[planted[Task::Valence]];
        const double f0 = rng.uniform(band[0], band[1]);
        std::array<double, 3> phase{};
        for (double& p : phase) {
            p = rng.uniform(0.0, 2.0 * std::numbers::pi);
        }

        std::vector<std::int16_t> pcm(n_samples);
        for (std::size_t t = 0; t < n_samples; ++t) {
            const double seconds = static_cast<double>(t) / kSampleRate;
            const double u = n_samples > 1 ? static_cast<double>(t) / static_cast<double>(n_samples - 1) : 0.0;
            const double w = 2.0 * std::numbers::pi * f0 * seconds;
            const double tone = std::sin(w + phase[0]) + 0.4 * std::sin(2.0 * w + phase[1]) +
                                0.2 * std::sin(3.0 * w + phase[2]);
            const double x = amplitude * (envelope(planted[Task::Dominance], u) * tone + kNoiseLevel * rng.normal());
            const double scaled = std::clamp(std::round(x * 32768.0), -32768.0, 32767.0);
            pcm[t] = static_cast<std::int16_t>(scaled);
        }

        char id[32];
        std::snprintf(id, sizeof(id), "synth_%04zu", i);
        const std::string rel = std::string("wav/") + id + ".wav";
        write_wav(out_dir / rel, pcm);

        Utterance utt;
        utt.id = id;
        utt.session = static_cast<int>(i % 5) + 1;
        utt.speaker = "S" + std::to_string(utt.session) + ((i / 5) % 2 == 0 ? "F" : "M");
        for (Task task : kAllTasks) {
            const auto& choices = kRatings[planted[task]];
            utt.ratings[static_cast<int>(task)] = choices[rng.index(choices.size())];
        }
        manifest << utt.id << "," << rel << "," << format_rating(utt.ratings[0]) << ","
                 << format_rating(utt.ratings[1]) << "," << format_rating(utt.ratings[2]) << "," << utt.speaker << ","
                 << utt.session << "\n";

        utt.samples = read_wav(out_dir / rel).samples;
        result.corpus.push_back(std::move(utt));
        result.intended.push_back(planted);
    }
    manifest.close();
    if (!manifest) {
        throw DataError("failed writing " + manifest_path.string());
    }
    return result;
}

} // namespace ser
