#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace ser {

inline constexpr std::uint32_t kSampleRate = 16000;

class WavError : public std::runtime_error {
public:
    enum class Kind { Io, NotRiff, MissingChunk, NotPcm, NotMono, WrongBitDepth, WrongSampleRate, Truncated };

    WavError(Kind kind, const std::string& message) : std::runtime_error(message), kind_(kind) {}
    Kind kind() const { return kind_; }

private:
    Kind kind_;
};

struct WavAudio {
    std::vector<float> samples; // int16 / 32768, so in [-1, 1)
    std::uint32_t sample_rate = kSampleRate;
};

// Reads a RIFF/WAVE file holding 16-bit little-endian mono PCM at 16 kHz.
WavAudio read_wav(const std::filesystem::path& path);
WavAudio parse_wav(std::span<const std::uint8_t> bytes, const std::string& origin = "<memory>");

// Writes 16-bit PCM mono at 16 kHz from raw int16 samples.
void write_wav(const std::filesystem::path& path, std::span<const std::int16_t> pcm);
std::vector<std::uint8_t> encode_wav(std::span<const std::int16_t> pcm);

} // namespace ser
