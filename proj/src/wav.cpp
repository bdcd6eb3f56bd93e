#include "ser/wav.hpp"

#include <cstring>
#include <fstream>
#include <iterator>

namespace ser {

namespace {

std::uint16_t read_u16(const std::uint8_t* p)
{
    return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

std::uint32_t read_u32(const std::uint8_t* p)
{
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v)
{
    out.push_back(static_cast<std::uint8_t>(v & 0xff));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v)
{
    for (int shift = 0; shift < 32; shift += 8) {
        out.push_back(static_cast<std::uint8_t>((v >> shift) & 0xff));
    }
}

void put_tag(std::vector<std::uint8_t>& out, const char* tag)
{
    out.insert(out.end(), tag, tag + 4);
}

bool tag_is(const std::uint8_t* p, const char* tag)
{
    return std::memcmp(p, tag, 4) == 0;
}

} // namespace

WavAudio parse_wav(std::span<const std::uint8_t> bytes, const std::string& origin)
{
    using Kind = WavError::Kind;
    if (bytes.size() < 12 || !tag_is(bytes.data(), "RIFF") || !tag_is(bytes.data() + 8, "WAVE")) {
        throw WavError(Kind::NotRiff, origin + ": not a RIFF/WAVE file");
    }

    bool have_fmt = false;
    std::size_t pos = 12;
    while (pos + 8 <= bytes.size()) {
        const std::uint8_t* header = bytes.data() + pos;
        const std::uint32_t chunk_size = read_u32(header + 4);
        const std::size_t body = pos + 8;
        const std::size_t available = bytes.size() - body;

        if (tag_is(header, "fmt ")) {
            if (chunk_size < 16 || available < 16) {
                throw WavError(Kind::Truncated, origin + ": truncated fmt chunk");
            }
            const std::uint8_t* fmt = bytes.data() + body;
            const std::uint16_t format = read_u16(fmt);
            const std::uint16_t channels = read_u16(fmt + 2);
            const std::uint32_t rate = read_u32(fmt + 4);
            const std::uint16_t bits = read_u16(fmt + 14);
            if (format != 1) {
                throw WavError(Kind::NotPcm, origin + ": format tag " + std::to_string(format) +
                                                 " is not integer PCM (1)");
            }
            if (channels != 1) {
                throw WavError(Kind::NotMono, origin + ": " + std::to_string(channels) + " channels, expected mono");
            }
            if (bits != 16) {
                throw WavError(Kind::WrongBitDepth, origin + ": " + std::to_string(bits) + "-bit samples, expected 16");
            }
            if (rate != kSampleRate) {
                throw WavError(Kind::WrongSampleRate, origin + ": sample rate " + std::to_string(rate) +
                                                          " Hz, expected " + std::to_string(kSampleRate));
            }
            have_fmt = true;
        } else if (tag_is(header, "data")) {
            if (!have_fmt) {
                throw WavError(Kind::MissingChunk, origin + ": data chunk before fmt chunk");
            }
            if (chunk_size > available) {
                throw WavError(Kind::Truncated, origin + ": data chunk declares " + std::to_string(chunk_size) +
                                                    " bytes but only " + std::to_string(available) + " remain");
            }
            if (chunk_size % 2 != 0) {
                throw WavError(Kind::Truncated, origin + ": data chunk has an odd byte count");
            }
            WavAudio audio;
            audio.samples.resize(chunk_size / 2);
            const std::uint8_t* data = bytes.data() + body;
            for (std::size_t i = 0; i < audio.samples.size(); ++i) {
                const auto raw = static_cast<std::int16_t>(read_u16(data + 2 * i));
                audio.samples[i] = static_cast<float>(raw) / 32768.0f;
            }
            return audio;
        }
        // Chunks are word aligned.
        pos = body + chunk_size + (chunk_size & 1u);
    }
    throw WavError(Kind::MissingChunk, origin + (have_fmt ? ": no data chunk" : ": no fmt chunk"));
}

WavAudio read_wav(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw WavError(WavError::Kind::Io, "cannot open " + path.string());
    }
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_wav(bytes, path.string());
}

std::vector<std::uint8_t> encode_wav(std::span<const std::int16_t> pcm)
{
    const auto data_bytes = static_cast<std::uint32_t>(pcm.size() * 2);
    std::vector<std::uint8_t> out;
    out.reserve(44 + data_bytes);
    put_tag(out, "RIFF");
    put_u32(out, 36 + data_bytes);
    put_tag(out, "WAVE");
    put_tag(out, "fmt ");
    put_u32(out, 16);
    put_u16(out, 1);               // PCM
    put_u16(out, 1);               // mono
    put_u32(out, kSampleRate);
    put_u32(out, kSampleRate * 2); // byte rate
    put_u16(out, 2);               // block align
    put_u16(out, 16);
    put_tag(out, "data");
    put_u32(out, data_bytes);
    for (std::int16_t s : pcm) {
        put_u16(out, static_cast<std::uint16_t>(s));
    }
    return out;
}

void write_wav(const std::filesystem::path& path, std::span<const std::int16_t> pcm)
{
    const auto bytes = encode_wav(pcm);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw WavError(WavError::Kind::Io, "cannot write " + path.string());
    }
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw WavError(WavError::Kind::Io, "write failed for " + path.string());
    }
}

} // namespace ser
