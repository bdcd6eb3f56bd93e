#include "ser/rng.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "ser/tensor.hpp"

namespace ser {

std::string shape_to_string(const Shape& shape)
{
    std::string out = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i != 0) {
            out += "x";
        }
        out += std::to_string(shape[i]);
    }
    return out + "]";
}

namespace {

std::mt19937_64 seeded_engine(std::uint64_t seed, std::initializer_list<std::uint64_t> tags)
{
    std::vector<std::uint32_t> words;
    auto push = [&words](std::uint64_t value) {
        words.push_back(static_cast<std::uint32_t>(value & 0xffffffffu));
        words.push_back(static_cast<std::uint32_t>(value >> 32));
    };
    push(seed);
    for (std::uint64_t tag : tags) {
        push(tag);
    }
    std::seed_seq seq(words.begin(), words.end());
    return std::mt19937_64(seq);
}

} // namespace

Rng::Rng(std::uint64_t seed) : engine_(seeded_engine(seed, {})) {}

Rng::Rng(std::uint64_t seed, std::initializer_list<std::uint64_t> tags) : engine_(seeded_engine(seed, tags)) {}

double Rng::uniform()
{
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

std::size_t Rng::index(std::size_t n)
{
    // Rejection sampling keeps the draw exactly uniform.
    const std::uint64_t bound = static_cast<std::uint64_t>(n);
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % bound;
    std::uint64_t draw = engine_();
    while (draw >= limit) {
        draw = engine_();
    }
    return static_cast<std::size_t>(draw % bound);
}

double Rng::normal()
{
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) {
        u1 = uniform();
    }
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
}

std::uint64_t fnv1a64(const void* data, std::size_t size, std::uint64_t hash)
{
    const auto* bytes = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < size; ++i) {
        hash ^= bytes[i];
        hash *= 1099511628211ULL;
    }
    return hash;
}

std::uint64_t fnv1a64(const std::string& text)
{
    return fnv1a64(text.data(), text.size());
}

} // namespace ser
