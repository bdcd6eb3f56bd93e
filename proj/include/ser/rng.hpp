#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace ser {

// Portable random stream. std::mt19937_64 and std::seed_seq are fully
// specified by the standard; the distributions here are hand-rolled so that
// sequences match across standard library implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed);
    // Independent stream keyed by (seed, tags...).
    Rng(std::uint64_t seed, std::initializer_list<std::uint64_t> tags);

    std::uint64_t next_u64() { return engine_(); }
    // Uniform in [0, 1) with 53 bits of resolution.
    double uniform();
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    // Uniform integer in [0, n).
    std::size_t index(std::size_t n);
    double normal();

    template <typename T>
    void shuffle(std::vector<T>& items)
    {
        for (std::size_t i = items.size(); i > 1; --i) {
            std::swap(items[i - 1], items[index(i)]);
        }
    }

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

std::uint64_t fnv1a64(const void* data, std::size_t size, std::uint64_t hash = 14695981039346656037ULL);
std::uint64_t fnv1a64(const std::string& text);

} // namespace ser
