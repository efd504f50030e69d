#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string_view>
#include <vector>

namespace braingraph {

// Portable seeded generator. std::mt19937_64 is bit-specified by the
// standard; the distributions here are written out so that corpora, splits
// and initial weights are identical across standard library vendors.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1) with 53 random bits.
    double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    // Uniform integer in [0, bound), rejection sampled (no modulo bias).
    std::uint64_t uniform_index(std::uint64_t bound);

    // Standard normal via Box-Muller, caching the second variate.
    double normal();

    template <typename T>
    void shuffle(std::span<T> items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            const auto j = static_cast<std::size_t>(uniform_index(i));
            std::swap(items[i - 1], items[j]);
        }
    }
    template <typename T>
    void shuffle(std::vector<T>& items) { shuffle(std::span<T>(items)); }

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

// Stable 64-bit FNV-1a hash; used for derived seeds and config hashes.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t basis = 0xcbf29ce484222325ULL);

// Mixes a global seed with a string key (e.g. a subject id).
std::uint64_t derive_seed(std::uint64_t global_seed, std::string_view key);

}  // namespace braingraph
