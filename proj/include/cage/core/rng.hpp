#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <utility>

#include "cage/core/matrix.hpp"

namespace cage {

/// Deterministic generator used for every random draw in the toolkit.
///
/// The engine is xoshiro256** seeded through SplitMix64. Named sub-streams
/// (`stream("init/item_emb")`, `stream("shuffle", epoch)`) are derived by
/// hashing the purpose label with FNV-1a into the parent seed, so adding a new
/// consumer never perturbs the draws seen by an existing one. Normal draws use
/// Box-Muller and uniform integers use rejection sampling; neither depends on
/// the standard library's distribution implementations, so sequences are the
/// same on every platform with IEEE doubles.
class SeededRng {
public:
    explicit SeededRng(std::uint64_t seed);

    std::uint64_t seed() const noexcept { return seed_; }

    SeededRng stream(std::string_view purpose, std::uint64_t index = 0) const;

    std::uint64_t next_u64();
    // Uniform in [0, 1) with 53 bits of resolution.
    double uniform();
    // Uniform integer in [0, n). n must be > 0.
    std::uint64_t uniform_index(std::uint64_t n);
    double normal();

    template <typename T>
    void shuffle(std::span<T> items) {
        // Fisher-Yates from the back.
        for (std::size_t i = items.size(); i > 1; --i) {
            const auto j = static_cast<std::size_t>(uniform_index(i));
            std::swap(items[i - 1], items[j]);
        }
    }

private:
    std::uint64_t seed_;
    std::array<std::uint64_t, 4> state_{};
    bool has_spare_ = false;
    double spare_ = 0.0;
};

// Normal(0, std) matrix. Throws DimensionError on a zero dimension and
// PreconditionError unless std > 0.
Matrix rng_normal_init(SeededRng& rng, std::size_t rows, std::size_t cols, float std);

}  // namespace cage
