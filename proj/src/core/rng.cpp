#include "cage/core/rng.hpp"

#include <cmath>
#include <numbers>

#include "cage/error.hpp"

namespace cage {

namespace {

std::uint64_t splitmix64(std::uint64_t& x) {
    std::uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

std::uint64_t fnv1a(std::string_view text) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : text) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return h;
}

constexpr std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

}  // namespace

SeededRng::SeededRng(std::uint64_t seed) : seed_(seed) {
    std::uint64_t x = seed;
    for (auto& s : state_) s = splitmix64(x);
}

SeededRng SeededRng::stream(std::string_view purpose, std::uint64_t index) const {
    std::uint64_t x = seed_ ^ fnv1a(purpose);
    const std::uint64_t a = splitmix64(x);
    x = a ^ (index * 0xd1342543de82ef95ULL);
    return SeededRng(splitmix64(x));
}

std::uint64_t SeededRng::next_u64() {
    const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
}

double SeededRng::uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

std::uint64_t SeededRng::uniform_index(std::uint64_t n) {
    if (n == 0) throw PreconditionError("uniform_index requires n > 0");
    // Reject the tail that would bias the modulo.
    const std::uint64_t limit = (~std::uint64_t{0}) - ((~std::uint64_t{0}) % n);
    std::uint64_t r;
    do {
        r = next_u64();
    } while (r >= limit);
    return r % n;
}

double SeededRng::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    double u1;
    do {
        u1 = uniform();
    } while (u1 <= 0.0);
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
}

Matrix rng_normal_init(SeededRng& rng, std::size_t rows, std::size_t cols, float std) {
    if (rows == 0 || cols == 0) {
        throw DimensionError("rng_normal_init: zero dimension (" + std::to_string(rows) + "x" +
                             std::to_string(cols) + ")");
    }
    if (!(std > 0.0f) || !std::isfinite(std)) {
        throw PreconditionError("rng_normal_init: std must be > 0");
    }
    Matrix m(rows, cols);
    for (float& v : m.values()) v = static_cast<float>(rng.normal() * double(std));
    return m;
}

}  // namespace cage
