#pragma once
#include <cmath>
#include <cstdint>
#include <string_view>
#include <vector>

namespace cavlab {

// Deterministic PRNG with explicit streams. std:: engines are portable but the
// distributions are not, so sampling helpers are hand-rolled; every artifact
// digest in the pipeline relies on these being bit-stable.
class Rng {
public:
    explicit Rng(uint64_t seed) : state_(seed) {
        // decorrelate trivially related seeds
        next_u64();
        next_u64();
    }

    static uint64_t mix(uint64_t a, uint64_t b) {
        // splitmix64 finalizer over a combined word
        uint64_t z = a + 0x9e3779b97f4a7c15ull * (b + 1);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    static uint64_t hash_str(std::string_view s) {
        uint64_t h = 0xcbf29ce484222325ull;
        for (unsigned char c : s) {
            h ^= c;
            h *= 0x100000001b3ull;
        }
        return h;
    }

    // independent stream for (seed, name, index), e.g. one per image
    static Rng stream(uint64_t seed, std::string_view name, uint64_t index = 0) {
        return Rng(mix(mix(seed, hash_str(name)), index));
    }

    uint64_t next_u64() {
        uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    // [0,1) with 53 random bits
    double next_double() { return double(next_u64() >> 11) * 0x1.0p-53; }

    double uniform_real(double lo, double hi) { return lo + (hi - lo) * next_double(); }

    // inclusive bounds, unbiased via rejection
    int64_t uniform_int(int64_t lo, int64_t hi) {
        uint64_t span = uint64_t(hi - lo) + 1;
        if (span == 0) return int64_t(next_u64()); // full 64-bit range
        uint64_t limit = UINT64_MAX - UINT64_MAX % span;
        uint64_t v;
        do {
            v = next_u64();
        } while (v >= limit);
        return lo + int64_t(v % span);
    }

    // Box-Muller, one value per call (second value discarded to keep the
    // stream position independent of call parity)
    double normal() {
        double u1 = 0.0;
        while (u1 == 0.0) u1 = next_double();
        double u2 = next_double();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = size_t(uniform_int(0, int64_t(i) - 1));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    uint64_t state_;
};

} // namespace cavlab
