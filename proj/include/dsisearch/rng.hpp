#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace dsisearch {

// 64-bit FNV-1a. Used for feature hashing and content fingerprints.
inline uint64_t fnv1a64(std::string_view bytes) {
    uint64_t h = 14695981039346656037ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

// Folds extra words into a seed. Children of a seed are decorrelated.
inline uint64_t mix_seed(uint64_t seed, uint64_t word) {
    return splitmix64(seed ^ splitmix64(word + 0x632be59bd9b4e019ull));
}

// Deterministic generator with explicit value derivations; identical
// sequences on every platform for a given seed.
class Rng {
public:
    explicit Rng(uint64_t seed) : state_(splitmix64(seed ^ 0x8e2f9d4b6a315c7full)) {}

    uint64_t next() {
        state_ = splitmix64(state_);
        return state_;
    }

    // Uniform in [0, 1) with 53 bits of precision.
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    // Uniform integer in [0, n). n must be > 0.
    uint64_t below(uint64_t n) { return next() % n; }

    // Standard normal via Box-Muller (values come in pairs).
    double normal();

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    uint64_t state_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace dsisearch
