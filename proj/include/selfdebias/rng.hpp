#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>
#include <vector>

namespace selfdebias {

// Counter-based deterministic randomness. Every draw is a pure function of
// (key, counter), so independent streams can be evaluated in any order, or in
// parallel, and still reproduce the serial sequence bit-exactly.

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ull;

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += kGolden;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

// Stream key from a seed and up to two stream identifiers (e.g. trajectory id
// and a purpose tag). Mixed through splitmix so nearby ids decorrelate.
inline std::uint64_t stream_key(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
    return splitmix64(splitmix64(seed ^ (a * kGolden)) ^ (b * 0xD1B54A32D192ED03ull));
}

inline std::uint64_t counter_u64(std::uint64_t key, std::uint64_t counter) {
    return splitmix64(key + counter * kGolden);
}

// Uniform in (0, 1]; never 0 so it is safe under log().
inline double counter_uniform(std::uint64_t key, std::uint64_t counter) {
    return (static_cast<double>(counter_u64(key, counter) >> 11) + 1.0) * 0x1.0p-53;
}

// Standard normal via Box-Muller; consumes counters 2c and 2c+1.
inline double counter_normal(std::uint64_t key, std::uint64_t counter) {
    const double u1 = counter_uniform(key, 2 * counter);
    const double u2 = counter_uniform(key, 2 * counter + 1);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

// Sequential convenience wrapper over the counter scheme.
class SeqRng {
public:
    explicit SeqRng(std::uint64_t key) : key_(key) {}
    SeqRng(std::uint64_t seed, std::string_view purpose) : key_(stream_key(seed, fnv1a64(purpose))) {}

    std::uint64_t next_u64() { return counter_u64(key_, counter_++); }
    double uniform() { return counter_uniform(key_, counter_++); }
    double normal() {
        const std::uint64_t c = counter_++;
        return counter_normal(key_, c);
    }
    // Unbiased enough for desk-scale work; determinism is what matters here.
    std::size_t below(std::size_t n) { return static_cast<std::size_t>(next_u64() % n); }

    std::vector<double> normals(std::size_t n) {
        std::vector<double> out(n);
        for (auto& v : out) v = normal();
        return out;
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::swap(v[i - 1], v[below(i)]);
        }
    }

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

}  // namespace selfdebias
