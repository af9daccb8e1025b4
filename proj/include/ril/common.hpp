#pragma once

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <vector>

namespace ril {

/// Raised for bad user input: malformed files, invalid configuration,
/// violated preconditions. The CLI maps this to exit code 1.
struct ValidationError : std::runtime_error {
    explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

template <typename... Args>
std::string format(const char* fmt, Args... args) {
    int len = std::snprintf(nullptr, 0, fmt, args...);
    std::string out(static_cast<size_t>(len), '\0');
    std::snprintf(out.data(), out.size() + 1, fmt, args...);
    return out;
}

inline std::uint64_t fnv1a64(const void* data, std::size_t len, std::uint64_t seed = 0xcbf29ce484222325ull) {
    const auto* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = seed;
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::uint64_t fnv1a64(const std::string& s) { return fnv1a64(s.data(), s.size()); }

/// splitmix64 step; used to derive independent sub-seeds from one run seed.
inline std::uint64_t mix_seed(std::uint64_t base, std::uint64_t salt) {
    std::uint64_t z = base + 0x9e3779b97f4a7c15ull * (salt + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

/// Unbiased draw from [0, n) via rejection sampling; `gen` is any callable
/// returning uniform uint64 (e.g. std::mt19937_64). Implementation-pinned so
/// shuffles do not depend on standard-library distribution internals.
template <typename Gen>
std::uint64_t bounded_uint(Gen& gen, std::uint64_t n) {
    if (n == 0) return 0;
    std::uint64_t limit = ~std::uint64_t(0) - (~std::uint64_t(0) % n + 1) % n;
    std::uint64_t x;
    do {
        x = gen();
    } while (x > limit);
    return x % n;
}

/// Fisher-Yates shuffle with pinned draw semantics (see bounded_uint).
template <typename T, typename Gen>
void deterministic_shuffle(std::vector<T>& v, Gen& gen) {
    for (std::size_t i = v.size(); i > 1; --i) {
        std::size_t j = static_cast<std::size_t>(bounded_uint(gen, i));
        std::swap(v[i - 1], v[j]);
    }
}

class Timer {
public:
    Timer() : start_(std::chrono::steady_clock::now()) {}
    double seconds() const {
        auto now = std::chrono::steady_clock::now();
        return std::chrono::duration<double>(now - start_).count();
    }
private:
    std::chrono::steady_clock::time_point start_;
};

}  // namespace ril
