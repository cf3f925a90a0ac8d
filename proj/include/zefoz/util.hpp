#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>

namespace zefoz {

inline constexpr double kPi = std::numbers::pi;

inline double deg2rad(double deg) { return deg * kPi / 180.0; }
inline double rad2deg(double rad) { return rad * 180.0 / kPi; }

// Counter-based RNG: every draw is a pure function of (seed, counter), so
// sampling loops can run in parallel and still reproduce bit-identically.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

// Uniform draw in (0, 1), never exactly 0 or 1.
inline double uniform01(std::uint64_t seed, std::uint64_t counter) {
    const std::uint64_t bits = splitmix64(seed ^ splitmix64(counter + 1));
    return (static_cast<double>(bits >> 11) + 0.5) * 0x1p-53;
}

// Standard normal via Box-Muller on two counter draws.
inline double gaussian(std::uint64_t seed, std::uint64_t counter) {
    const double u1 = uniform01(seed, 2 * counter);
    const double u2 = uniform01(seed, 2 * counter + 1);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
}

// FNV-1a over a byte string; used to stamp outputs with a config hash.
inline std::uint64_t fnv1a(const std::string& bytes) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001B3ULL;
    }
    return h;
}

// Single fixed numeric format for all file output; identical inputs must
// produce byte-identical files.
std::string format_double(double v);

} // namespace zefoz
