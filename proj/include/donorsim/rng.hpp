#pragma once

// Counter-style stream derivation: every work unit (shot, grid point,
// bootstrap resample) gets its own engine seeded from (seed, unit index),
// so results never depend on scheduling.

#include <cstdint>
#include <random>

namespace donorsim {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t stream_id(std::uint64_t seed, std::uint64_t unit, std::uint64_t salt = 0) {
    return splitmix64(splitmix64(seed ^ splitmix64(salt)) + unit);
}

inline std::mt19937_64 make_stream(std::uint64_t seed, std::uint64_t unit, std::uint64_t salt = 0) {
    return std::mt19937_64(stream_id(seed, unit, salt));
}

// 53-bit uniform in [0, 1); avoids implementation-defined distribution details
inline double uniform01(std::mt19937_64& g) { return double(g() >> 11) * 0x1.0p-53; }

}  // namespace donorsim
